#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mamfsd/error.hpp"
#include "mamfsd/tensor.hpp"

namespace mamfsd {

using VarId = int;

// Per-op wall time, enabled with MAMFSD_PROFILE=1. Forward cost is the gap
// between consecutive node pushes; backward closures are timed exactly.
struct TapeProfile {
    static bool enabled() {
        static const bool on = [] {
            const char* e = std::getenv("MAMFSD_PROFILE");
            return e != nullptr && e[0] == '1';
        }();
        return on;
    }

    static std::map<std::string, std::pair<double, int64_t>>& table() {
        static std::map<std::string, std::pair<double, int64_t>> t;
        return t;
    }

    static void add(const char* op, const char* phase, double seconds) {
        auto& slot = table()[std::string(op) + "." + phase];
        slot.first += seconds;
        slot.second += 1;
    }

    static void dump() {
        std::vector<std::pair<double, std::string>> rows;
        for (const auto& [name, v] : table()) rows.emplace_back(v.first, name);
        std::sort(rows.rbegin(), rows.rend());
        double total = 0;
        for (const auto& [secs, name] : rows) total += secs;
        for (const auto& [secs, name] : rows)
            std::fprintf(stderr, "%-28s %8.1f ms  %5.1f%%  (%lld calls)\n", name.c_str(),
                         secs * 1e3, 100.0 * secs / total,
                         static_cast<long long>(table()[name].second));
        std::fprintf(stderr, "%-28s %8.1f ms\n", "total", total * 1e3);
    }

    static double now() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    }
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward walks it in exact reverse.
// A tensor consumed by k ops receives the sum of k gradient contributions.
template <class S>
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, VarId)>;

    struct Node {
        Tensor<S> value;
        Tensor<S> grad;  // allocated on first touch
        std::vector<VarId> parents;
        BackwardFn backward;
        bool needs_grad = false;
        const char* op = "leaf";
    };

    VarId leaf(Tensor<S> v) {
        Node n;
        n.needs_grad = v.requires_grad;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size()) - 1;
    }

    VarId constant(Tensor<S> v) {
        v.requires_grad = false;
        return leaf(std::move(v));
    }

    VarId push(Tensor<S> value, std::vector<VarId> parents, const char* op, BackwardFn bwd) {
        bool ng = false;
        for (VarId p : parents) {
            check(p >= 0 && p < static_cast<VarId>(nodes_.size()), "tape: parent out of range");
            ng = ng || nodes_[static_cast<size_t>(p)].needs_grad;
        }
        Node n;
        n.value = std::move(value);
        n.value.requires_grad = ng;
        n.parents = std::move(parents);
        n.needs_grad = ng;
        n.op = op;
        if (ng) n.backward = std::move(bwd);
        if (check_finite_ && !n.value.all_finite())
            throw NumericError(std::string("non-finite value produced by op ") + op);
        if (TapeProfile::enabled()) {
            const double now = TapeProfile::now();
            if (last_push_ > 0) TapeProfile::add(op, "fwd", now - last_push_);
            last_push_ = now;
        }
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size()) - 1;
    }

    const Tensor<S>& val(VarId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const char* op_name(VarId id) const { return nodes_[static_cast<size_t>(id)].op; }
    bool needs_grad(VarId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    size_t size() const { return nodes_.size(); }

    // Gradient accumulator of a node; zero tensor on first access.
    Tensor<S>& grad(VarId id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor<S>::zeros(n.value.dims);
        return n.grad;
    }

    bool grad_touched(VarId id) const { return !nodes_[static_cast<size_t>(id)].grad.data.empty(); }

    // Reverse pass from a scalar root. Callable once per tape.
    void backward(VarId root) {
        check(root >= 0 && root < static_cast<VarId>(nodes_.size()), "backward: bad root");
        if (backward_done_) throw ShapeError("backward: called twice without reset");
        const Node& r = nodes_[static_cast<size_t>(root)];
        check(r.value.numel() == 1, "backward: root is not a scalar");
        backward_done_ = true;
        if (!r.needs_grad) return;
        grad(root).data[0] = S(1);
        const bool prof = TapeProfile::enabled();
        for (VarId i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad || !n.backward) continue;
            if (!grad_touched(i)) continue;  // not on any path from the root
            if (prof) {
                const double t0 = TapeProfile::now();
                n.backward(*this, i);
                TapeProfile::add(n.op, "bwd", TapeProfile::now() - t0);
            } else {
                n.backward(*this, i);
            }
        }
    }

    void set_check_finite(bool on) { check_finite_ = on; }

  private:
    std::vector<Node> nodes_;
    bool backward_done_ = false;
    bool check_finite_ = false;
    double last_push_ = -1.0;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace mamfsd
