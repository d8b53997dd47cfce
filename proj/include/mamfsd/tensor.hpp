#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mamfsd/error.hpp"
#include "mamfsd/rng.hpp"

namespace mamfsd {

// Dense row-major tensor (last axis fastest). S is the storage scalar:
// float for training, double for the high-precision gradient-check build.
template <class S>
struct Tensor {
    std::vector<int> dims;
    std::vector<S> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> d, std::vector<S> v) : dims(std::move(d)), data(std::move(v)) {
        check(numel() == static_cast<int64_t>(data.size()), "tensor: dims do not match data length");
    }

    static Tensor zeros(std::vector<int> d) {
        Tensor t;
        t.dims = std::move(d);
        t.data.assign(static_cast<size_t>(t.numel()), S(0));
        return t;
    }

    static Tensor full(std::vector<int> d, S v) {
        Tensor t = zeros(std::move(d));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    static Tensor uniform(std::vector<int> d, Rng& rng, double lo = -1.0, double hi = 1.0) {
        Tensor t = zeros(std::move(d));
        for (auto& x : t.data) x = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    int rank() const { return static_cast<int>(dims.size()); }

    int64_t numel() const {
        int64_t n = 1;
        for (int d : dims) n *= d;
        return n;
    }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }

    // Row-major offset; slow path for tests and small code.
    int64_t offset(std::initializer_list<int> idx) const {
        check(static_cast<int>(idx.size()) == rank(), "tensor: index rank mismatch");
        int64_t off = 0;
        int axis = 0;
        for (int i : idx) {
            check(i >= 0 && i < dims[axis], "tensor: index out of range");
            off = off * dims[axis] + i;
            ++axis;
        }
        return off;
    }

    S& at(std::initializer_list<int> idx) { return data[static_cast<size_t>(offset(idx))]; }
    S at(std::initializer_list<int> idx) const { return data[static_cast<size_t>(offset(idx))]; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> t;
        t.dims = dims;
        t.requires_grad = requires_grad;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T>(data[i]);
        return t;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string dims_str(const std::vector<int>& dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

// --- MFT1 file format -------------------------------------------------------
// "MFT1", u32 LE rank, rank x u32 LE dims, row-major f32 LE payload.

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("MFT1: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline float get_f32(std::istream& in) {
    uint32_t bits = get_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

template <class S>
void write_mft1(std::ostream& out, const Tensor<S>& t) {
    out.write("MFT1", 4);
    detail::put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int d : t.dims) detail::put_u32(out, static_cast<uint32_t>(d));
    for (S v : t.data) detail::put_f32(out, static_cast<float>(v));
}

template <class S>
Tensor<S> read_mft1(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MFT1", 4) != 0) throw DataError("MFT1: bad magic");
    uint32_t rank = detail::get_u32(in);
    if (rank > 8) throw DataError("MFT1: implausible rank");
    std::vector<int> dims(rank);
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        dims[i] = static_cast<int>(detail::get_u32(in));
        n *= dims[i];
    }
    Tensor<S> t;
    t.dims = std::move(dims);
    t.data.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) t.data[static_cast<size_t>(i)] = static_cast<S>(detail::get_f32(in));
    if (!in) throw DataError("MFT1: truncated payload");
    return t;
}

template <class S>
void write_mft1_file(const std::string& path, const Tensor<S>& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for write: " + path);
    write_mft1(out, t);
    if (!out) throw DataError("write failed: " + path);
}

template <class S = float>
Tensor<S> read_mft1_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    return read_mft1<S>(in);
}

}  // namespace mamfsd
