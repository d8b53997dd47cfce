#include "mamfsd/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mamfsd/adam.hpp"
#include "mamfsd/checkpoint.hpp"

namespace fs = std::filesystem;

namespace mamfsd {

std::vector<LoadedSample> load_split(const std::string& split_dir) {
    std::vector<LoadedSample> out;
    for (auto& e : read_manifest(split_dir)) {
        LoadedSample s;
        s.video = load_video(split_dir, e);
        s.entry = std::move(e);
        out.push_back(std::move(s));
    }
    return out;
}

int infer_vocab(const std::vector<LoadedSample>& samples) {
    int vocab = 0;
    for (const auto& s : samples)
        for (int id : s.entry.labels) {
            check(id >= 1, "dataset: label ids must be 1-based");
            vocab = std::max(vocab, id);
        }
    check(vocab >= 1, "dataset: empty vocabulary");
    return vocab;
}

SampleLoss build_sample_loss(Tape<float>& tape, const Model<float>& model,
                             const ModelForward<float>& fwd, const std::vector<int>& labels,
                             const RunConfig& cfg) {
    SampleLoss out;
    VarId task = ctc::ctc_loss_op(tape, fwd.logprobs, labels);
    if (cfg.train_aux_ctc) {
        check(fwd.aux_logprobs >= 0, "loss: aux head missing");
        VarId aux = ctc::ctc_loss_op(tape, fwd.aux_logprobs, labels);
        task = ops::add(tape, task, ops::scale(tape, aux, static_cast<float>(cfg.train_aux_ctc_weight)));
    }
    if (cfg.train_aux_kl) {
        check(fwd.aux_logprobs >= 0, "loss: aux head missing");
        // KL(aux || main) averaged over steps: mean over all entries times V+1
        VarId diff = ops::sub(tape, fwd.aux_logprobs, fwd.logprobs);
        VarId probs = ops::exp_(tape, fwd.aux_logprobs);
        VarId prod = ops::mul(tape, probs, diff);
        const int v1 = tape.val(fwd.logprobs).dims[1];
        VarId kl = ops::scale(tape, ops::mean_all(tape, prod), static_cast<float>(v1));
        task = ops::add(tape, task, ops::scale(tape, kl, static_cast<float>(cfg.train_aux_kl_weight)));
    }
    out.loss_task = tape.val(task).data[0];

    if (cfg.distill_enabled) {
        DistillResult<float> d = self_distill_loss(tape, model, fwd, cfg.distill_weights());
        // logged terms are the weighted contributions, so
        // loss_total == loss_task + loss_mse_1 + loss_mse_2 + loss_mse_3
        for (int i = 0; i < 3; ++i)
            out.loss_mse[i] = tape.val(d.weighted[static_cast<size_t>(i)]).data[0];
        out.total = total_loss(tape, task, d.total);
    } else {
        out.total = task;
    }
    out.loss_total = tape.val(out.total).data[0];
    if (!std::isfinite(out.loss_total)) throw NumericError("training: non-finite loss");
    return out;
}

EvalResult evaluate(const Model<float>& model, const std::vector<LoadedSample>& samples,
                    const AugmentConfig& aug, int beam) {
    check(beam >= 1, "evaluate: beam width must be >= 1");
    check(!samples.empty(), "evaluate: empty dataset");
    EvalResult res;
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    Rng dummy(0);
    double logp_acc = 0;
    for (const auto& s : samples) {
        TensorF v = augment(s.video, aug, /*train=*/false, dummy);
        Tape<float> tape;
        ModelForward<float> fwd = model.forward(tape, v, /*with_aux=*/false);
        const auto& lp = tape.val(fwd.logprobs);
        std::vector<int> hyp = beam == 1 ? ctc::greedy_decode(lp) : ctc::beam_decode(lp, beam);
        EvalRow row;
        row.id = s.entry.id;
        row.wer = wer(s.entry.labels, hyp);
        row.logp = -ctc::loss_value(lp.data.data(), lp.dims[0], lp.dims[1], hyp);
        logp_acc += row.logp;
        pairs.emplace_back(s.entry.labels, std::move(hyp));
        res.rows.push_back(std::move(row));
    }
    res.pooled = corpus_wer(pairs);
    res.mean_logp = logp_acc / static_cast<double>(samples.size());
    return res;
}

namespace {

void zero_grads(std::vector<TensorF>& grads) {
    for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0f);
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir, bool quiet) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create run directory: " + out_dir);

    auto train_set = load_split((fs::path(data_dir) / "train").string());
    auto dev_set = load_split((fs::path(data_dir) / "dev").string());
    const int vocab = std::max(infer_vocab(train_set), infer_vocab(dev_set));

    for (const auto& s : train_set)
        check(s.video.dims[2] >= cfg.data_crop, "dataset/config mismatch: video smaller than crop");

    Model<float> model = Model<float>::build(cfg.model_config(vocab), cfg.train_seed);

    // effective config echo
    {
        std::ofstream out(fs::path(out_dir) / "config.ini", std::ios::binary);
        if (!out) throw DataError("cannot write config echo");
        out << cfg.echo();
    }
    const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw DataError("cannot write training log");
    log << "epoch,loss_total,loss_task,loss_mse_1,loss_mse_2,loss_mse_3,dev_wer,lr\n";

    AdamState<float> adam;
    adam.beta1 = 0.9;
    adam.beta2 = 0.999;
    adam.eps = 1e-8;
    adam.weight_decay = cfg.train_weight_decay;

    std::vector<Tensor<float>*> param_ptrs;
    for (auto& [name, t] : model.params.items) param_ptrs.push_back(&t);
    std::vector<TensorF> batch_grads;
    for (auto* p : param_ptrs) batch_grads.push_back(TensorF::zeros(p->dims));

    const AugmentConfig aug = cfg.augment_config();
    TrainResult result;
    result.log_path = log_path;
    result.best_ckpt = (fs::path(out_dir) / "best.ckpt").string();
    result.last_ckpt = (fs::path(out_dir) / "last.ckpt").string();

    for (int epoch = 1; epoch <= cfg.train_epochs; ++epoch) {
        adam.lr = cfg.lr_at_epoch(epoch);

        // deterministic shuffle of sample indices
        std::vector<int> order(train_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng = Rng::stream(cfg.train_seed, "shuffle", static_cast<uint64_t>(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

        double ep_total = 0, ep_task = 0, ep_mse[3] = {0, 0, 0};
        size_t n_samples = 0;
        for (size_t bstart = 0; bstart < order.size(); bstart += static_cast<size_t>(cfg.train_batch_size)) {
            const size_t bend = std::min(order.size(), bstart + static_cast<size_t>(cfg.train_batch_size));
            const int bn = static_cast<int>(bend - bstart);
            zero_grads(batch_grads);
            for (size_t bi = bstart; bi < bend; ++bi) {
                const int idx = order[bi];
                const LoadedSample& s = train_set[static_cast<size_t>(idx)];
                Rng aug_rng = Rng::stream(cfg.train_seed, "aug", static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(idx));
                TensorF v = augment(s.video, aug, /*train=*/true, aug_rng);
                Tape<float> tape;
                ModelForward<float> fwd =
                    model.forward(tape, v, cfg.train_aux_ctc || cfg.train_aux_kl);
                SampleLoss loss = build_sample_loss(tape, model, fwd, s.entry.labels, cfg);
                tape.backward(loss.total);
                for (size_t pi = 0; pi < param_ptrs.size(); ++pi) {
                    const VarId leaf = fwd.param_leaves[pi];
                    if (!tape.grad_touched(leaf)) continue;
                    const auto& g = tape.grad(leaf);
                    auto& acc = batch_grads[pi];
                    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
                }
                ep_total += loss.loss_total;
                ep_task += loss.loss_task;
                for (int i = 0; i < 3; ++i) ep_mse[i] += loss.loss_mse[i];
                ++n_samples;
            }
            const float inv = 1.0f / static_cast<float>(bn);
            for (auto& g : batch_grads)
                for (auto& x : g.data) x *= inv;
            std::vector<const TensorF*> gptrs;
            for (auto& g : batch_grads) gptrs.push_back(&g);
            adam_step(param_ptrs, gptrs, adam);
        }

        EvalResult dev = evaluate(model, dev_set, aug, cfg.train_dev_beam ? cfg.decode_beam : 1);
        const double n = static_cast<double>(n_samples);
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.8g\n", epoch,
                      ep_total / n, ep_task / n, ep_mse[0] / n, ep_mse[1] / n, ep_mse[2] / n,
                      dev.pooled.wer, adam.lr);
        log << line;
        log.flush();
        if (!quiet) {
            std::fprintf(stderr, "epoch %d: loss %.4f dev_wer %.2f%% lr %.2g\n", epoch,
                         ep_total / n, dev.pooled.wer, adam.lr);
        }

        NamedTensors tensors = params_to_tensors(model.params);
        if (dev.pooled.wer < result.best_dev_wer) {
            result.best_dev_wer = dev.pooled.wer;
            result.best_epoch = epoch;
            save_checkpoint(result.best_ckpt, tensors);
        }
        NamedTensors opt = adam_to_tensors(adam, model.params);
        save_checkpoint(result.last_ckpt, tensors, &opt);
        result.final_dev_wer = dev.pooled.wer;
    }
    return result;
}

}  // namespace mamfsd
