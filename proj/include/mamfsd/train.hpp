#pragma once

// Training loop (Adam + step-drop lr schedule, per-epoch dev decoding,
// best/last checkpointing, deterministic CSV logging) and dataset evaluation.

#include <string>
#include <vector>

#include "mamfsd/config.hpp"
#include "mamfsd/ctc.hpp"
#include "mamfsd/data.hpp"
#include "mamfsd/distill.hpp"
#include "mamfsd/metrics.hpp"
#include "mamfsd/model.hpp"

namespace mamfsd {

struct LoadedSample {
    DatasetEntry entry;
    TensorF video;
};

std::vector<LoadedSample> load_split(const std::string& split_dir);

// Largest label id across entries; the vocabulary size G.
int infer_vocab(const std::vector<LoadedSample>& samples);

// Per-sample task + distillation loss graph. Returns the scalar root and the
// individual term values for reporting.
struct SampleLoss {
    VarId total = -1;
    double loss_total = 0;
    double loss_task = 0;
    double loss_mse[3] = {0, 0, 0};
};

SampleLoss build_sample_loss(Tape<float>& tape, const Model<float>& model,
                             const ModelForward<float>& fwd, const std::vector<int>& labels,
                             const RunConfig& cfg);

struct EvalRow {
    std::string id;
    WerBreakdown wer;
    double logp = 0;  // log-probability of the decoded labeling
};

struct EvalResult {
    WerBreakdown pooled;
    double mean_logp = 0;
    std::vector<EvalRow> rows;
};

// Center-crop evaluation with greedy (beam=1) or prefix beam decoding.
EvalResult evaluate(const Model<float>& model, const std::vector<LoadedSample>& samples,
                    const AugmentConfig& aug, int beam);

struct TrainResult {
    double best_dev_wer = 1e9;
    int best_epoch = 0;
    double final_dev_wer = 1e9;
    std::string best_ckpt;
    std::string last_ckpt;
    std::string log_path;
};

// Runs the full recipe; writes out_dir/{config.ini, train_log.csv, best.ckpt,
// last.ckpt}. Throws NumericError on a non-finite loss.
TrainResult train_run(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir, bool quiet = false);

}  // namespace mamfsd
