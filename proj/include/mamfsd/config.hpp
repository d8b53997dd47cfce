#pragma once

// Sectioned key=value run configuration. Every key has a default, unknown
// keys are a hard error, and the effective config echoes back to a file that
// reparses to the same values.

#include <cstdint>
#include <string>
#include <vector>

#include "mamfsd/data.hpp"
#include "mamfsd/distill.hpp"
#include "mamfsd/model.hpp"

namespace mamfsd {

struct RunConfig {
    // [model]
    int model_stem = 8;
    std::vector<int> model_channels = {8, 16, 32, 64};
    std::vector<int> model_strides = {1, 2, 2, 2};
    int model_blocks = 1;
    int model_resolution = 32;
    int model_lstm_hidden = 64;
    int model_tconv_kernel = 5;
    // [mam]
    int mam_count = 4;
    int mam_layers = 4;
    int mam_kernel = 3;
    int mam_hidden = 0;  // C'; 0 keeps the input channel count
    bool mam_depthwise = false;
    // [distill]
    double distill_alpha = 1.0;
    double distill_beta = 1.0;
    double distill_lambda = 1.0;
    bool distill_enabled = true;  // false skips the distillation graph entirely
    // [train]
    double train_lr = 1e-4;
    double train_weight_decay = 1e-4;
    int train_batch_size = 2;
    int train_epochs = 50;
    std::vector<int> train_lr_drop_epochs = {30, 40};
    double train_lr_drop_factor = 0.2;
    uint64_t train_seed = 1;
    bool train_dev_beam = false;  // beam decode on dev every epoch (greedy otherwise)
    bool train_aux_ctc = true;
    bool train_aux_kl = true;
    double train_aux_ctc_weight = 1.0;
    double train_aux_kl_weight = 1.0;
    // [decode]
    int decode_beam = 10;
    // [data]
    int data_crop = 32;
    double data_flip_prob = 0.5;
    double data_stretch_min = 0.8;
    double data_stretch_max = 1.2;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_string(const std::string& text);

    // Canonical text form; parse_string(echo()) == *this.
    std::string echo() const;

    void validate() const;

    ModelConfig model_config(int vocab) const;
    AugmentConfig augment_config() const;
    DistillWeights distill_weights() const;

    // Learning rate for a 1-based epoch under the drop schedule.
    double lr_at_epoch(int epoch) const;
};

}  // namespace mamfsd
