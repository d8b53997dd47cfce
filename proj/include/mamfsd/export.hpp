#pragma once

// Attention-map export: per-frame binary PGM snapshots of a MAM block's
// intensity map (channel-averaged, nearest-neighbor upsampled to the input
// resolution) plus a raw-values CSV, with the inter-frame difference map
// written alongside for comparison.

#include <string>
#include <vector>

#include "mamfsd/model.hpp"

namespace mamfsd {

// P5 header, maxval 255, raw bytes.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& bytes);

// Linear 0..1 -> 0..255 with round-half-up.
inline unsigned char quantize_255(double v) {
    double q = std::floor(255.0 * v + 0.5);
    if (q < 0) q = 0;
    if (q > 255) q = 255;
    return static_cast<unsigned char>(q);
}

struct AttentionExport {
    int frames = 0;
    std::vector<std::string> attention_pgms;
    std::vector<std::string> diff_pgms;
    std::string csv_path;
};

// Runs the model on the video (already at model resolution), captures the
// stage's attention map, and writes att_f###.pgm / diff_f###.pgm /
// att_values.csv into out_dir. stage is 1-based and must carry a MAM block.
AttentionExport export_attention(const Model<float>& model, const TensorF& video, int stage,
                                 const std::string& out_dir);

}  // namespace mamfsd
