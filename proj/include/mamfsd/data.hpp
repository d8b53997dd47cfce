#pragma once

// Synthetic weakly-supervised gloss-video data: a generator over ten motion
// primitives, the on-disk dataset format (manifest.tsv + MFT1 videos +
// diagnostics-only segments.tsv), training augmentations, and the inter-frame
// difference map.

#include <string>
#include <vector>

#include "mamfsd/rng.hpp"
#include "mamfsd/tensor.hpp"

namespace mamfsd {

// Motion primitives, 1-based gloss ids.
enum Gloss : int {
    kMoveRight = 1,
    kMoveLeft = 2,
    kMoveUp = 3,
    kMoveDown = 4,
    kDiagDownRight = 5,
    kDiagUpLeft = 6,
    kOrbit = 7,
    kExpand = 8,
    kContract = 9,
    kBlink = 10,
};

struct GenSpec {
    int gloss_count = 10;  // G, capped at the 10 primitives
    int train_count = 400;
    int dev_count = 50;
    int len_min = 2;
    int len_max = 5;
    int dur_min = 8;
    int dur_max = 16;
    int resolution = 40;  // pre-crop; must be divisible by 8
    int fade = 2;         // cross-faded frames at gloss joins (0 or 2)

    void validate() const;
    static GenSpec parse_file(const std::string& path);
};

// One gloss occurrence; rendering is a pure function of these fields.
struct GlossInstance {
    int gloss = kMoveRight;
    int duration = 8;
    double cx = 0.5;    // start center, relative coordinates
    double cy = 0.5;
    double phase = 0.0;  // orbit start angle / blink offset
};

struct SynthSample {
    std::string id;
    std::vector<int> labels;
    std::vector<GlossInstance> segments;
    int total_frames() const {
        int t = 0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }
};

// Render one primitive at local frame index (0-based within the segment).
// frame is [3, res, res], overwritten.
void render_instance(const GlossInstance& inst, int res, int local_t, float* frame);

// Full video [T,3,res,res] with the cross-fade applied at joins.
TensorF render_sample_video(const std::vector<GlossInstance>& segments, int res, int fade);

// Deterministic sample from (seed, split, index).
SynthSample make_sample(uint64_t seed, const std::string& split, int index, const GenSpec& spec);

// Writes out_dir/{train,dev}/{manifest.tsv, segments.tsv, videos/*.mft}.
// Returns the number of samples written per split.
std::pair<int, int> synth_generate(const GenSpec& spec, const std::string& out_dir, uint64_t seed);

struct DatasetEntry {
    std::string id;
    std::string video_path;  // relative to the split directory
    int frames = 0;
    std::vector<int> labels;
};

// Reads a split directory (one containing manifest.tsv).
std::vector<DatasetEntry> read_manifest(const std::string& split_dir);
TensorF load_video(const std::string& split_dir, const DatasetEntry& entry);

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
    int crop = 32;             // output resolution
    double flip_prob = 0.5;    // whole-sequence horizontal flip
    double stretch_min = 0.8;  // temporal stretch bounds
    double stretch_max = 1.2;
};

// mode=train: random stretch/crop/flip from rng. mode=eval: center crop only.
TensorF augment(const TensorF& video, const AugmentConfig& cfg, bool train, Rng& rng);

// Nearest-frame index map for a stretch to t_out frames.
int stretch_source_index(int t_prime, int t_in, int t_out);

// D_t = mean over channels of |x_{t+1}-x_t|, normalized to [0,1] by the
// global max (all-zero input stays all-zero). [T,3,H,W] -> [T-1,H,W].
TensorF frame_difference_map(const TensorF& video);

}  // namespace mamfsd
