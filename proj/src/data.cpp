#include "mamfsd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mamfsd/error.hpp"

namespace fs = std::filesystem;

namespace mamfsd {

void GenSpec::validate() const {
    check(gloss_count >= 1 && gloss_count <= 10, "gen: gloss count must be in 1..10");
    check(train_count >= 0 && dev_count >= 0, "gen: negative sample count");
    check(len_min >= 1 && len_max >= len_min, "gen: bad label length range");
    check(dur_min >= 4 && dur_max >= dur_min, "gen: bad duration range");
    check(resolution % 8 == 0, "gen: resolution must be divisible by 8");
    check(fade == 0 || fade == 2, "gen: fade must be 0 or 2");
}

GenSpec GenSpec::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open gen spec: " + path);
    GenSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("gen spec line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        };
        trim(key);
        trim(val);
        int v = 0;
        try {
            v = std::stoi(val);
        } catch (...) {
            throw DataError("gen spec: bad integer for key " + key);
        }
        if (key == "G") spec.gloss_count = v;
        else if (key == "train") spec.train_count = v;
        else if (key == "dev") spec.dev_count = v;
        else if (key == "len_min") spec.len_min = v;
        else if (key == "len_max") spec.len_max = v;
        else if (key == "dur_min") spec.dur_min = v;
        else if (key == "dur_max") spec.dur_max = v;
        else if (key == "res") spec.resolution = v;
        else if (key == "fade") spec.fade = v;
        else throw DataError("gen spec: unknown key " + key);
    }
    spec.validate();
    return spec;
}

namespace {

struct BlobState {
    double cx, cy;   // relative center
    double sigma;    // relative radius
    bool visible;
};

// Pure function of (instance, local_t): the blob's pose at that frame.
BlobState blob_state(const GlossInstance& inst, int local_t) {
    const double u = inst.duration > 1
                         ? static_cast<double>(local_t) / static_cast<double>(inst.duration - 1)
                         : 0.0;
    const double amp = 0.5;
    BlobState s{inst.cx, inst.cy, 0.10, true};
    switch (inst.gloss) {
        case kMoveRight: s.cx = inst.cx + amp * u; break;
        case kMoveLeft: s.cx = inst.cx - amp * u; break;
        case kMoveUp: s.cy = inst.cy - amp * u; break;
        case kMoveDown: s.cy = inst.cy + amp * u; break;
        case kDiagDownRight:
            s.cx = inst.cx + amp * 0.7071 * u;
            s.cy = inst.cy + amp * 0.7071 * u;
            break;
        case kDiagUpLeft:
            s.cx = inst.cx - amp * 0.7071 * u;
            s.cy = inst.cy - amp * 0.7071 * u;
            break;
        case kOrbit: {
            const double ang = inst.phase + 6.283185307179586 * u;
            s.cx = inst.cx + 0.18 * std::cos(ang);
            s.cy = inst.cy + 0.18 * std::sin(ang);
            break;
        }
        case kExpand: s.sigma = 0.05 + 0.11 * u; break;
        case kContract: s.sigma = 0.16 - 0.11 * u; break;
        case kBlink: {
            const int off = static_cast<int>(inst.phase);
            s.visible = ((local_t + off) / 3) % 2 == 0;
            break;
        }
        default: throw ShapeError("render: unknown gloss id");
    }
    return s;
}

constexpr double kBlobColor[3] = {1.0, 0.75, 0.5};

}  // namespace

void render_instance(const GlossInstance& inst, int res, int local_t, float* frame) {
    const BlobState s = blob_state(inst, local_t);
    const int64_t plane = static_cast<int64_t>(res) * res;
    std::fill(frame, frame + 3 * plane, 0.0f);
    if (!s.visible) return;
    const double cx = s.cx * res, cy = s.cy * res, sigma = s.sigma * res;
    const double cutoff2 = 9.0 * sigma * sigma;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double r2 = dx * dx + dy * dy;
            if (r2 > cutoff2) continue;
            const double v = std::exp(-r2 / (2.0 * sigma * sigma));
            for (int c = 0; c < 3; ++c)
                frame[c * plane + y * res + x] = static_cast<float>(kBlobColor[c] * v);
        }
}

TensorF render_sample_video(const std::vector<GlossInstance>& segments, int res, int fade) {
    check(!segments.empty(), "render: no segments");
    int T = 0;
    for (const auto& s : segments) T += s.duration;
    TensorF video = TensorF::zeros({T, 3, res, res});
    const int64_t fsz = static_cast<int64_t>(3) * res * res;
    std::vector<float> other(static_cast<size_t>(fsz));
    int start = 0;
    for (size_t j = 0; j < segments.size(); ++j) {
        const auto& seg = segments[j];
        for (int lt = 0; lt < seg.duration; ++lt) {
            float* dst = video.data.data() + static_cast<int64_t>(start + lt) * fsz;
            render_instance(seg, res, lt, dst);
            // 2-frame cross-fade: last frame of this segment and first frame of
            // the next each mix in a third of the neighbor
            if (fade == 2) {
                const bool last_of_seg = lt == seg.duration - 1 && j + 1 < segments.size();
                const bool first_of_seg = lt == 0 && j > 0;
                if (last_of_seg || first_of_seg) {
                    const auto& nb = last_of_seg ? segments[j + 1] : segments[j - 1];
                    render_instance(nb, res, last_of_seg ? 0 : nb.duration - 1, other.data());
                    for (int64_t i = 0; i < fsz; ++i)
                        dst[i] = static_cast<float>(dst[i] * (2.0 / 3.0) + other[static_cast<size_t>(i)] * (1.0 / 3.0));
                }
            }
        }
        start += seg.duration;
    }
    return video;
}

SynthSample make_sample(uint64_t seed, const std::string& split, int index, const GenSpec& spec) {
    Rng rng = Rng::stream(seed, "sample", Rng::hash_str(split), static_cast<uint64_t>(index));
    SynthSample sample;
    sample.id = split + std::to_string(index);
    const int len = static_cast<int>(rng.uniform_int(spec.len_min, spec.len_max));
    for (int u = 0; u < len; ++u) {
        GlossInstance inst;
        inst.gloss = static_cast<int>(rng.uniform_int(1, spec.gloss_count));
        inst.duration = static_cast<int>(rng.uniform_int(spec.dur_min, spec.dur_max));
        // start positions keep the whole trajectory inside the frame
        switch (inst.gloss) {
            case kMoveRight: inst.cx = rng.uniform(0.15, 0.25); inst.cy = rng.uniform(0.3, 0.7); break;
            case kMoveLeft: inst.cx = rng.uniform(0.75, 0.85); inst.cy = rng.uniform(0.3, 0.7); break;
            case kMoveUp: inst.cx = rng.uniform(0.3, 0.7); inst.cy = rng.uniform(0.75, 0.85); break;
            case kMoveDown: inst.cx = rng.uniform(0.3, 0.7); inst.cy = rng.uniform(0.15, 0.25); break;
            case kDiagDownRight: inst.cx = rng.uniform(0.15, 0.3); inst.cy = rng.uniform(0.15, 0.3); break;
            case kDiagUpLeft: inst.cx = rng.uniform(0.7, 0.85); inst.cy = rng.uniform(0.7, 0.85); break;
            case kOrbit:
                inst.cx = rng.uniform(0.4, 0.6);
                inst.cy = rng.uniform(0.4, 0.6);
                inst.phase = rng.uniform(0.0, 6.283185307179586);
                break;
            case kBlink:
                inst.cx = rng.uniform(0.3, 0.7);
                inst.cy = rng.uniform(0.3, 0.7);
                inst.phase = static_cast<double>(rng.uniform_int(0, 5));
                break;
            default:  // expand / contract
                inst.cx = rng.uniform(0.35, 0.65);
                inst.cy = rng.uniform(0.35, 0.65);
                break;
        }
        sample.labels.push_back(inst.gloss);
        sample.segments.push_back(inst);
    }
    return sample;
}

namespace {

void write_split(const GenSpec& spec, const std::string& dir, const std::string& split,
                 int count, uint64_t seed) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "videos", ec);
    if (ec) throw DataError("cannot create output directory: " + dir);
    std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::binary);
    std::ofstream segf(fs::path(dir) / "segments.tsv", std::ios::binary);
    if (!manifest || !segf) throw DataError("cannot write to output directory: " + dir);
    for (int i = 0; i < count; ++i) {
        SynthSample s = make_sample(seed, split, i, spec);
        TensorF video = render_sample_video(s.segments, spec.resolution, spec.fade);
        const std::string rel = "videos/" + s.id + ".mft";
        write_mft1_file((fs::path(dir) / rel).string(), video);
        manifest << s.id << '\t' << rel << '\t' << video.dims[0] << '\t';
        for (size_t u = 0; u < s.labels.size(); ++u) manifest << (u ? " " : "") << s.labels[u];
        manifest << '\n';
        segf << s.id;
        int start = 0;
        for (const auto& seg : s.segments) {
            segf << '\t' << start << ':' << start + seg.duration << ':' << seg.gloss;
            start += seg.duration;
        }
        segf << '\n';
    }
    if (!manifest || !segf) throw DataError("write failed in: " + dir);
}

}  // namespace

std::pair<int, int> synth_generate(const GenSpec& spec, const std::string& out_dir, uint64_t seed) {
    spec.validate();
    write_split(spec, (fs::path(out_dir) / "train").string(), "train", spec.train_count, seed);
    write_split(spec, (fs::path(out_dir) / "dev").string(), "dev", spec.dev_count, seed);
    return {spec.train_count, spec.dev_count};
}

std::vector<DatasetEntry> read_manifest(const std::string& split_dir) {
    const std::string path = (fs::path(split_dir) / "manifest.tsv").string();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::vector<DatasetEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        DatasetEntry e;
        std::string labels;
        if (!std::getline(ss, e.id, '\t') || !std::getline(ss, e.video_path, '\t'))
            throw DataError("manifest: malformed line");
        std::string frames;
        if (!std::getline(ss, frames, '\t') || !std::getline(ss, labels))
            throw DataError("manifest: malformed line");
        e.frames = std::stoi(frames);
        std::istringstream ls(labels);
        int id;
        while (ls >> id) e.labels.push_back(id);
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw DataError("manifest: no samples in " + path);
    return entries;
}

TensorF load_video(const std::string& split_dir, const DatasetEntry& entry) {
    TensorF v = read_mft1_file<float>((fs::path(split_dir) / entry.video_path).string());
    check(v.rank() == 4 && v.dims[0] == entry.frames, "dataset: video dims do not match manifest");
    return v;
}

int stretch_source_index(int t_prime, int t_in, int t_out) {
    int src = static_cast<int>(std::lround(static_cast<double>(t_prime) * t_in / t_out));
    return std::min(std::max(src, 0), t_in - 1);
}

TensorF augment(const TensorF& video, const AugmentConfig& cfg, bool train, Rng& rng) {
    check(video.rank() == 4, "augment: video must be [T,C,H,W]");
    const int T = video.dims[0], C = video.dims[1], H = video.dims[2], W = video.dims[3];
    check(cfg.crop <= H && cfg.crop <= W, "augment: crop larger than frame");

    int t_out = T;
    if (train) {
        const double u = rng.uniform(cfg.stretch_min, cfg.stretch_max);
        const int lo = static_cast<int>(std::ceil(cfg.stretch_min * T));
        const int hi = static_cast<int>(std::floor(cfg.stretch_max * T));
        t_out = std::min(std::max(static_cast<int>(std::lround(u * T)), lo), hi);
    }
    int ox = (W - cfg.crop) / 2, oy = (H - cfg.crop) / 2;
    bool flip = false;
    if (train) {
        oy = static_cast<int>(rng.uniform_int(0, H - cfg.crop));
        ox = static_cast<int>(rng.uniform_int(0, W - cfg.crop));
        flip = rng.bernoulli(cfg.flip_prob);
    }

    TensorF out = TensorF::zeros({t_out, C, cfg.crop, cfg.crop});
    for (int tp = 0; tp < t_out; ++tp) {
        const int ts = train ? stretch_source_index(tp, T, t_out) : tp;
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < cfg.crop; ++y) {
                const float* src = video.data.data() +
                                   ((static_cast<int64_t>(ts) * C + c) * H + (y + oy)) * W + ox;
                float* dst = out.data.data() +
                             ((static_cast<int64_t>(tp) * C + c) * cfg.crop + y) * cfg.crop;
                if (flip)
                    for (int x = 0; x < cfg.crop; ++x) dst[x] = src[cfg.crop - 1 - x];
                else
                    std::copy_n(src, cfg.crop, dst);
            }
    }
    return out;
}

TensorF frame_difference_map(const TensorF& video) {
    check(video.rank() == 4, "frame_difference_map: video must be [T,C,H,W]");
    const int T = video.dims[0], C = video.dims[1], H = video.dims[2], W = video.dims[3];
    check(T >= 2, "frame_difference_map: need at least two frames");
    TensorF out = TensorF::zeros({T - 1, H, W});
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int64_t fsz = C * plane;
    double mx = 0.0;
    for (int t = 0; t + 1 < T; ++t) {
        const float* a = video.data.data() + static_cast<int64_t>(t) * fsz;
        const float* b = a + fsz;
        float* dst = out.data.data() + static_cast<int64_t>(t) * plane;
        for (int64_t p = 0; p < plane; ++p) {
            double acc = 0;
            for (int c = 0; c < C; ++c)
                acc += std::fabs(static_cast<double>(b[c * plane + p]) - static_cast<double>(a[c * plane + p]));
            dst[p] = static_cast<float>(acc / C);
            mx = std::max(mx, static_cast<double>(dst[p]));
        }
    }
    if (mx > 0.0)
        for (auto& v : out.data) v = static_cast<float>(v / mx);
    return out;
}

}  // namespace mamfsd
