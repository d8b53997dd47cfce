// Synthetic generator determinism, segment rendering, augmentation
// arithmetic, and the inter-frame difference map.

#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mamfsd/data.hpp"
#include "mamfsd/error.hpp"
#include "testutil.hpp"

using namespace mamfsd;
namespace fs = std::filesystem;

namespace {

GenSpec tiny_spec() {
    GenSpec s;
    s.gloss_count = 10;
    s.train_count = 6;
    s.dev_count = 3;
    s.len_min = 2;
    s.len_max = 5;
    s.dur_min = 8;
    s.dur_max = 12;
    s.resolution = 24;
    return s;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& rel : fa)
        if (slurp(a / rel) != slurp(b / rel)) return false;
    return true;
}

}  // namespace

TEST_CASE("generation is a pure function of spec and seed") {
    const fs::path base = fs::temp_directory_path() / "mamfsd_test_gen";
    fs::remove_all(base);
    synth_generate(tiny_spec(), (base / "a").string(), 77);
    synth_generate(tiny_spec(), (base / "b").string(), 77);
    synth_generate(tiny_spec(), (base / "c").string(), 78);
    CHECK(dirs_equal(base / "a", base / "b"));
    CHECK_FALSE(dirs_equal(base / "a", base / "c"));
    // manifest has exactly train_count lines
    auto entries = read_manifest((base / "a" / "train").string());
    CHECK(entries.size() == 6);
    fs::remove_all(base);
}

TEST_CASE("label lengths stay inside the configured range") {
    GenSpec spec = tiny_spec();
    for (int i = 0; i < 40; ++i) {
        SynthSample s = make_sample(5, "train", i, spec);
        CHECK(s.labels.size() >= 2);
        CHECK(s.labels.size() <= 5);
        CHECK(s.total_frames() >= 2 * spec.dur_min);
        for (int id : s.labels) {
            CHECK(id >= 1);
            CHECK(id <= spec.gloss_count);
        }
    }
}

TEST_CASE("pixels stay inside [0,1] and videos match manifests") {
    GenSpec spec = tiny_spec();
    const fs::path base = fs::temp_directory_path() / "mamfsd_test_gen2";
    fs::remove_all(base);
    synth_generate(spec, base.string(), 3);
    auto entries = read_manifest((base / "train").string());
    for (const auto& e : entries) {
        TensorF v = load_video((base / "train").string(), e);
        CHECK(v.dims[0] == e.frames);
        CHECK(v.dims[1] == 3);
        for (float x : v.data) {
            CHECK(x >= 0.0f);
            CHECK(x <= 1.0f);
        }
    }
    fs::remove_all(base);
}

TEST_CASE("a segment rendered alone equals its slice of the full video away from joins") {
    GenSpec spec = tiny_spec();
    SynthSample s = make_sample(11, "train", 0, spec);
    TensorF video = render_sample_video(s.segments, spec.resolution, spec.fade);
    const int64_t fsz = static_cast<int64_t>(3) * spec.resolution * spec.resolution;
    std::vector<float> frame(static_cast<size_t>(fsz));
    int start = 0;
    for (size_t j = 0; j < s.segments.size(); ++j) {
        const auto& seg = s.segments[j];
        for (int lt = 0; lt < seg.duration; ++lt) {
            const bool at_join = (j > 0 && lt == 0) || (j + 1 < s.segments.size() && lt == seg.duration - 1);
            if (at_join) continue;  // inside the 2-frame cross-fade
            render_instance(seg, spec.resolution, lt, frame.data());
            const float* got = video.data.data() + (start + lt) * fsz;
            CHECK(std::memcmp(frame.data(), got, static_cast<size_t>(fsz) * sizeof(float)) == 0);
        }
        start += seg.duration;
    }
}

TEST_CASE("temporal stretch bounds and the hand-enumerated index map") {
    // stretch 0.8 on T=40 gives 32 frames; 1.2 gives 48
    CHECK(static_cast<int>(std::lround(0.8 * 40)) == 32);
    CHECK(static_cast<int>(std::lround(1.2 * 40)) == 48);
    // frame t' maps to round(t' * T / T'), clamped
    const std::vector<std::pair<int, int>> expect32 = {{0, 0}, {1, 1}, {2, 3}, {3, 4},
                                                       {4, 5}, {16, 20}, {31, 39}};
    for (auto [tp, src] : expect32) CHECK(stretch_source_index(tp, 40, 32) == src);
    const std::vector<std::pair<int, int>> expect48 = {{0, 0}, {1, 1}, {2, 2}, {3, 3},
                                                       {6, 5}, {47, 39}};
    for (auto [tp, src] : expect48) CHECK(stretch_source_index(tp, 40, 48) == src);

    Rng rng(13);
    TensorF video = testutil::rand_tensor<float>({40, 3, 16, 16}, rng, 0.0, 1.0);
    AugmentConfig cfg;
    cfg.crop = 16;
    for (int trial = 0; trial < 30; ++trial) {
        TensorF out = augment(video, cfg, true, rng);
        CHECK(out.dims[0] >= 32);
        CHECK(out.dims[0] <= 48);
        CHECK(out.dims[2] == 16);
    }
}

TEST_CASE("unit stretch keeps the frame count; eval equals neutral train augment") {
    Rng rng(14);
    TensorF video = testutil::rand_tensor<float>({10, 3, 16, 16}, rng, 0.0, 1.0);
    AugmentConfig cfg;
    cfg.crop = 16;  // crop == resolution, so the random offset is forced to 0
    cfg.flip_prob = 0.0;
    cfg.stretch_min = 1.0;
    cfg.stretch_max = 1.0;
    Rng r1(1), r2(2);
    TensorF train_out = augment(video, cfg, true, r1);
    TensorF eval_out = augment(video, cfg, false, r2);
    CHECK(train_out.dims == eval_out.dims);
    CHECK(train_out.data == eval_out.data);
}

TEST_CASE("eval mode center-crops only") {
    TensorF video = TensorF::zeros({2, 1, 6, 6});
    // mark the center 4x4 region of frame 0
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x) video.at({0, 0, y, x}) = 1.0f;
    AugmentConfig cfg;
    cfg.crop = 4;
    Rng rng(1);
    TensorF out = augment(video, cfg, false, rng);
    CHECK(out.dims == std::vector<int>{2, 1, 4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(out.at({0, 0, y, x}) == 1.0f);
}

TEST_CASE("crop larger than the frame is rejected") {
    TensorF video = TensorF::zeros({4, 3, 8, 8});
    AugmentConfig cfg;
    cfg.crop = 16;
    Rng rng(1);
    CHECK_THROWS_AS(augment(video, cfg, true, rng), ShapeError);
}

TEST_CASE("difference map: static video, single toggle, and the scalar oracle") {
    // static video -> all zeros
    TensorF still = TensorF::full({4, 3, 5, 5}, 0.3f);
    TensorF d0 = frame_difference_map(still);
    CHECK(d0.dims == std::vector<int>{3, 5, 5});
    for (float v : d0.data) CHECK(v == 0.0f);

    // one pixel toggling 0 -> 1: one nonzero entry per map, normalized to 1
    TensorF toggle = TensorF::zeros({3, 3, 4, 4});
    for (int c = 0; c < 3; ++c) toggle.at({1, c, 2, 2}) = 1.0f;
    TensorF d1 = frame_difference_map(toggle);
    int nonzero = 0;
    for (float v : d1.data)
        if (v != 0.0f) {
            ++nonzero;
            CHECK(v == 1.0f);
        }
    CHECK(nonzero == 2);  // appears at t=0->1 and disappears at t=1->2

    // random video vs direct per-element recomputation
    Rng rng(15);
    TensorF video = testutil::rand_tensor<float>({5, 3, 4, 4}, rng, 0.0, 1.0);
    TensorF dm = frame_difference_map(video);
    double mx = 0;
    std::vector<double> raw(dm.data.size());
    for (int t = 0; t < 4; ++t)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                double acc = 0;
                for (int c = 0; c < 3; ++c)
                    acc += std::fabs(double(video.at({t + 1, c, y, x})) - double(video.at({t, c, y, x})));
                raw[size_t((t * 4 + y) * 4 + x)] = acc / 3.0;
                mx = std::max(mx, acc / 3.0);
            }
    for (size_t i = 0; i < raw.size(); ++i)
        CHECK(dm.data[i] == doctest::Approx(raw[i] / mx).epsilon(1e-6));

    CHECK_THROWS_AS(frame_difference_map(TensorF::zeros({1, 3, 4, 4})), ShapeError);
}

TEST_CASE("gen spec parser rejects unknown keys") {
    const fs::path p = fs::temp_directory_path() / "mamfsd_spec_test.txt";
    {
        std::ofstream out(p);
        out << "G=5\nbogus=3\n";
    }
    CHECK_THROWS_AS(GenSpec::parse_file(p.string()), DataError);
    {
        std::ofstream out(p);
        out << "G=5\ntrain=7\nres=16\n";
    }
    GenSpec s = GenSpec::parse_file(p.string());
    CHECK(s.gloss_count == 5);
    CHECK(s.train_count == 7);
    fs::remove(p);
}
