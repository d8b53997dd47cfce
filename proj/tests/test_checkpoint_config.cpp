// MFCK checkpoint round-trips and the run-config parser/echo.

#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mamfsd/checkpoint.hpp"
#include "mamfsd/config.hpp"
#include "testutil.hpp"

using namespace mamfsd;
namespace fs = std::filesystem;

namespace {

ModelConfig small_cfg() {
    ModelConfig c;
    c.resolution = 16;
    c.stem_channels = 4;
    c.channels = {4, 8, 8, 8};
    c.strides = {1, 2, 2, 2};
    c.mam_count = 2;
    c.mam.layers = 2;
    c.lstm_hidden = 6;
    c.vocab = 3;
    return c;
}

}  // namespace

TEST_CASE("save -> load -> forward is bit-identical on 10 random inputs") {
    const std::string path = (fs::temp_directory_path() / "mamfsd_test.ckpt").string();
    Model<float> a = Model<float>::build(small_cfg(), 31);
    save_checkpoint(path, params_to_tensors(a.params));
    Model<float> b = Model<float>::build(small_cfg(), 99);  // different init, then overwritten
    load_params(b.params, load_checkpoint(path));
    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
        TensorF video = testutil::rand_tensor<float>({5, 3, 16, 16}, rng, 0.0, 1.0);
        Tape<float> ta, tb;
        auto fa = a.forward(ta, video, true);
        auto fb = b.forward(tb, video, true);
        const auto& la = ta.val(fa.logprobs);
        const auto& lb = tb.val(fb.logprobs);
        REQUIRE(la.dims == lb.dims);
        CHECK(std::memcmp(la.data.data(), lb.data.data(), la.data.size() * sizeof(float)) == 0);
    }
    fs::remove(path);
}

TEST_CASE("checkpoint file layout and the optimizer block") {
    const std::string path = (fs::temp_directory_path() / "mamfsd_test2.ckpt").string();
    Model<float> m = Model<float>::build(small_cfg(), 32);
    AdamState<float> st;
    st.lr = 1e-4;
    st.weight_decay = 1e-4;
    std::vector<Tensor<float>*> ps;
    std::vector<TensorF> gs;
    for (auto& [n, t] : m.params.items) {
        ps.push_back(&t);
        gs.push_back(TensorF::full(t.dims, 0.01f));
    }
    std::vector<const TensorF*> gp;
    for (auto& g : gs) gp.push_back(&g);
    adam_step(ps, gp, st);

    NamedTensors opt = adam_to_tensors(st, m.params);
    save_checkpoint(path, params_to_tensors(m.params), &opt);
    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.has_opt);
    CHECK(ck.tensors.size() == m.params.items.size());
    AdamState<float> st2 = adam_from_tensors(ck.opt, m.params);
    CHECK(st2.t == 1);
    CHECK(st2.lr == doctest::Approx(1e-4));
    for (size_t i = 0; i < st.m.size(); ++i) {
        CHECK(st2.m[i].data == st.m[i].data);
        CHECK(st2.v[i].data == st.v[i].data);
    }
    // magic comes first
    std::ifstream in(path, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::memcmp(magic, "MFCK", 4) == 0);
    fs::remove(path);

    // a checkpoint without the block reports has_opt = false
    const std::string path2 = (fs::temp_directory_path() / "mamfsd_test3.ckpt").string();
    save_checkpoint(path2, params_to_tensors(m.params));
    CHECK_FALSE(load_checkpoint(path2).has_opt);
    fs::remove(path2);
}

TEST_CASE("loading into a mismatched model is rejected") {
    const std::string path = (fs::temp_directory_path() / "mamfsd_test4.ckpt").string();
    Model<float> a = Model<float>::build(small_cfg(), 33);
    save_checkpoint(path, params_to_tensors(a.params));
    ModelConfig other = small_cfg();
    other.vocab = 7;  // classifier dims change
    Model<float> b = Model<float>::build(other, 33);
    CHECK_THROWS_AS(load_params(b.params, load_checkpoint(path)), ShapeError);
    fs::remove(path);
}

TEST_CASE("config defaults, echo round-trip, and unknown keys") {
    RunConfig def;
    CHECK(def.train_lr == 1e-4);
    CHECK(def.train_weight_decay == 1e-4);
    CHECK(def.train_batch_size == 2);
    CHECK(def.train_epochs == 50);
    CHECK(def.train_lr_drop_epochs == std::vector<int>{30, 40});
    CHECK(def.train_lr_drop_factor == 0.2);
    CHECK(def.decode_beam == 10);
    CHECK(def.mam_count == 4);
    CHECK(def.mam_layers == 4);
    CHECK(def.mam_kernel == 3);
    CHECK(def.distill_alpha == 1.0);
    CHECK(def.data_flip_prob == 0.5);

    const std::string text = def.echo();
    RunConfig back = RunConfig::parse_string(text);
    CHECK(back.echo() == text);

    CHECK_THROWS_AS(RunConfig::parse_string("[train]\nbogus = 1\n"), DataError);
    CHECK_THROWS_AS(RunConfig::parse_string("[nosuch]\nlr = 1\n"), DataError);
    CHECK_THROWS_AS(RunConfig::parse_string("[train]\nlr = abc\n"), DataError);
    CHECK_THROWS_AS(RunConfig::parse_string("[train]\nlr = -1\n"), ShapeError);

    RunConfig c = RunConfig::parse_string("[train]\nlr = 0.002\nepochs = 3\n[mam]\ncount = 2\n");
    CHECK(c.train_lr == 0.002);
    CHECK(c.train_epochs == 3);
    CHECK(c.mam_count == 2);
}

TEST_CASE("lr schedule: drops by the factor after each configured epoch") {
    RunConfig cfg;
    CHECK(cfg.lr_at_epoch(1) == doctest::Approx(1e-4));
    CHECK(cfg.lr_at_epoch(30) == doctest::Approx(1e-4));
    CHECK(cfg.lr_at_epoch(31) == doctest::Approx(2e-5));
    CHECK(cfg.lr_at_epoch(40) == doctest::Approx(2e-5));
    CHECK(cfg.lr_at_epoch(41) == doctest::Approx(4e-6));
    CHECK(cfg.lr_at_epoch(50) == doctest::Approx(4e-6));
}
