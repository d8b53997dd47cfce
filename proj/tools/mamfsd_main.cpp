// mamfsd command line: dataset generation, training, evaluation, decoding,
// and attention export.
//
// Exit codes: 0 success, 1 usage, 2 data/config error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mamfsd/checkpoint.hpp"
#include "mamfsd/config.hpp"
#include "mamfsd/ctc.hpp"
#include "mamfsd/data.hpp"
#include "mamfsd/error.hpp"
#include "mamfsd/export.hpp"
#include "mamfsd/train.hpp"

namespace fs = std::filesystem;
using namespace mamfsd;

namespace {

RunConfig load_run_config(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    return RunConfig::parse_file(config_path);
}

// Model from a checkpoint plus the config echoed beside it (or an override).
Model<float> load_model(const std::string& ckpt_path, const std::string& config_override) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::string cfg_path = config_override;
    if (cfg_path.empty()) {
        cfg_path = (fs::path(ckpt_path).parent_path() / "config.ini").string();
        if (!fs::exists(cfg_path))
            throw DataError("no config.ini beside checkpoint; pass --config");
    }
    RunConfig rc = RunConfig::parse_file(cfg_path);
    const TensorF* clsb = ckpt.find("cls.b");
    if (clsb == nullptr || clsb->rank() != 1) throw DataError("checkpoint: missing classifier");
    const int vocab = clsb->dims[0] - 1;
    Model<float> model = Model<float>::build(rc.model_config(vocab), rc.train_seed);
    load_params(model.params, ckpt);
    return model;
}

// Center-crop a raw video down to the model resolution.
TensorF to_model_input(const Model<float>& model, const TensorF& video) {
    AugmentConfig ac;
    ac.crop = model.cfg.resolution;
    Rng dummy(0);
    return augment(video, ac, /*train=*/false, dummy);
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, uint64_t seed) {
    GenSpec spec = spec_path.empty() ? GenSpec{} : GenSpec::parse_file(spec_path);
    auto [ntrain, ndev] = synth_generate(spec, out_dir, seed);
    std::printf("wrote %d train and %d dev samples to %s\n", ntrain, ndev, out_dir.c_str());
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int64_t seed, bool no_mam, bool no_distill) {
    RunConfig cfg = load_run_config(config_path);
    if (seed >= 0) cfg.train_seed = static_cast<uint64_t>(seed);
    if (no_mam) cfg.mam_count = 0;
    if (no_distill) {
        cfg.distill_enabled = false;
        cfg.distill_alpha = cfg.distill_beta = cfg.distill_lambda = 0.0;
    }
    TrainResult res = train_run(cfg, data_dir, out_dir);
    std::printf("best dev WER %.2f%% (epoch %d); checkpoints in %s\n", res.best_dev_wer,
                res.best_epoch, out_dir.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, const std::string& data_dir,
             int beam, const std::string& report_path) {
    Model<float> model = load_model(ckpt, config_path);
    auto samples = load_split(data_dir);
    if (infer_vocab(samples) > model.cfg.vocab)
        throw DataError("vocab mismatch: dataset labels exceed the checkpoint vocabulary");
    AugmentConfig ac;
    ac.crop = model.cfg.resolution;
    EvalResult res = evaluate(model, samples, ac, beam);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!report_path.empty()) {
        file.open(report_path, std::ios::binary);
        if (!file) throw DataError("cannot write report: " + report_path);
        out = &file;
    }
    (*out) << "id,wer,ins,del,sub,ref_len\n";
    for (const auto& row : res.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s,%.4f,%lld,%lld,%lld,%lld\n", row.id.c_str(),
                      row.wer.wer, static_cast<long long>(row.wer.ins),
                      static_cast<long long>(row.wer.del), static_cast<long long>(row.wer.sub),
                      static_cast<long long>(row.wer.sum));
        (*out) << line;
    }
    char summary[256];
    std::snprintf(summary, sizeof(summary),
                  "POOLED,%.4f,%lld,%lld,%lld,%lld,beam=%d,mean_logp=%.6f\n", res.pooled.wer,
                  static_cast<long long>(res.pooled.ins), static_cast<long long>(res.pooled.del),
                  static_cast<long long>(res.pooled.sub), static_cast<long long>(res.pooled.sum),
                  beam, res.mean_logp);
    (*out) << summary;
    if (out != &std::cout) std::printf("%s", summary);
    return kExitOk;
}

int cmd_decode(const std::string& ckpt, const std::string& config_path, const std::string& video_path,
               int beam) {
    Model<float> model = load_model(ckpt, config_path);
    TensorF video = to_model_input(model, read_mft1_file<float>(video_path));
    Tape<float> tape;
    ModelForward<float> fwd = model.forward(tape, video, /*with_aux=*/false);
    const TensorF& lp = tape.val(fwd.logprobs);
    auto show = [&](const char* name, const std::vector<int>& seq) {
        double logp = -ctc::loss_value(lp.data.data(), lp.dims[0], lp.dims[1], seq);
        std::printf("%s logp=%.6f:", name, logp);
        for (int id : seq) std::printf(" %d", id);
        std::printf("\n");
    };
    show("greedy", ctc::greedy_decode(lp));
    show("beam", ctc::beam_decode(lp, beam));
    return kExitOk;
}

int cmd_export_attention(const std::string& ckpt, const std::string& config_path,
                         const std::string& video_path, int stage, const std::string& out_dir) {
    Model<float> model = load_model(ckpt, config_path);
    TensorF video = to_model_input(model, read_mft1_file<float>(video_path));
    AttentionExport res = export_attention(model, video, stage, out_dir);
    std::printf("wrote %zu attention maps and %zu difference maps to %s\n",
                res.attention_pgms.size(), res.diff_pgms.size(), out_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motor-attention + frame-level self-distillation video sequence lab"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_spec, gen_out;
    int64_t gen_seed = 1;
    gen->add_option("--spec", gen_spec, "gen spec file (key=value)");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--seed", gen_seed, "global seed");

    auto* train = app.add_subcommand("train", "train a model");
    std::string train_cfg, train_data, train_out;
    int64_t train_seed = -1;
    bool no_mam = false, no_distill = false;
    train->add_option("--config", train_cfg, "run config file");
    train->add_option("--data", train_data, "dataset root (train/ + dev/)")->required();
    train->add_option("--out", train_out, "run output directory")->required();
    train->add_option("--seed", train_seed, "seed override");
    train->add_flag("--no-mam", no_mam, "disable motor attention (mam.count=0)");
    train->add_flag("--no-distill", no_distill, "disable self-distillation");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_cfg, ev_data, ev_report;
    int ev_beam = 10;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--config", ev_cfg, "config override (default: config.ini beside ckpt)");
    ev->add_option("--data", ev_data, "split directory (contains manifest.tsv)")->required();
    ev->add_option("--beam", ev_beam, "beam width (1 = greedy)");
    ev->add_option("--report", ev_report, "write the per-sample CSV here instead of stdout");

    auto* dec = app.add_subcommand("decode", "decode one video file");
    std::string dec_ckpt, dec_cfg, dec_video;
    int dec_beam = 10;
    dec->add_option("--ckpt", dec_ckpt, "checkpoint file")->required();
    dec->add_option("--config", dec_cfg, "config override");
    dec->add_option("--video", dec_video, "MFT1 video file")->required();
    dec->add_option("--beam", dec_beam, "beam width");

    auto* ex = app.add_subcommand("export-attention", "export MAM intensity maps as PGM + CSV");
    std::string ex_ckpt, ex_cfg, ex_video, ex_out;
    int ex_stage = 1;
    ex->add_option("--ckpt", ex_ckpt, "checkpoint file")->required();
    ex->add_option("--config", ex_cfg, "config override");
    ex->add_option("--video", ex_video, "MFT1 video file")->required();
    ex->add_option("--stage", ex_stage, "stage index (1..4)")->required();
    ex->add_option("--out", ex_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, static_cast<uint64_t>(gen_seed));
        if (train->parsed()) return cmd_train(train_cfg, train_data, train_out, train_seed, no_mam, no_distill);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_cfg, ev_data, ev_beam, ev_report);
        if (dec->parsed()) return cmd_decode(dec_ckpt, dec_cfg, dec_video, dec_beam);
        if (ex->parsed()) return cmd_export_attention(ex_ckpt, ex_cfg, ex_video, ex_stage, ex_out);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
