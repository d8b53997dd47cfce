#include "mamfsd/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mamfsd/error.hpp"

namespace mamfsd {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string fmt_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (...) {
            throw DataError("config: bad integer list element '" + item + "'");
        }
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw DataError("config: bad boolean '" + s + "'");
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// section.key -> accessors; insertion order defines the echo order
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> f = [] {
        std::vector<std::pair<std::string, Field>> v;
        auto add_int = [&](const std::string& k, int RunConfig::*m) {
            v.push_back({k, {[m, k](RunConfig& c, const std::string& s) {
                                 try { c.*m = std::stoi(s); } catch (...) { throw DataError("config: bad integer for " + k); }
                             },
                             [m](const RunConfig& c) { return std::to_string(c.*m); }}});
        };
        auto add_dbl = [&](const std::string& k, double RunConfig::*m) {
            v.push_back({k, {[m, k](RunConfig& c, const std::string& s) {
                                 try { c.*m = std::stod(s); } catch (...) { throw DataError("config: bad number for " + k); }
                             },
                             [m](const RunConfig& c) { return fmt_double(c.*m); }}});
        };
        auto add_bool = [&](const std::string& k, bool RunConfig::*m) {
            v.push_back({k, {[m](RunConfig& c, const std::string& s) { c.*m = parse_bool(s); },
                             [m](const RunConfig& c) { return (c.*m) ? "true" : "false"; }}});
        };
        auto add_ints = [&](const std::string& k, std::vector<int> RunConfig::*m) {
            v.push_back({k, {[m](RunConfig& c, const std::string& s) { c.*m = parse_ints(s); },
                             [m](const RunConfig& c) { return fmt_ints(c.*m); }}});
        };
        auto add_u64 = [&](const std::string& k, uint64_t RunConfig::*m) {
            v.push_back({k, {[m, k](RunConfig& c, const std::string& s) {
                                 try { c.*m = std::stoull(s); } catch (...) { throw DataError("config: bad integer for " + k); }
                             },
                             [m](const RunConfig& c) { return std::to_string(c.*m); }}});
        };
        add_int("model.stem", &RunConfig::model_stem);
        add_ints("model.channels", &RunConfig::model_channels);
        add_ints("model.strides", &RunConfig::model_strides);
        add_int("model.blocks", &RunConfig::model_blocks);
        add_int("model.resolution", &RunConfig::model_resolution);
        add_int("model.lstm_hidden", &RunConfig::model_lstm_hidden);
        add_int("model.tconv_kernel", &RunConfig::model_tconv_kernel);
        add_int("mam.count", &RunConfig::mam_count);
        add_int("mam.layers", &RunConfig::mam_layers);
        add_int("mam.kernel", &RunConfig::mam_kernel);
        add_int("mam.hidden", &RunConfig::mam_hidden);
        add_bool("mam.depthwise", &RunConfig::mam_depthwise);
        add_dbl("distill.alpha", &RunConfig::distill_alpha);
        add_dbl("distill.beta", &RunConfig::distill_beta);
        add_dbl("distill.lambda", &RunConfig::distill_lambda);
        add_bool("distill.enabled", &RunConfig::distill_enabled);
        add_dbl("train.lr", &RunConfig::train_lr);
        add_dbl("train.weight_decay", &RunConfig::train_weight_decay);
        add_int("train.batch_size", &RunConfig::train_batch_size);
        add_int("train.epochs", &RunConfig::train_epochs);
        add_ints("train.lr_drop_epochs", &RunConfig::train_lr_drop_epochs);
        add_dbl("train.lr_drop_factor", &RunConfig::train_lr_drop_factor);
        add_u64("train.seed", &RunConfig::train_seed);
        add_bool("train.dev_beam", &RunConfig::train_dev_beam);
        add_bool("train.aux_ctc", &RunConfig::train_aux_ctc);
        add_bool("train.aux_kl", &RunConfig::train_aux_kl);
        add_dbl("train.aux_ctc_weight", &RunConfig::train_aux_ctc_weight);
        add_dbl("train.aux_kl_weight", &RunConfig::train_aux_kl_weight);
        add_int("decode.beam", &RunConfig::decode_beam);
        add_int("data.crop", &RunConfig::data_crop);
        add_dbl("data.flip_prob", &RunConfig::data_flip_prob);
        add_dbl("data.stretch_min", &RunConfig::data_stretch_min);
        add_dbl("data.stretch_max", &RunConfig::data_stretch_max);
        return v;
    }();
    return f;
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, const Field*> lookup;
    for (const auto& [k, f] : fields()) lookup[k] = &f;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string& s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        };
        trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        trim(key);
        trim(val);
        const std::string full = section.empty() ? key : section + "." + key;
        auto it = lookup.find(full);
        if (it == lookup.end()) throw DataError("config: unknown key '" + full + "'");
        it->second->set(cfg, val);
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

std::string RunConfig::echo() const {
    std::string out;
    std::string section;
    for (const auto& [k, f] : fields()) {
        const auto dot = k.find('.');
        const std::string sec = k.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += k.substr(dot + 1) + " = " + f.get(*this) + "\n";
    }
    return out;
}

void RunConfig::validate() const {
    check(model_channels.size() == 4 && model_strides.size() == 4, "config: four stages required");
    check(model_blocks >= 1, "config: model.blocks must be >= 1");
    check(mam_count >= 0 && mam_count <= 4, "config: mam.count must be in 0..4");
    check(mam_layers >= 1, "config: mam.layers must be >= 1");
    check(mam_kernel % 2 == 1, "config: mam.kernel must be odd");
    check(distill_alpha >= 0 && distill_beta >= 0 && distill_lambda >= 0,
          "config: distill weights must be nonnegative");
    check(train_lr > 0, "config: train.lr must be positive");
    check(train_weight_decay >= 0, "config: train.weight_decay must be nonnegative");
    check(train_batch_size >= 1, "config: train.batch_size must be >= 1");
    check(train_epochs >= 1, "config: train.epochs must be >= 1");
    check(train_lr_drop_factor > 0 && train_lr_drop_factor <= 1, "config: bad lr_drop_factor");
    check(decode_beam >= 1, "config: decode.beam must be >= 1");
    check(data_crop >= 8 && data_crop % 8 == 0, "config: data.crop must be a positive multiple of 8");
    check(data_flip_prob >= 0 && data_flip_prob <= 1, "config: data.flip_prob must be in [0,1]");
    check(data_stretch_min > 0 && data_stretch_max >= data_stretch_min, "config: bad stretch range");
    check(model_resolution == data_crop, "config: model.resolution must equal data.crop");
}

ModelConfig RunConfig::model_config(int vocab) const {
    ModelConfig mc;
    mc.resolution = model_resolution;
    mc.stem_channels = model_stem;
    mc.channels = model_channels;
    mc.strides = model_strides;
    mc.blocks_per_stage = model_blocks;
    mc.mam_count = mam_count;
    mc.mam.layers = mam_layers;
    mc.mam.kernel = mam_kernel;
    mc.mam.hidden = mam_hidden;
    mc.mam.depthwise = mam_depthwise;
    mc.lstm_hidden = model_lstm_hidden;
    mc.tconv_kernel = model_tconv_kernel;
    mc.vocab = vocab;
    mc.validate();
    return mc;
}

AugmentConfig RunConfig::augment_config() const {
    AugmentConfig ac;
    ac.crop = data_crop;
    ac.flip_prob = data_flip_prob;
    ac.stretch_min = data_stretch_min;
    ac.stretch_max = data_stretch_max;
    return ac;
}

DistillWeights RunConfig::distill_weights() const {
    DistillWeights w;
    w.alpha = distill_alpha;
    w.beta = distill_beta;
    w.lambda = distill_lambda;
    return w;
}

double RunConfig::lr_at_epoch(int epoch) const {
    double lr = train_lr;
    for (int d : train_lr_drop_epochs)
        if (epoch > d) lr *= train_lr_drop_factor;
    return lr;
}

}  // namespace mamfsd
