#include "rrseg/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rrseg/errors.hpp"

namespace rrseg {

namespace {

bool is_pow2(int64_t x) { return x > 0 && (x & (x - 1)) == 0; }

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t parse_i64(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        int64_t x = std::stoll(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + val + "'");
    }
}

double parse_f64(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        double x = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + val + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + val + "'");
}

}  // namespace

std::string to_string(SpatMode m) {
    switch (m) {
        case SpatMode::CE: return "ce";
        case SpatMode::MIL: return "mil";
        case SpatMode::Off: return "off";
    }
    return "ce";
}

std::string to_string(SampFeatures f) { return f == SampFeatures::V ? "v" : "v2p"; }

std::string to_string(SampText t) { return t == SampText::TSent ? "t_sent" : "t2"; }

ModelConfig validate_config(const ModelConfig& cfg) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(cfg.d1 > 0, "d1 must be positive");
    require(cfg.d2 > 0, "d2 must be positive");
    require(cfg.H1 > 0 && cfg.W1 > 0, "H1/W1 must be positive");
    require(cfg.H2 > 0 && cfg.W2 > 0, "H2/W2 must be positive");
    require(cfg.patch1 > 0, "patch1 must be positive");
    require(cfg.stride2 > 0, "stride2 must be positive");
    require(cfg.H1 % cfg.patch1 == 0,
            "H1 not divisible by patch1 (" + std::to_string(cfg.H1) + " % " +
                std::to_string(cfg.patch1) + " != 0)");
    require(cfg.W1 % cfg.patch1 == 0,
            "W1 not divisible by patch1 (" + std::to_string(cfg.W1) + " % " +
                std::to_string(cfg.patch1) + " != 0)");
    require(cfg.H2 % cfg.stride2 == 0,
            "H2 not divisible by stride2 (" + std::to_string(cfg.H2) + " % " +
                std::to_string(cfg.stride2) + " != 0)");
    require(cfg.W2 % cfg.stride2 == 0,
            "W2 not divisible by stride2 (" + std::to_string(cfg.W2) + " % " +
                std::to_string(cfg.stride2) + " != 0)");
    require(cfg.H2 % 4 == 0, "H2 not divisible by 4");
    require(cfg.W2 % 4 == 0, "W2 not divisible by 4");
    require(cfg.stride2 % 4 == 0 && is_pow2(cfg.stride2 / 4),
            "stride2/4 must be a power of two (dense prompt downsampling)");
    require(cfg.n_t >= 1, "n_t must be >= 1");
    require(cfg.n_p >= 1, "n_p must be >= 1");
    require(cfg.N_decomp >= 0 && cfg.N_interact >= 0 && cfg.N_pgen >= 0,
            "block depths must be >= 0");
    require(cfg.r_clip_t >= 0 && cfg.r_clip_v >= 0 && cfg.r_sam_v >= 0,
            "LoRA ranks must be >= 0");
    require(cfg.depth_clip >= 1 && cfg.depth_sam >= 1, "encoder depths must be >= 1");
    require(cfg.d1 % 16 == 0, "d1 must be divisible by 16 (per-head width 16)");
    require(cfg.d2 % 16 == 0, "d2 must be divisible by 16 (per-head width 16)");
    require(cfg.d2 % 8 == 0, "d2 must be divisible by 8 (decoder upscaling channels)");
    require(cfg.vocab_size >= 4, "vocab_size must be >= 4");
    require(cfg.max_len >= 2, "max_len must be >= 2 (one word plus EOS)");
    require(cfg.alpha_dice >= 0 && cfg.alpha_ortho >= 0 && cfg.alpha_dense >= 0 &&
                cfg.alpha_spat >= 0 && cfg.alpha_samp >= 0,
            "loss weights must be >= 0");
    require(cfg.lr >= 0, "lr must be >= 0");
    require(cfg.lr_floor >= 0, "lr_floor must be >= 0");
    require(cfg.weight_decay >= 0, "weight_decay must be >= 0");
    require(cfg.warmup_frac >= 0 && cfg.warmup_frac < 1, "warmup_frac must be in [0,1)");
    require(cfg.epochs >= 1, "epochs must be >= 1");
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.val_every >= 1, "val_every must be >= 1");
    return cfg;
}

namespace {

// Shared key table so parse and serialize cannot drift apart.
struct KeyHandlers {
    std::map<std::string, std::function<void(ModelConfig&, const std::string&)>> set;
    std::map<std::string, std::function<std::string(const ModelConfig&)>> get;
};

const KeyHandlers& key_handlers() {
    static const KeyHandlers h = [] {
        KeyHandlers k;
        auto i64 = [&k](const std::string& name, int64_t ModelConfig::* field) {
            k.set[name] = [name, field](ModelConfig& c, const std::string& v) {
                c.*field = parse_i64(name, v);
            };
            k.get[name] = [field](const ModelConfig& c) { return std::to_string(c.*field); };
        };
        auto f64 = [&k](const std::string& name, double ModelConfig::* field) {
            k.set[name] = [name, field](ModelConfig& c, const std::string& v) {
                c.*field = parse_f64(name, v);
            };
            k.get[name] = [field](const ModelConfig& c) {
                std::ostringstream os;
                os.precision(17);
                os << c.*field;
                return os.str();
            };
        };
        auto b = [&k](const std::string& name, bool ModelConfig::* field) {
            k.set[name] = [name, field](ModelConfig& c, const std::string& v) {
                c.*field = parse_bool(name, v);
            };
            k.get[name] = [field](const ModelConfig& c) {
                return (c.*field) ? "true" : "false";
            };
        };

        i64("d1", &ModelConfig::d1);
        i64("d2", &ModelConfig::d2);
        i64("H1", &ModelConfig::H1);
        i64("W1", &ModelConfig::W1);
        i64("H2", &ModelConfig::H2);
        i64("W2", &ModelConfig::W2);
        i64("patch1", &ModelConfig::patch1);
        i64("stride2", &ModelConfig::stride2);
        i64("n_t", &ModelConfig::n_t);
        i64("n_p", &ModelConfig::n_p);
        i64("N_decomp", &ModelConfig::N_decomp);
        i64("N_interact", &ModelConfig::N_interact);
        i64("N_pgen", &ModelConfig::N_pgen);
        i64("r_clip_t", &ModelConfig::r_clip_t);
        i64("r_clip_v", &ModelConfig::r_clip_v);
        i64("r_sam_v", &ModelConfig::r_sam_v);
        i64("depth_clip", &ModelConfig::depth_clip);
        i64("depth_sam", &ModelConfig::depth_sam);
        i64("vocab_size", &ModelConfig::vocab_size);
        i64("max_len", &ModelConfig::max_len);
        f64("alpha_dice", &ModelConfig::alpha_dice);
        f64("alpha_ortho", &ModelConfig::alpha_ortho);
        f64("alpha_dense", &ModelConfig::alpha_dense);
        f64("alpha_spat", &ModelConfig::alpha_spat);
        f64("alpha_samp", &ModelConfig::alpha_samp);
        b("cascaded", &ModelConfig::cascaded);
        b("use_dense_prompt", &ModelConfig::use_dense_prompt);
        f64("lr", &ModelConfig::lr);
        f64("lr_floor", &ModelConfig::lr_floor);
        f64("weight_decay", &ModelConfig::weight_decay);
        f64("warmup_frac", &ModelConfig::warmup_frac);
        i64("epochs", &ModelConfig::epochs);
        i64("batch_size", &ModelConfig::batch_size);
        i64("val_every", &ModelConfig::val_every);
        i64("seed", &ModelConfig::seed);

        k.set["spat_mode"] = [](ModelConfig& c, const std::string& v) {
            if (v == "ce") c.spat_mode = SpatMode::CE;
            else if (v == "mil") c.spat_mode = SpatMode::MIL;
            else if (v == "off") c.spat_mode = SpatMode::Off;
            else throw ConfigError("key 'spat_mode': expected ce|mil|off, got '" + v + "'");
        };
        k.get["spat_mode"] = [](const ModelConfig& c) { return to_string(c.spat_mode); };
        k.set["samp_features"] = [](ModelConfig& c, const std::string& v) {
            if (v == "v") c.samp_features = SampFeatures::V;
            else if (v == "v2p") c.samp_features = SampFeatures::V2p;
            else throw ConfigError("key 'samp_features': expected v|v2p, got '" + v + "'");
        };
        k.get["samp_features"] = [](const ModelConfig& c) { return to_string(c.samp_features); };
        k.set["samp_text"] = [](ModelConfig& c, const std::string& v) {
            if (v == "t_sent") c.samp_text = SampText::TSent;
            else if (v == "t2") c.samp_text = SampText::T2;
            else throw ConfigError("key 'samp_text': expected t_sent|t2, got '" + v + "'");
        };
        k.get["samp_text"] = [](const ModelConfig& c) { return to_string(c.samp_text); };
        return k;
    }();
    return h;
}

}  // namespace

ModelConfig parse_config_text(const std::string& text) {
    ModelConfig cfg;
    const auto& handlers = key_handlers();
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        auto it = handlers.set.find(key);
        if (it == handlers.set.end())
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(cfg, val);
    }
    return cfg;
}

ModelConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingFileError("config file not found: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ModelConfig& cfg) {
    const auto& handlers = key_handlers();
    std::ostringstream os;
    for (const auto& [key, get] : handlers.get) os << key << "=" << get(cfg) << "\n";
    return os.str();
}

}  // namespace rrseg
