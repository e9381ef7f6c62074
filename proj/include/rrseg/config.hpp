#pragma once

#include <cstdint>
#include <string>

namespace rrseg {

enum class SpatMode { CE, MIL, Off };
enum class SampFeatures { V, V2p };
enum class SampText { TSent, T2 };

// Flat model + training configuration. Defaults are the toy scale used by the
// test suite; the reference scale (512/1024 inputs, width 1152) is expressed
// through configs/reference.cfg.
struct ModelConfig {
    // joint embedding widths
    int64_t d1 = 64;   // text/visual joint width
    int64_t d2 = 32;   // mask-branch width

    // input geometry
    int64_t H1 = 64, W1 = 64;     // low-res view
    int64_t H2 = 128, W2 = 128;   // high-res view
    int64_t patch1 = 8;           // low-res visual patch size
    int64_t stride2 = 16;         // mask-branch downsampling

    // prompter geometry
    int64_t n_t = 3;  // subspace embedding count
    int64_t n_p = 9;  // sparse prompt count
    int64_t N_decomp = 2, N_interact = 2, N_pgen = 2;

    // LoRA ranks (0 = fully frozen, no adapter)
    int64_t r_clip_t = 8, r_clip_v = 8, r_sam_v = 8;

    // encoder stacks
    int64_t depth_clip = 2;
    int64_t depth_sam = 2;
    int64_t vocab_size = 262144;  // hash-bucket count for the toy tokenizer
    int64_t max_len = 32;         // token cap including the appended EOS

    // loss weights and variants
    double alpha_dice = 1.0;
    double alpha_ortho = 0.5;
    double alpha_dense = 0.0;
    double alpha_spat = 0.0;
    double alpha_samp = 0.5;
    SpatMode spat_mode = SpatMode::CE;
    SampFeatures samp_features = SampFeatures::V;
    SampText samp_text = SampText::T2;

    // ablation switches
    bool cascaded = true;
    bool use_dense_prompt = true;

    // training
    double lr = 1e-4;
    double lr_floor = 1e-6;
    double weight_decay = 0.01;
    double warmup_frac = 0.05;
    int64_t epochs = 300;
    int64_t batch_size = 64;
    int64_t val_every = 1;  // epochs between validation passes
    int64_t seed = 0;

    int64_t h1() const { return H1 / patch1; }
    int64_t w1() const { return W1 / patch1; }
    int64_t h2() const { return H2 / stride2; }
    int64_t w2() const { return W2 / stride2; }
    int64_t heads1() const { return d1 / 16; }  // per-head width 16
    int64_t heads2() const { return d2 / 16; }
    int64_t dense_h() const { return H2 / 4; }
    int64_t dense_w() const { return W2 / 4; }
};

// Throws ConfigError naming the first violated invariant; returns cfg unchanged.
ModelConfig validate_config(const ModelConfig& cfg);

// One key=value per line, '#' comments, unknown keys are an error.
ModelConfig parse_config_text(const std::string& text);
ModelConfig parse_config_file(const std::string& path);
std::string serialize_config(const ModelConfig& cfg);

std::string to_string(SpatMode m);
std::string to_string(SampFeatures f);
std::string to_string(SampText t);

}  // namespace rrseg
