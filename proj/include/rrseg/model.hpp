#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rrseg/config.hpp"
#include "rrseg/encoders.hpp"
#include "rrseg/maskgen.hpp"
#include "rrseg/prompter.hpp"

namespace rrseg {

template <typename T>
struct ForwardResult {
    FeatureBundle<T> features;
    PrompterOutput<T> prompts;
    ad::Var<T> f_img;    // [h2*w2, d2]
    ad::Var<T> f_dense;  // [h2*w2, d2]
    DecodeResult<T> decode;

    ad::Var<T> selected_mask() const { return decode.mask_logits[0]; }
};

// Full two-stage pipeline: dual encoders -> cascaded prompter -> prompt
// encoder + mask decoder. Construction from (cfg, cfg.seed) is deterministic.
template <typename T>
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    ForwardResult<T> forward(const TensorT<T>& image, const std::string& text, bool training);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    const TextTokenizer& tokenizer() const { return tok_; }

    // Exactly the fine-tuned set: LoRA factors, prompter, mask decoder
    // (incl. prompt encoder), and the filter/IoU tokens.
    std::vector<typename nn::ParamStore<T>::Entry> trainable_parameters() const {
        return params_.trainable();
    }

    TextEncoder<T>& text_encoder() { return *clip_t_; }
    VisualEncoder<T>& visual_encoder() { return *clip_v_; }
    VisualEncoder<T>& mask_image_encoder() { return *sam_v_; }
    Prompter<T>& prompter() { return *prompter_; }
    DensePromptEncoder<T>& prompt_encoder() { return *prompt_enc_; }
    MaskDecoder<T>& mask_decoder() { return *decoder_; }

private:
    ModelConfig cfg_;
    TextTokenizer tok_;
    nn::ParamStore<T> params_;
    std::unique_ptr<TextEncoder<T>> clip_t_;
    std::unique_ptr<VisualEncoder<T>> clip_v_;
    std::unique_ptr<VisualEncoder<T>> sam_v_;
    std::unique_ptr<Prompter<T>> prompter_;
    std::unique_ptr<DensePromptEncoder<T>> prompt_enc_;
    std::unique_ptr<MaskDecoder<T>> decoder_;
};

}  // namespace rrseg
