#include "rrseg/model.hpp"

#include "rrseg/errors.hpp"

namespace rrseg {

template <typename T>
Model<T>::Model(const ModelConfig& cfg)
    : cfg_(validate_config(cfg)), tok_(cfg.vocab_size, cfg.max_len) {
    Rng rng(static_cast<uint64_t>(cfg_.seed));
    clip_t_ = std::make_unique<TextEncoder<T>>(params_, "clip_t", cfg_.vocab_size, cfg_.max_len,
                                               cfg_.d1, cfg_.depth_clip, cfg_.heads1(),
                                               cfg_.r_clip_t, rng);
    clip_v_ = std::make_unique<VisualEncoder<T>>(params_, "clip_v", cfg_.H1, cfg_.W1,
                                                 cfg_.patch1, cfg_.d1, cfg_.depth_clip,
                                                 cfg_.heads1(), cfg_.r_clip_v, rng);
    sam_v_ = std::make_unique<VisualEncoder<T>>(params_, "sam_v", cfg_.H2, cfg_.W2,
                                                cfg_.stride2, cfg_.d2, cfg_.depth_sam,
                                                cfg_.heads2(), cfg_.r_sam_v, rng);
    prompter_ = std::make_unique<Prompter<T>>(params_, cfg_, rng);
    prompt_enc_ = std::make_unique<DensePromptEncoder<T>>(params_, "mask_decoder.prompt_enc",
                                                          cfg_, rng);
    decoder_ = std::make_unique<MaskDecoder<T>>(params_, cfg_, rng);
}

template <typename T>
ForwardResult<T> Model<T>::forward(const TensorT<T>& image, const std::string& text,
                                   bool training) {
    if (image.ndim() != 3 || image.dim(0) != cfg_.H2 || image.dim(1) != cfg_.W2 ||
        image.dim(2) != 3)
        throw ShapeError("Model::forward: image must be [" + std::to_string(cfg_.H2) + ", " +
                         std::to_string(cfg_.W2) + ", 3], got " + image.shape_str());

    ForwardResult<T> r;
    // low-res view is derived from the high-res image inside the pipeline
    TensorT<T> image_lowres =
        ad::bilinear_resize(ad::constant(image), cfg_.H1, cfg_.W1)->val;

    auto [t_word, t_sent] = clip_t_->forward(text, tok_);
    r.features.t_word = t_word;
    r.features.t_sent = t_sent;
    r.features.v = clip_v_->forward(image_lowres);
    r.features.h1 = cfg_.h1();
    r.features.w1 = cfg_.w1();

    r.prompts = prompter_->forward(r.features, training);

    r.f_img = sam_v_->forward(image);
    if (cfg_.use_dense_prompt) {
        r.f_dense = prompt_enc_->forward(r.prompts.p_dense_logits);
    } else {
        r.f_dense = ad::constant(TensorT<T>::zeros({cfg_.h2() * cfg_.w2(), cfg_.d2}));
    }
    r.decode = decoder_->forward(r.f_img, r.f_dense, r.prompts.p_sparse);
    return r;
}

template class Model<float>;
template class Model<double>;

}  // namespace rrseg
