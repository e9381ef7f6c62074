#include "rrseg/encoders.hpp"

#include "rrseg/errors.hpp"

namespace rrseg {

using ad::Var;

template <typename T>
TextEncoder<T>::TextEncoder(nn::ParamStore<T>& ps, const std::string& scope,
                            int64_t vocab_size, int64_t max_len, int64_t d, int64_t depth,
                            int64_t heads, int64_t lora_rank, Rng& rng)
    : d_(d) {
    table_ = ps.add(scope + ".embed.table", TensorT<T>::randn({vocab_size, d}, rng, 0.02),
                    false);
    pos_ = ps.add(scope + ".embed.pos", TensorT<T>::randn({max_len, d}, rng, 0.02), false);
    for (int64_t i = 0; i < depth; ++i)
        blocks_.push_back(std::make_unique<nn::TransformerBlock<T>>(
            ps, scope + ".blocks." + std::to_string(i), d, heads, lora_rank, false, rng));
    final_ln_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".final_ln", d, false);
}

template <typename T>
std::pair<Var<T>, Var<T>> TextEncoder<T>::forward(const std::string& text,
                                                  const TextTokenizer& tok) const {
    std::vector<int64_t> ids = tok.encode(text);
    int64_t n = static_cast<int64_t>(ids.size());  // L words + EOS
    Var<T> x = ad::gather_rows(table_, ids);
    x = ad::add(x, ad::slice_rows(pos_, 0, n));
    for (const auto& b : blocks_) x = b->forward(x);
    x = final_ln_->forward(x);
    Var<T> t_word = ad::slice_rows(x, 0, n - 1);
    Var<T> t_sent = ad::slice_rows(x, n - 1, n);
    return {t_word, t_sent};
}

template <typename T>
VisualEncoder<T>::VisualEncoder(nn::ParamStore<T>& ps, const std::string& scope, int64_t img_h,
                                int64_t img_w, int64_t patch, int64_t d, int64_t depth,
                                int64_t heads, int64_t lora_rank, Rng& rng)
    : img_h_(img_h), img_w_(img_w), patch_(patch), d_(d) {
    patch_embed_ = std::make_unique<nn::LoraLinear<T>>(ps, scope + ".patch_embed",
                                                       patch * patch * 3, d, 0, false, rng);
    pos_ = ps.add(scope + ".embed.pos",
                  TensorT<T>::randn({grid_h() * grid_w(), d}, rng, 0.02), false);
    for (int64_t i = 0; i < depth; ++i)
        blocks_.push_back(std::make_unique<nn::TransformerBlock<T>>(
            ps, scope + ".blocks." + std::to_string(i), d, heads, lora_rank, false, rng));
    final_ln_ = std::make_unique<nn::LayerNorm<T>>(ps, scope + ".final_ln", d, false);
}

template <typename T>
Var<T> VisualEncoder<T>::forward(const TensorT<T>& image) const {
    if (image.ndim() != 3 || image.dim(0) != img_h_ || image.dim(1) != img_w_ ||
        image.dim(2) != 3)
        throw ShapeError("VisualEncoder: expected [" + std::to_string(img_h_) + ", " +
                         std::to_string(img_w_) + ", 3], got " + image.shape_str());
    int64_t gh = grid_h(), gw = grid_w();
    TensorT<T> patches({gh * gw, patch_ * patch_ * 3});
    for (int64_t py = 0; py < gh; ++py)
        for (int64_t px = 0; px < gw; ++px) {
            int64_t row = py * gw + px;
            int64_t idx = 0;
            for (int64_t dy = 0; dy < patch_; ++dy)
                for (int64_t dx = 0; dx < patch_; ++dx)
                    for (int64_t c = 0; c < 3; ++c)
                        patches.at(row, idx++) = image.at(py * patch_ + dy, px * patch_ + dx, c);
        }
    Var<T> x = patch_embed_->forward(ad::constant(std::move(patches)));
    x = ad::add(x, pos_);
    for (const auto& b : blocks_) x = b->forward(x);
    return final_ln_->forward(x);
}

template class TextEncoder<float>;
template class TextEncoder<double>;
template class VisualEncoder<float>;
template class VisualEncoder<double>;

}  // namespace rrseg
