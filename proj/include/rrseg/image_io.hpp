#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrseg/metrics.hpp"
#include "rrseg/tensor.hpp"

namespace rrseg {

struct ImageU8 {
    int64_t h = 0, w = 0, channels = 0;  // channels: 1 or 3
    std::vector<uint8_t> v;              // row-major, interleaved

    ImageU8() = default;
    ImageU8(int64_t h_, int64_t w_, int64_t c_)
        : h(h_), w(w_), channels(c_), v(static_cast<size_t>(h_ * w_ * c_), 0) {}
    uint8_t& at(int64_t y, int64_t x, int64_t c) {
        return v[static_cast<size_t>((y * w + x) * channels + c)];
    }
    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return v[static_cast<size_t>((y * w + x) * channels + c)];
    }
};

// PNG (8-bit gray/RGB; palette and alpha are normalized away) or PGM (P2/P5),
// selected by content. Throws ImageFormatError / MissingFileError.
ImageU8 read_image(const std::string& path);

void write_png_rgb(const std::string& path, const ImageU8& img);
void write_png_gray(const std::string& path, const ImageU8& img);
// Predicted masks go out as 1-bit-per-pixel PNG.
void write_png_mask1(const std::string& path, const BinMask& mask);
void write_pgm(const std::string& path, const ImageU8& gray);

// Mask files carry 0/255; anything above 127 counts as foreground.
BinMask read_mask(const std::string& path);

// [H,W,3] floats in [0,1]; gray inputs are replicated across channels.
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);  // clamps to [0,1]

Tensor resize_bilinear_rgb(const Tensor& img, int64_t out_h, int64_t out_w);
BinMask resize_mask_nearest(const BinMask& mask, int64_t out_h, int64_t out_w);

}  // namespace rrseg
