#include "rrseg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "rrseg/autodiff.hpp"
#include "rrseg/errors.hpp"

namespace rrseg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageU8 read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw MissingFileError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError("corrupt PNG: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError("unsupported PNG channel count in " + path);
    }
    ImageU8 img(h, w, channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.v.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const uint8_t* data, int64_t h, int64_t w,
               int color_type, int bit_depth, int64_t row_bytes) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int64_t y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(data + y * row_bytes);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool has_png_magic(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingFileError("cannot open " + path);
    unsigned char sig[8] = {};
    f.read(reinterpret_cast<char*>(sig), 8);
    return !png_sig_cmp(sig, 0, static_cast<size_t>(f.gcount()));
}

int pgm_next_int(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value)) throw ImageFormatError("truncated PGM header");
    return value;
}

ImageU8 read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingFileError("cannot open " + path);
    std::string magic(2, '\0');
    f.read(magic.data(), 2);
    if (magic != "P5" && magic != "P2") throw ImageFormatError("not a PGM file: " + path);
    int w = pgm_next_int(f), h = pgm_next_int(f), maxval = pgm_next_int(f);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw ImageFormatError("unsupported PGM header in " + path);
    ImageU8 img(h, w, 1);
    if (magic == "P5") {
        f.get();  // single whitespace after maxval
        f.read(reinterpret_cast<char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
        if (f.gcount() != static_cast<std::streamsize>(img.v.size()))
            throw ImageFormatError("truncated PGM data in " + path);
    } else {
        for (auto& px : img.v) {
            int val;
            if (!(f >> val)) throw ImageFormatError("truncated PGM data in " + path);
            px = static_cast<uint8_t>(val);
        }
    }
    return img;
}

}  // namespace

ImageU8 read_image(const std::string& path) {
    if (has_png_magic(path)) return read_png(path);
    return read_pgm(path);
}

void write_png_rgb(const std::string& path, const ImageU8& img) {
    if (img.channels != 3) throw ImageFormatError("write_png_rgb: expected 3 channels");
    write_png(path, img.v.data(), img.h, img.w, PNG_COLOR_TYPE_RGB, 8, img.w * 3);
}

void write_png_gray(const std::string& path, const ImageU8& img) {
    if (img.channels != 1) throw ImageFormatError("write_png_gray: expected 1 channel");
    write_png(path, img.v.data(), img.h, img.w, PNG_COLOR_TYPE_GRAY, 8, img.w);
}

void write_png_mask1(const std::string& path, const BinMask& mask) {
    int64_t row_bytes = (mask.w + 7) / 8;
    std::vector<uint8_t> packed(static_cast<size_t>(mask.h * row_bytes), 0);
    for (int64_t y = 0; y < mask.h; ++y)
        for (int64_t x = 0; x < mask.w; ++x)
            if (mask.at(y, x))
                packed[static_cast<size_t>(y * row_bytes + x / 8)] |=
                    static_cast<uint8_t>(0x80u >> (x % 8));
    write_png(path, packed.data(), mask.h, mask.w, PNG_COLOR_TYPE_GRAY, 1, row_bytes);
}

void write_pgm(const std::string& path, const ImageU8& gray) {
    if (gray.channels != 1) throw ImageFormatError("write_pgm: expected 1 channel");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P5\n" << gray.w << " " << gray.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.v.data()),
            static_cast<std::streamsize>(gray.v.size()));
}

BinMask read_mask(const std::string& path) {
    ImageU8 img = read_image(path);
    BinMask m(img.h, img.w);
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x) {
            int64_t lum = 0;
            for (int64_t c = 0; c < img.channels; ++c) lum += img.at(y, x, c);
            m.at(y, x) = (lum / img.channels) > 127 ? 1 : 0;
        }
    return m;
}

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t({img.h, img.w, 3});
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                uint8_t px = img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);
                t.at(y, x, c) = static_cast<float>(px) / 255.0f;
            }
    return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(2) != 3) throw ShapeError("tensor_to_image: expected [H,W,3]");
    ImageU8 img(t.dim(0), t.dim(1), 3);
    for (int64_t i = 0; i < t.numel(); ++i) {
        float x = t[i];
        x = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
        img.v[static_cast<size_t>(i)] = static_cast<uint8_t>(x * 255.0f + 0.5f);
    }
    return img;
}

Tensor resize_bilinear_rgb(const Tensor& img, int64_t out_h, int64_t out_w) {
    return ad::bilinear_resize(ad::constant(img), out_h, out_w)->val;
}

BinMask resize_mask_nearest(const BinMask& mask, int64_t out_h, int64_t out_w) {
    BinMask out(out_h, out_w);
    for (int64_t y = 0; y < out_h; ++y) {
        int64_t sy = y * mask.h / out_h;
        for (int64_t x = 0; x < out_w; ++x) {
            int64_t sx = x * mask.w / out_w;
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

}  // namespace rrseg
