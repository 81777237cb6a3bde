#include "fnr/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "fnr/errors.hpp"

namespace fnr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
    // Recovered via setjmp below; stash the message for the thrower.
    auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
    if (slot) {
        *slot = msg ? msg : "unknown libpng error";
    }
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

std::uint8_t quantize_component(float v) {
    // round half up on the [-1,1] -> [0,255] mapping
    const float scaled = (v + 1.0f) * 0.5f * 255.0f;
    const float clamped = std::clamp(scaled, 0.0f, 255.0f);
    return static_cast<std::uint8_t>(std::floor(clamped + 0.5f));
}

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& interleaved) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    std::string errmsg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                              png_warning_handler);
    if (!png) {
        throw IoError("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to write '" + path + "': " + errmsg);
    }
    png_init_io(png, file.get());
    const int color_type = channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(interleaved.data() + static_cast<std::size_t>(y) * width * channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data; // interleaved
};

DecodedPng read_png(const std::string& path, int want_channels) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("'" + path + "' is not a PNG file");
    }
    std::string errmsg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler,
                                             png_warning_handler);
    if (!png) {
        throw IoError("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG '" + path + "': " + errmsg);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("'" + path + "' has unsupported bit depth " + std::to_string(bit_depth) +
                      " (expected 8)");
    }
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (want_channels == 4) {
        png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
    } else if (want_channels == 3) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    DecodedPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = want_channels;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(out.width * want_channels)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("'" + path + "' has an unexpected pixel layout");
    }
    out.data.resize(static_cast<std::size_t>(out.height) * rowbytes);
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) {
        rows[static_cast<std::size_t>(y)] = out.data.data() + static_cast<std::size_t>(y) * rowbytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

void encode_normal_png(const NormalMap& nm, const std::string& path) {
    const std::size_t plane = nm.plane_size();
    std::vector<std::uint8_t> buf(plane * 4, 0);
    for (std::size_t i = 0; i < plane; ++i) {
        if (nm.mask[i]) {
            buf[4 * i + 0] = quantize_component(nm.normals[i]);
            buf[4 * i + 1] = quantize_component(nm.normals[plane + i]);
            buf[4 * i + 2] = quantize_component(nm.normals[2 * plane + i]);
            buf[4 * i + 3] = 255;
        }
    }
    write_png(path, nm.width, nm.height, 4, buf);
}

NormalMap decode_normal_png(const std::string& path) {
    const DecodedPng png = read_png(path, 4);
    NormalMap nm(png.width, png.height);
    const std::size_t plane = nm.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        const std::uint8_t alpha = png.data[4 * i + 3];
        nm.mask[i] = alpha != 0 ? 1 : 0;
        if (!nm.mask[i]) {
            nm.normals[i] = 0.0f;
            nm.normals[plane + i] = 0.0f;
            nm.normals[2 * plane + i] = 1.0f;
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            nm.normals[static_cast<std::size_t>(c) * plane + i] =
                static_cast<float>(png.data[4 * i + static_cast<std::size_t>(c)]) / 255.0f * 2.0f - 1.0f;
        }
    }
    renormalize(nm);
    return nm;
}

void encode_image_png(const Image& img, const std::string& path) {
    const std::size_t plane = img.plane_size();
    std::vector<std::uint8_t> buf(plane * 3);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(img.pixels[static_cast<std::size_t>(c) * plane + i], 0.0f, 1.0f);
            buf[3 * i + static_cast<std::size_t>(c)] =
                static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
        }
    }
    write_png(path, img.width, img.height, 3, buf);
}

Image decode_image_png(const std::string& path) {
    const DecodedPng png = read_png(path, 3);
    Image img(png.width, png.height);
    const std::size_t plane = img.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            img.pixels[static_cast<std::size_t>(c) * plane + i] =
                static_cast<float>(png.data[3 * i + static_cast<std::size_t>(c)]) / 255.0f;
        }
    }
    return img;
}

} // namespace fnr
