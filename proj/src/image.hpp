#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace pairvit {

// RGB image, row-major, channels innermost, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<real> px;  // height*width*3

    Image() = default;
    Image(int h, int w, real fill = 0)
        : height(h), width(w), px(std::size_t(h) * w * 3, fill) {}

    real& at(int y, int x, int c) { return px[(std::size_t(y) * width + x) * 3 + c]; }
    real at(int y, int x, int c) const { return px[(std::size_t(y) * width + x) * 3 + c]; }

    void clamp01();
};

// Binary PPM (P6, maxval 255). Values quantized with round(v*255) on write.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// 8-bit binary PGM (P5) from already-quantized gray bytes.
void write_pgm(const std::string& path, const std::vector<unsigned char>& gray, int height,
               int width);

Image crop(const Image& img, int x, int y, int w, int h);
Image resize_bilinear(const Image& img, int out_h, int out_w);
Image hflip(const Image& img);

}  // namespace pairvit
