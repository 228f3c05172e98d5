#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace pairvit {

void Image::clamp01() {
    for (real& v : px) v = std::clamp(v, real(0), real(1));
}

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
int read_header_int(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw DataError("malformed PPM header in " + path);
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = in.get();
    }
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image file: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw DataError("not a binary PPM (P6) file: " + path);
    const int w = read_header_int(in, path);
    const int h = read_header_int(in, path);
    const int maxval = read_header_int(in, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw DataError("unsupported PPM dimensions/maxval in " + path);
    std::vector<unsigned char> raw(std::size_t(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) throw DataError("truncated PPM data in " + path);
    Image img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.px[i] = real(raw[i]) / real(255);
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image file: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.px.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const real v = std::clamp(img.px[i], real(0), real(1));
        raw[i] = static_cast<unsigned char>(std::lround(double(v) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw DataError("short write to " + path);
}

void write_pgm(const std::string& path, const std::vector<unsigned char>& gray, int height,
               int width) {
    if (gray.size() != std::size_t(height) * width)
        throw ShapeError("write_pgm: buffer does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image file: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data()), std::streamsize(gray.size()));
    if (!out) throw DataError("short write to " + path);
}

Image crop(const Image& img, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width || y + h > img.height)
        throw DataError("crop window " + std::to_string(x) + ":" + std::to_string(y) + ":" +
                        std::to_string(w) + ":" + std::to_string(h) + " outside " +
                        std::to_string(img.width) + "x" + std::to_string(img.height));
    Image out(h, w);
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < 3; ++c) out.at(yy, xx, c) = img.at(y + yy, x + xx, c);
    return out;
}

// Pixel-center sampling with edge clamping.
Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: non-positive output size");
    Image out(out_h, out_w);
    const real sy = real(img.height) / real(out_h);
    const real sx = real(img.width) / real(out_w);
    for (int y = 0; y < out_h; ++y) {
        const real fy = std::max(real(0), (real(y) + real(0.5)) * sy - real(0.5));
        const int y0 = std::min(int(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const real wy = fy - real(y0);
        for (int x = 0; x < out_w; ++x) {
            const real fx = std::max(real(0), (real(x) + real(0.5)) * sx - real(0.5));
            const int x0 = std::min(int(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const real wx = fx - real(x0);
            for (int c = 0; c < 3; ++c) {
                const real top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const real bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image hflip(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

}  // namespace pairvit
