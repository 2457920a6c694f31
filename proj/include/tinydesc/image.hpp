#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/io.hpp"

namespace tinydesc {

inline constexpr int kPatchEdge = 32;
inline constexpr int kPatchArea = kPatchEdge * kPatchEdge;

// One 32x32 8-bit grayscale patch, row-major.
struct Patch {
    std::array<std::uint8_t, kPatchArea> px{};

    std::uint8_t& at(int y, int x) { return px[std::size_t(y) * kPatchEdge + x]; }
    std::uint8_t at(int y, int x) const { return px[std::size_t(y) * kPatchEdge + x]; }
    bool operator==(const Patch&) const = default;
};

// 8-bit grayscale image, row-major.
struct Image8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> px;

    Image8() = default;
    Image8(int h, int w, std::uint8_t fill = 0) : height(h), width(w), px(std::size_t(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return px[std::size_t(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return px[std::size_t(y) * width + x]; }
    bool operator==(const Image8&) const = default;
};

// Single-channel float image used by blur / FHT intermediates.
struct ImageF {
    int height = 0;
    int width = 0;
    std::vector<float> px;

    ImageF() = default;
    ImageF(int h, int w, float fill = 0.f) : height(h), width(w), px(std::size_t(h) * w, fill) {}

    float& at(int y, int x) { return px[std::size_t(y) * width + x]; }
    float at(int y, int x) const { return px[std::size_t(y) * width + x]; }
};

inline std::uint8_t clamp_u8(double v) {
    return std::uint8_t(std::clamp(v, 0.0, 255.0) + 0.5);
}

inline ImageF to_float(const Image8& img) {
    ImageF out(img.height, img.width);
    for (std::size_t i = 0; i < img.px.size(); ++i) out.px[i] = float(img.px[i]);
    return out;
}

inline Image8 to_u8(const ImageF& img) {
    Image8 out(img.height, img.width);
    for (std::size_t i = 0; i < img.px.size(); ++i) out.px[i] = clamp_u8(double(img.px[i]));
    return out;
}

// Linear min-max rescale of a float image to the full 8-bit range.
// A constant image maps to mid-gray.
inline Image8 rescale_to_u8(const ImageF& img) {
    float lo = img.px.empty() ? 0.f : img.px[0];
    float hi = lo;
    for (float v : img.px) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image8 out(img.height, img.width);
    if (hi <= lo) {
        std::fill(out.px.begin(), out.px.end(), std::uint8_t(128));
        return out;
    }
    const double scale = 255.0 / (double(hi) - double(lo));
    for (std::size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = clamp_u8((double(img.px[i]) - double(lo)) * scale);
    return out;
}

// ---------------------------------------------------------------------------
// PGM (binary P5, 8-bit)
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, const Image8& img) {
    ByteWriter w;
    w.text("P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n");
    w.raw(img.px.data(), img.px.size());
    write_file(path, w.bytes());
}

inline Image8 read_pgm(const std::string& path) {
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {  // comment line
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw FormatError("bad PGM header: " + path);
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw FormatError("not a binary PGM (P5): " + path);
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PGM geometry: " + path);
    ++pos;  // single whitespace after maxval
    Image8 img(int(h), int(w));
    if (pos + img.px.size() > bytes.size()) throw CorruptFileError("PGM pixel data truncated: " + path);
    std::copy_n(bytes.begin() + std::ptrdiff_t(pos), img.px.size(), img.px.begin());
    return img;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline Image8 rotate_right_angle(const Image8& img, int degrees) {
    const int d = ((degrees % 360) + 360) % 360;
    if (d == 0) return img;
    if (d == 180) {
        Image8 out(img.height, img.width);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(y, x) = img.at(img.height - 1 - y, img.width - 1 - x);
        return out;
    }
    if (d == 90) {  // clockwise
        Image8 out(img.width, img.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(x, img.height - 1 - y) = img.at(y, x);
        return out;
    }
    if (d == 270) {
        Image8 out(img.width, img.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(img.width - 1 - x, y) = img.at(y, x);
        return out;
    }
    throw ConfigError("rotation must be a multiple of 90 degrees, got " + std::to_string(degrees));
}

inline Image8 invert(const Image8& img) {
    Image8 out(img.height, img.width);
    for (std::size_t i = 0; i < img.px.size(); ++i) out.px[i] = std::uint8_t(255 - img.px[i]);
    return out;
}

// Bilinear resize with half-pixel centers.
inline Image8 resize_bilinear(const Image8& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ConfigError("resize target must be positive");
    if (out_h == img.height && out_w == img.width) return img;
    Image8 out(out_h, out_w);
    const double sy = double(img.height) / out_h;
    const double sx = double(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(img.height - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(img.width - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                             wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
            out.at(y, x) = clamp_u8(v);
        }
    }
    return out;
}

// Box (area-average) resize; exact for constant images at any ratio.
inline Image8 resize_area(const Image8& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ConfigError("resize target must be positive");
    if (out_h == img.height && out_w == img.width) return img;
    Image8 out(out_h, out_w);
    const double sy = double(img.height) / out_h;
    const double sx = double(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double y_lo = y * sy, y_hi = (y + 1) * sy;
        for (int x = 0; x < out_w; ++x) {
            const double x_lo = x * sx, x_hi = (x + 1) * sx;
            double sum = 0.0, area = 0.0;
            for (int iy = int(y_lo); iy < img.height && iy < y_hi; ++iy) {
                const double hy = std::min(y_hi, double(iy + 1)) - std::max(y_lo, double(iy));
                if (hy <= 0) continue;
                for (int ix = int(x_lo); ix < img.width && ix < x_hi; ++ix) {
                    const double hx = std::min(x_hi, double(ix + 1)) - std::max(x_lo, double(ix));
                    if (hx <= 0) continue;
                    sum += hy * hx * img.at(iy, ix);
                    area += hy * hx;
                }
            }
            out.at(y, x) = clamp_u8(area > 0 ? sum / area : 0.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian blur: separable, normalized 1-D kernel of radius ceil(3*sigma),
// clamp-to-edge boundary handling.
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0)) throw ConfigError("gaussian_blur: sigma must be positive");
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
        k[std::size_t(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline ImageF gaussian_blur(const ImageF& img, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const int radius = int(kernel.size() / 2);
    ImageF tmp(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, img.width - 1);
                acc += kernel[std::size_t(i + radius)] * img.at(y, xi);
            }
            tmp.at(y, x) = float(acc);
        }
    ImageF out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, img.height - 1);
                acc += kernel[std::size_t(i + radius)] * tmp.at(yi, x);
            }
            out.at(y, x) = float(acc);
        }
    return out;
}

inline Image8 gaussian_blur(const Image8& img, double sigma) {
    return to_u8(gaussian_blur(to_float(img), sigma));
}

// ---------------------------------------------------------------------------
// Patch <-> image helpers
// ---------------------------------------------------------------------------

inline Patch crop_patch(const Image8& img, int y, int x) {
    if (y < 0 || x < 0 || y + kPatchEdge > img.height || x + kPatchEdge > img.width)
        throw ShapeError("patch window out of bounds");
    Patch p;
    for (int r = 0; r < kPatchEdge; ++r)
        std::copy_n(&img.px[std::size_t(y + r) * img.width + x], kPatchEdge, &p.px[std::size_t(r) * kPatchEdge]);
    return p;
}

inline Image8 patch_to_image(const Patch& p) {
    Image8 img(kPatchEdge, kPatchEdge);
    std::copy(p.px.begin(), p.px.end(), img.px.begin());
    return img;
}

inline Patch image_to_patch(const Image8& img) {
    if (img.height != kPatchEdge || img.width != kPatchEdge)
        throw ShapeError("expected a 32x32 image");
    Patch p;
    std::copy(img.px.begin(), img.px.end(), p.px.begin());
    return p;
}

}  // namespace tinydesc
