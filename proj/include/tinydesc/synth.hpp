#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/fht.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/rng.hpp"

namespace tinydesc {

enum class Family : std::uint8_t { textline = 0, texture = 1, fht = 2, glyph = 3, barcode = 4 };

inline constexpr std::array<Family, 5> kAllFamilies = {Family::textline, Family::texture,
                                                       Family::fht, Family::glyph, Family::barcode};

inline const char* family_name(Family f) {
    switch (f) {
        case Family::textline: return "textline";
        case Family::texture: return "texture";
        case Family::fht: return "fht";
        case Family::glyph: return "glyph";
        case Family::barcode: return "barcode";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    for (Family f : kAllFamilies)
        if (s == family_name(f)) return f;
    throw FormatError("unknown family name: " + s);
}

// A generated source picture. Images that are geometrically aligned duplicates
// of the same content share a group_id and have identical dimensions.
struct SourceImage {
    Image8 image;
    Family family = Family::texture;
    std::uint64_t group_id = 0;
    std::uint64_t seed = 0;
    std::string config;  // free-form key=value;... echoed into the manifest
};

// ---------------------------------------------------------------------------
// Value noise (stateless, hash-based; used for textures and backgrounds)
// ---------------------------------------------------------------------------

namespace detail {
inline double lattice01(std::uint64_t seed, int octave, int cx, int cy) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64((std::uint64_t(std::uint32_t(cx)) << 32) ^
                                                         std::uint32_t(cy) ^
                                                         (std::uint64_t(octave) << 1)));
    return double(h >> 11) * 0x1.0p-53;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

inline double value_noise(std::uint64_t seed, int octave, double x, double y) {
    const int cx = int(std::floor(x)), cy = int(std::floor(y));
    const double tx = smoothstep(x - cx), ty = smoothstep(y - cy);
    const double v00 = lattice01(seed, octave, cx, cy);
    const double v10 = lattice01(seed, octave, cx + 1, cy);
    const double v01 = lattice01(seed, octave, cx, cy + 1);
    const double v11 = lattice01(seed, octave, cx + 1, cy + 1);
    return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}
}  // namespace detail

// Multi-octave value-noise heightfield in [0, 1].
inline double heightfield(std::uint64_t seed, double x, double y, int octaves = 4,
                          double base_cell = 24.0) {
    double sum = 0.0, amp = 1.0, amp_total = 0.0, freq = 1.0 / base_cell;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * detail::value_noise(seed, o, x * freq, y * freq);
        amp_total += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return sum / amp_total;
}

// Low-contrast noise background around a base gray level.
inline Image8 noise_background(int h, int w, std::uint64_t seed, int base = 200, int spread = 40) {
    Image8 img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(y, x) = clamp_u8(base + spread * (heightfield(seed, x, y, 3, 16.0) - 0.5));
    return img;
}

// ---------------------------------------------------------------------------
// FHT patches: black dots on white, Gaussian blur, Fast Hough Transform,
// min-max rescale to 8 bits.
// ---------------------------------------------------------------------------

struct FhtPatchConfig {
    int canvas_size = 64;  // power of two
    int n_dots = 5;
    double blur_sigma = 2.0;
};

inline SourceImage gen_fht_patch(const FhtPatchConfig& cfg, Rng& rng) {
    if (!is_power_of_two(cfg.canvas_size))
        throw ConfigError("fht canvas size must be a power of two");
    if (cfg.n_dots < 0) throw ConfigError("n_dots must be >= 0");
    if (!(cfg.blur_sigma > 0)) throw ConfigError("blur_sigma must be positive");

    const int n = cfg.canvas_size;
    ImageF canvas(n, n, 255.f);
    for (int d = 0; d < cfg.n_dots; ++d) {
        const int cx = int(rng.index(std::size_t(n)));
        const int cy = int(rng.index(std::size_t(n)));
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int y = cy + dy, x = cx + dx;
                if (y >= 0 && y < n && x >= 0 && x < n && std::abs(dy) + std::abs(dx) <= 1)
                    canvas.at(y, x) = 0.f;
            }
    }
    const ImageF hough = fht_vertical(gaussian_blur(canvas, cfg.blur_sigma));
    SourceImage out;
    out.image = rescale_to_u8(hough);
    out.family = Family::fht;
    std::ostringstream cfg_str;
    cfg_str << "canvas=" << n << ";dots=" << cfg.n_dots << ";sigma=" << cfg.blur_sigma;
    out.config = cfg_str.str();
    return out;
}

// ---------------------------------------------------------------------------
// Textures: shaded heightfields. Same heightfield seed under two different
// light directions gives a pixel-aligned pair with visibly different shading.
// ---------------------------------------------------------------------------

inline Image8 render_texture(std::uint64_t hf_seed, int h, int w, double light_x, double light_y) {
    // Lambertian shading of the heightfield; light has a fixed vertical component.
    const double relief = 14.0;
    const double lz = 0.75;
    const double lnorm = std::sqrt(light_x * light_x + light_y * light_y + lz * lz);
    const double lx = light_x / lnorm, ly = light_y / lnorm, lzn = lz / lnorm;
    Image8 img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double hx = relief * (heightfield(hf_seed, x + 1, y) - heightfield(hf_seed, x - 1, y));
            const double hy = relief * (heightfield(hf_seed, x, y + 1) - heightfield(hf_seed, x, y - 1));
            const double nn = std::sqrt(hx * hx + hy * hy + 1.0);
            const double shade = std::max(0.0, (-hx * lx - hy * ly + lzn) / nn);
            img.at(y, x) = clamp_u8(30.0 + 215.0 * shade);
        }
    return img;
}

inline SourceImage gen_texture(Rng& rng, double light_x, double light_y, int h = 160, int w = 160) {
    const std::uint64_t hf_seed = rng.next_u64();
    SourceImage out;
    out.image = render_texture(hf_seed, h, w, light_x, light_y);
    out.family = Family::texture;
    std::ostringstream cfg;
    cfg << "hf=" << hf_seed << ";lx=" << light_x << ";ly=" << light_y;
    out.config = cfg.str();
    return out;
}

// ---------------------------------------------------------------------------
// Text lines: an embedded 5x7 bitmap font rendered with random scale,
// baseline, spacing and contrast onto a supplied background.
// ---------------------------------------------------------------------------

enum class Charset { latin, digits };

namespace detail {
// Row-encoded 5x7 glyphs, bit 4 = leftmost column. Digits 0-9 then A-Z.
inline constexpr std::uint8_t kFont5x7[36][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
    {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
};

inline int glyph_index(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'Z') return 10 + (c - 'A');
    return -1;  // unsupported characters render as spaces
}
}  // namespace detail

struct TextStyle {
    int scale = 3;        // pixels per font cell
    int spacing = 1;      // extra columns between glyphs, in font cells
    int baseline_y = 0;   // top row of the glyph band
    int x0 = 0;           // left edge of the first glyph
    int contrast = -120;  // added to background under glyph pixels (negative = dark text)
};

// Draws `text` onto a copy of `background`. Empty text returns the background
// unchanged. Throws if the background cannot fit one glyph row.
inline Image8 render_textline(const Image8& background, const std::string& text,
                              const TextStyle& style) {
    if (background.height < 7 * style.scale)
        throw ShapeError("background too small for one text line");
    Image8 img = background;
    int pen_x = style.x0;
    const int step = (5 + style.spacing) * style.scale;
    for (char c : text) {
        const int gi = detail::glyph_index(c);
        if (gi >= 0) {
            for (int ry = 0; ry < 7; ++ry)
                for (int rx = 0; rx < 5; ++rx) {
                    if (!((detail::kFont5x7[gi][ry] >> (4 - rx)) & 1)) continue;
                    for (int sy = 0; sy < style.scale; ++sy)
                        for (int sx = 0; sx < style.scale; ++sx) {
                            const int y = style.baseline_y + ry * style.scale + sy;
                            const int x = pen_x + rx * style.scale + sx;
                            if (y >= 0 && y < img.height && x >= 0 && x < img.width)
                                img.at(y, x) = clamp_u8(double(img.at(y, x)) + style.contrast);
                        }
                }
        }
        pen_x += step;
        if (pen_x >= img.width) break;
    }
    return img;
}

inline SourceImage gen_textline(Rng& rng, Charset charset, const Image8& background) {
    TextStyle style;
    style.scale = rng.uniform_int(2, 4);
    style.spacing = rng.uniform_int(1, 2);
    if (background.height < 7 * style.scale) style.scale = background.height / 7;
    if (style.scale < 1) throw ShapeError("background too small for one text line");
    style.baseline_y = rng.uniform_int(0, std::max(0, background.height - 7 * style.scale));
    style.x0 = rng.uniform_int(0, std::max(1, background.width / 8));
    const bool dark = rng.bernoulli(0.75);
    style.contrast = dark ? -rng.uniform_int(70, 150) : rng.uniform_int(70, 150);

    const int len = rng.uniform_int(6, 14);
    std::string text;
    for (int i = 0; i < len; ++i) {
        if (charset == Charset::digits)
            text += char('0' + rng.uniform_int(0, 9));
        else
            text += rng.bernoulli(0.8) ? char('A' + rng.uniform_int(0, 25))
                                       : char('0' + rng.uniform_int(0, 9));
    }

    SourceImage out;
    out.image = render_textline(background, text, style);
    out.family = Family::textline;
    std::ostringstream cfg;
    cfg << "text=" << text << ";scale=" << style.scale << ";contrast=" << style.contrast;
    out.config = cfg.str();
    return out;
}

// ---------------------------------------------------------------------------
// Glyphs: dense ideograph-like symbols composed from random strokes,
// arranged on a grid.
// ---------------------------------------------------------------------------

inline SourceImage gen_glyph_image(Rng& rng, int h = 112, int w = 112) {
    Image8 img = noise_background(h, w, rng.next_u64(), 215, 30);
    const int cell = rng.uniform_int(22, 30);
    const int margin = 3;
    auto draw_stroke = [&](int gx, int gy) {
        // One stroke: horizontal / vertical / diagonal bar, or a small box.
        const int kind = rng.uniform_int(0, 3);
        const int inner = cell - 2 * margin;
        const int x0 = gx + margin + rng.uniform_int(0, std::max(0, inner - 4));
        const int y0 = gy + margin + rng.uniform_int(0, std::max(0, inner - 4));
        const int len = rng.uniform_int(inner / 2, inner);
        const int thick = rng.uniform_int(1, 3);
        const int ink = rng.uniform_int(0, 50);
        auto put = [&](int y, int x) {
            if (y >= gy && y < gy + cell && x >= gx && x < gx + cell && y < img.height && x < img.width)
                img.at(y, x) = std::uint8_t(ink);
        };
        for (int i = 0; i < len; ++i)
            for (int t = 0; t < thick; ++t) {
                switch (kind) {
                    case 0: put(y0 + t, x0 + i); break;                      // horizontal
                    case 1: put(y0 + i, x0 + t); break;                      // vertical
                    case 2: put(y0 + i, x0 + i + t); break;                  // diagonal
                    case 3:                                                  // box outline
                        put(y0, x0 + i), put(y0 + len - 1, x0 + i);
                        put(y0 + i, x0), put(y0 + i, x0 + len - 1);
                        break;
                }
            }
    };
    for (int gy = 0; gy + cell <= h; gy += cell)
        for (int gx = 0; gx + cell <= w; gx += cell) {
            const int strokes = rng.uniform_int(4, 9);
            for (int s = 0; s < strokes; ++s) draw_stroke(gx, gy);
        }
    SourceImage out;
    out.image = std::move(img);
    out.family = Family::glyph;
    out.config = "cell=" + std::to_string(cell);
    return out;
}

// ---------------------------------------------------------------------------
// Barcodes: full-height 1-D bar pattern, module widths in {1,2,3,4},
// random horizontal scale and offset. Every column is constant.
// ---------------------------------------------------------------------------

inline SourceImage gen_barcode(Rng& rng, int h = 80, int w = 192) {
    const int px_per_module = rng.uniform_int(1, 3);
    const int x0 = rng.uniform_int(0, w / 6);
    const std::uint8_t light = std::uint8_t(rng.uniform_int(225, 255));
    const std::uint8_t dark = std::uint8_t(rng.uniform_int(0, 45));
    Image8 img(h, w, light);
    int x = x0;
    bool bar = true;  // start with a dark bar
    std::string widths;
    while (x < w - w / 8) {
        const int modules = rng.uniform_int(1, 4);
        widths += char('0' + modules);
        const int span = modules * px_per_module;
        if (bar)
            for (int c = x; c < std::min(w, x + span); ++c)
                for (int y = 0; y < h; ++y) img.at(y, c) = dark;
        x += span;
        bar = !bar;
    }
    SourceImage out;
    out.image = std::move(img);
    out.family = Family::barcode;
    out.config = "ppm=" + std::to_string(px_per_module) + ";x0=" + std::to_string(x0);
    return out;
}

// ---------------------------------------------------------------------------
// Photometric duplicate edits: same geometry, different look.
// ---------------------------------------------------------------------------

struct EditParams {
    bool use_contrast = false;
    double gamma = 1.0;
    double gain = 1.0;
    double offset = 0.0;
    bool use_vignette = false;
    double vignette_strength = 0.0;  // 0..1, darkening toward corners
    bool use_gray_tint = false;
    double tint = 0.0;  // 0..1, blend toward mid-gray
    bool use_noise = false;
    double noise_sigma = 0.0;

    static EditParams identity() { return EditParams{}; }

    static EditParams draw(Rng& rng) {
        EditParams p;
        p.use_contrast = rng.bernoulli(0.8);
        if (p.use_contrast) {
            p.gamma = rng.uniform(0.7, 1.4);
            p.gain = rng.uniform(0.85, 1.15);
            p.offset = rng.uniform(-18.0, 18.0);
        }
        p.use_vignette = rng.bernoulli(0.5);
        if (p.use_vignette) p.vignette_strength = rng.uniform(0.15, 0.45);
        p.use_gray_tint = rng.bernoulli(0.35);
        if (p.use_gray_tint) p.tint = rng.uniform(0.1, 0.35);
        p.use_noise = rng.bernoulli(0.6);
        if (p.use_noise) p.noise_sigma = rng.uniform(1.0, 4.0);
        return p;
    }
};

// Applies global photometric edits; never moves content geometrically.
inline SourceImage duplicate_with_edit(const SourceImage& src, const EditParams& p, Rng& rng) {
    SourceImage out = src;
    Image8& img = out.image;
    if (p.use_contrast) {
        std::array<std::uint8_t, 256> lut;
        for (int v = 0; v < 256; ++v)
            lut[std::size_t(v)] = clamp_u8(255.0 * p.gain * std::pow(v / 255.0, p.gamma) + p.offset);
        for (auto& v : img.px) v = lut[v];
    }
    if (p.use_vignette) {
        const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
        const double r2max = cy * cy + cx * cx;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                img.at(y, x) = clamp_u8(img.at(y, x) * (1.0 - p.vignette_strength * r2 / r2max));
            }
    }
    if (p.use_gray_tint) {
        for (auto& v : img.px) v = clamp_u8(v * (1.0 - p.tint) + 128.0 * p.tint);
    }
    if (p.use_noise) {
        for (auto& v : img.px) v = clamp_u8(v + rng.normal(0.0, p.noise_sigma));
    }
    return out;
}

inline SourceImage duplicate_with_edit(const SourceImage& src, Rng& rng) {
    return duplicate_with_edit(src, EditParams::draw(rng), rng);
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

// Class counts of the full-scale corpus per family; generation targets are
// these scaled down by a user factor.
struct FamilyTargets {
    int textline = 0;
    int texture = 0;
    int fht = 0;
    int glyph = 0;
    int barcode = 0;

    static FamilyTargets full_scale() { return {265384, 38916, 10000, 7140, 3736}; }

    static FamilyTargets scaled(double scale) {
        auto r = [scale](int n) { return int(std::lround(n * scale)); };
        const FamilyTargets f = full_scale();
        return {r(f.textline), r(f.texture), r(f.fht), r(f.glyph), r(f.barcode)};
    }

    int of(Family f) const {
        switch (f) {
            case Family::textline: return textline;
            case Family::texture: return texture;
            case Family::fht: return fht;
            case Family::glyph: return glyph;
            case Family::barcode: return barcode;
        }
        return 0;
    }
    int& of(Family f) {
        switch (f) {
            case Family::textline: return textline;
            case Family::texture: return texture;
            case Family::fht: return fht;
            case Family::glyph: return glyph;
            default: return barcode;
        }
    }
    int total() const { return textline + texture + fht + glyph + barcode; }
};

struct CorpusConfig {
    FamilyTargets targets;
    std::uint64_t seed = 1;
    bool with_duplicates = true;
};

namespace detail {
// Group multiplicity follows the observed 1/2/3/4-member proportions of the
// full-scale corpus.
inline int draw_group_size(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.4587) return 1;
    if (u < 0.4587 + 0.4257) return 2;
    if (u < 0.4587 + 0.4257 + 0.1096) return 3;
    return 4;
}
}  // namespace detail

// Generates one aligned group (master plus duplicates) deterministically from
// (seed, group_id). Texture duplicates re-light the same heightfield; other
// families get photometric editor duplicates.
inline std::vector<SourceImage> generate_group(Family family, std::uint64_t group_id,
                                               std::uint64_t corpus_seed, bool with_duplicates) {
    Rng rng = Rng::derive(corpus_seed, group_id);
    const int members = with_duplicates ? detail::draw_group_size(rng) : 1;

    std::vector<SourceImage> group;
    group.reserve(std::size_t(members));
    switch (family) {
        case Family::textline: {
            const int h = rng.uniform_int(48, 72);
            const int w = rng.uniform_int(176, 304);
            const Image8 bg = noise_background(h, w, rng.next_u64());
            group.push_back(gen_textline(rng, Charset::latin, bg));
            break;
        }
        case Family::texture: {
            const double angle = rng.uniform(0.0, 6.283185307179586);
            const int edge = rng.uniform_int(128, 176);
            group.push_back(gen_texture(rng, std::cos(angle), std::sin(angle), edge, edge));
            break;
        }
        case Family::fht: {
            FhtPatchConfig cfg;
            cfg.canvas_size = 64;
            cfg.n_dots = rng.uniform_int(3, 8);
            cfg.blur_sigma = rng.uniform(1.5, 3.0);
            group.push_back(gen_fht_patch(cfg, rng));
            break;
        }
        case Family::glyph:
            group.push_back(gen_glyph_image(rng, rng.uniform_int(96, 128), rng.uniform_int(96, 128)));
            break;
        case Family::barcode:
            group.push_back(gen_barcode(rng, rng.uniform_int(56, 96), rng.uniform_int(160, 256)));
            break;
    }

    for (int m = 1; m < members; ++m) {
        if (family == Family::texture) {
            // Re-render the same heightfield under a new light.
            const double angle = rng.uniform(0.0, 6.283185307179586);
            SourceImage dup = group.front();
            const std::string& cfg = group.front().config;
            const std::uint64_t hf_seed = std::stoull(cfg.substr(3, cfg.find(';') - 3));
            dup.image = render_texture(hf_seed, dup.image.height, dup.image.width,
                                       std::cos(angle), std::sin(angle));
            dup.config += ";relight=" + std::to_string(m);
            group.push_back(std::move(dup));
        } else {
            group.push_back(duplicate_with_edit(group.front(), rng));
            group.back().config += ";edited=" + std::to_string(m);
        }
    }
    for (std::size_t m = 0; m < group.size(); ++m) {
        group[m].group_id = group_id;
        group[m].seed = corpus_seed;
        group[m].config += ";member=" + std::to_string(m);
    }
    return group;
}

// In-memory corpus; group ids run sequentially family by family.
inline std::vector<SourceImage> generate_corpus(const CorpusConfig& cfg) {
    std::vector<SourceImage> all;
    std::uint64_t group_id = 0;
    for (Family f : kAllFamilies)
        for (int g = 0; g < cfg.targets.of(f); ++g, ++group_id) {
            auto group = generate_group(f, group_id, cfg.seed, cfg.with_duplicates);
            for (auto& img : group) all.push_back(std::move(img));
        }
    return all;
}

// ---------------------------------------------------------------------------
// On-disk corpus: PGM files plus a tab-separated manifest.
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestName = "manifest.tsv";

// Writes the corpus under dir and returns the number of images written.
inline std::size_t write_corpus(const CorpusConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);

    std::ostringstream manifest;
    manifest << "# corpus manifest v1\n";
    manifest << "# family\tgroup_id\tseed\tconfig\tfile\n";
    std::size_t written = 0;
    std::uint64_t group_id = 0;
    for (Family f : kAllFamilies)
        for (int g = 0; g < cfg.targets.of(f); ++g, ++group_id) {
            const auto group = generate_group(f, group_id, cfg.seed, cfg.with_duplicates);
            for (std::size_t m = 0; m < group.size(); ++m) {
                std::ostringstream name;
                name << family_name(f) << "_" << group_id << "_" << m << ".pgm";
                write_pgm(dir + "/" + name.str(), group[m].image);
                manifest << family_name(f) << '\t' << group_id << '\t' << group[m].seed << '\t'
                         << group[m].config << '\t' << name.str() << '\n';
                ++written;
            }
        }
    write_text_file(dir + "/" + kManifestName, manifest.str());
    return written;
}

inline std::vector<SourceImage> load_corpus(const std::string& dir) {
    std::ifstream in(dir + "/" + kManifestName);
    if (!in) throw IoError("cannot open corpus manifest in: " + dir);
    std::vector<SourceImage> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string family, group, seed, config, file;
        if (!std::getline(ls, family, '\t') || !std::getline(ls, group, '\t') ||
            !std::getline(ls, seed, '\t') || !std::getline(ls, config, '\t') ||
            !std::getline(ls, file, '\t'))
            throw FormatError("malformed manifest line: " + line);
        SourceImage img;
        img.family = family_from_name(family);
        img.group_id = std::stoull(group);
        img.seed = std::stoull(seed);
        img.config = config;
        img.image = read_pgm(dir + "/" + file);
        out.push_back(std::move(img));
    }
    if (out.empty()) throw ConfigError("corpus manifest lists no images: " + dir);
    return out;
}

}  // namespace tinydesc
