#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/rng.hpp"

namespace tinydesc {

// ---------------------------------------------------------------------------
// Individual patch transforms. All are total: 32x32 in, 32x32 out.
// ---------------------------------------------------------------------------

// Monotonic intensity mapping: v -> clamp(255 * gain * (v/255)^gamma + offset).
inline Patch brightness(const Patch& in, double gamma, double gain, double offset) {
    std::array<std::uint8_t, 256> lut;
    for (int v = 0; v < 256; ++v)
        lut[std::size_t(v)] = clamp_u8(255.0 * gain * std::pow(v / 255.0, gamma) + offset);
    Patch out;
    for (int i = 0; i < kPatchArea; ++i) out.px[std::size_t(i)] = lut[in.px[std::size_t(i)]];
    return out;
}

inline Patch blur_patch(const Patch& in, double sigma) {
    return image_to_patch(gaussian_blur(patch_to_image(in), sigma));
}

inline Patch additive_noise(const Patch& in, double sigma, Rng& rng) {
    if (sigma == 0.0) return in;
    Patch out;
    for (int i = 0; i < kPatchArea; ++i)
        out.px[std::size_t(i)] = clamp_u8(in.px[std::size_t(i)] + rng.normal(0.0, sigma));
    return out;
}

// Crop a crop_size x crop_size sub-window at (ox, oy) and rescale back to 32x32.
inline Patch crop_and_rescale(const Patch& in, int crop_size, int ox, int oy) {
    if (crop_size < 1 || crop_size > kPatchEdge || ox < 0 || oy < 0 ||
        ox + crop_size > kPatchEdge || oy + crop_size > kPatchEdge)
        throw ShapeError("crop_and_rescale: window out of bounds");
    if (crop_size == kPatchEdge) return in;
    Image8 cropped(crop_size, crop_size);
    const Image8 img = patch_to_image(in);
    for (int y = 0; y < crop_size; ++y)
        for (int x = 0; x < crop_size; ++x) cropped.at(y, x) = img.at(oy + y, ox + x);
    return image_to_patch(resize_bilinear(cropped, kPatchEdge, kPatchEdge));
}

// 1-D box blur of the given length along one of four directions.
inline Patch motion_blur(const Patch& in, int length, int direction) {
    if (length < 1) throw ConfigError("motion_blur: length must be >= 1");
    static constexpr int kDy[4] = {0, 1, 1, 1};
    static constexpr int kDx[4] = {1, 0, 1, -1};
    const int dy = kDy[direction & 3], dx = kDx[direction & 3];
    Patch out;
    for (int y = 0; y < kPatchEdge; ++y)
        for (int x = 0; x < kPatchEdge; ++x) {
            int sum = 0;
            for (int i = 0; i < length; ++i) {
                const int yy = std::clamp(y + dy * i, 0, kPatchEdge - 1);
                const int xx = std::clamp(x + dx * i, 0, kPatchEdge - 1);
                sum += in.at(yy, xx);
            }
            out.at(y, x) = std::uint8_t((sum + length / 2) / length);
        }
    return out;
}

namespace detail {
template <bool TakeMax>
inline Patch morph3x3(const Patch& in) {
    Patch out;
    for (int y = 0; y < kPatchEdge; ++y)
        for (int x = 0; x < kPatchEdge; ++x) {
            std::uint8_t v = TakeMax ? 0 : 255;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, kPatchEdge - 1);
                    const int xx = std::clamp(x + dx, 0, kPatchEdge - 1);
                    v = TakeMax ? std::max(v, in.at(yy, xx)) : std::min(v, in.at(yy, xx));
                }
            out.at(y, x) = v;
        }
    return out;
}
}  // namespace detail

inline Patch erode3x3(const Patch& in) { return detail::morph3x3<false>(in); }
inline Patch dilate3x3(const Patch& in) { return detail::morph3x3<true>(in); }
inline Patch morphology_open(const Patch& in) { return dilate3x3(erode3x3(in)); }
inline Patch morphology_close(const Patch& in) { return erode3x3(dilate3x3(in)); }

// Dark grid lines at the given pitch and phase in both directions.
inline Patch grid_overlay(const Patch& in, int pitch, int phase, int darken) {
    if (pitch < 1) throw ConfigError("grid_overlay: pitch must be >= 1");
    Patch out = in;
    for (int y = 0; y < kPatchEdge; ++y)
        for (int x = 0; x < kPatchEdge; ++x)
            if ((y % pitch) == phase % pitch || (x % pitch) == phase % pitch)
                out.at(y, x) = clamp_u8(double(out.at(y, x)) - darken);
    return out;
}

// Additive bright Gaussian blob.
inline Patch highlight_blob(const Patch& in, double cx, double cy, double sigma, double amplitude) {
    Patch out;
    for (int y = 0; y < kPatchEdge; ++y)
        for (int x = 0; x < kPatchEdge; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            out.at(y, x) = clamp_u8(in.at(y, x) + amplitude * std::exp(-r2 / (2.0 * sigma * sigma)));
        }
    return out;
}

// ---------------------------------------------------------------------------
// The online augmentation procedure: shuffle the role's transform list, then
// apply the transform at shuffled position i with probability p0 * decay^i.
// ---------------------------------------------------------------------------

enum class AugTransform : std::uint8_t {
    brightness,
    blur,
    additive_noise,
    crop_and_rescale,
    motion_blur,
    morphology_open,
    morphology_close,
    grid_overlay,
    highlight_blob,
};

enum class AugRole { anchor_positive, negative };

struct AugmentSchedule {
    double p0 = 0.95;
    double decay = 0.85;
    // Transforms safe for patches that must stay similar.
    std::vector<AugTransform> anchor_positive = {
        AugTransform::brightness, AugTransform::blur, AugTransform::additive_noise,
        AugTransform::crop_and_rescale, AugTransform::motion_blur};
    // Negatives additionally tolerate structure-changing transforms.
    std::vector<AugTransform> negative = {
        AugTransform::brightness,       AugTransform::blur,
        AugTransform::additive_noise,   AugTransform::crop_and_rescale,
        AugTransform::motion_blur,      AugTransform::morphology_open,
        AugTransform::morphology_close, AugTransform::grid_overlay,
        AugTransform::highlight_blob};

    double probability(int i) const { return p0 * std::pow(decay, i); }

    const std::vector<AugTransform>& list_for(AugRole role) const {
        return role == AugRole::anchor_positive ? anchor_positive : negative;
    }
};

// One application-decision mask for a list of n transforms: mask[i] says
// whether position i fires. Exactly one uniform draw per position.
inline std::vector<std::uint8_t> draw_apply_mask(std::size_t n, const AugmentSchedule& schedule,
                                                 Rng& rng) {
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i)
        mask[i] = rng.uniform() < schedule.probability(int(i)) ? 1 : 0;
    return mask;
}

// Applies one seeded transform with parameters drawn from rng.
inline Patch apply_transform(const Patch& in, AugTransform t, Rng& rng) {
    switch (t) {
        case AugTransform::brightness:
            return brightness(in, rng.uniform(0.6, 1.6), rng.uniform(0.85, 1.2),
                              rng.uniform(-25.0, 25.0));
        case AugTransform::blur:
            return blur_patch(in, rng.uniform(0.5, 1.5));
        case AugTransform::additive_noise:
            return additive_noise(in, rng.uniform(2.0, 10.0), rng);
        case AugTransform::crop_and_rescale: {
            const int size = rng.uniform_int(26, kPatchEdge);
            const int ox = rng.uniform_int(0, kPatchEdge - size);
            const int oy = rng.uniform_int(0, kPatchEdge - size);
            return crop_and_rescale(in, size, ox, oy);
        }
        case AugTransform::motion_blur:
            return motion_blur(in, rng.uniform_int(2, 4), rng.uniform_int(0, 3));
        case AugTransform::morphology_open:
            return morphology_open(in);
        case AugTransform::morphology_close:
            return morphology_close(in);
        case AugTransform::grid_overlay: {
            const int pitch = rng.uniform_int(4, 10);
            return grid_overlay(in, pitch, rng.uniform_int(0, pitch - 1), rng.uniform_int(40, 90));
        }
        case AugTransform::highlight_blob:
            return highlight_blob(in, rng.uniform(0.0, 31.0), rng.uniform(0.0, 31.0),
                                  rng.uniform(3.0, 8.0), rng.uniform(40.0, 120.0));
    }
    return in;
}

inline Patch apply_augmentation(const Patch& patch, AugRole role, const AugmentSchedule& schedule,
                                Rng& rng) {
    std::vector<AugTransform> list = schedule.list_for(role);
    rng.shuffle(list);
    Patch out = patch;
    for (std::size_t i = 0; i < list.size(); ++i)
        if (rng.uniform() < schedule.probability(int(i))) out = apply_transform(out, list[i], rng);
    return out;
}

}  // namespace tinydesc
