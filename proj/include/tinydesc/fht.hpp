#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/image.hpp"

namespace tinydesc {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Horizontal displacement of the dyadic line pattern with total displacement t
// at row y, for pattern height `height` (a power of two). Defined by the same
// split the fast transform uses: the top half follows pattern floor(t/2), the
// bottom half follows it too, shifted right by ceil(t/2). d_t(height-1) == t.
inline int dyadic_pattern_shift(int t, int y, int height) {
    int shift = 0;
    while (height > 1) {
        const int half = height / 2;
        if (y >= half) {
            shift += (t + 1) / 2;
            y -= half;
        }
        t /= 2;
        height = half;
    }
    return shift;
}

// Dyadic Fast Hough Transform over mostly-vertical lines, cyclic in x.
// Input must be square with a power-of-two side N. Output is N x N with
//   out(t, x) = sum_y in(y, (x + d_t(y)) mod N),
// i.e. row t enumerates total displacements, column x starting columns.
// Runs in N^2 log2(N) additions via pairwise merging of row blocks; if
// `additions` is given, the exact count performed is written there.
inline ImageF fht_vertical(const ImageF& input, std::uint64_t* additions = nullptr) {
    if (input.height != input.width || !is_power_of_two(input.height))
        throw ShapeError("fht_vertical: input must be square with power-of-two side, got " +
                         std::to_string(input.height) + "x" + std::to_string(input.width));
    const int n = input.height;
    ImageF cur = input;  // level 0: blocks of height 1, only pattern t = 0
    ImageF nxt(n, n);
    std::uint64_t adds = 0;
    for (int half = 1; half < n; half *= 2) {
        const int block = 2 * half;
        for (int base = 0; base < n; base += block) {
            for (int t = 0; t < block; ++t) {
                const int t0 = t / 2;
                const int offset = t0 + (t & 1);  // = ceil(t/2)
                const float* top = &cur.at(base + t0, 0);
                const float* bottom = &cur.at(base + half + t0, 0);
                float* out = &nxt.at(base + t, 0);
                for (int x = 0; x < n; ++x) {
                    int xb = x + offset;
                    if (xb >= n) xb -= n;
                    out[x] = top[x] + bottom[xb];
                }
                adds += std::uint64_t(n);
            }
        }
        std::swap(cur, nxt);
    }
    if (additions) *additions = adds;
    return cur;
}

// Same transform over mostly-horizontal lines: transpose, run the vertical
// family, and the output rows then enumerate vertical displacements.
inline ImageF fht_horizontal(const ImageF& input) {
    if (input.height != input.width || !is_power_of_two(input.height))
        throw ShapeError("fht_horizontal: input must be square with power-of-two side");
    const int n = input.height;
    ImageF transposed(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) transposed.at(x, y) = input.at(y, x);
    return fht_vertical(transposed);
}

}  // namespace tinydesc
