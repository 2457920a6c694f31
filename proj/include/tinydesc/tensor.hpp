#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/rng.hpp"

namespace tinydesc {

// Dense 3-D array in (height, width, channels) row-major order: the channel
// index is contiguous. All layer math below keeps a fixed accumulation order
// (kernel row-major) so runs are bit-reproducible.
template <typename T>
struct Tensor3 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<T> data;

    Tensor3() = default;
    Tensor3(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, T(0)) {}

    T& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
    T at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }
    std::size_t size() const { return data.size(); }
};

using Tensor = Tensor3<float>;

// Valid convolution parameters. Kernel weights are stored kh -> kw -> cin -> cout
// (cout contiguous), one bias per output channel.
template <typename T>
struct ConvParams {
    int kh = 1, kw = 1;
    int in_channels = 1, out_channels = 1;
    int sh = 1, sw = 1;
    std::vector<T> weights;  // kh * kw * in_channels * out_channels
    std::vector<T> bias;     // out_channels

    std::size_t weight_count() const {
        return std::size_t(kh) * kw * in_channels * out_channels;
    }
    void validate() const {
        if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || out_channels < 1 || in_channels < 1)
            throw ShapeError("conv geometry fields must be >= 1");
        if (weights.size() != weight_count() || bias.size() != std::size_t(out_channels))
            throw ShapeError("conv parameter buffers do not match geometry");
    }
};

// Fully connected parameters; weights are row-major input -> output.
template <typename T>
struct FcParams {
    int inputs = 1, outputs = 1;
    std::vector<T> weights;  // inputs * outputs
    std::vector<T> bias;     // outputs

    void validate() const {
        if (inputs < 1 || outputs < 1) throw ShapeError("fc geometry fields must be >= 1");
        if (weights.size() != std::size_t(inputs) * outputs || bias.size() != std::size_t(outputs))
            throw ShapeError("fc parameter buffers do not match geometry");
    }
};

enum class Activation : std::uint8_t { identity = 0, symrelu = 1 };

// symrelu[a](x) = max(-a, min(a, x)); a > 0.
template <typename T>
struct ActivationSpec {
    Activation kind = Activation::identity;
    T a = T(1);
};

inline int conv_out_dim(int in, int k, int stride) { return (in - k) / stride + 1; }

template <typename T>
T symrelu(T x, T a) {
    return x > a ? a : (x < -a ? -a : x);
}

// Subgradient of the clamp; 0 at the saturated region including |x| == a exactly.
template <typename T>
T symrelu_grad(T x, T a) {
    return (x < a && x > -a) ? T(1) : T(0);
}

template <typename T>
void apply_activation(std::span<T> values, const ActivationSpec<T>& act) {
    if (act.kind == Activation::identity) return;
    if (!(act.a > T(0))) throw ConfigError("symrelu requires a > 0");
    for (T& v : values) v = symrelu(v, act.a);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

template <typename T>
Tensor3<T> conv2d_valid(const Tensor3<T>& input, const ConvParams<T>& p) {
    p.validate();
    if (input.channels != p.in_channels)
        throw ShapeError("conv2d_valid: input has " + std::to_string(input.channels) +
                         " channels, kernel expects " + std::to_string(p.in_channels));
    if (input.height < p.kh || input.width < p.kw)
        throw ShapeError("conv2d_valid: input smaller than kernel window");

    const int oh = conv_out_dim(input.height, p.kh, p.sh);
    const int ow = conv_out_dim(input.width, p.kw, p.sw);
    const int cin = p.in_channels, cout = p.out_channels;
    Tensor3<T> out(oh, ow, cout);

    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* acc = &out.at(oy, ox, 0);
            for (int c = 0; c < cout; ++c) acc[c] = p.bias[std::size_t(c)];
            const int iy0 = oy * p.sh, ix0 = ox * p.sw;
            for (int ky = 0; ky < p.kh; ++ky)
                for (int kx = 0; kx < p.kw; ++kx) {
                    const T* in_px = &input.at(iy0 + ky, ix0 + kx, 0);
                    const T* w = &p.weights[(std::size_t(ky) * p.kw + kx) * cin * cout];
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = in_px[ci];
                        const T* wc = w + std::size_t(ci) * cout;
                        for (int c = 0; c < cout; ++c) acc[c] += v * wc[c];
                    }
                }
        }
    }
    return out;
}

template <typename T>
std::vector<T> fully_connected(std::span<const T> input, const FcParams<T>& p) {
    p.validate();
    if (input.size() != std::size_t(p.inputs))
        throw ShapeError("fully_connected: input length " + std::to_string(input.size()) +
                         " != weight rows " + std::to_string(p.inputs));
    std::vector<T> out(p.bias.begin(), p.bias.end());
    for (int i = 0; i < p.inputs; ++i) {
        const T v = input[std::size_t(i)];
        const T* w = &p.weights[std::size_t(i) * p.outputs];
        for (int j = 0; j < p.outputs; ++j) out[std::size_t(j)] += v * w[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward (standard chain rule)
// ---------------------------------------------------------------------------

template <typename T>
struct ConvGrads {
    Tensor3<T> input;
    std::vector<T> weights;
    std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor3<T>& input, const ConvParams<T>& p,
                             const Tensor3<T>& upstream) {
    p.validate();
    if (input.channels != p.in_channels)
        throw ShapeError("conv2d_backward: channel mismatch");
    const int oh = conv_out_dim(input.height, p.kh, p.sh);
    const int ow = conv_out_dim(input.width, p.kw, p.sw);
    if (upstream.height != oh || upstream.width != ow || upstream.channels != p.out_channels)
        throw ShapeError("conv2d_backward: upstream gradient shape mismatch");

    const int cin = p.in_channels, cout = p.out_channels;
    ConvGrads<T> g;
    g.input = Tensor3<T>(input.height, input.width, input.channels);
    g.weights.assign(p.weights.size(), T(0));
    g.bias.assign(p.bias.size(), T(0));

    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* up = &upstream.at(oy, ox, 0);
            for (int c = 0; c < cout; ++c) g.bias[std::size_t(c)] += up[c];
            const int iy0 = oy * p.sh, ix0 = ox * p.sw;
            for (int ky = 0; ky < p.kh; ++ky)
                for (int kx = 0; kx < p.kw; ++kx) {
                    const T* in_px = &input.at(iy0 + ky, ix0 + kx, 0);
                    T* gin_px = &g.input.at(iy0 + ky, ix0 + kx, 0);
                    const std::size_t wbase = (std::size_t(ky) * p.kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T v = in_px[ci];
                        const T* w = &p.weights[wbase + std::size_t(ci) * cout];
                        T* gw = &g.weights[wbase + std::size_t(ci) * cout];
                        T acc = T(0);
                        for (int c = 0; c < cout; ++c) {
                            gw[c] += v * up[c];
                            acc += w[c] * up[c];
                        }
                        gin_px[ci] += acc;
                    }
                }
        }
    }
    return g;
}

template <typename T>
struct FcGrads {
    std::vector<T> input;
    std::vector<T> weights;
    std::vector<T> bias;
};

template <typename T>
FcGrads<T> fully_connected_backward(std::span<const T> input, const FcParams<T>& p,
                                    std::span<const T> upstream) {
    p.validate();
    if (input.size() != std::size_t(p.inputs) || upstream.size() != std::size_t(p.outputs))
        throw ShapeError("fully_connected_backward: shape mismatch");
    FcGrads<T> g;
    g.input.assign(input.size(), T(0));
    g.weights.assign(p.weights.size(), T(0));
    g.bias.assign(upstream.begin(), upstream.end());  // d(Wx+b)/db = I
    for (int i = 0; i < p.inputs; ++i) {
        const T v = input[std::size_t(i)];
        const T* w = &p.weights[std::size_t(i) * p.outputs];
        T* gw = &g.weights[std::size_t(i) * p.outputs];
        T acc = T(0);
        for (int j = 0; j < p.outputs; ++j) {
            gw[j] += v * upstream[std::size_t(j)];
            acc += w[j] * upstream[std::size_t(j)];
        }
        g.input[std::size_t(i)] = acc;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Glorot-uniform: count values drawn from [-b, b], b = sqrt(6 / (fan_in + fan_out)).
template <typename T = float>
std::vector<T> xavier_uniform(std::size_t count, int fan_in, int fan_out, Rng& rng) {
    if (fan_in < 1 || fan_out < 1) throw ConfigError("xavier_uniform: fans must be >= 1");
    const double bound = std::sqrt(6.0 / (double(fan_in) + double(fan_out)));
    std::vector<T> out(count);
    for (auto& v : out) v = T(rng.uniform(-bound, bound));
    return out;
}

}  // namespace tinydesc
