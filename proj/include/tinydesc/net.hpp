#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tinydesc/errors.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/io.hpp"
#include "tinydesc/rng.hpp"
#include "tinydesc/tensor.hpp"

namespace tinydesc {

template <typename T>
struct Layer {
    std::variant<ConvParams<T>, FcParams<T>> params;
    ActivationSpec<T> act;

    bool is_conv() const { return std::holds_alternative<ConvParams<T>>(params); }
    const ConvParams<T>& conv() const { return std::get<ConvParams<T>>(params); }
    ConvParams<T>& conv() { return std::get<ConvParams<T>>(params); }
    const FcParams<T>& fc() const { return std::get<FcParams<T>>(params); }
    FcParams<T>& fc() { return std::get<FcParams<T>>(params); }
};

// Patch descriptor network: a list of conv layers followed by fc layers.
// Input contract: 32x32x1 tensor of reals in [-1, 1].
template <typename T>
struct BasicNet {
    std::vector<Layer<T>> layers;
};

using DescriptorNet = BasicNet<float>;

inline constexpr int kDescriptorLength = 16;

template <typename To, typename From>
BasicNet<To> cast_net(const BasicNet<From>& src) {
    BasicNet<To> dst;
    dst.layers.reserve(src.layers.size());
    for (const auto& l : src.layers) {
        Layer<To> out;
        out.act = {l.act.kind, To(l.act.a)};
        if (l.is_conv()) {
            const auto& c = l.conv();
            ConvParams<To> p{c.kh, c.kw, c.in_channels, c.out_channels, c.sh, c.sw, {}, {}};
            p.weights.assign(c.weights.begin(), c.weights.end());
            p.bias.assign(c.bias.begin(), c.bias.end());
            out.params = std::move(p);
        } else {
            const auto& f = l.fc();
            FcParams<To> p{f.inputs, f.outputs, {}, {}};
            p.weights.assign(f.weights.begin(), f.weights.end());
            p.bias.assign(f.bias.begin(), f.bias.end());
            out.params = std::move(p);
        }
        dst.layers.push_back(std::move(out));
    }
    return dst;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
Layer<T> make_conv(int kh, int kw, int cin, int cout, int sh, int sw, Activation act, Rng& rng) {
    ConvParams<T> p{kh, kw, cin, cout, sh, sw, {}, {}};
    const int fan_in = kh * kw * cin;
    const int fan_out = kh * kw * cout;
    p.weights = xavier_uniform<T>(p.weight_count(), fan_in, fan_out, rng);
    p.bias.assign(std::size_t(cout), T(0));
    return Layer<T>{std::move(p), {act, T(1)}};
}

template <typename T>
Layer<T> make_fc(int inputs, int outputs, Activation act, Rng& rng) {
    FcParams<T> p{inputs, outputs, {}, {}};
    p.weights = xavier_uniform<T>(std::size_t(inputs) * outputs, inputs, outputs, rng);
    p.bias.assign(std::size_t(outputs), T(0));
    return Layer<T>{std::move(p), {act, T(1)}};
}
}  // namespace detail

// The 10-layer descriptor net. 32x32x1 input; conv shapes
// 15x15x8 -> 13x15x8 -> 13x14x8 -> 6x6x20 -> 6x6x16 -> 6x6x12 -> 5x5x20 -> 2x2x48,
// then fc 192->128 and fc 128->16. symrelu[1] everywhere except the last layer.
template <typename T = float>
BasicNet<T> build_paper_net(Rng& rng) {
    BasicNet<T> net;
    auto& L = net.layers;
    L.push_back(detail::make_conv<T>(4, 4, 1, 8, 2, 2, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(3, 1, 8, 8, 1, 1, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(1, 2, 8, 8, 1, 1, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(3, 3, 8, 20, 2, 2, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(1, 1, 20, 16, 1, 1, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(1, 1, 16, 12, 1, 1, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(2, 2, 12, 20, 1, 1, Activation::symrelu, rng));
    L.push_back(detail::make_conv<T>(3, 3, 20, 48, 2, 2, Activation::symrelu, rng));
    L.push_back(detail::make_fc<T>(192, 128, Activation::symrelu, rng));
    L.push_back(detail::make_fc<T>(128, 16, Activation::identity, rng));
    return net;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// Pixels map to (p - 127.5) / 127.5, i.e. [0,255] -> [-1,1].
template <typename T = float>
Tensor3<T> patch_to_tensor(const Patch& patch) {
    Tensor3<T> t(kPatchEdge, kPatchEdge, 1);
    for (int i = 0; i < kPatchArea; ++i)
        t.data[std::size_t(i)] = (T(patch.px[std::size_t(i)]) - T(127.5)) / T(127.5);
    return t;
}

template <typename T>
std::vector<T> forward(const BasicNet<T>& net, Tensor3<T> input) {
    std::vector<T> flat;
    bool in_fc = false;
    for (const auto& layer : net.layers) {
        if (layer.is_conv()) {
            if (in_fc) throw ShapeError("conv layer after fc layer");
            input = conv2d_valid(input, layer.conv());
            apply_activation(std::span<T>(input.data), layer.act);
        } else {
            if (!in_fc) {
                flat = std::move(input.data);  // (h, w, c) row-major == declaration order
                in_fc = true;
            }
            flat = fully_connected(std::span<const T>(flat), layer.fc());
            apply_activation(std::span<T>(flat), layer.act);
        }
    }
    if (!in_fc) return std::move(input.data);
    return flat;
}

template <typename T = float>
std::vector<T> forward(const BasicNet<T>& net, const Patch& patch) {
    return forward(net, patch_to_tensor<T>(patch));
}

inline std::vector<float> forward(const DescriptorNet& net, const Image8& img) {
    return forward(net, image_to_patch(img));
}

// Per-layer record of a forward pass, kept for backpropagation:
// the input to each layer and its pre-activation output.
template <typename T>
struct ForwardTrace {
    std::vector<std::variant<Tensor3<T>, std::vector<T>>> inputs;
    std::vector<std::variant<Tensor3<T>, std::vector<T>>> pre_act;
    std::vector<T> output;
};

template <typename T>
ForwardTrace<T> forward_trace(const BasicNet<T>& net, Tensor3<T> input) {
    ForwardTrace<T> trace;
    trace.inputs.reserve(net.layers.size());
    trace.pre_act.reserve(net.layers.size());
    std::vector<T> flat;
    bool in_fc = false;
    for (const auto& layer : net.layers) {
        if (layer.is_conv()) {
            if (in_fc) throw ShapeError("conv layer after fc layer");
            Tensor3<T> pre = conv2d_valid(input, layer.conv());
            trace.inputs.emplace_back(std::move(input));
            input = pre;  // copy; pre kept as the pre-activation record
            trace.pre_act.emplace_back(std::move(pre));
            apply_activation(std::span<T>(input.data), layer.act);
        } else {
            if (!in_fc) {
                flat = std::move(input.data);
                in_fc = true;
            }
            std::vector<T> pre = fully_connected(std::span<const T>(flat), layer.fc());
            trace.inputs.emplace_back(std::move(flat));
            trace.pre_act.emplace_back(pre);
            flat = std::move(pre);
            apply_activation(std::span<T>(flat), layer.act);
        }
    }
    trace.output = in_fc ? std::move(flat) : std::move(input.data);
    return trace;
}

// Parameter gradients for a whole net, in layer order.
template <typename T>
struct NetGrads {
    std::vector<std::vector<T>> weights;
    std::vector<std::vector<T>> bias;

    static NetGrads zeros_like(const BasicNet<T>& net) {
        NetGrads g;
        g.weights.reserve(net.layers.size());
        g.bias.reserve(net.layers.size());
        for (const auto& l : net.layers) {
            if (l.is_conv()) {
                g.weights.emplace_back(l.conv().weights.size(), T(0));
                g.bias.emplace_back(l.conv().bias.size(), T(0));
            } else {
                g.weights.emplace_back(l.fc().weights.size(), T(0));
                g.bias.emplace_back(l.fc().bias.size(), T(0));
            }
        }
        return g;
    }

    void add(const NetGrads& other) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
            for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
        }
    }
};

// Backpropagates d(loss)/d(output) through the trace, accumulating parameter
// gradients into `grads` (so one buffer can accumulate a whole batch).
template <typename T>
void backward_accumulate(const BasicNet<T>& net, const ForwardTrace<T>& trace,
                         std::span<const T> output_grad, NetGrads<T>& grads) {
    if (trace.inputs.size() != net.layers.size() || grads.weights.size() != net.layers.size())
        throw ShapeError("trace or gradient buffer does not match net");

    // The gradient arriving at a layer has the shape of that layer's output:
    // a tensor for conv layers, a flat vector for fc layers.
    std::vector<T> grad_flat(output_grad.begin(), output_grad.end());
    Tensor3<T> grad_tensor;
    auto reshape_to_conv_output = [&](std::size_t conv_li) {
        const auto& pre = std::get<Tensor3<T>>(trace.pre_act[conv_li]);
        if (pre.data.size() != grad_flat.size())
            throw ShapeError("gradient does not match conv output size");
        grad_tensor = Tensor3<T>(pre.height, pre.width, pre.channels);
        grad_tensor.data.assign(grad_flat.begin(), grad_flat.end());
    };
    if (!net.layers.empty() && net.layers.back().is_conv())
        reshape_to_conv_output(net.layers.size() - 1);

    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& layer = net.layers[li];
        if (layer.is_conv()) {
            if (layer.act.kind == Activation::symrelu) {
                const auto& pre = std::get<Tensor3<T>>(trace.pre_act[li]);
                for (std::size_t i = 0; i < grad_tensor.data.size(); ++i)
                    grad_tensor.data[i] *= symrelu_grad(pre.data[i], layer.act.a);
            }
            const auto& input = std::get<Tensor3<T>>(trace.inputs[li]);
            ConvGrads<T> g = conv2d_backward(input, layer.conv(), grad_tensor);
            for (std::size_t i = 0; i < g.weights.size(); ++i) grads.weights[li][i] += g.weights[i];
            for (std::size_t i = 0; i < g.bias.size(); ++i) grads.bias[li][i] += g.bias[i];
            grad_tensor = std::move(g.input);  // conv input is the layer below's output tensor
        } else {
            if (layer.act.kind == Activation::symrelu) {
                const auto& pre = std::get<std::vector<T>>(trace.pre_act[li]);
                for (std::size_t i = 0; i < grad_flat.size(); ++i)
                    grad_flat[i] *= symrelu_grad(pre[i], layer.act.a);
            }
            const auto& input = std::get<std::vector<T>>(trace.inputs[li]);
            FcGrads<T> g = fully_connected_backward(std::span<const T>(input), layer.fc(),
                                                    std::span<const T>(grad_flat));
            for (std::size_t i = 0; i < g.weights.size(); ++i) grads.weights[li][i] += g.weights[i];
            for (std::size_t i = 0; i < g.bias.size(); ++i) grads.bias[li][i] += g.bias[i];
            grad_flat = std::move(g.input);
            if (li > 0 && net.layers[li - 1].is_conv()) reshape_to_conv_output(li - 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

template <typename T>
std::size_t count_parameters(const BasicNet<T>& net) {
    std::size_t n = 0;
    for (const auto& l : net.layers) {
        if (l.is_conv())
            n += l.conv().weights.size() + l.conv().bias.size();
        else
            n += l.fc().weights.size() + l.fc().bias.size();
    }
    return n;
}

struct OpCounts {
    std::uint64_t multiplications = 0;
    std::uint64_t summations = 0;
};

// Per output element a conv layer does kernel-volume multiplications and the
// same number of additions (kernel_volume - 1 accumulations plus the bias);
// an fc layer likewise does in*out of each.
template <typename T>
OpCounts count_operations(const BasicNet<T>& net, int in_h = kPatchEdge, int in_w = kPatchEdge,
                          int in_c = 1) {
    OpCounts n;
    int h = in_h, w = in_w, c = in_c;
    for (const auto& l : net.layers) {
        if (l.is_conv()) {
            const auto& p = l.conv();
            if (c != p.in_channels || h < p.kh || w < p.kw)
                throw ShapeError("count_operations: layer does not fit the running shape");
            h = conv_out_dim(h, p.kh, p.sh);
            w = conv_out_dim(w, p.kw, p.sw);
            c = p.out_channels;
            const std::uint64_t per_elem = std::uint64_t(p.kh) * p.kw * p.in_channels;
            const std::uint64_t elems = std::uint64_t(h) * w * c;
            n.multiplications += elems * per_elem;
            n.summations += elems * per_elem;
        } else {
            const auto& p = l.fc();
            const std::uint64_t ops = std::uint64_t(p.inputs) * p.outputs;
            n.multiplications += ops;
            n.summations += ops;
            h = 1, w = 1, c = p.outputs;
        }
    }
    return n;
}

// ---------------------------------------------------------------------------
// Output bounds and 8-bit quantization
// ---------------------------------------------------------------------------

struct DescriptorBounds {
    std::vector<float> lower;
    std::vector<float> upper;

    std::uint32_t checksum() const {
        ByteWriter w;
        for (float v : lower) w.f32(v);
        for (float v : upper) w.f32(v);
        return crc32(w.bytes());
    }
};

// L_j = b_j - a * sum_i |W_ij|, U_j = b_j + a * sum_i |W_ij| over the final fc
// layer, where a is the clamp of the activation feeding it. Requires that the
// layer before the last is symrelu-bounded, otherwise no finite bound exists.
template <typename T>
DescriptorBounds output_bounds(const BasicNet<T>& net) {
    if (net.layers.size() < 2 || net.layers.back().is_conv())
        throw ShapeError("output_bounds: net must end with an fc layer");
    const auto& penultimate = net.layers[net.layers.size() - 2];
    if (penultimate.act.kind != Activation::symrelu || !(penultimate.act.a > T(0)))
        throw ConfigError("output_bounds: penultimate activation does not bound its output");
    const double a = double(penultimate.act.a);
    const auto& fc = net.layers.back().fc();
    DescriptorBounds b;
    b.lower.resize(std::size_t(fc.outputs));
    b.upper.resize(std::size_t(fc.outputs));
    for (int j = 0; j < fc.outputs; ++j) {
        double radius = 0.0;
        for (int i = 0; i < fc.inputs; ++i)
            radius += std::abs(double(fc.weights[std::size_t(i) * fc.outputs + j]));
        radius *= a;
        const double bias = double(fc.bias[std::size_t(j)]);
        b.lower[std::size_t(j)] = float(bias - radius);
        b.upper[std::size_t(j)] = float(bias + radius);
    }
    return b;
}

struct QuantizedDescriptor {
    std::vector<std::uint8_t> codes;
    std::uint32_t bounds_checksum = 0;
};

// code_j = round(255 * (x_j - L_j) / (U_j - L_j)), clamped to [0, 255].
// Degenerate U_j == L_j maps to code 0.
inline QuantizedDescriptor quantize(std::span<const float> descriptor, const DescriptorBounds& bounds) {
    if (descriptor.size() != bounds.lower.size())
        throw ShapeError("quantize: descriptor length does not match bounds");
    QuantizedDescriptor q;
    q.codes.resize(descriptor.size());
    q.bounds_checksum = bounds.checksum();
    for (std::size_t j = 0; j < descriptor.size(); ++j) {
        const double lo = bounds.lower[j], hi = bounds.upper[j];
        if (!(hi > lo)) {
            q.codes[j] = 0;
            continue;
        }
        const double t = 255.0 * (double(descriptor[j]) - lo) / (hi - lo);
        q.codes[j] = std::uint8_t(std::clamp(std::lround(t), 0L, 255L));
    }
    return q;
}

inline std::vector<float> dequantize(const QuantizedDescriptor& q, const DescriptorBounds& bounds) {
    if (q.codes.size() != bounds.lower.size())
        throw ShapeError("dequantize: code length does not match bounds");
    if (q.bounds_checksum != bounds.checksum())
        throw ConfigError("dequantize: descriptor was quantized against different bounds");
    std::vector<float> out(q.codes.size());
    for (std::size_t j = 0; j < q.codes.size(); ++j) {
        const double lo = bounds.lower[j], hi = bounds.upper[j];
        out[j] = float(lo + double(q.codes[j]) * (hi - lo) / 255.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------
// File layout (little-endian):
//   "TDSC" | u8 version=1 | payload | u32 crc32(payload)
// payload:
//   u32 layer count; per layer: u8 kind (0 conv, 1 fc);
//     conv: u32 kh, kw, cin, cout, sh, sw;  fc: u32 inputs, outputs;
//     u8 activation (0 identity, 1 symrelu); f32 a;
//   then all weights as f32 in declaration order (kernel kh->kw->cin->cout then
//   bias per conv; row-major weights then bias per fc).

inline constexpr char kModelMagic[4] = {'T', 'D', 'S', 'C'};
inline constexpr std::uint8_t kModelVersion = 1;

inline std::vector<std::uint8_t> serialize_model(const DescriptorNet& net) {
    ByteWriter payload;
    payload.u32(std::uint32_t(net.layers.size()));
    for (const auto& l : net.layers) {
        payload.u8(l.is_conv() ? 0 : 1);
        if (l.is_conv()) {
            const auto& c = l.conv();
            payload.u32(std::uint32_t(c.kh));
            payload.u32(std::uint32_t(c.kw));
            payload.u32(std::uint32_t(c.in_channels));
            payload.u32(std::uint32_t(c.out_channels));
            payload.u32(std::uint32_t(c.sh));
            payload.u32(std::uint32_t(c.sw));
        } else {
            payload.u32(std::uint32_t(l.fc().inputs));
            payload.u32(std::uint32_t(l.fc().outputs));
        }
        payload.u8(std::uint8_t(l.act.kind));
        payload.f32(l.act.a);
    }
    for (const auto& l : net.layers) {
        const auto& w = l.is_conv() ? l.conv().weights : l.fc().weights;
        const auto& b = l.is_conv() ? l.conv().bias : l.fc().bias;
        for (float v : w) payload.f32(v);
        for (float v : b) payload.f32(v);
    }

    ByteWriter file;
    file.raw(kModelMagic, 4);
    file.u8(kModelVersion);
    file.raw(payload.bytes().data(), payload.size());
    file.u32(crc32(payload.bytes()));
    return file.take();
}

inline void save_model(const DescriptorNet& net, const std::string& path) {
    write_file(path, serialize_model(net));
}

inline DescriptorNet deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 9) throw CorruptFileError("model file truncated");
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0)
        throw FormatError("not a descriptor model file (bad magic)");
    const std::uint8_t version = bytes[4];
    if (version != kModelVersion)
        throw VersionError("unsupported model version " + std::to_string(version));

    const std::span<const std::uint8_t> payload = bytes.subspan(5, bytes.size() - 9);
    ByteReader tail(bytes.subspan(bytes.size() - 4));
    if (crc32(payload) != tail.u32()) throw CorruptFileError("model checksum mismatch");

    ByteReader r(payload);
    const std::uint32_t layer_count = r.u32();
    if (layer_count == 0 || layer_count > 1024) throw FormatError("implausible layer count");
    DescriptorNet net;
    net.layers.resize(layer_count);
    for (auto& l : net.layers) {
        const std::uint8_t kind = r.u8();
        if (kind == 0) {
            ConvParams<float> c;
            c.kh = int(r.u32());
            c.kw = int(r.u32());
            c.in_channels = int(r.u32());
            c.out_channels = int(r.u32());
            c.sh = int(r.u32());
            c.sw = int(r.u32());
            if (c.kh < 1 || c.kw < 1 || c.sh < 1 || c.sw < 1 || c.in_channels < 1 ||
                c.out_channels < 1 || std::uint64_t(c.kh) * c.kw * c.in_channels * c.out_channels > (1u << 28))
                throw FormatError("shape table inconsistent: bad conv geometry");
            l.params = std::move(c);
        } else if (kind == 1) {
            FcParams<float> f;
            f.inputs = int(r.u32());
            f.outputs = int(r.u32());
            if (f.inputs < 1 || f.outputs < 1 || std::uint64_t(f.inputs) * f.outputs > (1u << 28))
                throw FormatError("shape table inconsistent: bad fc geometry");
            l.params = std::move(f);
        } else {
            throw FormatError("shape table inconsistent: unknown layer kind");
        }
        const std::uint8_t act = r.u8();
        if (act > 1) throw FormatError("shape table inconsistent: unknown activation");
        l.act.kind = Activation(act);
        l.act.a = r.f32();
        if (l.act.kind == Activation::symrelu && !(l.act.a > 0))
            throw FormatError("shape table inconsistent: symrelu clamp must be positive");
    }
    for (auto& l : net.layers) {
        auto read_all = [&r](std::vector<float>& dst, std::size_t n) {
            dst.resize(n);
            for (auto& v : dst) v = r.f32();
        };
        if (l.is_conv()) {
            read_all(l.conv().weights, l.conv().weight_count());
            read_all(l.conv().bias, std::size_t(l.conv().out_channels));
        } else {
            read_all(l.fc().weights, std::size_t(l.fc().inputs) * l.fc().outputs);
            read_all(l.fc().bias, std::size_t(l.fc().outputs));
        }
    }
    if (r.remaining() != 0) throw CorruptFileError("model has trailing bytes");
    return net;
}

inline DescriptorNet load_model(const std::string& path) {
    return deserialize_model(read_file(path));
}

// Stable identifier of a concrete set of weights, echoed into reports.
inline std::uint32_t model_checksum(const DescriptorNet& net) {
    const auto bytes = serialize_model(net);
    return crc32(std::span<const std::uint8_t>(bytes).subspan(5, bytes.size() - 9));
}

}  // namespace tinydesc
