#pragma once

// Shape propagation through the generator and discriminator layouts. Kernels, strides and output
// sizes are fixed by the architecture tables; paddings are solved from them.

#include "gmap/common.hpp"

#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gmap {

inline int conv_out(int in, int kernel, int stride, int pad) {
    if (in < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw InvalidArgument("conv_out: need in, kernel, stride >= 1 and pad >= 0");
    const int span = in + 2 * pad - kernel;
    if (span < 0) throw InvalidArgument("conv_out: kernel " + std::to_string(kernel) + " larger than padded input");
    return span / stride + 1;
}

inline int deconv_out(int in, int kernel, int stride, int pad) {
    if (in < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw InvalidArgument("deconv_out: need in, kernel, stride >= 1 and pad >= 0");
    const int out = (in - 1) * stride - 2 * pad + kernel;
    if (out < 1) throw InvalidArgument("deconv_out: non-positive output size");
    return out;
}

/// Smallest pad in [0, kernel) giving `out`, if any.
inline std::optional<int> solve_conv_pad(int in, int out, int kernel, int stride) {
    for (int p = 0; p < kernel; ++p) {
        if (in + 2 * p < kernel) continue;
        if (conv_out(in, kernel, stride, p) == out) return p;
    }
    return std::nullopt;
}

inline std::optional<int> solve_deconv_pad(int in, int out, int kernel, int stride) {
    for (int p = 0; p < kernel; ++p) {
        if ((in - 1) * stride - 2 * p + kernel < 1) break;
        if (deconv_out(in, kernel, stride, p) == out) return p;
    }
    return std::nullopt;
}

enum class LayerKind { input, geom_map, concat_label, conv, residual, deconv, grid_sample, branch_conv };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::input: return "input";
        case LayerKind::geom_map: return "geom_map";
        case LayerKind::concat_label: return "concat_label";
        case LayerKind::conv: return "conv";
        case LayerKind::residual: return "residual";
        case LayerKind::deconv: return "deconv";
        case LayerKind::grid_sample: return "grid_sample";
        case LayerKind::branch_conv: return "branch_conv";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int kernel = 0;
    int stride = 0;
    /// Solved; -1 for layers without a kernel.
    int pad = -1;
    int out_channels = 0;
};

/// C x H x W, or 3 x n for vertex arrays (dims of size 2).
struct TensorShape {
    std::vector<int> dims;

    std::string str() const {
        std::string s;
        for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? "x" : "") + std::to_string(dims[k]);
        return s;
    }
    bool operator==(const TensorShape&) const = default;
};

struct TraceRow {
    std::string name;
    LayerSpec layer;
    TensorShape shape;
};

struct ShapeTrace {
    std::string title;
    std::vector<TraceRow> rows;
    /// Pyramid branch outputs (discriminator only).
    std::vector<TraceRow> pyramid_taps;

    /// Flattened length of all pyramid branch outputs.
    int adversarial_length() const {
        int total = 0;
        for (const auto& t : pyramid_taps) {
            int n = 1;
            for (int d : t.shape.dims) n *= d;
            total += n;
        }
        return total;
    }
    const TraceRow& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw InvalidArgument("no trace row named '" + name + "'");
    }
};

namespace detail {

// Appends a kernel layer whose output size is fixed by the table; the pad is solved.
inline void push_kernel_layer(ShapeTrace& t, std::string name, LayerKind kind, int kernel, int stride,
                              int out_channels, int out_size) {
    const TensorShape& prev = t.rows.back().shape;
    const int in = prev.dims.at(1);
    const auto pad = kind == LayerKind::deconv ? solve_deconv_pad(in, out_size, kernel, stride)
                                               : solve_conv_pad(in, out_size, kernel, stride);
    if (!pad)
        throw Error(t.title + ": no pad makes " + std::to_string(in) + " -> " + std::to_string(out_size) +
                    " with kernel " + std::to_string(kernel) + ", stride " + std::to_string(stride));
    t.rows.push_back({std::move(name), {kind, kernel, stride, *pad, out_channels}, {{out_channels, out_size, out_size}}});
}

}  // namespace detail

inline constexpr int kTemplateVertices = 10857;
inline constexpr int kMapResolution = 128;

inline ShapeTrace trace_generator(int n_vertices = kTemplateVertices, int resolution = kMapResolution,
                                  int label_size = 23) {
    ShapeTrace t;
    t.title = "generator";
    t.rows.push_back({"input", {LayerKind::input}, {{3, n_vertices}}});
    t.rows.push_back({"geometric_map", {LayerKind::geom_map}, {{3, resolution, resolution}}});
    t.rows.push_back({"label_concat", {LayerKind::concat_label}, {{3 + label_size, resolution, resolution}}});
    detail::push_kernel_layer(t, "down1", LayerKind::conv, 7, 1, 64, resolution);
    detail::push_kernel_layer(t, "down2", LayerKind::conv, 4, 2, 128, resolution / 2);
    detail::push_kernel_layer(t, "down3", LayerKind::conv, 4, 2, 256, resolution / 4);
    for (int k = 1; k <= 6; ++k) {
        const TensorShape s = t.rows.back().shape;
        t.rows.push_back({"residual" + std::to_string(k), {LayerKind::residual, 0, 0, -1, s.dims[0]}, s});
    }
    detail::push_kernel_layer(t, "up1", LayerKind::deconv, 4, 2, 128, resolution / 2);
    detail::push_kernel_layer(t, "up2", LayerKind::deconv, 4, 2, 64, resolution);
    detail::push_kernel_layer(t, "out_conv", LayerKind::conv, 7, 1, 3, resolution);
    t.rows.push_back({"grid_sample", {LayerKind::grid_sample}, {{3, n_vertices}}});
    return t;
}

inline ShapeTrace trace_discriminator(int n_vertices = kTemplateVertices, int resolution = kMapResolution,
                                      int label_size = 23) {
    ShapeTrace t;
    t.title = "discriminator";
    t.rows.push_back({"input", {LayerKind::input}, {{3, n_vertices}}});
    t.rows.push_back({"geometric_map", {LayerKind::geom_map}, {{3, resolution, resolution}}});
    int channels = 64;
    int size = resolution / 2;
    for (int k = 1; size >= 2; ++k, channels *= 2, size /= 2) {
        detail::push_kernel_layer(t, "conv" + std::to_string(k), LayerKind::conv, 4, 2, channels, size);
        if (k % 2 == 0) {
            // Branch conv to one channel, 3x3 kernel, stride 1, keeping the spatial size.
            ShapeTrace branch;
            branch.title = t.title;
            branch.rows.push_back(t.rows.back());
            detail::push_kernel_layer(branch, "tap" + std::to_string(k / 2), LayerKind::branch_conv, 3, 1, 1, size);
            t.pyramid_taps.push_back(branch.rows.back());
        }
    }
    const int last = t.rows.back().shape.dims[1];
    detail::push_kernel_layer(t, "classifier", LayerKind::conv, last, 1, label_size, 1);
    return t;
}

/// Aligned text table of a trace.
inline std::string format_trace(const ShapeTrace& t) {
    std::ostringstream os;
    auto line = [&os](const std::string& name, const std::string& kind, const std::string& k, const std::string& s,
                      const std::string& p, const std::string& shape) {
        os << std::left << std::setw(16) << name << std::setw(14) << kind << std::setw(8) << k << std::setw(8) << s
           << std::setw(6) << p << shape << '\n';
    };
    auto num = [](int v) { return v > 0 ? std::to_string(v) : std::string("-"); };
    auto print_row = [&](const TraceRow& r) {
        line(r.name, to_string(r.layer.kind), num(r.layer.kernel), num(r.layer.stride),
             r.layer.pad >= 0 ? std::to_string(r.layer.pad) : "-", r.shape.str());
    };
    os << t.title << '\n';
    line("layer", "kind", "kernel", "stride", "pad", "output");
    for (const auto& r : t.rows) print_row(r);
    if (!t.pyramid_taps.empty()) {
        os << "pyramid taps (flattened length " << t.adversarial_length() << ")\n";
        for (const auto& r : t.pyramid_taps) print_row(r);
    }
    return os.str();
}

}  // namespace gmap
