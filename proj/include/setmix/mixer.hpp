#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "setmix/graph.hpp"
#include "setmix/matrix.hpp"
#include "setmix/nn.hpp"
#include "setmix/rng.hpp"

namespace setmix {

// Weight-bearing description of one Set-Mixer aggregation module. m maps the
// point dimension k -> h1 -> h2 -> d; r reduces the flattened d * n_sort *
// c_in rows to the 2 * c_in output channels.
struct MixerParams {
    std::size_t k = 0;
    std::size_t c_in = 0;
    std::size_t n_sort = 1;
    std::array<FcLayer, 3> m_layers;
    FcLayer r_layer;
    NormLayer norm;              // layer_norm over the ordered rows, or kind none
    double dropout_rate = 0.0;

    std::size_t d() const { return m_layers[2].out_dim(); }
    std::size_t out_channels() const { return 2 * c_in; }

    void validate() const {
        if (k == 0 || c_in == 0 || n_sort == 0) throw ShapeMismatchError("MixerParams: zero dim");
        if (m_layers[0].in_dim() != k) throw ShapeMismatchError("MixerParams: m input dim != k");
        if (m_layers[1].in_dim() != m_layers[0].out_dim() ||
            m_layers[2].in_dim() != m_layers[1].out_dim())
            throw ShapeMismatchError("MixerParams: m chain widths inconsistent");
        if (r_layer.in_dim() != d() * n_sort * c_in)
            throw ShapeMismatchError("MixerParams: r input dim != d*n_sort*c_in");
        if (r_layer.out_dim() != 2 * c_in)
            throw ShapeMismatchError("MixerParams: r output dim != 2*c_in");
        if (norm.kind == NormKind::layer_norm && norm.gain.cols() != n_sort * c_in)
            throw ShapeMismatchError("MixerParams: norm width != n_sort*c_in");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ShapeMismatchError("MixerParams: dropout rate out of range");
    }
};

// Parameter handles for one mixer instance inside a model (or a temporary
// store for the standalone op).
struct MixerParamRefs {
    Parameter* ln_gain = nullptr;  // null => no norm
    Parameter* ln_shift = nullptr;
    std::array<Parameter*, 3> m_w{};
    std::array<Parameter*, 3> m_b{};
    std::array<Activation, 3> m_act{Activation::relu, Activation::relu, Activation::relu};
    Parameter* r_w = nullptr;
    Parameter* r_b = nullptr;
    double dropout_rate = 0.0;
};

struct MixerRunOptions {
    bool training = false;
    Rng* rng = nullptr;
    double dropout_override = -1.0;  // >= 0 overrides the configured rate
};

// Shared tail of the Set-Mixer aggregation: `ordered` is the stacked
// (blocks * k) x (n_sort * c_in) matrix of ordered features, one block per
// group. Applies norm, transposes each block, runs m along the point
// dimension with dropout after the first two activations, transposes back,
// flattens row-major, and applies r. Returns a blocks x (2 * c_in) node.
inline Graph::NodeId build_mixer_tail(Graph& g, Graph::NodeId ordered, std::size_t blocks,
                                      std::size_t k, const MixerParamRefs& w,
                                      const MixerRunOptions& opt) {
    const std::size_t nc = g.value(ordered).cols();
    if (g.value(ordered).rows() != blocks * k)
        throw ShapeMismatchError("build_mixer_tail: ordered rows != blocks*k");
    double rate = opt.dropout_override >= 0.0 ? opt.dropout_override : w.dropout_rate;
    if (!opt.training) rate = 0.0;
    if (rate > 0.0 && opt.rng == nullptr)
        throw Error("build_mixer_tail: dropout in training mode needs an RNG");

    Graph::NodeId x = ordered;
    if (w.ln_gain != nullptr)
        x = g.layer_norm(x, g.param(*w.ln_gain), g.param(*w.ln_shift));
    x = g.block_transpose(x, k);  // (blocks*nc) x k
    for (std::size_t j = 0; j < 3; ++j) {
        x = g.fc(x, *w.m_w[j], *w.m_b[j], w.m_act[j]);
        if (j < 2 && rate > 0.0) x = g.dropout(x, rate, *opt.rng);
    }
    const std::size_t d = g.value(x).cols();
    x = g.block_transpose(x, nc);              // (blocks*d) x nc
    x = g.reshape(x, blocks, d * nc);          // row-major flatten per block
    x = g.fc(x, *w.r_w, *w.r_b, Activation::none);
    return x;
}

// Standalone Set-Mixer aggregation of one ordered group:
// k x (n_sort*c_in) in, 2*c_in out.
inline std::vector<double> mixer_aggregate(const Matrix& ordered, const MixerParams& params,
                                           bool training = false, Rng* rng = nullptr) {
    params.validate();
    if (ordered.rows() != params.k || ordered.cols() != params.n_sort * params.c_in)
        throw ShapeMismatchError("mixer_aggregate: ordered shape != k x n_sort*c_in");

    ParamStore store;
    MixerParamRefs refs;
    if (params.norm.kind == NormKind::layer_norm) {
        refs.ln_gain = &store.add("ln.gain", params.norm.gain);
        refs.ln_shift = &store.add("ln.shift", params.norm.shift);
    }
    for (std::size_t j = 0; j < 3; ++j) {
        refs.m_w[j] = &store.add("m" + std::to_string(j) + ".w", params.m_layers[j].weight);
        refs.m_b[j] = &store.add("m" + std::to_string(j) + ".b", params.m_layers[j].bias);
        refs.m_act[j] = params.m_layers[j].activation;
    }
    refs.r_w = &store.add("r.w", params.r_layer.weight);
    refs.r_b = &store.add("r.b", params.r_layer.bias);
    refs.dropout_rate = params.dropout_rate;

    Graph g(false);
    MixerRunOptions opt;
    opt.training = training;
    opt.rng = rng;
    Graph::NodeId out = build_mixer_tail(g, g.constant(ordered), 1, params.k, refs, opt);
    const Matrix& v = g.value(out);
    return std::vector<double>(v.data(), v.data() + v.cols());
}

// Channel-wise max or mean over the k rows of one group.
enum class PoolKind { max, mean };

inline std::vector<double> pool_aggregate(const Matrix& feats, PoolKind kind) {
    if (feats.rows() == 0) throw ShapeMismatchError("pool_aggregate: empty input");
    std::vector<double> out(feats.cols());
    if (kind == PoolKind::max) {
        for (std::size_t j = 0; j < feats.cols(); ++j) {
            double best = feats(0, j);
            for (std::size_t i = 1; i < feats.rows(); ++i) best = std::max(best, feats(i, j));
            out[j] = best;
        }
    } else {
        for (std::size_t i = 0; i < feats.rows(); ++i)
            for (std::size_t j = 0; j < feats.cols(); ++j) out[j] += feats(i, j);
        for (double& v : out) v /= static_cast<double>(feats.rows());
    }
    return out;
}

}  // namespace setmix
