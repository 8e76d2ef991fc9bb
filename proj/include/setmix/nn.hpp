#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "setmix/error.hpp"
#include "setmix/matrix.hpp"
#include "setmix/rng.hpp"

namespace setmix {

enum class Activation { relu, none };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }

// Fully connected layer, weight stored out x in. y = act(x W^T + b).
struct FcLayer {
    Matrix weight;     // out x in
    Matrix bias;       // 1 x out
    Activation activation = Activation::none;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    static FcLayer identity(std::size_t dim) {
        FcLayer l;
        l.weight = Matrix(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) l.weight(i, i) = 1.0;
        l.bias = Matrix(1, dim);
        return l;
    }
};

inline Matrix fc_forward(const FcLayer& layer, const Matrix& x) {
    if (x.cols() != layer.in_dim())
        throw ShapeMismatchError("fc_forward: input cols " + std::to_string(x.cols()) +
                                 " != weight in dim " + std::to_string(layer.in_dim()));
    if (layer.bias.cols() != layer.out_dim())
        throw ShapeMismatchError("fc_forward: bias length != out dim");
    Matrix y = matmul_nt(x, layer.weight);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double* row = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) {
            row[j] += layer.bias(0, j);
            if (layer.activation == Activation::relu && row[j] < 0.0) row[j] = 0.0;
        }
    }
    return y;
}

struct DropoutSpec {
    double rate = 0.0;
    bool training = false;
    Rng* rng = nullptr;
};

// Inverted dropout: each element is zeroed with probability rate and the
// survivors are scaled by 1/(1-rate). Eval mode is the exact identity.
inline Matrix dropout(const Matrix& x, const DropoutSpec& spec) {
    if (spec.rate < 0.0 || spec.rate >= 1.0) throw Error("dropout: rate must be in [0,1)");
    if (!spec.training || spec.rate == 0.0) return x;
    if (spec.rng == nullptr) throw Error("dropout: training mode needs an RNG handle");
    Matrix y = x;
    const double scale = 1.0 / (1.0 - spec.rate);
    for (std::size_t i = 0; i < y.size(); ++i)
        y.data()[i] = spec.rng->bernoulli(spec.rate) ? 0.0 : y.data()[i] * scale;
    return y;
}

enum class NormKind { layer_norm, batch_norm, none };

inline const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::layer_norm: return "layer_norm";
        case NormKind::batch_norm: return "batch_norm";
        case NormKind::none: return "none";
    }
    return "none";
}

struct NormLayer {
    NormKind kind = NormKind::none;
    Matrix gain;           // 1 x c
    Matrix shift;          // 1 x c
    Matrix running_mean;   // 1 x c (batch_norm only)
    Matrix running_var;    // 1 x c (batch_norm only)
    double epsilon = 1e-5;
    double momentum = 0.9;

    static NormLayer make(NormKind kind, std::size_t channels) {
        NormLayer n;
        n.kind = kind;
        n.gain = Matrix(1, channels, 1.0);
        n.shift = Matrix(1, channels, 0.0);
        if (kind == NormKind::batch_norm) {
            n.running_mean = Matrix(1, channels, 0.0);
            n.running_var = Matrix(1, channels, 1.0);
        }
        return n;
    }
};

// Per-row standardization followed by the per-channel affine map. A row with
// zero variance maps to the shift vector.
inline Matrix layer_norm_forward(const Matrix& x, const NormLayer& norm) {
    if (norm.gain.cols() != x.cols() || norm.shift.cols() != x.cols())
        throw ShapeMismatchError("layer_norm_forward: parameter length != channels");
    Matrix y(x.rows(), x.cols());
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xi[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = xi[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + norm.epsilon);
        double* yi = y.row(i);
        for (std::size_t j = 0; j < c; ++j)
            yi[j] = (xi[j] - mean) * inv * norm.gain(0, j) + norm.shift(0, j);
    }
    return y;
}

// Mean cross-entropy with log-sum-exp stabilization; also returns the logits
// gradient (softmax - onehot) / n.
inline std::pair<double, Matrix> softmax_xent(const Matrix& logits,
                                              const std::vector<int>& labels) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (labels.size() != n) throw ShapeMismatchError("softmax_xent: label count != rows");
    Matrix grad(n, k);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k)
            throw Error("softmax_xent: label out of range");
        const double* row = logits.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        loss += lse - row[label];
        double* gi = grad.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            gi[j] = std::exp(row[j] - lse) / static_cast<double>(n);
        }
        gi[label] -= 1.0 / static_cast<double>(n);
    }
    return {loss / static_cast<double>(n), std::move(grad)};
}

// Adam state for one parameter tensor.
struct AdamState {
    Matrix m;
    Matrix v;
    std::int64_t t = 0;
};

// One bias-corrected Adam update in place.
inline void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
    if (!param.same_shape(grad)) throw ShapeMismatchError("adam_step: grad shape != param");
    if (state.m.size() != param.size()) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
        state.t = 0;
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        double& m = state.m.data()[i];
        double& v = state.v.data()[i];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.data()[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
    }
}

}  // namespace setmix
