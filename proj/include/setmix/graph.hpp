#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "setmix/error.hpp"
#include "setmix/matrix.hpp"
#include "setmix/nn.hpp"
#include "setmix/rng.hpp"

namespace setmix {

// Named trainable tensor. Gradients accumulate across backward() calls until
// zeroed.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
        grad = Matrix(value.rows(), value.cols());
    }
    void zero_grad() { grad.fill(0.0); }
};

// Owning registry with stable addresses and name lookup (checkpoint order is
// registration order).
class ParamStore {
public:
    Parameter& add(const std::string& name, Matrix value) {
        if (named_.count(name)) throw Error("ParamStore: duplicate parameter " + name);
        params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
        named_[name] = params_.back().get();
        return *params_.back();
    }

    Parameter* find(const std::string& name) const {
        auto it = named_.find(name);
        return it == named_.end() ? nullptr : it->second;
    }

    std::vector<Parameter*> all() const {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.get());
        return out;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (const auto& p : params_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, Parameter*> named_;
};

// Reverse-mode tape. Ops append nodes in topological order; backward() walks
// the tape in reverse and accumulates into Parameter::grad at the leaves.
// Construct with record=false for inference: values are computed, backward
// closures are not kept.
class Graph {
public:
    using NodeId = std::int32_t;

    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    double scalar(NodeId id) const { return value(id)(0, 0); }

    NodeId constant(Matrix v) { return push(std::move(v), {}, nullptr); }

    NodeId param(Parameter& p) {
        NodeId id = push(p.value, {}, nullptr);
        node(id).leaf = &p;
        node(id).needs_grad = true;
        return id;
    }

    // True if gradients flowing into this node can reach any parameter.
    // Backward passes skip gradient computation for subtrees that cannot.
    bool needs_grad(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].needs_grad;
    }

    // y = x * w^T
    NodeId matmul_nt(NodeId x, NodeId w) {
        Matrix y = setmix::matmul_nt(value(x), value(w));
        NodeId id = push(std::move(y), {x, w}, nullptr);
        if (record_)
            node(id).back = [x, w](Graph& g, NodeId self) {
                const Matrix& grad = g.grad(self);
                if (g.needs_grad(x)) g.accumulate(x, setmix::matmul_nn(grad, g.value(w)));
                if (g.needs_grad(w)) g.accumulate(w, setmix::matmul_tn(grad, g.value(x)));
            };
        return id;
    }

    // Fused fully connected layer: y = act(x w^T + bias). One node instead of
    // three keeps the per-batch allocation traffic down, which is what the
    // training loop is bound by.
    NodeId fc(NodeId x, Parameter& w, Parameter& b, Activation act) {
        NodeId wn = param(w);
        NodeId bn = param(b);
        const Matrix& xv = value(x);
        if (b.value.cols() != w.value.rows())
            throw ShapeMismatchError("fc: bias length != out dim");
        Matrix y = setmix::matmul_nt(xv, w.value);
        const std::size_t cols = y.cols();
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double* row = y.row(i);
            for (std::size_t j = 0; j < cols; ++j) {
                row[j] += b.value(0, j);
                if (act == Activation::relu && row[j] < 0.0) row[j] = 0.0;
            }
        }
        NodeId id = push(std::move(y), {x, wn, bn}, nullptr);
        if (record_)
            node(id).back = [x, wn, bn, act](Graph& g, NodeId self) {
                const Matrix& grad = g.grad(self);
                const Matrix& yv = g.value(self);
                Matrix masked;
                const Matrix* gm = &grad;
                if (act == Activation::relu) {
                    masked = Matrix(grad.rows(), grad.cols());
                    for (std::size_t i = 0; i < grad.size(); ++i)
                        masked.data()[i] = yv.data()[i] > 0.0 ? grad.data()[i] : 0.0;
                    gm = &masked;
                }
                if (g.needs_grad(x)) g.accumulate(x, setmix::matmul_nn(*gm, g.value(wn)));
                g.accumulate(wn, setmix::matmul_tn(*gm, g.value(x)));
                Matrix db(1, gm->cols());
                for (std::size_t i = 0; i < gm->rows(); ++i) {
                    const double* gi = gm->row(i);
                    for (std::size_t j = 0; j < gm->cols(); ++j) db(0, j) += gi[j];
                }
                g.accumulate(bn, std::move(db));
            };
        return id;
    }

    // y = x + row-broadcast bias (bias 1 x c)
    NodeId add_bias(NodeId x, NodeId bias) {
        const Matrix& xv = value(x);
        const Matrix& bv = value(bias);
        if (bv.rows() != 1 || bv.cols() != xv.cols())
            throw ShapeMismatchError("add_bias: bias must be 1 x cols(x)");
        Matrix y = xv;
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double* row = y.row(i);
            for (std::size_t j = 0; j < y.cols(); ++j) row[j] += bv(0, j);
        }
        NodeId id = push(std::move(y), {x, bias}, nullptr);
        if (record_)
            node(id).back = [x, bias](Graph& g, NodeId self) {
                const Matrix& grad = g.grad(self);
                if (g.needs_grad(x)) g.accumulate(x, grad);
                Matrix db(1, grad.cols());
                for (std::size_t i = 0; i < grad.rows(); ++i)
                    for (std::size_t j = 0; j < grad.cols(); ++j) db(0, j) += grad(i, j);
                g.accumulate(bias, std::move(db));
            };
        return id;
    }

    NodeId relu(NodeId x) {
        Matrix y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y.data()[i] < 0.0) y.data()[i] = 0.0;
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                Matrix dx(grad.rows(), grad.cols());
                for (std::size_t i = 0; i < dx.size(); ++i)
                    dx.data()[i] = xv.data()[i] > 0.0 ? grad.data()[i] : 0.0;
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Inverted dropout; the mask is drawn at forward time and replayed in the
    // backward pass. rate == 0 is a free pass-through.
    NodeId dropout(NodeId x, double rate, Rng& rng) {
        if (rate == 0.0) return x;
        if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0,1)");
        const Matrix& xv = value(x);
        auto mask = std::make_shared<std::vector<unsigned char>>(xv.size());
        const double scale = 1.0 / (1.0 - rate);
        Matrix y = xv;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool keep = !rng.bernoulli(rate);
            (*mask)[i] = keep;
            y.data()[i] = keep ? y.data()[i] * scale : 0.0;
        }
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, mask, scale](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                Matrix dx(grad.rows(), grad.cols());
                for (std::size_t i = 0; i < dx.size(); ++i)
                    dx.data()[i] = (*mask)[i] ? grad.data()[i] * scale : 0.0;
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Per-row standardization + per-channel affine.
    NodeId layer_norm(NodeId x, NodeId gain, NodeId shift, double eps = 1e-5) {
        const Matrix& xv = value(x);
        const std::size_t n = xv.rows(), c = xv.cols();
        if (value(gain).cols() != c || value(shift).cols() != c)
            throw ShapeMismatchError("layer_norm: parameter length != channels");
        auto xhat = std::make_shared<Matrix>(n, c);
        auto inv_std = std::make_shared<std::vector<double>>(n);
        Matrix y(n, c);
        const Matrix& g_ = value(gain);
        const Matrix& s_ = value(shift);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = xv.row(i);
            double mean = 0.0;
            for (std::size_t j = 0; j < c; ++j) mean += xi[j];
            mean /= static_cast<double>(c);
            double var = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double d = xi[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(c);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*inv_std)[i] = inv;
            for (std::size_t j = 0; j < c; ++j) {
                const double xh = (xi[j] - mean) * inv;
                (*xhat)(i, j) = xh;
                y(i, j) = xh * g_(0, j) + s_(0, j);
            }
        }
        NodeId id = push(std::move(y), {x, gain, shift}, nullptr);
        if (record_)
            node(id).back = [x, gain, shift, xhat, inv_std](Graph& g, NodeId self) {
                const Matrix& grad = g.grad(self);
                const Matrix& gv = g.value(gain);
                const std::size_t n = grad.rows(), c = grad.cols();
                Matrix dgain(1, c), dshift(1, c), dx(n, c);
                for (std::size_t i = 0; i < n; ++i) {
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double go = grad(i, j);
                        dgain(0, j) += go * (*xhat)(i, j);
                        dshift(0, j) += go;
                        const double dxh = go * gv(0, j);
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * (*xhat)(i, j);
                    }
                    const double invn = (*inv_std)[i] / static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double dxh = grad(i, j) * gv(0, j);
                        dx(i, j) = invn * (static_cast<double>(c) * dxh - sum_dxh -
                                           (*xhat)(i, j) * sum_dxh_xh);
                    }
                }
                g.accumulate(x, std::move(dx));
                g.accumulate(gain, std::move(dgain));
                g.accumulate(shift, std::move(dshift));
            };
        return id;
    }

    // Column-wise batch normalization. With use_batch_stats the biased batch
    // mean/variance are used (training); otherwise the supplied running stats
    // are constants (eval). update_running controls the running-average side
    // effect so gradient checking can rerun forwards without drift.
    NodeId batch_norm(NodeId x, NodeId gain, NodeId shift, Matrix* running_mean,
                      Matrix* running_var, bool use_batch_stats, bool update_running,
                      double eps = 1e-5, double momentum = 0.9) {
        const Matrix& xv = value(x);
        const std::size_t n = xv.rows(), c = xv.cols();
        if (value(gain).cols() != c || value(shift).cols() != c)
            throw ShapeMismatchError("batch_norm: parameter length != channels");
        std::vector<double> mean(c, 0.0), var(c, 0.0);
        if (use_batch_stats) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* xi = xv.row(i);
                for (std::size_t j = 0; j < c; ++j) mean[j] += xi[j];
            }
            for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double* xi = xv.row(i);
                for (std::size_t j = 0; j < c; ++j) {
                    const double d = xi[j] - mean[j];
                    var[j] += d * d;
                }
            }
            for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(n);
            if (update_running) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*running_mean)(0, j) =
                        momentum * (*running_mean)(0, j) + (1.0 - momentum) * mean[j];
                    (*running_var)(0, j) =
                        momentum * (*running_var)(0, j) + (1.0 - momentum) * var[j];
                }
            }
        } else {
            for (std::size_t j = 0; j < c; ++j) {
                mean[j] = (*running_mean)(0, j);
                var[j] = (*running_var)(0, j);
            }
        }

        auto xhat = std::make_shared<Matrix>(n, c);
        auto inv_std = std::make_shared<std::vector<double>>(c);
        for (std::size_t j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + eps);
        Matrix y(n, c);
        const Matrix& g_ = value(gain);
        const Matrix& s_ = value(shift);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = xv.row(i);
            for (std::size_t j = 0; j < c; ++j) {
                const double xh = (xi[j] - mean[j]) * (*inv_std)[j];
                (*xhat)(i, j) = xh;
                y(i, j) = xh * g_(0, j) + s_(0, j);
            }
        }
        NodeId id = push(std::move(y), {x, gain, shift}, nullptr);
        if (record_)
            node(id).back = [x, gain, shift, xhat, inv_std, use_batch_stats](Graph& g,
                                                                             NodeId self) {
                const Matrix& grad = g.grad(self);
                const Matrix& gv = g.value(gain);
                const std::size_t n = grad.rows(), c = grad.cols();
                Matrix dgain(1, c), dshift(1, c), dx(n, c);
                if (use_batch_stats) {
                    std::vector<double> sum_dxh(c, 0.0), sum_dxh_xh(c, 0.0);
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double go = grad(i, j);
                            dgain(0, j) += go * (*xhat)(i, j);
                            dshift(0, j) += go;
                            const double dxh = go * gv(0, j);
                            sum_dxh[j] += dxh;
                            sum_dxh_xh[j] += dxh * (*xhat)(i, j);
                        }
                    }
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double dxh = grad(i, j) * gv(0, j);
                            dx(i, j) = (*inv_std)[j] / static_cast<double>(n) *
                                       (static_cast<double>(n) * dxh - sum_dxh[j] -
                                        (*xhat)(i, j) * sum_dxh_xh[j]);
                        }
                    }
                } else {
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                            const double go = grad(i, j);
                            dgain(0, j) += go * (*xhat)(i, j);
                            dshift(0, j) += go;
                            dx(i, j) = go * gv(0, j) * (*inv_std)[j];
                        }
                    }
                }
                g.accumulate(x, std::move(dx));
                g.accumulate(gain, std::move(dgain));
                g.accumulate(shift, std::move(dshift));
            };
        return id;
    }

    // Fused multi-gather + channel concat: block j of the output is
    // x[indices[j]], so out has indices[0].size() rows and J * cols(x)
    // columns. This is the ordered-feature assembly as a single node.
    NodeId gather_concat(NodeId x, const std::vector<std::vector<std::size_t>>& indices) {
        if (indices.empty()) throw ShapeMismatchError("gather_concat: no index blocks");
        const Matrix& xv = value(x);
        const std::size_t n = indices[0].size(), c = xv.cols(), blocks = indices.size();
        for (const auto& block : indices)
            if (block.size() != n) throw ShapeMismatchError("gather_concat: ragged blocks");
        Matrix y(n, blocks * c);
        for (std::size_t j = 0; j < blocks; ++j) {
            const auto& block = indices[j];
            for (std::size_t i = 0; i < n; ++i) {
                if (block[i] >= xv.rows())
                    throw ShapeMismatchError("gather_concat: index out of range");
                const double* src = xv.row(block[i]);
                std::copy(src, src + c, y.row(i) + j * c);
            }
        }
        auto idx = std::make_shared<std::vector<std::vector<std::size_t>>>(indices);
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, idx](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                const std::size_t c = xv.cols();
                Matrix dx(xv.rows(), c);
                for (std::size_t j = 0; j < idx->size(); ++j) {
                    const auto& block = (*idx)[j];
                    for (std::size_t i = 0; i < block.size(); ++i) {
                        const double* gi = grad.row(i) + j * c;
                        double* di = dx.row(block[i]);
                        for (std::size_t t = 0; t < c; ++t) di[t] += gi[t];
                    }
                }
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Row gather; duplicate source rows are allowed and their gradients
    // accumulate (this is how sorting indices route gradients).
    NodeId gather_rows(NodeId x, std::vector<std::size_t> rows) {
        const Matrix& xv = value(x);
        Matrix y(rows.size(), xv.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= xv.rows()) throw ShapeMismatchError("gather_rows: index out of range");
            const double* src = xv.row(rows[i]);
            std::copy(src, src + xv.cols(), y.row(i));
        }
        auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, idx](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                Matrix dx(xv.rows(), xv.cols());
                for (std::size_t i = 0; i < idx->size(); ++i) {
                    const double* gi = grad.row(i);
                    double* di = dx.row((*idx)[i]);
                    for (std::size_t j = 0; j < grad.cols(); ++j) di[j] += gi[j];
                }
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    NodeId concat_cols(const std::vector<NodeId>& xs) {
        if (xs.empty()) throw ShapeMismatchError("concat_cols: empty input");
        const std::size_t n = value(xs[0]).rows();
        std::size_t total = 0;
        for (NodeId x : xs) {
            if (value(x).rows() != n) throw ShapeMismatchError("concat_cols: row mismatch");
            total += value(x).cols();
        }
        Matrix y(n, total);
        std::size_t off = 0;
        for (NodeId x : xs) {
            const Matrix& xv = value(x);
            for (std::size_t i = 0; i < n; ++i)
                std::copy(xv.row(i), xv.row(i) + xv.cols(), y.row(i) + off);
            off += xv.cols();
        }
        NodeId id = push(std::move(y), xs, nullptr);
        if (record_) {
            auto parts = std::make_shared<std::vector<NodeId>>(xs);
            node(id).back = [parts](Graph& g, NodeId self) {
                const Matrix& grad = g.grad(self);
                std::size_t off = 0;
                for (NodeId x : *parts) {
                    const Matrix& xv = g.value(x);
                    if (g.needs_grad(x)) {
                        Matrix dx(xv.rows(), xv.cols());
                        for (std::size_t i = 0; i < xv.rows(); ++i)
                            std::copy(grad.row(i) + off, grad.row(i) + off + xv.cols(),
                                      dx.row(i));
                        g.accumulate(x, std::move(dx));
                    }
                    off += xv.cols();
                }
            };
        }
        return id;
    }

    // Transposes each block of `block_rows` consecutive rows independently:
    // (nb*br) x c -> (nb*c) x br. Applying it twice with swapped dimensions
    // is the identity, which is exactly how the mixer moves between the
    // point-major and channel-major layouts per group.
    NodeId block_transpose(NodeId x, std::size_t block_rows) {
        const Matrix& xv = value(x);
        if (block_rows == 0 || xv.rows() % block_rows != 0)
            throw ShapeMismatchError("block_transpose: rows not divisible by block size");
        const std::size_t nb = xv.rows() / block_rows, c = xv.cols();
        Matrix y(nb * c, block_rows);
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < block_rows; ++i) {
                const double* src = xv.row(b * block_rows + i);
                for (std::size_t j = 0; j < c; ++j) y(b * c + j, i) = src[j];
            }
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, block_rows](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                const std::size_t nb = xv.rows() / block_rows, c = xv.cols();
                Matrix dx(xv.rows(), c);
                for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t i = 0; i < block_rows; ++i) {
                        double* dst = dx.row(b * block_rows + i);
                        for (std::size_t j = 0; j < c; ++j) dst[j] = grad(b * c + j, i);
                    }
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Row-major reinterpretation; element order is unchanged.
    NodeId reshape(NodeId x, std::size_t rows, std::size_t cols) {
        const Matrix& xv = value(x);
        if (rows * cols != xv.size()) throw ShapeMismatchError("reshape: size mismatch");
        Matrix y(rows, cols);
        std::copy(xv.data(), xv.data() + xv.size(), y.data());
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                Matrix dx(xv.rows(), xv.cols());
                std::copy(grad.data(), grad.data() + grad.size(), dx.data());
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Channel-wise max over each block of `block_rows` rows:
    // (nb*br) x c -> nb x c. First occurrence wins exact ties.
    NodeId group_max(NodeId x, std::size_t block_rows) {
        const Matrix& xv = value(x);
        if (block_rows == 0 || xv.rows() % block_rows != 0)
            throw ShapeMismatchError("group_max: rows not divisible by block size");
        const std::size_t nb = xv.rows() / block_rows, c = xv.cols();
        Matrix y(nb, c);
        auto arg = std::make_shared<std::vector<std::size_t>>(nb * c);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t j = 0; j < c; ++j) {
                std::size_t best = b * block_rows;
                double bv = xv(best, j);
                for (std::size_t i = 1; i < block_rows; ++i) {
                    const double v = xv(b * block_rows + i, j);
                    if (v > bv) {
                        bv = v;
                        best = b * block_rows + i;
                    }
                }
                y(b, j) = bv;
                (*arg)[b * c + j] = best;
            }
        }
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, arg](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                Matrix dx(xv.rows(), xv.cols());
                const std::size_t c = grad.cols();
                for (std::size_t b = 0; b < grad.rows(); ++b)
                    for (std::size_t j = 0; j < c; ++j) dx((*arg)[b * c + j], j) += grad(b, j);
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Channel-wise mean over each block of `block_rows` rows.
    NodeId group_mean(NodeId x, std::size_t block_rows) {
        const Matrix& xv = value(x);
        if (block_rows == 0 || xv.rows() % block_rows != 0)
            throw ShapeMismatchError("group_mean: rows not divisible by block size");
        const std::size_t nb = xv.rows() / block_rows, c = xv.cols();
        Matrix y(nb, c);
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < block_rows; ++i) {
                const double* src = xv.row(b * block_rows + i);
                for (std::size_t j = 0; j < c; ++j) y(b, j) += src[j];
            }
        const double inv = 1.0 / static_cast<double>(block_rows);
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= inv;
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, block_rows, inv](Graph& g, NodeId self) {
                if (!g.needs_grad(x)) return;
                const Matrix& grad = g.grad(self);
                const Matrix& xv = g.value(x);
                Matrix dx(xv.rows(), xv.cols());
                for (std::size_t b = 0; b < grad.rows(); ++b)
                    for (std::size_t i = 0; i < block_rows; ++i) {
                        double* dst = dx.row(b * block_rows + i);
                        for (std::size_t j = 0; j < grad.cols(); ++j)
                            dst[j] = grad(b, j) * inv;
                    }
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Scalar sum of squared errors against a fixed target.
    NodeId sum_squared_error(NodeId x, Matrix target) {
        const Matrix& xv = value(x);
        if (!xv.same_shape(target)) throw ShapeMismatchError("sum_squared_error: target shape");
        auto t = std::make_shared<Matrix>(std::move(target));
        double loss = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double d = xv.data()[i] - t->data()[i];
            loss += d * d;
        }
        Matrix y(1, 1);
        y(0, 0) = loss;
        NodeId id = push(std::move(y), {x}, nullptr);
        if (record_)
            node(id).back = [x, t](Graph& g, NodeId self) {
                const double up = g.grad(self)(0, 0);
                const Matrix& xv = g.value(x);
                Matrix dx(xv.rows(), xv.cols());
                for (std::size_t i = 0; i < xv.size(); ++i)
                    dx.data()[i] = 2.0 * (xv.data()[i] - t->data()[i]) * up;
                g.accumulate(x, std::move(dx));
            };
        return id;
    }

    // Scalar mean cross-entropy; the logits gradient is (softmax - onehot)/n.
    NodeId softmax_xent(NodeId logits, const std::vector<int>& labels) {
        auto [loss, grad] = setmix::softmax_xent(value(logits), labels);
        auto dlogits = std::make_shared<Matrix>(std::move(grad));
        Matrix y(1, 1);
        y(0, 0) = loss;
        NodeId id = push(std::move(y), {logits}, nullptr);
        if (record_)
            node(id).back = [logits, dlogits](Graph& g, NodeId self) {
                const double up = g.grad(self)(0, 0);
                Matrix dx = *dlogits;
                for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= up;
                g.accumulate(logits, std::move(dx));
            };
        return id;
    }

    // Reverse accumulation from a scalar node into Parameter::grad.
    void backward(NodeId loss) {
        if (!record_) throw Error("backward: graph built with record=false");
        if (value(loss).size() != 1) throw Error("backward: loss must be scalar");
        std::vector<bool> reachable(nodes_.size(), false);
        mark(loss, reachable);
        ensure_grad(loss).fill(1.0);
        for (std::int32_t id = loss; id >= 0; --id) {
            auto& nd = nodes_[static_cast<std::size_t>(id)];
            if (!reachable[static_cast<std::size_t>(id)] || nd.grad.empty()) continue;
            if (nd.back) nd.back(*this, id);
            if (nd.leaf != nullptr) {
                Matrix& pg = nd.leaf->grad;
                for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += nd.grad.data()[i];
            }
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

    Matrix& ensure_grad(NodeId id) {
        auto& nd = nodes_[static_cast<std::size_t>(id)];
        if (nd.grad.empty()) nd.grad = Matrix(nd.value.rows(), nd.value.cols());
        return nd.grad;
    }

    const Matrix& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    void accumulate(NodeId id, Matrix dg) {
        Matrix& g = ensure_grad(id);
        if (!g.same_shape(dg)) throw ShapeMismatchError("accumulate: gradient shape mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += dg.data()[i];
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<NodeId> parents;
        std::function<void(Graph&, NodeId)> back;
        Parameter* leaf = nullptr;
        bool needs_grad = false;
    };

    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }

    NodeId push(Matrix value, std::vector<NodeId> parents, Parameter* leaf) {
        const NodeId id = static_cast<NodeId>(nodes_.size());
        for (NodeId p : parents) {
            // The tape is append-only; a parent created after its child would
            // mean the graph is not a DAG.
            if (p >= id) throw GraphCycleError("graph: parent id >= child id");
        }
        Node nd;
        nd.value = std::move(value);
        nd.parents = std::move(parents);
        nd.leaf = leaf;
        for (NodeId p : nd.parents)
            if (nodes_[static_cast<std::size_t>(p)].needs_grad) nd.needs_grad = true;
        nodes_.push_back(std::move(nd));
        return id;
    }

    void mark(NodeId start, std::vector<bool>& reachable) {
        std::vector<NodeId> stack{start};
        while (!stack.empty()) {
            NodeId id = stack.back();
            stack.pop_back();
            if (reachable[static_cast<std::size_t>(id)]) continue;
            reachable[static_cast<std::size_t>(id)] = true;
            for (NodeId p : nodes_[static_cast<std::size_t>(id)].parents) stack.push_back(p);
        }
    }

    bool record_;
    std::vector<Node> nodes_;
};

}  // namespace setmix
