#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "setmix/geom.hpp"
#include "setmix/gradcheck.hpp"
#include "setmix/graph.hpp"
#include "setmix/mixer.hpp"
#include "setmix/sort.hpp"

namespace setmix {

// ---------------------------------------------------------------------------
// Configuration (shape-level; weights live in the model's ParamStore)
// ---------------------------------------------------------------------------

struct FcSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::relu;
};

struct MixerSpec {
    std::size_t k = 0;
    std::size_t c_in = 0;
    std::size_t n_sort = 1;
    std::array<FcSpec, 3> m_layers{};
    FcSpec r_layer{};
    NormKind norm = NormKind::layer_norm;
    double dropout_rate = 0.2;

    std::size_t d() const { return m_layers[2].out; }

    // h1 = h2 = k; r reduces d*n_sort*c_in to 2*c_in; the reduction is linear.
    static MixerSpec make(std::size_t c_in, std::size_t k, double dropout, std::size_t n_sort,
                          std::size_t d, NormKind norm = NormKind::layer_norm) {
        MixerSpec s;
        s.k = k;
        s.c_in = c_in;
        s.n_sort = n_sort;
        s.m_layers = {FcSpec{k, k, Activation::relu}, FcSpec{k, k, Activation::relu},
                      FcSpec{k, d, Activation::relu}};
        s.r_layer = FcSpec{d * n_sort * c_in, 2 * c_in, Activation::none};
        s.norm = norm;
        s.dropout_rate = dropout;
        return s;
    }

    void validate() const {
        if (k == 0 || c_in == 0 || n_sort == 0) throw ShapeMismatchError("MixerSpec: zero dim");
        if (m_layers[0].in != k || m_layers[1].in != m_layers[0].out ||
            m_layers[2].in != m_layers[1].out)
            throw ShapeMismatchError("MixerSpec: m chain widths inconsistent");
        if (r_layer.in != d() * n_sort * c_in || r_layer.out != 2 * c_in)
            throw ShapeMismatchError("MixerSpec: r dims inconsistent");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ShapeMismatchError("MixerSpec: dropout rate out of range");
    }
};

enum class AggregatorKind { set_mixer, max_pool, mean_pool, mixer_no_sort };

inline const char* to_string(AggregatorKind k) {
    switch (k) {
        case AggregatorKind::set_mixer: return "set_mixer";
        case AggregatorKind::max_pool: return "max_pool";
        case AggregatorKind::mean_pool: return "mean_pool";
        case AggregatorKind::mixer_no_sort: return "mixer_no_sort";
    }
    return "set_mixer";
}

struct AggregatorSpec {
    AggregatorKind kind = AggregatorKind::set_mixer;
    MixerSpec mixer;   // set_mixer / mixer_no_sort only
    SortPlan plan;     // set_mixer: the sorting strategies; mixer_no_sort: the
                       // same number of storage-order gathers (n_sort blocks)

    bool is_mixer() const {
        return kind == AggregatorKind::set_mixer || kind == AggregatorKind::mixer_no_sort;
    }
    std::size_t out_channels(std::size_t c_t) const { return is_mixer() ? 2 * c_t : c_t; }
};

struct SaLayerConfig {
    std::size_t m_sets = 0;
    std::size_t k = 0;
    std::vector<std::size_t> t_channels;  // widths of the shared point mapping
    AggregatorSpec aggregator;
    CenterMode center_mode = CenterMode::spatial_center;
    bool legacy_centering = false;  // subtract query point from members (baselines)
};

struct HeadConfig {
    std::vector<std::size_t> fc_widths;   // hidden widths
    std::vector<double> dropout_rates;    // one per hidden layer
    std::size_t class_count = 0;
};

struct ModelConfig {
    std::vector<SaLayerConfig> sa_layers;
    HeadConfig head;

    void validate() const {
        if (sa_layers.empty()) throw ShapeMismatchError("ModelConfig: no SA layers");
        std::size_t prev_sets = 0;
        for (std::size_t li = 0; li < sa_layers.size(); ++li) {
            const auto& sa = sa_layers[li];
            if (sa.m_sets == 0 || sa.k == 0 || sa.t_channels.empty())
                throw ShapeMismatchError("ModelConfig: empty SA layer");
            if (li > 0 && (sa.k > prev_sets || sa.m_sets > prev_sets))
                throw ShapeMismatchError("ModelConfig: layer draws more sets than available");
            if (sa.aggregator.is_mixer()) {
                const auto& mx = sa.aggregator.mixer;
                mx.validate();
                if (mx.k != sa.k) throw ShapeMismatchError("ModelConfig: mixer k != sa k");
                if (mx.c_in != sa.t_channels.back())
                    throw ShapeMismatchError("ModelConfig: mixer c_in != T output channels");
                if (sa.aggregator.plan.n_sort() != mx.n_sort)
                    throw ShapeMismatchError("ModelConfig: plan length != n_sort");
                if (sa.aggregator.kind == AggregatorKind::set_mixer)
                    sa.aggregator.plan.validate();
            }
            prev_sets = sa.m_sets;
        }
        if (head.class_count == 0) throw ShapeMismatchError("ModelConfig: class count 0");
        if (head.dropout_rates.size() != head.fc_widths.size())
            throw ShapeMismatchError("ModelConfig: head dropout count != hidden count");
    }

    // Input channel count of level li's shared mapping (coords are the only
    // level-1 features; legacy centering prepends relative coordinates at
    // deeper levels).
    std::size_t t_input_channels(std::size_t li) const {
        if (li == 0) return 3;
        std::size_t prev = sa_layers[li - 1].aggregator.out_channels(
            sa_layers[li - 1].t_channels.back());
        return prev + (sa_layers[li].legacy_centering ? 3 : 0);
    }

    std::size_t global_feature_channels() const {
        const auto& last = sa_layers.back();
        return last.aggregator.out_channels(last.t_channels.back());
    }
};

// Full-size configuration: three SA levels with Set-Mixer
// aggregation, APS sorting along x/y/z, layer norm on, dropout 0.2, spatial
// centers, 40 classes.
inline ModelConfig canonical_config(std::size_t n_sort_d = 8) {
    ModelConfig cfg;
    auto sa = [&](std::size_t m, std::size_t k, std::vector<std::size_t> t, std::size_t c) {
        SaLayerConfig l;
        l.m_sets = m;
        l.k = k;
        l.t_channels = std::move(t);
        l.aggregator.kind = AggregatorKind::set_mixer;
        l.aggregator.plan = SortPlan::aps_xyz();
        l.aggregator.mixer = MixerSpec::make(c, k, 0.2, 3, n_sort_d);
        l.center_mode = CenterMode::spatial_center;
        return l;
    };
    cfg.sa_layers.push_back(sa(512, 32, {64, 64, 64}, 64));
    cfg.sa_layers.push_back(sa(128, 64, {128, 128, 128}, 128));
    cfg.sa_layers.push_back(sa(1, 128, {256, 512, 512}, 512));
    cfg.head = HeadConfig{{512, 256}, {0.5, 0.5}, 40};
    cfg.validate();
    return cfg;
}

// Scaled-down configuration for desk-scale verification and training. The
// mixer depth d is 2 here so the whole model stays under 1e5 parameters with
// the three-axis APS plan. Dropout rates are rescaled for the desk widths:
// at 16-wide mixer hiddens and a 64/32 head, the full-size rates (0.2, 0.5)
// leave the gradient with near-zero draw-to-draw correlation and the model
// never escapes the uniform-logits plateau.
inline ModelConfig desk_config(std::size_t class_count = 8) {
    ModelConfig cfg;
    auto sa = [&](std::size_t m, std::size_t k, std::vector<std::size_t> t, std::size_t c) {
        SaLayerConfig l;
        l.m_sets = m;
        l.k = k;
        l.t_channels = std::move(t);
        l.aggregator.kind = AggregatorKind::set_mixer;
        l.aggregator.plan = SortPlan::aps_xyz();
        l.aggregator.mixer = MixerSpec::make(c, k, 0.05, 3, 2);
        l.center_mode = CenterMode::spatial_center;
        return l;
    };
    cfg.sa_layers.push_back(sa(64, 16, {16, 16, 16}, 16));
    cfg.sa_layers.push_back(sa(16, 16, {32, 32, 32}, 32));
    cfg.sa_layers.push_back(sa(1, 16, {64, 64, 64}, 64));
    cfg.head = HeadConfig{{64, 32}, {0.2, 0.2}, class_count};
    cfg.validate();
    return cfg;
}

// Ablation helpers: swap every level's aggregator / center
// mode while keeping the backbone unchanged.
inline ModelConfig with_aggregator(ModelConfig cfg, AggregatorKind kind) {
    for (auto& sa : cfg.sa_layers) {
        sa.aggregator.kind = kind;
        if (kind == AggregatorKind::max_pool || kind == AggregatorKind::mean_pool) {
            sa.aggregator.plan = SortPlan{};
            sa.aggregator.mixer = MixerSpec{};
        }
    }
    cfg.validate();
    return cfg;
}

inline ModelConfig with_center_mode(ModelConfig cfg, CenterMode mode) {
    for (auto& sa : cfg.sa_layers) sa.center_mode = mode;
    return cfg;
}

inline ModelConfig with_mixer_dropout(ModelConfig cfg, double rate) {
    for (auto& sa : cfg.sa_layers)
        if (sa.aggregator.is_mixer()) sa.aggregator.mixer.dropout_rate = rate;
    return cfg;
}

inline ModelConfig with_mixer_norm(ModelConfig cfg, NormKind kind) {
    for (auto& sa : cfg.sa_layers)
        if (sa.aggregator.is_mixer()) sa.aggregator.mixer.norm = kind;
    return cfg;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Per-cloud discrete structure: grouping and sort permutations depend only on
// coordinates, so they are computed once per cloud and reused across epochs.
struct CloudPlan {
    struct Level {
        GroupIndex groups;
        Matrix member_coords;                               // (m*k) x 3, global
        Matrix rel_coords;                                  // (m*k) x 3, member - query
        std::vector<std::size_t> member_rows;               // (m*k) into parent rows
        std::vector<std::vector<std::size_t>> sorted_rows;  // per strategy, into (m*k)
    };
    std::vector<Level> levels;
    std::size_t n_points = 0;
};

struct ForwardOptions {
    bool training = false;
    bool update_bn = false;          // running-average side effect (training loop only)
    Rng* rng = nullptr;              // dropout stream
    double dropout_override = -1.0;  // >= 0 forces every dropout rate (gradcheck: 0)
};

// Captured intermediate state of a single-cloud forward pass (feature_diff).
struct ForwardProbe {
    std::vector<GroupIndex> level_groups;
    std::vector<Matrix> level_feats;  // per level: m_sets x out_channels
};

class SetMixerModel {
public:
    static SetMixerModel init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        SetMixerModel model;
        model.cfg_ = cfg;
        Rng rng(hash_seed(seed, 0x6d6f64656cULL));

        auto fc_params = [&](const std::string& name, std::size_t out, std::size_t in,
                             Activation act, double scale = 1.0) {
            Matrix w(out, in);
            // He for ReLU layers, Glorot for linear ones.
            const double stdev = scale * (act == Activation::relu
                                              ? std::sqrt(2.0 / static_cast<double>(in))
                                              : std::sqrt(2.0 / static_cast<double>(in + out)));
            for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, stdev);
            Parameter* pw = &model.params_.add(name + ".w", std::move(w));
            Parameter* pb = &model.params_.add(name + ".b", Matrix(1, out));
            return std::pair<Parameter*, Parameter*>(pw, pb);
        };

        for (std::size_t li = 0; li < cfg.sa_layers.size(); ++li) {
            const auto& sa = cfg.sa_layers[li];
            Level level;
            std::string prefix = "sa" + std::to_string(li + 1);
            std::size_t in_c = cfg.t_input_channels(li);
            for (std::size_t ti = 0; ti < sa.t_channels.size(); ++ti) {
                TLayer t;
                const std::size_t out_c = sa.t_channels[ti];
                std::string name = prefix + ".t" + std::to_string(ti + 1);
                std::tie(t.w, t.b) = fc_params(name, out_c, in_c, Activation::relu);
                t.bn_gain = &model.params_.add(name + ".bn.gain", Matrix(1, out_c, 1.0));
                t.bn_shift = &model.params_.add(name + ".bn.shift", Matrix(1, out_c, 0.0));
                t.running_mean = Matrix(1, out_c, 0.0);
                t.running_var = Matrix(1, out_c, 1.0);
                level.t.push_back(t);
                in_c = out_c;
            }
            if (sa.aggregator.is_mixer()) {
                const MixerSpec& mx = sa.aggregator.mixer;
                MixerParamRefs refs;
                std::string name = prefix + ".mix";
                if (mx.norm == NormKind::layer_norm) {
                    refs.ln_gain = &model.params_.add(name + ".ln.gain",
                                                      Matrix(1, mx.n_sort * mx.c_in, 1.0));
                    refs.ln_shift = &model.params_.add(name + ".ln.shift",
                                                       Matrix(1, mx.n_sort * mx.c_in, 0.0));
                }
                for (std::size_t j = 0; j < 3; ++j) {
                    auto [w, b] = fc_params(name + ".m" + std::to_string(j + 1),
                                            mx.m_layers[j].out, mx.m_layers[j].in,
                                            mx.m_layers[j].activation);
                    refs.m_w[j] = w;
                    refs.m_b[j] = b;
                    refs.m_act[j] = mx.m_layers[j].activation;
                }
                std::tie(refs.r_w, refs.r_b) =
                    fc_params(name + ".r", mx.r_layer.out, mx.r_layer.in, mx.r_layer.activation);
                refs.dropout_rate = mx.dropout_rate;
                level.mixer = refs;
            }
            model.levels_.push_back(std::move(level));
        }

        std::size_t in_c = cfg.global_feature_channels();
        for (std::size_t hi = 0; hi < cfg.head.fc_widths.size(); ++hi) {
            auto [w, b] = fc_params("head.fc" + std::to_string(hi + 1), cfg.head.fc_widths[hi],
                                    in_c, Activation::relu);
            model.head_.push_back({w, b});
            in_c = cfg.head.fc_widths[hi];
        }
        // Small classifier-head init keeps untrained logits near zero, so an
        // untrained model scores ~ln(K) cross-entropy.
        auto [w, b] = fc_params("head.out", cfg.head.class_count, in_c, Activation::none, 0.1);
        model.head_out_ = {w, b};
        return model;
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Non-trainable state persisted in checkpoints (batch-norm running stats).
    std::vector<std::pair<std::string, Matrix*>> state_buffers() {
        std::vector<std::pair<std::string, Matrix*>> out;
        for (std::size_t li = 0; li < levels_.size(); ++li)
            for (std::size_t ti = 0; ti < levels_[li].t.size(); ++ti) {
                std::string name =
                    "sa" + std::to_string(li + 1) + ".t" + std::to_string(ti + 1) + ".bn.";
                out.emplace_back(name + "running_mean", &levels_[li].t[ti].running_mean);
                out.emplace_back(name + "running_var", &levels_[li].t[ti].running_var);
            }
        return out;
    }

    // Grouping + sorting structure for one cloud. When `frozen` is given
    // (feature_diff), the group memberships are reused verbatim and only the
    // coordinate-derived quantities (centers, sort keys) are recomputed.
    CloudPlan make_plan(const PointCloud& cloud,
                        const std::vector<GroupIndex>* frozen = nullptr) const {
        cloud.validate();
        CloudPlan plan;
        plan.n_points = cloud.size();
        Matrix coords = cloud.coords;
        for (std::size_t li = 0; li < cfg_.sa_layers.size(); ++li) {
            const auto& sa = cfg_.sa_layers[li];
            CloudPlan::Level lvl;
            if (frozen != nullptr) {
                lvl.groups = regroup_frozen((*frozen)[li], coords, sa.center_mode);
            } else {
                lvl.groups = li == 0 ? group(cloud, sa.m_sets, sa.k, sa.center_mode)
                                     : group(cloud, sa.m_sets, sa.k, sa.center_mode,
                                             std::optional<Matrix>(coords));
            }
            const std::size_t m = sa.m_sets, k = sa.k;
            lvl.member_rows.assign(lvl.groups.indices.begin(), lvl.groups.indices.end());
            lvl.member_coords = Matrix(m * k, 3);
            lvl.rel_coords = Matrix(m * k, 3);
            for (std::size_t s = 0; s < m; ++s) {
                const Vec3 q = lvl.groups.centers.row_vec3(s);
                for (std::size_t j = 0; j < k; ++j) {
                    const Vec3 p = coords.row_vec3(lvl.groups.member(s, j));
                    lvl.member_coords.set_row_vec3(s * k + j, p);
                    lvl.rel_coords.set_row_vec3(s * k + j, p - q);
                }
            }
            if (sa.aggregator.is_mixer()) {
                const std::size_t n_sort = sa.aggregator.mixer.n_sort;
                lvl.sorted_rows.resize(n_sort);
                if (sa.aggregator.kind == AggregatorKind::mixer_no_sort) {
                    // storage order: the KNN member order, repeated per block
                    for (std::size_t j = 0; j < n_sort; ++j) {
                        lvl.sorted_rows[j].resize(m * k);
                        for (std::size_t i = 0; i < m * k; ++i) lvl.sorted_rows[j][i] = i;
                    }
                } else {
                    for (std::size_t j = 0; j < n_sort; ++j) {
                        lvl.sorted_rows[j].resize(m * k);
                        const SortStrategy& strat = sa.aggregator.plan.strategies[j];
                        for (std::size_t s = 0; s < m; ++s) {
                            Matrix pts(k, 3);
                            for (std::size_t i = 0; i < k; ++i)
                                pts.set_row_vec3(i, lvl.member_coords.row_vec3(s * k + i));
                            const Vec3 center = lvl.groups.spatial_centers.row_vec3(s);
                            const auto perm = sort_permutation(
                                strategy_keys(strat, pts, center), pts);
                            for (std::size_t i = 0; i < k; ++i)
                                lvl.sorted_rows[j][s * k + i] = s * k + perm[i];
                        }
                    }
                }
            }
            coords = lvl.groups.level_centers();
            plan.levels.push_back(std::move(lvl));
        }
        return plan;
    }

    // Builds the forward graph for a batch. All clouds share this model's
    // configuration; returns the logits node (batch x classes). When
    // `level_nodes` is given, each level's aggregated-feature node id is
    // recorded ((batch * m_sets) x out_channels values).
    Graph::NodeId build_forward(Graph& g, const std::vector<const CloudPlan*>& plans,
                                const ForwardOptions& opt,
                                std::vector<Graph::NodeId>* level_nodes = nullptr) {
        const std::size_t batch = plans.size();
        if (batch == 0) throw Error("build_forward: empty batch");
        Graph::NodeId feats = -1;
        std::size_t prev_sets = 0;

        for (std::size_t li = 0; li < levels_.size(); ++li) {
            const auto& sa = cfg_.sa_layers[li];
            const std::size_t m = sa.m_sets, k = sa.k;

            Graph::NodeId x;
            if (li == 0) {
                Matrix stacked(batch * m * k, 3);
                for (std::size_t b = 0; b < batch; ++b) {
                    const Matrix& src = sa.legacy_centering ? plans[b]->levels[0].rel_coords
                                                            : plans[b]->levels[0].member_coords;
                    for (std::size_t i = 0; i < m * k; ++i)
                        stacked.set_row_vec3(b * m * k + i, src.row_vec3(i));
                }
                x = g.constant(std::move(stacked));
            } else {
                std::vector<std::size_t> rows(batch * m * k);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t i = 0; i < m * k; ++i)
                        rows[b * m * k + i] = plans[b]->levels[li].member_rows[i] + b * prev_sets;
                x = g.gather_rows(feats, std::move(rows));
                if (sa.legacy_centering) {
                    Matrix rel(batch * m * k, 3);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t i = 0; i < m * k; ++i)
                            rel.set_row_vec3(b * m * k + i,
                                             plans[b]->levels[li].rel_coords.row_vec3(i));
                    x = g.concat_cols({g.constant(std::move(rel)), x});
                }
            }

            // shared point-wise mapping T: FC -> BN -> ReLU per width
            for (auto& t : levels_[li].t) {
                x = g.fc(x, *t.w, *t.b, Activation::none);
                x = g.batch_norm(x, g.param(*t.bn_gain), g.param(*t.bn_shift), &t.running_mean,
                                 &t.running_var, opt.training, opt.update_bn);
                x = g.relu(x);
            }

            if (sa.aggregator.is_mixer()) {
                const auto& refs = *levels_[li].mixer;
                const std::size_t n_sort = sa.aggregator.mixer.n_sort;
                std::vector<std::vector<std::size_t>> gathers(n_sort);
                for (std::size_t j = 0; j < n_sort; ++j) {
                    gathers[j].resize(batch * m * k);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t i = 0; i < m * k; ++i)
                            gathers[j][b * m * k + i] =
                                plans[b]->levels[li].sorted_rows[j][i] + b * m * k;
                }
                Graph::NodeId ordered = g.gather_concat(x, gathers);
                MixerRunOptions mopt;
                mopt.training = opt.training;
                mopt.rng = opt.rng;
                mopt.dropout_override = opt.dropout_override;
                feats = build_mixer_tail(g, ordered, batch * m, k, refs, mopt);
            } else if (sa.aggregator.kind == AggregatorKind::max_pool) {
                feats = g.group_max(x, k);
            } else {
                feats = g.group_mean(x, k);
            }
            if (level_nodes != nullptr) level_nodes->push_back(feats);
            prev_sets = m;
        }

        // classifier head
        Graph::NodeId x = feats;
        for (std::size_t hi = 0; hi < head_.size(); ++hi) {
            x = g.fc(x, *head_[hi].first, *head_[hi].second, Activation::relu);
            double rate = opt.dropout_override >= 0.0 ? opt.dropout_override
                                                      : cfg_.head.dropout_rates[hi];
            if (opt.training && rate > 0.0) {
                if (opt.rng == nullptr) throw Error("build_forward: dropout needs an RNG");
                x = g.dropout(x, rate, *opt.rng);
            }
        }
        x = g.fc(x, *head_out_.first, *head_out_.second, Activation::none);
        return x;
    }

    // Convenience single-cloud eval-mode logits.
    Matrix logits(const PointCloud& cloud) {
        CloudPlan plan = make_plan(cloud);
        Graph g(false);
        ForwardOptions opt;
        Graph::NodeId out = build_forward(g, {&plan}, opt);
        return g.value(out);
    }

    // Eval-mode logits capturing per-level groupings and set features; used
    // by feature_diff. `frozen` reuses a previous run's group memberships.
    Matrix logits_probed(const PointCloud& cloud, ForwardProbe* probe,
                         const std::vector<GroupIndex>* frozen = nullptr) {
        CloudPlan plan = make_plan(cloud, frozen);
        Graph g(false);
        ForwardOptions opt;
        std::vector<Graph::NodeId> level_nodes;
        Graph::NodeId out = build_forward(g, {&plan}, opt, &level_nodes);
        if (probe != nullptr) {
            probe->level_groups.clear();
            probe->level_feats.clear();
            for (const auto& lvl : plan.levels) probe->level_groups.push_back(lvl.groups);
            for (Graph::NodeId id : level_nodes) probe->level_feats.push_back(g.value(id));
        }
        return g.value(out);
    }

    std::size_t parameter_count() const { return params_.count(); }

private:
    struct TLayer {
        Parameter* w = nullptr;
        Parameter* b = nullptr;
        Parameter* bn_gain = nullptr;
        Parameter* bn_shift = nullptr;
        Matrix running_mean;
        Matrix running_var;
    };
    struct Level {
        std::vector<TLayer> t;
        std::optional<MixerParamRefs> mixer;
    };

    static GroupIndex regroup_frozen(const GroupIndex& frozen, const Matrix& coords,
                                     CenterMode mode) {
        GroupIndex g = frozen;
        g.center_mode = mode;
        for (std::size_t s = 0; s < g.set_count; ++s) {
            if (s < g.query_indices.size())
                g.centers.set_row_vec3(s, coords.row_vec3(g.query_indices[s]));
            Vec3 mean{0, 0, 0};
            for (std::size_t j = 0; j < g.neighbor_count; ++j) {
                const std::size_t idx = g.member(s, j);
                if (idx >= coords.rows())
                    throw CountMismatchError("frozen grouping index out of range");
                mean += coords.row_vec3(idx);
            }
            g.spatial_centers.set_row_vec3(s, mean / static_cast<double>(g.neighbor_count));
        }
        return g;
    }

    ModelConfig cfg_;
    ParamStore params_;
    std::vector<Level> levels_;
    std::vector<std::pair<Parameter*, Parameter*>> head_;
    std::pair<Parameter*, Parameter*> head_out_{nullptr, nullptr};
};

}  // namespace setmix
