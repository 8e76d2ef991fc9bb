#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "setmix/corrupt.hpp"
#include "setmix/geom.hpp"
#include "setmix/model.hpp"
#include "setmix/util.hpp"

namespace setmix {

// misclassified / total
inline double error_rate(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw ShapeMismatchError("error_rate: prediction/label count mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] != labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

// Unweighted mean of per-class error rates over the classes present in labels.
inline double mean_class_error_rate(const std::vector<int>& predictions,
                                    const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw ShapeMismatchError("mean_class_error_rate: count mismatch");
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (wrong, total)
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& [wrong, total] = per_class[labels[i]];
        ++total;
        if (predictions[i] != labels[i]) ++wrong;
    }
    double sum = 0.0;
    for (const auto& [label, counts] : per_class)
        sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    return sum / static_cast<double>(per_class.size());
}

// Relative mean corruption error: the corruption-induced error increase
// normalized by a baseline model's increase. Scale-invariant, so fractions
// and percentages give the same value.
inline double rmce(double er_noise, double er_clean, double bm_noise, double bm_clean) {
    const double denom = bm_noise - bm_clean;
    if (denom == 0.0) throw DegenerateBaselineError("rmce: bm_noise == bm_clean");
    return (er_noise - er_clean) / denom;
}

// Default baseline: PointNet++ clean/noise error rates on ModelNet40-C.
struct BenchmarkBaseline {
    double bm_clean = 0.070;
    double bm_noise = 0.215;
};

struct MetricsReport {
    double er_clean = 0.0;
    std::map<std::string, std::map<int, double>> er_by;  // kind -> severity -> ER
    double er_noise = 0.0;
    double er_5 = 0.0;
    double mer = 0.0;  // class-wise mean error rate on the clean split
    double rmce_value = 0.0;
    BenchmarkBaseline baseline_constants;

    double kind_mean(const std::string& kind) const {
        const auto it = er_by.find(kind);
        if (it == er_by.end() || it->second.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& [sev, er] : it->second) sum += er;
        return sum / static_cast<double>(it->second.size());
    }
};

using Classifier = std::function<int(const PointCloud&)>;

inline Classifier model_classifier(SetMixerModel& model) {
    return [&model](const PointCloud& cloud) {
        const Matrix logit = model.logits(cloud);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logit.cols(); ++j)
            if (logit(0, j) > logit(0, best)) best = j;
        return static_cast<int>(best);
    };
}

inline std::vector<int> predict_all(const Classifier& classify,
                                    const std::vector<PointCloud>& clouds) {
    std::vector<int> preds(clouds.size());
    parallel_for(
        clouds.size(),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) preds[i] = classify(clouds[i]);
        },
        8);
    return preds;
}

struct CorruptedSet {
    CorruptionKind kind = CorruptionKind::uniform;
    int severity = 1;
    std::vector<PointCloud> clouds;  // aligned with the clean test set
};

// Evaluates the classifier on the clean split and on every corruption cell,
// then aggregates: er_noise is the mean over all cells, er_5 the mean over
// the severity-5 cells.
inline MetricsReport benchmark(const Classifier& classify, const std::vector<PointCloud>& clean,
                               const std::vector<CorruptedSet>& cells,
                               const BenchmarkBaseline& baseline = {}) {
    if (clean.empty()) throw Error("benchmark: empty test set");
    std::vector<int> labels(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (clean[i].label < 0) throw Error("benchmark: unlabeled test cloud");
        labels[i] = clean[i].label;
    }

    MetricsReport report;
    report.baseline_constants = baseline;
    const std::vector<int> clean_preds = predict_all(classify, clean);
    report.er_clean = error_rate(clean_preds, labels);
    report.mer = mean_class_error_rate(clean_preds, labels);

    for (const auto& cell : cells) {
        if (cell.clouds.size() != clean.size())
            throw CountMismatchError("benchmark: corrupted cell size != test set size");
        const std::vector<int> preds = predict_all(classify, cell.clouds);
        report.er_by[to_string(cell.kind)][cell.severity] = error_rate(preds, labels);
    }
    // Aggregate from the sorted per-cell map so the report is recomputable
    // bit-exactly from its own cells.
    double sum_cells = 0.0, sum_s5 = 0.0;
    std::size_t n_cells = 0, n_s5 = 0;
    for (const auto& [kind, per_sev] : report.er_by) {
        for (const auto& [sev, er] : per_sev) {
            sum_cells += er;
            ++n_cells;
            if (sev == 5) {
                sum_s5 += er;
                ++n_s5;
            }
        }
    }
    if (n_cells > 0) report.er_noise = sum_cells / static_cast<double>(n_cells);
    if (n_s5 > 0) report.er_5 = sum_s5 / static_cast<double>(n_s5);
    report.rmce_value =
        rmce(report.er_noise, report.er_clean, baseline.bm_noise, baseline.bm_clean);
    return report;
}

// Aligned text table mirroring the benchmark's column order.
inline std::string render_table(const MetricsReport& r, const std::string& name) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-24s %8s %8s %6s %8s %7s %8s %8s %7s\n", "Model", "ER_clean",
                  "ER_noise", "RmCE", "Uniform", "Gaus.", "Impulse", "Upsamp.", "Bg.");
    out += buf;
    std::snprintf(buf, sizeof buf, "%-24s %8.1f %8.1f %6.2f %8.1f %7.1f %8.1f %8.1f %7.1f\n",
                  name.c_str(), 100.0 * r.er_clean, 100.0 * r.er_noise, r.rmce_value,
                  100.0 * r.kind_mean("uniform"), 100.0 * r.kind_mean("gaussian"),
                  100.0 * r.kind_mean("impulse"), 100.0 * r.kind_mean("upsampling"),
                  100.0 * r.kind_mean("background"));
    out += buf;
    return out;
}

struct FeatureDiffRow {
    std::size_t set_index = 0;
    Vec3 center;       // clean-run spatial center of the set
    double magnitude = 0.0;
};

// Per-set L2 feature change between a clean cloud and a count-preserving
// corruption of it, at SA level `level` (1-based). The clean run's group
// memberships are frozen and reused on the corrupted cloud, which gives the
// only well-defined set correspondence.
inline std::vector<FeatureDiffRow> feature_diff(SetMixerModel& model, const PointCloud& clean,
                                                const PointCloud& corrupted, std::size_t level) {
    if (clean.size() != corrupted.size())
        throw CountMismatchError("feature_diff: corruption changed the point count");
    const std::size_t n_levels = model.config().sa_layers.size();
    if (level < 1 || level > n_levels) throw Error("feature_diff: level out of range");

    ForwardProbe clean_probe, corrupt_probe;
    model.logits_probed(clean, &clean_probe);
    model.logits_probed(corrupted, &corrupt_probe, &clean_probe.level_groups);

    const Matrix& fc = clean_probe.level_feats[level - 1];
    const Matrix& fx = corrupt_probe.level_feats[level - 1];
    if (!fc.same_shape(fx)) throw ShapeMismatchError("feature_diff: level feature shapes differ");

    std::vector<FeatureDiffRow> rows(fc.rows());
    for (std::size_t s = 0; s < fc.rows(); ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < fc.cols(); ++j) {
            const double d = fx(s, j) - fc(s, j);
            acc += d * d;
        }
        rows[s] = {s, clean_probe.level_groups[level - 1].spatial_centers.row_vec3(s),
                   std::sqrt(acc)};
    }
    return rows;
}

}  // namespace setmix
