#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setmix/geom.hpp"
#include "setmix/rng.hpp"

namespace setmix {

enum class CorruptionKind { uniform, gaussian, impulse, upsampling, background };

inline const char* to_string(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::uniform: return "uniform";
        case CorruptionKind::gaussian: return "gaussian";
        case CorruptionKind::impulse: return "impulse";
        case CorruptionKind::upsampling: return "upsampling";
        case CorruptionKind::background: return "background";
    }
    return "uniform";
}

inline CorruptionKind corruption_kind_from(const std::string& s) {
    if (s == "uniform") return CorruptionKind::uniform;
    if (s == "gaussian") return CorruptionKind::gaussian;
    if (s == "impulse") return CorruptionKind::impulse;
    if (s == "upsampling") return CorruptionKind::upsampling;
    if (s == "background") return CorruptionKind::background;
    throw Error("unknown corruption kind: " + s);
}

inline const std::vector<CorruptionKind>& all_corruption_kinds() {
    static const std::vector<CorruptionKind> kinds{
        CorruptionKind::uniform, CorruptionKind::gaussian, CorruptionKind::impulse,
        CorruptionKind::upsampling, CorruptionKind::background};
    return kinds;
}

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::uniform;
    int severity = 1;  // 1..5
    std::uint64_t seed = 0;

    void validate() const {
        if (severity < 1 || severity > 5) throw Error("CorruptionSpec: severity must be 1..5");
    }
};

// Number of points affected/appended for a given (N, severity).
inline std::size_t impulse_count(std::size_t n, int severity) {
    return n * static_cast<std::size_t>(severity) / 30;
}
inline std::size_t append_count(std::size_t n, int severity) {
    return n * static_cast<std::size_t>(severity) / 10;
}

// Applies one noise corruption to a normalized cloud (max norm <= 1 + 1e-6).
// Deterministic given (cloud, spec); labels pass through. The numeric
// parameterization is this artifact's own (frozen here; severity scales it):
//   uniform:     per-coordinate U(-0.01 s, 0.01 s)
//   gaussian:    per-coordinate N(0, 0.006 s)
//   impulse:     floor(N s / 30) points, each coordinate +-0.3 (1 + 0.25 (s-1))
//   upsampling:  floor(N s / 10) appended jittered copies, U(-0.05, 0.05)^3
//   background:  floor(N s / 10) appended uniform points in [-1, 1]^3
inline PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec) {
    spec.validate();
    cloud.validate();
    const std::size_t n = cloud.size();
    double max_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        max_norm = std::max(max_norm, cloud.coords.row_vec3(i).norm());
    if (max_norm > 1.0 + 1e-6)
        throw NotNormalizedError("corrupt: cloud exceeds the unit sphere (max norm " +
                                 std::to_string(max_norm) + ")");

    Rng rng(hash_seed(spec.seed, static_cast<std::uint64_t>(spec.kind),
                      static_cast<std::uint64_t>(spec.severity)));
    const double s = static_cast<double>(spec.severity);
    PointCloud out = cloud;

    switch (spec.kind) {
        case CorruptionKind::uniform: {
            const double delta = 0.01 * s;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < 3; ++c)
                    out.coords(i, c) += rng.uniform(-delta, delta);
            break;
        }
        case CorruptionKind::gaussian: {
            const double sigma = 0.006 * s;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < 3; ++c) out.coords(i, c) += rng.normal(0.0, sigma);
            break;
        }
        case CorruptionKind::impulse: {
            const std::size_t count = impulse_count(n, spec.severity);
            const double q = 0.3 * (1.0 + 0.25 * (s - 1.0));
            const auto targets = rng.sample_without_replacement(n, count);
            for (std::size_t idx : targets)
                for (std::size_t c = 0; c < 3; ++c)
                    out.coords(idx, c) += rng.bernoulli(0.5) ? q : -q;
            break;
        }
        case CorruptionKind::upsampling: {
            const std::size_t extra = append_count(n, spec.severity);
            Matrix coords(n + extra, 3);
            for (std::size_t i = 0; i < n; ++i)
                coords.set_row_vec3(i, cloud.coords.row_vec3(i));
            for (std::size_t e = 0; e < extra; ++e) {
                const std::size_t src = static_cast<std::size_t>(rng.below(n));
                Vec3 p = cloud.coords.row_vec3(src);
                p.x += rng.uniform(-0.05, 0.05);
                p.y += rng.uniform(-0.05, 0.05);
                p.z += rng.uniform(-0.05, 0.05);
                coords.set_row_vec3(n + e, p);
            }
            out.coords = std::move(coords);
            out.feats = Matrix();  // appended points carry no features
            break;
        }
        case CorruptionKind::background: {
            const std::size_t extra = append_count(n, spec.severity);
            Matrix coords(n + extra, 3);
            for (std::size_t i = 0; i < n; ++i)
                coords.set_row_vec3(i, cloud.coords.row_vec3(i));
            for (std::size_t e = 0; e < extra; ++e)
                coords.set_row_vec3(
                    n + e, {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                            rng.uniform(-1.0, 1.0)});
            out.coords = std::move(coords);
            out.feats = Matrix();
            break;
        }
    }
    return out;
}

struct CorruptionCell {
    CorruptionSpec spec;
    PointCloud cloud;
};

// All 5 kinds x 5 severities with per-cell seeds derived from
// (base_seed, kind, severity, cloud_index).
inline std::vector<CorruptionCell> corruption_suite(const PointCloud& cloud,
                                                    std::uint64_t base_seed,
                                                    std::uint64_t cloud_index = 0) {
    std::vector<CorruptionCell> cells;
    cells.reserve(25);
    for (CorruptionKind kind : all_corruption_kinds()) {
        for (int sev = 1; sev <= 5; ++sev) {
            CorruptionSpec spec;
            spec.kind = kind;
            spec.severity = sev;
            spec.seed = hash_seed(base_seed, hash_name(to_string(kind)),
                                  static_cast<std::uint64_t>(sev), cloud_index);
            cells.push_back({spec, corrupt(cloud, spec)});
        }
    }
    return cells;
}

}  // namespace setmix
