#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "setmix/error.hpp"
#include "setmix/matrix.hpp"

namespace setmix {

// N x 3 coordinates, optional N x C per-point features, optional class label.
// Immutable by convention once built; all geom operations return new values.
struct PointCloud {
    Matrix coords;                 // N x 3
    Matrix feats;                  // N x C, cols() == 0 means "no features"
    int label = -1;                // -1 means "no label"

    std::size_t size() const { return coords.rows(); }
    bool has_feats() const { return feats.cols() > 0; }

    void validate() const {
        if (coords.rows() < 1 || coords.cols() != 3)
            throw ShapeMismatchError("PointCloud: coords must be N x 3 with N >= 1");
        if (!coords.all_finite()) throw NonFiniteError("PointCloud: non-finite coordinate");
        if (has_feats() && feats.rows() != coords.rows())
            throw ShapeMismatchError("PointCloud: feature row count != N");
    }
};

enum class CenterMode { query_point, spatial_center };

inline const char* to_string(CenterMode m) {
    return m == CenterMode::query_point ? "query_point" : "spatial_center";
}

// Result of FPS + KNN grouping. `centers` are the query-point coordinates,
// `spatial_centers` the arithmetic means of each group's members (the
// coordinates handed to the next level when the mode is spatial).
struct GroupIndex {
    std::size_t set_count = 0;                // M
    std::size_t neighbor_count = 0;           // K
    std::vector<std::size_t> indices;         // M*K, row-major into the parent set
    Matrix centers;                           // M x 3 query points
    Matrix spatial_centers;                   // M x 3 member means
    std::vector<std::size_t> query_indices;   // M, parent rows of the query points
    CenterMode center_mode = CenterMode::spatial_center;

    std::size_t member(std::size_t set, std::size_t j) const {
        return indices[set * neighbor_count + j];
    }

    // Coordinates representing each set at the next level, per center_mode.
    const Matrix& level_centers() const {
        return center_mode == CenterMode::query_point ? centers : spatial_centers;
    }
};

// Centers the cloud at its centroid and scales so the farthest point has
// norm 1. If every point coincides after centering, the scale step is
// skipped and all coordinates are zero.
inline PointCloud normalize(const PointCloud& cloud) {
    cloud.validate();
    const std::size_t n = cloud.size();
    Vec3 centroid{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) centroid += cloud.coords.row_vec3(i);
    centroid = centroid / static_cast<double>(n);

    PointCloud out = cloud;
    double max_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p = cloud.coords.row_vec3(i) - centroid;
        out.coords.set_row_vec3(i, p);
        max_norm = std::max(max_norm, p.norm());
    }
    if (max_norm > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            out.coords.set_row_vec3(i, out.coords.row_vec3(i) / max_norm);
    }
    return out;
}

namespace detail {

// Centroid accumulated in lexicographic point order. Makes the FPS seed pick
// bit-stable under permutations of the input rows.
inline Vec3 canonical_centroid(const Matrix& coords) {
    std::vector<std::size_t> order(coords.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return lex_less(coords.row_vec3(a), coords.row_vec3(b));
    });
    Vec3 c{0, 0, 0};
    for (std::size_t i : order) c += coords.row_vec3(i);
    return c / static_cast<double>(coords.rows());
}

// (distance, lex) argmax: larger key wins, exact key ties go to the
// lexicographically smaller point.
inline bool better_pick(double key_cand, const Vec3& p_cand, double key_best, const Vec3& p_best) {
    if (key_cand != key_best) return key_cand > key_best;
    return lex_less(p_cand, p_best);
}

}  // namespace detail

// Greedy farthest point sampling over the rows of `coords`. The first pick is
// the point farthest from the whole-cloud centroid; each later pick maximizes
// the minimum distance to the points already chosen. Ties break toward the
// lexicographically smaller coordinates, never the row index, so the selected
// coordinate sequence is invariant to input row order (distinct coordinates).
inline std::vector<std::size_t> fps(const Matrix& coords, std::size_t m) {
    const std::size_t n = coords.rows();
    if (m < 1 || m > n) throw BadCountError("fps: need 1 <= m <= N");
    if (!coords.all_finite()) throw NonFiniteError("fps: non-finite coordinate");

    std::vector<std::size_t> picked;
    picked.reserve(m);

    const Vec3 centroid = detail::canonical_centroid(coords);
    std::size_t best = 0;
    double best_key = dist2(coords.row_vec3(0), centroid);
    Vec3 best_pt = coords.row_vec3(0);
    for (std::size_t i = 1; i < n; ++i) {
        Vec3 p = coords.row_vec3(i);
        double key = dist2(p, centroid);
        if (detail::better_pick(key, p, best_key, best_pt)) {
            best = i;
            best_key = key;
            best_pt = p;
        }
    }
    picked.push_back(best);

    // min squared distance to the picked set, updated incrementally
    std::vector<double> min_d2(n);
    for (std::size_t i = 0; i < n; ++i)
        min_d2[i] = dist2(coords.row_vec3(i), coords.row_vec3(picked[0]));

    while (picked.size() < m) {
        std::size_t arg = 0;
        double key = min_d2[0];
        Vec3 pt = coords.row_vec3(0);
        for (std::size_t i = 1; i < n; ++i) {
            Vec3 p = coords.row_vec3(i);
            if (detail::better_pick(min_d2[i], p, key, pt)) {
                arg = i;
                key = min_d2[i];
                pt = p;
            }
        }
        picked.push_back(arg);
        for (std::size_t i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], dist2(coords.row_vec3(i), coords.row_vec3(arg)));
    }
    return picked;
}

inline std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t m) {
    return fps(cloud.coords, m);
}

// k nearest rows of `coords` to `query` by Euclidean distance; exact distance
// ties break lexicographically on coordinates. Result is ordered
// nearest-first.
inline std::vector<std::size_t> knn(const Matrix& coords, const Vec3& query, std::size_t k) {
    const std::size_t n = coords.rows();
    if (k < 1 || k > n) throw BadCountError("knn: need 1 <= k <= N");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(coords.row_vec3(i), query);
    auto closer = [&](std::size_t a, std::size_t b) {
        if (d2[a] != d2[b]) return d2[a] < d2[b];
        return lex_less(coords.row_vec3(a), coords.row_vec3(b));
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      closer);
    idx.resize(k);
    return idx;
}

inline std::vector<std::size_t> knn(const PointCloud& cloud, const Vec3& query, std::size_t k) {
    return knn(cloud.coords, query, k);
}

// FPS + KNN grouping. When `center_coords` is present (levels >= 2), sampling
// and neighbour queries run on those coordinates instead of the cloud's. The
// query coordinates drive sampling and grouping; the spatial centers (member
// means) are what represents each set afterwards when mode is spatial_center.
inline GroupIndex group(const PointCloud& cloud, std::size_t m, std::size_t k,
                        CenterMode center_mode,
                        const std::optional<Matrix>& center_coords = std::nullopt) {
    const Matrix& coords = center_coords ? *center_coords : cloud.coords;
    if (coords.cols() != 3) throw ShapeMismatchError("group: coordinates must be M x 3");

    GroupIndex g;
    g.set_count = m;
    g.neighbor_count = k;
    g.center_mode = center_mode;
    g.indices.resize(m * k);
    g.centers = Matrix(m, 3);
    g.spatial_centers = Matrix(m, 3);

    const std::vector<std::size_t> queries = fps(coords, m);
    g.query_indices = queries;
    for (std::size_t s = 0; s < m; ++s) {
        const Vec3 q = coords.row_vec3(queries[s]);
        g.centers.set_row_vec3(s, q);
        const std::vector<std::size_t> nbrs = knn(coords, q, k);
        Vec3 mean{0, 0, 0};
        for (std::size_t j = 0; j < k; ++j) {
            g.indices[s * k + j] = nbrs[j];
            mean += coords.row_vec3(nbrs[j]);
        }
        g.spatial_centers.set_row_vec3(s, mean / static_cast<double>(k));
    }
    return g;
}

}  // namespace setmix
