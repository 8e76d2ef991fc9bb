#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "setmix/error.hpp"
#include "setmix/matrix.hpp"

namespace setmix {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// One spatial sorting strategy. APS projects onto an axis, PCS measures the
// signed in-plane angle against a reference direction, EDS measures the
// distance to a center point (defaulting to the point set's mean).
struct SortStrategy {
    enum class Kind { aps, pcs, eds };

    Kind kind = Kind::aps;
    Vec3 axis{1, 0, 0};                  // APS
    Vec3 normal{0, 0, 1};                // PCS plane normal
    Vec3 ref{1, 0, 0};                   // PCS reference direction
    std::optional<Vec3> center;          // EDS; empty = use group spatial center

    static SortStrategy aps(const Vec3& axis) {
        SortStrategy s;
        s.kind = Kind::aps;
        s.axis = axis;
        s.validate();
        return s;
    }
    static SortStrategy pcs(const Vec3& normal, const Vec3& ref) {
        SortStrategy s;
        s.kind = Kind::pcs;
        s.normal = normal;
        s.ref = ref;
        s.validate();
        return s;
    }
    static SortStrategy eds() {
        SortStrategy s;
        s.kind = Kind::eds;
        return s;
    }
    static SortStrategy eds(const Vec3& center) {
        SortStrategy s;
        s.kind = Kind::eds;
        s.center = center;
        return s;
    }

    void validate() const {
        if (kind == Kind::aps) {
            if (std::abs(axis.norm() - 1.0) > 1e-9)
                throw ShapeMismatchError("SortStrategy: APS axis must be unit length");
        } else if (kind == Kind::pcs) {
            if (std::abs(normal.norm() - 1.0) > 1e-9)
                throw ShapeMismatchError("SortStrategy: PCS normal must be unit length");
            Vec3 in_plane = ref - normal * ref.dot(normal);
            if (in_plane.norm() <= 1e-9)
                throw DegenerateRefError("SortStrategy: PCS ref projects to ~zero on the plane");
        }
    }
};

// Ordered list of strategies; each one contributes a reordered copy of the
// feature block.
struct SortPlan {
    std::vector<SortStrategy> strategies;

    std::size_t n_sort() const { return strategies.size(); }
    void validate() const {
        if (strategies.empty()) throw ShapeMismatchError("SortPlan: need n_sort >= 1");
        for (const auto& s : strategies) s.validate();
    }

    // APS along the three coordinate axes (the default plan).
    static SortPlan aps_xyz() {
        return SortPlan{{SortStrategy::aps({1, 0, 0}), SortStrategy::aps({0, 1, 0}),
                         SortStrategy::aps({0, 0, 1})}};
    }
    // PCS on the XY, YZ, XZ planes with refs x, y, z.
    static SortPlan pcs_planes() {
        return SortPlan{{SortStrategy::pcs({0, 0, 1}, {1, 0, 0}),
                         SortStrategy::pcs({1, 0, 0}, {0, 1, 0}),
                         SortStrategy::pcs({0, 1, 0}, {0, 0, 1})}};
    }
    static SortPlan eds_center() { return SortPlan{{SortStrategy::eds()}}; }
};

// key_i = p_i . axis
inline std::vector<double> aps_keys(const Matrix& points, const Vec3& axis) {
    std::vector<double> keys(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) keys[i] = points.row_vec3(i).dot(axis);
    return keys;
}

// Projects each point onto the plane with unit normal `normal` and returns
// the signed angle in (-pi, pi] between the projection and the in-plane
// component of `ref`. Projections with norm < 1e-12 get key -pi so they sort
// first.
inline std::vector<double> pcs_keys(const Matrix& points, const Vec3& normal, const Vec3& ref) {
    Vec3 u = ref - normal * ref.dot(normal);
    const double un = u.norm();
    if (un <= 1e-9) throw DegenerateRefError("pcs_keys: ref projects to ~zero on the plane");
    u = u / un;

    std::vector<double> keys(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const Vec3 p = points.row_vec3(i);
        const Vec3 q = p - normal * p.dot(normal);
        if (q.norm() < 1e-12) {
            keys[i] = -kPi;
            continue;
        }
        const double s = u.cross(q).dot(normal);
        const double c = u.dot(q);
        double a = std::atan2(s, c);
        if (a <= -kPi) a = kPi;  // keep the range (-pi, pi]
        keys[i] = a;
    }
    return keys;
}

// key_i = ||p_i - center||
inline std::vector<double> eds_keys(const Matrix& points, const Vec3& center) {
    std::vector<double> keys(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i)
        keys[i] = (points.row_vec3(i) - center).norm();
    return keys;
}

// Stable ascending order by key; exact key ties break lexicographically on
// the tied points' coordinates. Returns pi with pi[r] = source row of output
// row r (a bijection on 0..k-1).
inline std::vector<std::size_t> sort_permutation(const std::vector<double>& keys,
                                                 const Matrix& points) {
    if (keys.size() != points.rows())
        throw ShapeMismatchError("sort_permutation: keys/points length mismatch");
    for (double k : keys)
        if (std::isnan(k)) throw NonFiniteError("sort_permutation: NaN key");
    std::vector<std::size_t> perm(keys.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        if (keys[a] != keys[b]) return keys[a] < keys[b];
        return lex_less(points.row_vec3(a), points.row_vec3(b));
    });
    return perm;
}

inline std::vector<double> strategy_keys(const SortStrategy& s, const Matrix& points,
                                         const Vec3& default_center) {
    switch (s.kind) {
        case SortStrategy::Kind::aps:
            return aps_keys(points, s.axis);
        case SortStrategy::Kind::pcs:
            return pcs_keys(points, s.normal, s.ref);
        case SortStrategy::Kind::eds:
            return eds_keys(points, s.center ? *s.center : default_center);
    }
    throw Error("strategy_keys: unreachable");
}

inline Vec3 points_mean(const Matrix& points) {
    Vec3 c{0, 0, 0};
    for (std::size_t i = 0; i < points.rows(); ++i) c += points.row_vec3(i);
    return c / static_cast<double>(points.rows());
}

// Permutation of the point set under one strategy. EDS without an explicit
// center uses the mean of `points`.
inline std::vector<std::size_t> strategy_permutation(const SortStrategy& s, const Matrix& points) {
    return sort_permutation(strategy_keys(s, points, points_mean(points)), points);
}

// Ordered-feature assembly: for each strategy, gather the feature rows in sorted order
// into a k x c block, then concatenate the blocks along the channel axis in
// plan order, giving k x (n_sort * c).
inline Matrix ordered_features(const Matrix& points, const Matrix& feats, const SortPlan& plan) {
    plan.validate();
    if (feats.rows() != points.rows())
        throw ShapeMismatchError("ordered_features: feats row count != k");
    const std::size_t k = points.rows(), c = feats.cols(), n = plan.n_sort();
    Matrix out(k, n * c);
    const Vec3 center = points_mean(points);
    for (std::size_t j = 0; j < n; ++j) {
        const auto perm =
            sort_permutation(strategy_keys(plan.strategies[j], points, center), points);
        for (std::size_t r = 0; r < k; ++r) {
            const double* src = feats.row(perm[r]);
            double* dst = out.row(r) + j * c;
            std::copy(src, src + c, dst);
        }
    }
    return out;
}

}  // namespace setmix
