#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "setmix/geom.hpp"
#include "setmix/rng.hpp"
#include "setmix/sort.hpp"

namespace setmix {

enum class ShapeFamily { sphere, cube_surface, cylinder, cone, torus, plane, helix, two_spheres };

inline const std::vector<ShapeFamily>& all_shape_families() {
    static const std::vector<ShapeFamily> fams{
        ShapeFamily::sphere,  ShapeFamily::cube_surface, ShapeFamily::cylinder,
        ShapeFamily::cone,    ShapeFamily::torus,        ShapeFamily::plane,
        ShapeFamily::helix,   ShapeFamily::two_spheres};
    return fams;
}

inline const char* to_string(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::sphere: return "sphere";
        case ShapeFamily::cube_surface: return "cube_surface";
        case ShapeFamily::cylinder: return "cylinder";
        case ShapeFamily::cone: return "cone";
        case ShapeFamily::torus: return "torus";
        case ShapeFamily::plane: return "plane";
        case ShapeFamily::helix: return "helix";
        case ShapeFamily::two_spheres: return "two_spheres";
    }
    return "sphere";
}

inline ShapeFamily shape_family_from(const std::string& s) {
    for (ShapeFamily f : all_shape_families())
        if (s == to_string(f)) return f;
    throw Error("unknown shape family: " + s);
}

struct ShapeSpec {
    ShapeFamily family = ShapeFamily::sphere;
    std::size_t points = 512;
    std::uint64_t seed = 0;
    double jitter = 0.0;             // isotropic Gaussian sigma, pre-normalization
    Vec3 scale{1.0, 1.0, 1.0};       // anisotropic, each component in [0.6, 1.4]
    double z_rotation = 0.0;         // radians

    void validate() const {
        if (points < 64) throw Error("ShapeSpec: need at least 64 points");
        auto in_range = [](double v) { return v >= 0.6 && v <= 1.4; };
        if (!in_range(scale.x) || !in_range(scale.y) || !in_range(scale.z))
            throw Error("ShapeSpec: scale components must be in [0.6, 1.4]");
    }
};

namespace detail {

// Uniform point on the unit sphere (normalized Gaussian triple).
inline Vec3 sphere_point(Rng& rng) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    double n = v.norm();
    while (n < 1e-12) {
        v = {rng.normal(), rng.normal(), rng.normal()};
        n = v.norm();
    }
    return v / n;
}

inline Vec3 surface_sample(ShapeFamily family, Rng& rng) {
    switch (family) {
        case ShapeFamily::sphere:
            return sphere_point(rng);
        case ShapeFamily::cube_surface: {
            // equal-area faces of the cube [-1, 1]^3
            const std::size_t face = static_cast<std::size_t>(rng.below(6));
            const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
            switch (face) {
                case 0: return {1.0, u, v};
                case 1: return {-1.0, u, v};
                case 2: return {u, 1.0, v};
                case 3: return {u, -1.0, v};
                case 4: return {u, v, 1.0};
                default: return {u, v, -1.0};
            }
        }
        case ShapeFamily::cylinder: {
            // radius 0.7, height 1.6, side + caps weighted by area
            const double r = 0.7, h = 1.6;
            const double side = 2.0 * kPi * r * h, caps = 2.0 * kPi * r * r;
            if (rng.uniform01() < side / (side + caps)) {
                const double a = rng.uniform(0.0, 2.0 * kPi);
                return {r * std::cos(a), r * std::sin(a), rng.uniform(-h / 2, h / 2)};
            }
            const double a = rng.uniform(0.0, 2.0 * kPi);
            const double rr = r * std::sqrt(rng.uniform01());
            const double z = rng.bernoulli(0.5) ? h / 2 : -h / 2;
            return {rr * std::cos(a), rr * std::sin(a), z};
        }
        case ShapeFamily::cone: {
            // apex (0,0,0.8), base circle radius 0.8 at z = -0.8
            const double r = 0.8, h = 1.6;
            const double slant = std::sqrt(r * r + h * h);
            const double lateral = kPi * r * slant, base = kPi * r * r;
            if (rng.uniform01() < lateral / (lateral + base)) {
                const double a = rng.uniform(0.0, 2.0 * kPi);
                const double t = std::sqrt(rng.uniform01());  // area-uniform along the slope
                return {t * r * std::cos(a), t * r * std::sin(a), 0.8 - t * h};
            }
            const double a = rng.uniform(0.0, 2.0 * kPi);
            const double rr = r * std::sqrt(rng.uniform01());
            return {rr * std::cos(a), rr * std::sin(a), -0.8};
        }
        case ShapeFamily::torus: {
            // major R = 1, minor r = 0.35; area-uniform via rejection on the
            // poloidal angle
            const double R = 1.0, r = 0.35;
            const double theta = rng.uniform(0.0, 2.0 * kPi);
            double phi = 0.0;
            for (;;) {
                phi = rng.uniform(0.0, 2.0 * kPi);
                if (rng.uniform01() <= (R + r * std::cos(phi)) / (R + r)) break;
            }
            const double w = R + r * std::cos(phi);
            return {w * std::cos(theta), w * std::sin(theta), r * std::sin(phi)};
        }
        case ShapeFamily::plane:
            return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
        case ShapeFamily::helix: {
            // 2.5 turns, radius 0.8, height 1.6
            const double t = rng.uniform01();
            const double a = 2.5 * 2.0 * kPi * t;
            return {0.8 * std::cos(a), 0.8 * std::sin(a), -0.8 + 1.6 * t};
        }
        case ShapeFamily::two_spheres: {
            const Vec3 c = rng.bernoulli(0.5) ? Vec3{0.6, 0, 0} : Vec3{-0.6, 0, 0};
            return c + sphere_point(rng) * 0.5;
        }
    }
    return {0, 0, 0};
}

}  // namespace detail

// Samples the analytic surface, applies Gaussian jitter, anisotropic scale
// and optional z-rotation, then rescales so the farthest point from the
// (analytic, origin) center has norm 1. No centroid shift: the shapes are
// constructed centered, and centering at the sample centroid would break the
// surface-equation invariants the generator guarantees.
inline PointCloud sample_shape(const ShapeSpec& spec) {
    spec.validate();
    Rng rng(hash_seed(spec.seed, hash_name(to_string(spec.family)), spec.points));
    PointCloud cloud;
    cloud.coords = Matrix(spec.points, 3);
    const double cr = std::cos(spec.z_rotation), sr = std::sin(spec.z_rotation);
    double max_norm = 0.0;
    for (std::size_t i = 0; i < spec.points; ++i) {
        Vec3 p = detail::surface_sample(spec.family, rng);
        if (spec.jitter > 0.0) {
            p.x += rng.normal(0.0, spec.jitter);
            p.y += rng.normal(0.0, spec.jitter);
            p.z += rng.normal(0.0, spec.jitter);
        }
        p = {p.x * spec.scale.x, p.y * spec.scale.y, p.z * spec.scale.z};
        p = {cr * p.x - sr * p.y, sr * p.x + cr * p.y, p.z};
        cloud.coords.set_row_vec3(i, p);
        max_norm = std::max(max_norm, p.norm());
    }
    if (max_norm > 0.0)
        for (std::size_t i = 0; i < spec.points; ++i)
            cloud.coords.set_row_vec3(i, cloud.coords.row_vec3(i) / max_norm);
    for (std::size_t fi = 0; fi < all_shape_families().size(); ++fi)
        if (all_shape_families()[fi] == spec.family) cloud.label = static_cast<int>(fi);
    return cloud;
}

struct DatasetItem {
    ShapeSpec spec;
    PointCloud cloud;
};

struct Dataset {
    std::vector<DatasetItem> train;
    std::vector<DatasetItem> test;
};

struct DatasetOptions {
    std::size_t points = 512;
    double jitter = 0.02;
    bool random_scale = true;
    bool random_rotation = true;
};

// Class-balanced train/test split with disjoint seed streams per split.
inline Dataset make_dataset(const std::vector<ShapeFamily>& families,
                            std::size_t per_class_train, std::size_t per_class_test,
                            std::uint64_t base_seed, const DatasetOptions& opt = {}) {
    Dataset ds;
    auto emit = [&](const char* split, std::size_t count, std::vector<DatasetItem>& sink) {
        for (ShapeFamily family : families) {
            for (std::size_t i = 0; i < count; ++i) {
                ShapeSpec spec;
                spec.family = family;
                spec.points = opt.points;
                spec.jitter = opt.jitter;
                spec.seed = hash_seed(base_seed, hash_name(split),
                                      hash_name(to_string(family)), i);
                Rng aux(hash_seed(spec.seed, 0xa0aULL));
                if (opt.random_scale)
                    spec.scale = {aux.uniform(0.6, 1.4), aux.uniform(0.6, 1.4),
                                  aux.uniform(0.6, 1.4)};
                if (opt.random_rotation) spec.z_rotation = aux.uniform(0.0, 2.0 * kPi);
                sink.push_back({spec, sample_shape(spec)});
            }
        }
    };
    emit("train", per_class_train, ds.train);
    emit("test", per_class_test, ds.test);
    return ds;
}

}  // namespace setmix
