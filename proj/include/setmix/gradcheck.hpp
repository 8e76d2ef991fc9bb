#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "setmix/graph.hpp"
#include "setmix/rng.hpp"

namespace setmix {

struct GradcheckOptions {
    double h = 1e-5;
    // 0 = check every coordinate of every tensor; otherwise a seeded random
    // subsample of this many coordinates per tensor.
    std::size_t max_coords_per_param = 0;
    // Random-direction probes comparing the directional finite difference
    // against grad . dir; each probe covers all coordinates at once.
    std::size_t directional_probes = 0;
    std::uint64_t seed = 0x5e7u;
    // Relative-error denominator floor. Central differences of a double-
    // precision loss carry ~1e-8 absolute noise (roundoff/h plus h^2
    // curvature); coordinates whose true gradient is ~0 are measured against
    // this floor rather than their own magnitude.
    double denom_floor = 1e-4;
    // A central difference is only a valid oracle where the loss is smooth
    // across the h-ball. Measurements where the h and h/2 estimates disagree
    // beyond this bound sit on a ReLU/max kink and are skipped (counted).
    double step_consistency = 1e-6;
};

struct GradcheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double fd = 0.0;
    double rel_err = 0.0;
};

struct GradcheckReport {
    double max_rel_err = 0.0;
    GradcheckEntry worst;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  // kink-adjacent measurements
    std::size_t probes_checked = 0;

    bool pass(double tolerance) const { return max_rel_err < tolerance; }
};

namespace detail {

inline double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace detail

// Compares analytic gradients against central finite differences of
// `loss_only`. `loss_and_grads` must zero the parameter gradients, run
// forward+backward once, and return the loss; `loss_only` must evaluate the
// same loss without side effects. Both are called with parameter values
// temporarily perturbed in place.
inline GradcheckReport gradcheck(const std::vector<Parameter*>& params,
                                 const std::function<double()>& loss_and_grads,
                                 const std::function<double()>& loss_only,
                                 const GradcheckOptions& opt = {}) {
    GradcheckReport report;
    loss_and_grads();

    // Snapshot analytic gradients; later FD evaluations must not rely on them
    // staying put.
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const Parameter* p : params) analytic.push_back(p->grad);

    Rng rng(opt.seed);
    auto fd_at = [&](Parameter* p, std::size_t i, double h) {
        double* slot = &p->value.data()[i];
        const double saved = *slot;
        *slot = saved + h;
        const double up = loss_only();
        *slot = saved - h;
        const double down = loss_only();
        *slot = saved;
        return (up - down) / (2.0 * h);
    };

    auto consider = [&](const std::string& name, std::size_t index, double a, double fd) {
        const double e = detail::rel_err(a, fd, opt.denom_floor);
        ++report.coords_checked;
        if (e > report.max_rel_err) {
            report.max_rel_err = e;
            report.worst = {name, index, a, fd, e};
        }
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const std::size_t n = p->value.size();
        std::vector<std::size_t> coords;
        if (opt.max_coords_per_param == 0 || n <= opt.max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            coords = rng.sample_without_replacement(n, opt.max_coords_per_param);
        }
        for (std::size_t i : coords) {
            const double fd_h = fd_at(p, i, opt.h);
            const double fd_h2 = fd_at(p, i, opt.h / 2.0);
            if (std::abs(fd_h - fd_h2) >
                std::max(opt.step_consistency, 1e-6 * std::max(std::abs(fd_h2), 1.0))) {
                ++report.coords_skipped;
                continue;
            }
            consider(p->name, i, analytic[pi].data()[i], fd_h2);
        }
    }

    for (std::size_t probe = 0; probe < opt.directional_probes; ++probe) {
        // Unit direction over the concatenation of all parameters.
        std::vector<Matrix> dir;
        dir.reserve(params.size());
        double norm2 = 0.0;
        for (Parameter* p : params) {
            Matrix d(p->value.rows(), p->value.cols());
            for (std::size_t i = 0; i < d.size(); ++i) {
                d.data()[i] = rng.normal();
                norm2 += d.data()[i] * d.data()[i];
            }
            dir.push_back(std::move(d));
        }
        const double inv_norm = 1.0 / std::sqrt(norm2);
        auto shift = [&](double t) {
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                Matrix& v = params[pi]->value;
                for (std::size_t i = 0; i < v.size(); ++i)
                    v.data()[i] += t * inv_norm * dir[pi].data()[i];
            }
        };
        auto dir_fd = [&](double h) {
            shift(h);
            const double up = loss_only();
            shift(-2.0 * h);
            const double down = loss_only();
            shift(h);
            return (up - down) / (2.0 * h);
        };
        double expected = 0.0;
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (std::size_t i = 0; i < dir[pi].size(); ++i)
                expected += analytic[pi].data()[i] * inv_norm * dir[pi].data()[i];
        const double fd_h = dir_fd(opt.h);
        const double fd_h2 = dir_fd(opt.h / 2.0);
        if (std::abs(fd_h - fd_h2) >
            std::max(opt.step_consistency, 1e-6 * std::max(std::abs(fd_h2), 1.0))) {
            ++report.coords_skipped;
            continue;
        }
        ++report.probes_checked;
        consider("<directional>", probe, expected, fd_h2);
    }

    return report;
}

}  // namespace setmix
