#pragma once

#include <cstdint>

#include "setmix/gradcheck.hpp"
#include "setmix/model.hpp"

namespace setmix {

// Random cloud in the unit ball (coordinates are generic: distinct, no ties).
inline PointCloud random_cloud(Rng& rng, std::size_t n) {
    PointCloud cloud;
    cloud.coords = Matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        const double nn = p.norm();
        if (nn > 1.0) p = p / nn;
        cloud.coords.set_row_vec3(i, p);
    }
    return cloud;
}

struct ModelGradcheckOptions {
    std::size_t trials = 20;
    std::uint64_t seed = 0xC0FFEEull;
    double h = 1e-5;
    std::size_t coords_per_tensor = 12;  // 0 = every coordinate
    std::size_t directional_probes = 2;
    double tolerance = 1e-4;
};

// Full-model gradient verification: training-mode forward (batch-norm on
// batch statistics, running averages untouched), dropout forced off, against
// central finite differences of the cross-entropy loss.
inline GradcheckReport model_gradcheck(SetMixerModel& model, const ModelGradcheckOptions& opt) {
    Rng rng(opt.seed);
    GradcheckReport combined;
    const std::size_t classes = model.config().head.class_count;
    const std::size_t n_points = std::max<std::size_t>(model.config().sa_layers[0].m_sets + 32,
                                                       model.config().sa_layers[0].k + 32);

    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        const PointCloud cloud = random_cloud(rng, n_points);
        const std::vector<int> labels{static_cast<int>(rng.below(classes))};
        const CloudPlan plan = model.make_plan(cloud);

        auto forward_loss = [&](bool with_grads) {
            Graph g(with_grads);
            ForwardOptions fwd;
            fwd.training = true;
            fwd.update_bn = false;
            fwd.dropout_override = 0.0;
            const Graph::NodeId logits = model.build_forward(g, {&plan}, fwd);
            const Graph::NodeId loss = g.softmax_xent(logits, labels);
            if (with_grads) {
                model.params().zero_grads();
                g.backward(loss);
            }
            return g.scalar(loss);
        };

        GradcheckOptions gopt;
        gopt.h = opt.h;
        gopt.max_coords_per_param = opt.coords_per_tensor;
        gopt.directional_probes = opt.directional_probes;
        gopt.seed = hash_seed(opt.seed, trial, 0x9cULL);
        const GradcheckReport rep = gradcheck(
            model.params().all(), [&] { return forward_loss(true); },
            [&] { return forward_loss(false); }, gopt);

        combined.coords_checked += rep.coords_checked;
        combined.coords_skipped += rep.coords_skipped;
        combined.probes_checked += rep.probes_checked;
        if (rep.max_rel_err > combined.max_rel_err) {
            combined.max_rel_err = rep.max_rel_err;
            combined.worst = rep.worst;
        }
    }
    return combined;
}

}  // namespace setmix
