#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "setmix/io.hpp"
#include "setmix/model.hpp"
#include "setmix/nn.hpp"

namespace setmix {

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double lr_decay = 0.7;         // multiplied in every `decay_every` epochs
    std::size_t decay_every = 15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    bool verbose = false;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // training-split accuracy of the epoch's forward passes
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    OptimizerInfo optimizer;
    double wall_seconds = 0.0;
};

inline std::string epoch_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,loss,accuracy,lr\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.6g,%.6g\n", e.epoch, e.loss, e.accuracy, e.lr);
        out += buf;
    }
    return out;
}

// Minibatch Adam training. Grouping/sorting plans are coordinate-only, so
// they are computed once per cloud up front and reused across epochs.
inline TrainResult train_model(SetMixerModel& model, const std::vector<PointCloud>& clouds,
                               const TrainOptions& opt = {}) {
    if (clouds.empty()) throw Error("train_model: empty training set");
    const std::size_t classes = model.config().head.class_count;
    std::vector<int> labels(clouds.size());
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        if (clouds[i].label < 0 || static_cast<std::size_t>(clouds[i].label) >= classes)
            throw Error("train_model: cloud label out of range");
        labels[i] = clouds[i].label;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CloudPlan> plans(clouds.size());
    parallel_for(
        clouds.size(),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) plans[i] = model.make_plan(clouds[i]);
        },
        8);

    std::vector<Parameter*> params = model.params().all();
    std::vector<AdamState> states(params.size());
    Rng shuffle_rng(hash_seed(opt.seed, hash_name("shuffle")));
    Rng dropout_rng(hash_seed(opt.seed, hash_name("dropout")));

    TrainResult result;
    std::vector<std::size_t> order(clouds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::int64_t step = 0;
    double lr = opt.lr;

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        if (epoch > 0 && opt.decay_every > 0 && epoch % opt.decay_every == 0)
            lr *= opt.lr_decay;
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            std::vector<const CloudPlan*> batch;
            std::vector<int> batch_labels;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(&plans[order[i]]);
                batch_labels.push_back(labels[order[i]]);
            }

            Graph g;
            ForwardOptions fwd;
            fwd.training = true;
            fwd.update_bn = true;
            fwd.rng = &dropout_rng;
            const Graph::NodeId logits = model.build_forward(g, batch, fwd);
            const Graph::NodeId loss = g.softmax_xent(logits, batch_labels);

            const Matrix& lv = g.value(logits);
            for (std::size_t i = 0; i < lv.rows(); ++i) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < lv.cols(); ++j)
                    if (lv(i, j) > lv(i, best)) best = j;
                if (static_cast<int>(best) == batch_labels[i]) ++correct;
            }
            epoch_loss += g.scalar(loss) * static_cast<double>(end - start);

            model.params().zero_grads();
            g.backward(loss);
            ++step;
            for (std::size_t pi = 0; pi < params.size(); ++pi)
                adam_step(params[pi]->value, params[pi]->grad, states[pi], lr, opt.beta1,
                          opt.beta2, opt.epsilon);
        }

        EpochLog log;
        log.epoch = epoch + 1;
        log.loss = epoch_loss / static_cast<double>(order.size());
        log.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        log.lr = lr;
        result.log.push_back(log);
        if (opt.verbose)
            std::fprintf(stderr, "epoch %3zu  loss %.4f  acc %.4f  lr %.5f\n", log.epoch,
                         log.loss, log.accuracy, log.lr);
    }

    result.optimizer = {step, lr, opt.beta1, opt.beta2, opt.epsilon};
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace setmix
