// Acceptance suite: one pass/fail line per criterion. Run with no arguments
// for all criteria, or pass criterion numbers (e.g. "./acceptance 1 4 7").
// Criteria 5 and 6 train twelve desk models and dominate the runtime.
#include <atomic>
#include <chrono>
#include <memory>
#include <thread>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "setmix/corrupt.hpp"
#include "setmix/metrics.hpp"
#include "setmix/model.hpp"
#include "setmix/synth.hpp"
#include "setmix/train.hpp"
#include "setmix/verify.hpp"

using namespace setmix;

namespace {

struct Outcome {
    int criterion = 0;
    bool pass = false;
    bool inconclusive = false;
    std::string detail;
    double seconds = 0.0;
};

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// 1. Metric arithmetic replay (published Table-1 ERs through rmce)
// ---------------------------------------------------------------------------

Outcome criterion_1() {
    struct Row {
        const char* name;
        double er_clean, er_noise, printed;
    };
    const Row rows[] = {{"Set-Mixer-APS", 0.081, 0.100, 0.13},
                        {"PointNet", 0.093, 0.327, 1.62},
                        {"PointNet++", 0.070, 0.215, 1.00},
                        {"PCT", 0.071, 0.281, 1.45}};
    Outcome out{1, true, false, ""};
    char buf[128];
    for (const Row& r : rows) {
        const double got = rmce(r.er_noise, r.er_clean, 0.215, 0.070);
        const double err = std::abs(got - r.printed);
        std::snprintf(buf, sizeof buf, "%s %.3f (printed %.2f, |diff| %.4f); ", r.name, got,
                      r.printed, err);
        out.detail += buf;
        if (err > 0.01) out.pass = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2. Permutation invariance of desk-model logits (eval mode)
// ---------------------------------------------------------------------------

Outcome criterion_2() {
    Outcome out{2, true, false, ""};
    SetMixerModel model = SetMixerModel::init(desk_config(), 2024);
    Rng rng(0x9e2);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 80 + rng.below(80);
        PointCloud cloud = random_cloud(rng, n);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        PointCloud shuffled;
        shuffled.coords = Matrix(n, 3);
        for (std::size_t i = 0; i < n; ++i)
            shuffled.coords.set_row_vec3(i, cloud.coords.row_vec3(perm[i]));
        const Matrix a = model.logits(cloud);
        const Matrix b = model.logits(shuffled);
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a(0, j) - b(0, j)));
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max |delta logit| = %.3e over 200 clouds", worst);
    out.detail = buf;
    out.pass = worst < 1e-9;
    return out;
}

// ---------------------------------------------------------------------------
// 3. Gradient verification on the full desk model
// ---------------------------------------------------------------------------

Outcome criterion_3() {
    Outcome out{3, true, false, ""};
    SetMixerModel model = SetMixerModel::init(desk_config(), 33);
    ModelGradcheckOptions opt;
    opt.trials = 20;
    opt.seed = 0xCAFE;
    opt.h = 1e-5;
    opt.coords_per_tensor = 12;
    opt.directional_probes = 2;
    const GradcheckReport report = model_gradcheck(model, opt);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "max rel err %.3e over %zu coords + %zu probes (%zu kink-adjacent skipped), "
                  "worst %s",
                  report.max_rel_err, report.coords_checked, report.probes_checked,
                  report.coords_skipped, report.worst.param.c_str());
    out.detail = buf;
    out.pass = report.max_rel_err < 1e-4 && report.coords_checked > 0;
    return out;
}

// ---------------------------------------------------------------------------
// 4. Oracle equivalence: fps, knn, the three sorts, mixer_aggregate
// ---------------------------------------------------------------------------

Outcome criterion_4() {
    Outcome out{4, true, false, ""};
    Rng rng(0x0c4);
    std::size_t index_mismatches = 0;
    double worst_dev = 0.0;

    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 8 + rng.below(249);  // N <= 256
        const Matrix pts = oracle::random_points(rng, n);

        const std::size_t m = 1 + rng.below(std::min<std::size_t>(n, 64));
        if (fps(pts, m) != oracle::fps_oracle(pts, m)) ++index_mismatches;

        const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 64));
        const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (knn(pts, q, k) != oracle::knn_oracle(pts, q, k)) ++index_mismatches;
    }

    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 3 + rng.below(62);
        const Matrix pts = oracle::random_points(rng, k);

        const Vec3 axis = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
        const auto aps = aps_keys(pts, axis);
        std::vector<double> aps_ref(k);
        for (std::size_t i = 0; i < k; ++i) {
            const Vec3 p = pts.row_vec3(i);
            aps_ref[i] = p.x * axis.x + p.y * axis.y + p.z * axis.z;
            worst_dev = std::max(worst_dev, std::abs(aps[i] - aps_ref[i]));
        }
        if (sort_permutation(aps, pts) != sort_permutation(aps_ref, pts)) ++index_mismatches;

        Vec3 normal = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
        Vec3 ref = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
        if ((ref - normal * ref.dot(normal)).norm() > 1e-6) {
            const auto pcs = pcs_keys(pts, normal, ref);
            const auto pcs_ref = oracle::pcs_keys_oracle(pts, normal, ref);
            for (std::size_t i = 0; i < k; ++i)
                worst_dev = std::max(worst_dev, std::abs(pcs[i] - pcs_ref[i]));
            if (sort_permutation(pcs, pts) != sort_permutation(pcs_ref, pts))
                ++index_mismatches;
        }

        const Vec3 center{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const auto eds = eds_keys(pts, center);
        for (std::size_t i = 0; i < k; ++i)
            worst_dev = std::max(worst_dev,
                                 std::abs(eds[i] - (pts.row_vec3(i) - center).norm()));
    }

    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.below(63);
        const std::size_t c = 1 + rng.below(8);
        const std::size_t n_sort = 1 + rng.below(3);
        const std::size_t d = 1 + rng.below(4);
        MixerParams p;
        p.k = k;
        p.c_in = c;
        p.n_sort = n_sort;
        auto fc = [&](std::size_t o, std::size_t i, Activation act) {
            FcLayer l;
            l.weight = oracle::random_matrix(rng, o, i);
            l.bias = oracle::random_matrix(rng, 1, o);
            l.activation = act;
            return l;
        };
        p.m_layers = {fc(k, k, Activation::relu), fc(k, k, Activation::relu),
                      fc(d, k, Activation::relu)};
        p.r_layer = fc(2 * c, d * n_sort * c, Activation::none);
        if (trial % 2 == 0) p.norm = NormLayer::make(NormKind::layer_norm, n_sort * c);
        const Matrix ordered = oracle::random_matrix(rng, k, n_sort * c);
        const auto got = mixer_aggregate(ordered, p);
        const auto ref = oracle::mixer_reference(ordered, p);
        for (std::size_t i = 0; i < got.size(); ++i)
            worst_dev = std::max(worst_dev, std::abs(got[i] - ref[i]));
    }

    char buf[128];
    std::snprintf(buf, sizeof buf, "index mismatches %zu, max numeric deviation %.3e",
                  index_mismatches, worst_dev);
    out.detail = buf;
    out.pass = index_mismatches == 0 && worst_dev < 1e-12;
    return out;
}

// ---------------------------------------------------------------------------
// 5 + 6. Desk-scale robustness ordering and the center-mode ablation
// ---------------------------------------------------------------------------

struct ArchResult {
    // per seed: er_clean, er_noise, er_by[kind][sev]
    std::vector<double> er_clean;
    std::vector<double> er_noise;
    std::vector<std::map<std::string, std::map<int, double>>> er_by;

    double mean_clean() const {
        double s = 0;
        for (double v : er_clean) s += v;
        return s / er_clean.size();
    }
    double mean_noise() const {
        double s = 0;
        for (double v : er_noise) s += v;
        return s / er_noise.size();
    }
    double mean_cell(const std::string& kind, int sev) const {
        double s = 0;
        for (const auto& by : er_by) s += by.at(kind).at(sev);
        return s / er_by.size();
    }
};

struct RobustnessResults {
    ArchResult mixer, pool, nosort, query;
};

// Heavy path shared by criteria 5 and 6: twelve trainings + the 25-cell
// corruption benchmark for each.
const RobustnessResults& robustness_results() {
    static RobustnessResults results = [] {
        const std::uint64_t data_seed = 20260808;
        std::fprintf(stderr, "[acceptance] generating dataset (8 x 200/50, 512 pts)\n");
        const Dataset ds = make_dataset(all_shape_families(), 200, 50, data_seed,
                                        DatasetOptions{512, 0.02, true, true});
        std::vector<PointCloud> train;
        for (const auto& item : ds.train) train.push_back(item.cloud);
        std::vector<PointCloud> test;
        std::vector<int> labels;
        for (const auto& item : ds.test) {
            test.push_back(item.cloud);
            labels.push_back(item.cloud.label);
        }

        struct Arch {
            const char* name;
            ModelConfig cfg;
            ArchResult* sink;
        };
        RobustnessResults out;
        const ModelConfig desk = desk_config();
        std::vector<Arch> archs{
            {"set_mixer", desk, &out.mixer},
            {"max_pool", with_aggregator(desk, AggregatorKind::max_pool), &out.pool},
            {"mixer_no_sort", with_aggregator(desk, AggregatorKind::mixer_no_sort),
             &out.nosort},
            {"set_mixer_query", with_center_mode(desk, CenterMode::query_point), &out.query}};

        // Train all (arch x seed) models on a two-worker pool; each run is
        // single-threaded internally so the workers do not oversubscribe.
        std::vector<std::vector<std::unique_ptr<SetMixerModel>>> models(archs.size());
        for (auto& slot : models) slot.resize(3);
        {
            const char* prev_env = std::getenv("SETMIX_THREADS");
            const std::string saved = prev_env != nullptr ? prev_env : "";
            ::setenv("SETMIX_THREADS", "1", 1);
            std::atomic<std::size_t> next{0};
            const std::size_t total_jobs = archs.size() * 3;
            auto worker = [&] {
                for (;;) {
                    const std::size_t job = next.fetch_add(1);
                    if (job >= total_jobs) return;
                    const std::size_t ai = job / 3;
                    const std::uint64_t seed = job % 3 + 1;
                    const double t0 = now_seconds();
                    auto model = std::make_unique<SetMixerModel>(
                        SetMixerModel::init(archs[ai].cfg, seed));
                    TrainOptions topt;
                    topt.epochs = 30;
                    topt.seed = seed;
                    const TrainResult tr = train_model(*model, train, topt);
                    std::fprintf(
                        stderr, "[acceptance] trained %s seed %llu: loss %.4f acc %.4f (%.0fs)\n",
                        archs[ai].name, static_cast<unsigned long long>(seed),
                        tr.log.back().loss, tr.log.back().accuracy, now_seconds() - t0);
                    models[ai][seed - 1] = std::move(model);
                }
            };
            std::thread w1(worker), w2(worker);
            w1.join();
            w2.join();
            if (prev_env != nullptr)
                ::setenv("SETMIX_THREADS", saved.c_str(), 1);
            else
                ::unsetenv("SETMIX_THREADS");
        }

        // clean evaluation per model
        for (std::size_t ai = 0; ai < archs.size(); ++ai) {
            for (auto& model_ptr : models[ai]) {
                SetMixerModel& model = *model_ptr;
                std::vector<CloudPlan> plans(test.size());
                parallel_for(
                    test.size(),
                    [&](std::size_t lo, std::size_t hi) {
                        for (std::size_t i = lo; i < hi; ++i)
                            plans[i] = model.make_plan(test[i]);
                    },
                    4);
                std::vector<int> preds(test.size());
                parallel_for(
                    test.size(),
                    [&](std::size_t lo, std::size_t hi) {
                        for (std::size_t i = lo; i < hi; ++i) {
                            Graph g(false);
                            ForwardOptions fo;
                            const Matrix lg =
                                g.value(model.build_forward(g, {&plans[i]}, fo));
                            std::size_t best = 0;
                            for (std::size_t j = 1; j < lg.cols(); ++j)
                                if (lg(0, j) > lg(0, best)) best = j;
                            preds[i] = static_cast<int>(best);
                        }
                    },
                    4);
                archs[ai].sink->er_clean.push_back(error_rate(preds, labels));
                archs[ai].sink->er_by.emplace_back();
                archs[ai].sink->er_noise.push_back(0.0);
            }
        }

        // corruption cells: corrupt once, evaluate every model on the cell
        const std::uint64_t corrupt_seed = 0xC0881;
        int cell_no = 0;
        for (CorruptionKind kind : all_corruption_kinds()) {
            for (int sev = 1; sev <= 5; ++sev) {
                ++cell_no;
                const double t0 = now_seconds();
                std::vector<PointCloud> corrupted(test.size());
                for (std::size_t i = 0; i < test.size(); ++i) {
                    CorruptionSpec spec{kind, sev,
                                        hash_seed(corrupt_seed, hash_name(to_string(kind)),
                                                  static_cast<std::uint64_t>(sev), i)};
                    corrupted[i] = corrupt(test[i], spec);
                }
                for (std::size_t ai = 0; ai < archs.size(); ++ai) {
                    for (std::size_t si = 0; si < models[ai].size(); ++si) {
                        SetMixerModel& model = *models[ai][si];
                        std::vector<int> preds(corrupted.size());
                        parallel_for(
                            corrupted.size(),
                            [&](std::size_t lo, std::size_t hi) {
                                for (std::size_t i = lo; i < hi; ++i) {
                                    const CloudPlan plan = model.make_plan(corrupted[i]);
                                    Graph g(false);
                                    ForwardOptions fo;
                                    const Matrix lg =
                                        g.value(model.build_forward(g, {&plan}, fo));
                                    std::size_t best = 0;
                                    for (std::size_t j = 1; j < lg.cols(); ++j)
                                        if (lg(0, j) > lg(0, best)) best = j;
                                    preds[i] = static_cast<int>(best);
                                }
                            },
                            4);
                        archs[ai].sink->er_by[si][to_string(kind)][sev] =
                            error_rate(preds, labels);
                    }
                }
                std::fprintf(stderr, "[acceptance] cell %2d/25 (%s s%d) done in %.0fs\n",
                             cell_no, to_string(kind), sev, now_seconds() - t0);
            }
        }

        // er_noise per (arch, seed) = mean over the 25 cells
        for (std::size_t ai = 0; ai < archs.size(); ++ai) {
            for (std::size_t si = 0; si < models[ai].size(); ++si) {
                double sum = 0;
                std::size_t n = 0;
                for (const auto& [kind, per_sev] : archs[ai].sink->er_by[si])
                    for (const auto& [sev, er] : per_sev) {
                        sum += er;
                        ++n;
                    }
                archs[ai].sink->er_noise[si] = sum / static_cast<double>(n);
            }
        }
        for (std::size_t ai = 0; ai < archs.size(); ++ai)
            std::fprintf(stderr,
                         "[acceptance] %s: mean ER_clean %.3f, mean ER_noise %.3f\n",
                         archs[ai].name, archs[ai].sink->mean_clean(),
                         archs[ai].sink->mean_noise());
        return out;
    }();
    return results;
}

Outcome criterion_5() {
    Outcome out{5, true, false, ""};
    const RobustnessResults& r = robustness_results();
    char buf[256];

    const double clean_mixer = r.mixer.mean_clean();
    const double clean_pool = r.pool.mean_clean();
    const double clean_nosort = r.nosort.mean_clean();
    std::snprintf(buf, sizeof buf, "clean ER: mixer %.3f pool %.3f nosort %.3f; ", clean_mixer,
                  clean_pool, clean_nosort);
    out.detail += buf;
    if (clean_mixer > 0.10 || clean_pool > 0.10 || clean_nosort > 0.10) out.pass = false;

    for (const char* kind : {"impulse", "background"}) {
        for (int sev = 3; sev <= 5; ++sev) {
            const double delta_mixer = r.mixer.mean_cell(kind, sev) - clean_mixer;
            const double delta_pool = r.pool.mean_cell(kind, sev) - clean_pool;
            std::snprintf(buf, sizeof buf, "%s s%d delta mixer %.3f vs pool %.3f; ", kind, sev,
                          delta_mixer, delta_pool);
            out.detail += buf;
            if (!(delta_mixer < delta_pool)) out.pass = false;
            if (sev == 5 && !(delta_pool - delta_mixer >= 0.05)) out.pass = false;
        }
    }

    const double noise_mixer = r.mixer.mean_noise();
    const double noise_nosort = r.nosort.mean_noise();
    std::snprintf(buf, sizeof buf, "ER_noise mixer %.3f vs no-sort %.3f", noise_mixer,
                  noise_nosort);
    out.detail += buf;
    if (!(noise_mixer < noise_nosort)) out.pass = false;
    return out;
}

Outcome criterion_6() {
    Outcome out{6, true, false, ""};
    const RobustnessResults& r = robustness_results();
    const double spatial = r.mixer.mean_noise();
    const double query = r.query.mean_noise();
    char buf[160];
    std::snprintf(buf, sizeof buf, "ER_noise spatial %.4f vs query %.4f", spatial, query);
    out.detail = buf;
    if (spatial <= query) {
        out.pass = true;
    } else if (spatial - query <= 0.005) {
        out.pass = true;
        out.inconclusive = true;  // tie within 0.5 points: flagged, not failing
    } else {
        out.pass = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// 7. Corruption contracts
// ---------------------------------------------------------------------------

Outcome criterion_7() {
    Outcome out{7, true, false, ""};
    Rng rng(0x777);
    const PointCloud cloud = random_cloud(rng, 1000);
    std::string fail;

    for (CorruptionKind kind : all_corruption_kinds()) {
        const CorruptionSpec spec{kind, 4, 31337};
        const PointCloud a = corrupt(cloud, spec);
        const PointCloud b = corrupt(cloud, spec);
        if (!(a.coords == b.coords)) fail += std::string(to_string(kind)) + " not deterministic; ";
    }

    for (int sev = 1; sev <= 5; ++sev) {
        const std::size_t n = cloud.size();
        if (corrupt(cloud, {CorruptionKind::uniform, sev, 1}).size() != n)
            fail += "uniform count; ";
        if (corrupt(cloud, {CorruptionKind::impulse, sev, 1}).size() != n)
            fail += "impulse count; ";
        if (corrupt(cloud, {CorruptionKind::upsampling, sev, 1}).size() !=
            n + append_count(n, sev))
            fail += "upsampling count; ";
        if (corrupt(cloud, {CorruptionKind::background, sev, 1}).size() !=
            n + append_count(n, sev))
            fail += "background count; ";

        const PointCloud imp = corrupt(cloud, {CorruptionKind::impulse, sev, 2});
        std::size_t untouched = 0;
        for (std::size_t i = 0; i < cloud.size(); ++i)
            if (cloud.coords.row_vec3(i) == imp.coords.row_vec3(i)) ++untouched;
        if (untouched != cloud.size() - impulse_count(cloud.size(), sev))
            fail += "impulse untouched-point identity; ";
    }

    for (CorruptionKind kind : {CorruptionKind::uniform, CorruptionKind::gaussian}) {
        double prev = 0.0;
        for (int sev = 1; sev <= 5; ++sev) {
            const PointCloud c = corrupt(cloud, {kind, sev, 5});
            double mean = 0.0;
            for (std::size_t i = 0; i < cloud.size(); ++i)
                mean += (c.coords.row_vec3(i) - cloud.coords.row_vec3(i)).norm();
            mean /= static_cast<double>(cloud.size());
            if (mean < prev) fail += std::string(to_string(kind)) + " not monotone; ";
            prev = mean;
        }
    }

    out.pass = fail.empty();
    out.detail = fail.empty() ? "determinism, counts, bit-identity, monotonicity all hold"
                              : fail;
    return out;
}

// ---------------------------------------------------------------------------
// 8. feature_diff sanity
// ---------------------------------------------------------------------------

Outcome criterion_8() {
    Outcome out{8, true, false, ""};
    Rng rng(0x888);
    SetMixerModel model = SetMixerModel::init(desk_config(), 88);
    const PointCloud clean = random_cloud(rng, 120);

    const auto zero_rows = feature_diff(model, clean, clean, 1);
    for (const auto& row : zero_rows)
        if (row.magnitude != 0.0) out.pass = false;

    PointCloud moved = clean;
    const std::size_t target = 23;
    moved.coords(target, 0) -= 0.45;
    moved.coords(target, 2) += 0.45;

    ForwardProbe probe;
    model.logits_probed(clean, &probe);
    const GroupIndex& level1 = probe.level_groups[0];
    const auto rows = feature_diff(model, clean, moved, 1);
    std::size_t containing = 0, nonzero_outside = 0;
    double max_inside = 0.0;
    for (std::size_t s = 0; s < level1.set_count; ++s) {
        bool contains = false;
        for (std::size_t j = 0; j < level1.neighbor_count; ++j)
            if (level1.member(s, j) == target) contains = true;
        if (contains) {
            ++containing;
            max_inside = std::max(max_inside, rows[s].magnitude);
        } else if (rows[s].magnitude != 0.0) {
            ++nonzero_outside;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "identical inputs all-zero; %zu sets contain the moved point "
                  "(max magnitude %.3e), %zu nonzero outside",
                  containing, max_inside, nonzero_outside);
    out.detail = buf;
    if (containing == 0 || nonzero_outside != 0 || max_inside <= 0.0) out.pass = false;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    auto want = [&](int c) { return selected.empty() || selected.count(c) > 0; };

    const char* names[] = {"",
                           "Metric arithmetic replay (RmCE on published ERs)",
                           "Permutation invariance (200 clouds, <1e-9)",
                           "Gradient verification (full desk model, <1e-4)",
                           "Oracle equivalence (fps/knn/sorts/mixer, 1000x)",
                           "Desk-scale robustness ordering (trained models)",
                           "Spatial-center ablation direction",
                           "Corruption contracts",
                           "feature_diff sanity"};
    Outcome (*runners[])() = {nullptr,     criterion_1, criterion_2,
                              criterion_3, criterion_4, criterion_5,
                              criterion_6, criterion_7, criterion_8};

    int failures = 0;
    for (int c = 1; c <= 8; ++c) {
        if (!want(c)) continue;
        const double t0 = now_seconds();
        Outcome out;
        try {
            out = runners[c]();
        } catch (const std::exception& e) {
            out = {c, false, false, std::string("exception: ") + e.what(), 0.0};
        }
        out.seconds = now_seconds() - t0;
        const char* verdict = out.pass ? (out.inconclusive ? "PASS (inconclusive)" : "PASS")
                                       : "FAIL";
        std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", verdict, c, names[c],
                    out.detail.c_str(), out.seconds);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
