#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "setmix/corrupt.hpp"
#include "setmix/io.hpp"
#include "setmix/metrics.hpp"
#include "setmix/verify.hpp"

using namespace setmix;

TEST_CASE("error_rate basics") {
    CHECK(error_rate({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(error_rate({1, 0, 3, 0}, {1, 2, 3, 4}) == 0.5);
    CHECK_THROWS_AS(error_rate({1}, {1, 2}), ShapeMismatchError);
}

TEST_CASE("class-wise mean error rate on a skewed split") {
    // class 0: 3 samples, 1 wrong (er 1/3); class 1: 1 sample, 1 wrong (er 1)
    const std::vector<int> labels{0, 0, 0, 1};
    const std::vector<int> preds{0, 0, 1, 0};
    CHECK(mean_class_error_rate(preds, labels) == doctest::Approx((1.0 / 3 + 1.0) / 2));
    CHECK(error_rate(preds, labels) == doctest::Approx(0.5));
}

TEST_CASE("rmce reproduces the published column from published ERs") {
    // baselines: PointNet++ clean 7.0, noise 21.5
    CHECK(std::abs(rmce(0.100, 0.081, 0.215, 0.070) - 0.13) <= 0.01);  // Set-Mixer-APS
    CHECK(std::abs(rmce(0.327, 0.093, 0.215, 0.070) - 1.62) <= 0.01);  // PointNet
    CHECK(std::abs(rmce(0.215, 0.070, 0.215, 0.070) - 1.00) <= 1e-12); // PointNet++
    CHECK(std::abs(rmce(0.281, 0.071, 0.215, 0.070) - 1.45) <= 0.01);  // PCT
    CHECK(rmce(0.3, 0.3, 0.215, 0.070) == 0.0);
    CHECK_THROWS_AS(rmce(0.1, 0.2, 0.5, 0.5), DegenerateBaselineError);
}

TEST_CASE("rmce is linear in er_noise with slope 1/(bm_noise - bm_clean)") {
    const double slope = 1.0 / (0.215 - 0.070);
    const double base = rmce(0.10, 0.08, 0.215, 0.070);
    for (double delta : {0.01, 0.05, 0.2})
        CHECK(rmce(0.10 + delta, 0.08, 0.215, 0.070) ==
              doctest::Approx(base + slope * delta).epsilon(1e-12));
}

namespace {

std::vector<PointCloud> balanced_set(Rng& rng, std::size_t per_class, int classes,
                                     std::size_t n_points) {
    std::vector<PointCloud> out;
    for (int c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            PointCloud cloud = random_cloud(rng, n_points);
            cloud.label = c;
            out.push_back(std::move(cloud));
        }
    return out;
}

}  // namespace

TEST_CASE("benchmark with a constant-prediction model on a balanced set") {
    Rng rng(1);
    const int classes = 4;
    const auto clean = balanced_set(rng, 6, classes, 64);
    std::vector<CorruptedSet> cells;
    for (int sev = 1; sev <= 5; ++sev) {
        CorruptedSet cell;
        cell.kind = CorruptionKind::uniform;
        cell.severity = sev;
        for (std::size_t i = 0; i < clean.size(); ++i)
            cell.clouds.push_back(corrupt(clean[i], {CorruptionKind::uniform, sev, i}));
        cells.push_back(std::move(cell));
    }
    const Classifier constant = [](const PointCloud&) { return 0; };
    const MetricsReport report = benchmark(constant, clean, cells);
    const double expected = 1.0 - 1.0 / classes;
    CHECK(report.er_clean == doctest::Approx(expected));
    for (const auto& [kind, per_sev] : report.er_by)
        for (const auto& [sev, er] : per_sev) CHECK(er == doctest::Approx(expected));
    CHECK(report.er_noise == doctest::Approx(expected));
    CHECK(report.er_5 == doctest::Approx(expected));

    // internal consistency: er_noise recomputable bit-exactly from the cells
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [kind, per_sev] : report.er_by)
        for (const auto& [sev, er] : per_sev) {
            sum += er;
            ++n;
        }
    CHECK(report.er_noise == sum / static_cast<double>(n));
}

TEST_CASE("benchmark text table and JSON schema") {
    Rng rng(2);
    const auto clean = balanced_set(rng, 4, 2, 64);
    const Classifier coin = [](const PointCloud& c) {
        return static_cast<int>(c.coords(0, 0) > 0.0);
    };
    const MetricsReport report = benchmark(coin, clean, {});
    const std::string table = render_table(report, "coin");
    CHECK(table.find("ER_clean") != std::string::npos);
    CHECK(table.find("Bg.") != std::string::npos);
    CHECK(table.find("coin") != std::string::npos);

    const json j = to_json(report);
    CHECK(j.at("schema") == "setmix-metrics-1");
    CHECK(j.at("baseline_constants").at("bm_noise") == doctest::Approx(0.215));
}

TEST_CASE("feature_diff: identical inputs give all-zero magnitudes") {
    Rng rng(3);
    SetMixerModel model = SetMixerModel::init(desk_config(), 21);
    const PointCloud cloud = random_cloud(rng, 96);
    for (std::size_t level = 1; level <= 3; ++level) {
        const auto rows = feature_diff(model, cloud, cloud, level);
        for (const auto& row : rows) CHECK(row.magnitude == 0.0);
    }
}

TEST_CASE("feature_diff: single moved point affects only sets containing it") {
    Rng rng(4);
    SetMixerModel model = SetMixerModel::init(desk_config(), 22);
    const PointCloud clean = random_cloud(rng, 96);
    PointCloud corrupted = clean;
    const std::size_t moved = 17;
    corrupted.coords(moved, 0) += 0.45;
    corrupted.coords(moved, 1) -= 0.45;
    corrupted.coords(moved, 2) += 0.45;

    ForwardProbe probe;
    model.logits_probed(clean, &probe);
    const GroupIndex& level1 = probe.level_groups[0];

    const auto rows = feature_diff(model, clean, corrupted, 1);
    REQUIRE(rows.size() == level1.set_count);
    std::size_t touched = 0;
    for (std::size_t s = 0; s < level1.set_count; ++s) {
        bool contains = false;
        for (std::size_t j = 0; j < level1.neighbor_count; ++j)
            if (level1.member(s, j) == moved) contains = true;
        if (contains) {
            ++touched;
        } else {
            CHECK(rows[s].magnitude == 0.0);
        }
    }
    CHECK(touched > 0);
    double max_mag = 0.0;
    for (const auto& row : rows) max_mag = std::max(max_mag, row.magnitude);
    CHECK(max_mag > 0.0);
}

TEST_CASE("feature_diff rejects count-changing corruptions") {
    Rng rng(5);
    SetMixerModel model = SetMixerModel::init(desk_config(), 23);
    const PointCloud clean = random_cloud(rng, 96);
    const PointCloud bigger = corrupt(clean, {CorruptionKind::background, 2, 1});
    CHECK_THROWS_AS(feature_diff(model, clean, bigger, 1), CountMismatchError);
}

TEST_CASE("feature_diff CSV export") {
    const std::vector<FeatureDiffRow> rows{{0, {0.1, 0.2, 0.3}, 1.5}, {1, {0, 0, 0}, 0.0}};
    const std::string csv = feature_diff_csv(rows);
    CHECK(csv.rfind("set_index,cx,cy,cz,magnitude\n", 0) == 0);
    CHECK(csv.find("1.5") != std::string::npos);
}
