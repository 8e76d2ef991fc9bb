#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "setmix/corrupt.hpp"
#include "setmix/verify.hpp"

using namespace setmix;

namespace {

PointCloud unit_cloud(Rng& rng, std::size_t n) { return random_cloud(rng, n); }

double mean_displacement(const PointCloud& a, const PointCloud& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += (a.coords.row_vec3(i) - b.coords.row_vec3(i)).norm();
    return sum / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("corrupt is deterministic given (cloud, spec)") {
    Rng rng(1);
    const PointCloud cloud = unit_cloud(rng, 256);
    for (CorruptionKind kind : all_corruption_kinds()) {
        CorruptionSpec spec{kind, 3, 12345};
        const PointCloud a = corrupt(cloud, spec);
        const PointCloud b = corrupt(cloud, spec);
        CHECK(a.coords == b.coords);
        CHECK(a.label == b.label);
    }
}

TEST_CASE("uniform severity 5 stays within the +-0.05 bound, N preserved") {
    Rng rng(2);
    const PointCloud cloud = unit_cloud(rng, 512);
    const PointCloud out = corrupt(cloud, {CorruptionKind::uniform, 5, 7});
    REQUIRE(out.size() == 512);
    for (std::size_t i = 0; i < 512; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(std::abs(out.coords(i, c) - cloud.coords(i, c)) <= 0.05);
}

TEST_CASE("impulse: exact count moved, rest bit-identical") {
    Rng rng(3);
    const PointCloud cloud = unit_cloud(rng, 1024);
    const PointCloud out = corrupt(cloud, {CorruptionKind::impulse, 3, 99});
    REQUIRE(out.size() == 1024);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < 1024; ++i) {
        const bool same = cloud.coords.row_vec3(i) == out.coords.row_vec3(i);
        if (!same) ++moved;
    }
    CHECK(moved == 102);  // floor(1024*3/30)
    CHECK(1024 - moved == 922);
    // displaced coordinates moved by exactly +-0.3*(1 + 0.25*2) = +-0.45
    for (std::size_t i = 0; i < 1024; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = out.coords(i, c) - cloud.coords(i, c);
            if (d != 0.0) CHECK(std::abs(d) == doctest::Approx(0.45).epsilon(1e-12));
        }
    }
}

TEST_CASE("upsampling appends jittered copies of existing points") {
    Rng rng(4);
    const PointCloud cloud = unit_cloud(rng, 200);
    const PointCloud out = corrupt(cloud, {CorruptionKind::upsampling, 4, 5});
    REQUIRE(out.size() == 200 + 80);  // floor(200*4/10)
    for (std::size_t i = 0; i < 200; ++i)
        CHECK(cloud.coords.row_vec3(i) == out.coords.row_vec3(i));
    for (std::size_t e = 200; e < out.size(); ++e) {
        // within the jitter cube of at least one original point
        bool near = false;
        for (std::size_t i = 0; i < 200 && !near; ++i) {
            const Vec3 d = out.coords.row_vec3(e) - cloud.coords.row_vec3(i);
            near = std::abs(d.x) <= 0.05 && std::abs(d.y) <= 0.05 && std::abs(d.z) <= 0.05;
        }
        CHECK(near);
    }
}

TEST_CASE("background appends uniform cube points") {
    Rng rng(5);
    const PointCloud cloud = unit_cloud(rng, 150);
    const PointCloud out = corrupt(cloud, {CorruptionKind::background, 5, 5});
    REQUIRE(out.size() == 150 + 75);
    for (std::size_t e = 150; e < out.size(); ++e) {
        const Vec3 p = out.coords.row_vec3(e);
        CHECK(std::abs(p.x) <= 1.0);
        CHECK(std::abs(p.y) <= 1.0);
        CHECK(std::abs(p.z) <= 1.0);
    }
}

TEST_CASE("corrupt refuses un-normalized clouds") {
    PointCloud big;
    big.coords = Matrix{{3, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(corrupt(big, {CorruptionKind::uniform, 1, 0}), NotNormalizedError);
}

TEST_CASE("severity out of range rejected") {
    Rng rng(6);
    const PointCloud cloud = unit_cloud(rng, 64);
    CHECK_THROWS_AS(corrupt(cloud, {CorruptionKind::uniform, 0, 0}), Error);
    CHECK_THROWS_AS(corrupt(cloud, {CorruptionKind::uniform, 6, 0}), Error);
}

TEST_CASE("corruption_suite: 25 cells with the contracted counts") {
    Rng rng(7);
    const PointCloud cloud = unit_cloud(rng, 300);
    const auto cells = corruption_suite(cloud, 42, 3);
    REQUIRE(cells.size() == 25);
    for (const auto& cell : cells) {
        switch (cell.spec.kind) {
            case CorruptionKind::uniform:
            case CorruptionKind::gaussian:
            case CorruptionKind::impulse:
                CHECK(cell.cloud.size() == 300);
                break;
            case CorruptionKind::upsampling:
            case CorruptionKind::background:
                CHECK(cell.cloud.size() == 300 + append_count(300, cell.spec.severity));
                break;
        }
        if (cell.spec.kind == CorruptionKind::background) {
            for (std::size_t e = 300; e < cell.cloud.size(); ++e) {
                const Vec3 p = cell.cloud.coords.row_vec3(e);
                CHECK((std::abs(p.x) <= 1 && std::abs(p.y) <= 1 && std::abs(p.z) <= 1));
            }
        }
    }
    // distinct severities get distinct seeds -> distinct clouds
    CHECK(!(cells[0].cloud.coords == cells[1].cloud.coords));
}

TEST_CASE("mean displacement is non-decreasing in severity (uniform, gaussian)") {
    Rng rng(8);
    const PointCloud cloud = unit_cloud(rng, 1000);
    for (CorruptionKind kind : {CorruptionKind::uniform, CorruptionKind::gaussian}) {
        double prev = 0.0;
        for (int sev = 1; sev <= 5; ++sev) {
            const PointCloud out = corrupt(cloud, {kind, sev, 77});
            const double mean = mean_displacement(cloud, out);
            CHECK(mean >= prev);
            prev = mean;
        }
    }
}
