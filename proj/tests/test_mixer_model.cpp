#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "setmix/model.hpp"
#include "setmix/verify.hpp"

using namespace setmix;

namespace {

MixerParams random_mixer(Rng& rng, std::size_t k, std::size_t c_in, std::size_t n_sort,
                         std::size_t d, bool with_norm) {
    MixerParams p;
    p.k = k;
    p.c_in = c_in;
    p.n_sort = n_sort;
    auto fc = [&](std::size_t out, std::size_t in, Activation act) {
        FcLayer l;
        l.weight = oracle::random_matrix(rng, out, in);
        l.bias = oracle::random_matrix(rng, 1, out);
        l.activation = act;
        return l;
    };
    p.m_layers = {fc(k, k, Activation::relu), fc(k, k, Activation::relu),
                  fc(d, k, Activation::relu)};
    p.r_layer = fc(2 * c_in, d * n_sort * c_in, Activation::none);
    if (with_norm) {
        p.norm = NormLayer::make(NormKind::layer_norm, n_sort * c_in);
        p.norm.gain = oracle::random_matrix(rng, 1, n_sort * c_in);
        p.norm.shift = oracle::random_matrix(rng, 1, n_sort * c_in);
    }
    return p;
}

}  // namespace

TEST_CASE("mixer_aggregate identity composition reproduces its input") {
    MixerParams p;
    p.k = 2;
    p.c_in = 1;
    p.n_sort = 1;
    p.m_layers = {FcLayer::identity(2), FcLayer::identity(2), FcLayer::identity(2)};
    p.r_layer = FcLayer::identity(2);
    const Matrix ordered{{0.7}, {-1.3}};
    const auto out = mixer_aggregate(ordered, p);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(-1.3).epsilon(1e-15));
}

TEST_CASE("mixer_aggregate output equals input after plan-consistent permutation") {
    Rng rng(1);
    const std::size_t k = 8, c = 4;
    MixerParams p = random_mixer(rng, k, c, 3, 2, true);
    const Matrix pts = oracle::random_points(rng, k);
    const Matrix feats = oracle::random_matrix(rng, k, c);
    const SortPlan plan = SortPlan::aps_xyz();

    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    rng.shuffle(perm);
    Matrix pts2(k, 3), feats2(k, c);
    for (std::size_t i = 0; i < k; ++i) {
        pts2.set_row_vec3(i, pts.row_vec3(perm[i]));
        for (std::size_t j = 0; j < c; ++j) feats2(i, j) = feats(perm[i], j);
    }
    const auto a = mixer_aggregate(ordered_features(pts, feats, plan), p);
    const auto b = mixer_aggregate(ordered_features(pts2, feats2, plan), p);
    CHECK(a == b);  // bit-identical: the ordered matrices are equal
}

TEST_CASE("mixer_aggregate matches the straight-line reference implementation") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.below(15);
        const std::size_t c = 1 + rng.below(9);
        const std::size_t n_sort = 1 + rng.below(3);
        const std::size_t d = 1 + rng.below(5);
        MixerParams p = random_mixer(rng, k, c, n_sort, d, trial % 2 == 0);
        const Matrix ordered = oracle::random_matrix(rng, k, n_sort * c);
        const auto got = mixer_aggregate(ordered, p);
        const auto ref = oracle::mixer_reference(ordered, p);
        REQUIRE(got.size() == ref.size());
        REQUIRE(got.size() == 2 * c);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("pool_aggregate") {
    const Matrix feats{{1, 5}, {3, 2}};
    CHECK(pool_aggregate(feats, PoolKind::max) == std::vector<double>{3, 5});
    CHECK(pool_aggregate(feats, PoolKind::mean) == std::vector<double>{2, 3.5});

    Rng rng(3);
    const Matrix big = oracle::random_matrix(rng, 20, 7);
    const auto mx = pool_aggregate(big, PoolKind::max);
    const auto mn = pool_aggregate(big, PoolKind::mean);
    for (std::size_t j = 0; j < 7; ++j) {
        double m = big(0, j), s = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            m = std::max(m, big(i, j));
            s += big(i, j);
        }
        CHECK(mx[j] == m);
        CHECK(mn[j] == doctest::Approx(s / 20).epsilon(1e-12));
    }
}

namespace {

ModelConfig tiny_maxpool_config(std::size_t k) {
    ModelConfig cfg;
    SaLayerConfig sa;
    sa.m_sets = 1;
    sa.k = k;
    sa.t_channels = {8};
    sa.aggregator.kind = AggregatorKind::max_pool;
    cfg.sa_layers.push_back(sa);
    cfg.head = HeadConfig{{}, {}, 4};
    return cfg;
}

}  // namespace

TEST_CASE("single SA layer with max_pool reduces to a PointNet-style global max") {
    Rng rng(4);
    const std::size_t n = 24;
    SetMixerModel model = SetMixerModel::init(tiny_maxpool_config(n), 7);
    PointCloud cloud;
    cloud.coords = oracle::random_points(rng, n);

    ForwardProbe probe;
    model.logits_probed(cloud, &probe);
    REQUIRE(probe.level_feats.size() == 1);
    const Matrix& global_feat = probe.level_feats[0];
    REQUIRE(global_feat.rows() == 1);
    REQUIRE(global_feat.cols() == 8);

    // expected: column-wise max of relu(bn_eval(x W^T + b)) over all points,
    // with freshly initialized running stats (mean 0, var 1)
    const Parameter* w = model.params().find("sa1.t1.w");
    const Parameter* b = model.params().find("sa1.t1.b");
    REQUIRE(w != nullptr);
    const double bn_scale = 1.0 / std::sqrt(1.0 + 1e-5);
    std::vector<double> expect(8, -1e300);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = cloud.coords.row_vec3(i);
        for (std::size_t j = 0; j < 8; ++j) {
            double y = b->value(0, j);
            y += w->value(j, 0) * p.x + w->value(j, 1) * p.y + w->value(j, 2) * p.z;
            y *= bn_scale;
            if (y < 0) y = 0;
            expect[j] = std::max(expect[j], y);
        }
    }
    for (std::size_t j = 0; j < 8; ++j)
        CHECK(global_feat(0, j) == doctest::Approx(expect[j]).epsilon(1e-12));
}

TEST_CASE("duplicating every point leaves the max_pool feature unchanged") {
    Rng rng(5);
    const std::size_t n = 20;
    PointCloud cloud;
    cloud.coords = oracle::random_points(rng, n);
    PointCloud doubled;
    doubled.coords = Matrix(2 * n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        doubled.coords.set_row_vec3(2 * i, cloud.coords.row_vec3(i));
        doubled.coords.set_row_vec3(2 * i + 1, cloud.coords.row_vec3(i));
    }

    SetMixerModel a = SetMixerModel::init(tiny_maxpool_config(n), 7);
    SetMixerModel b = SetMixerModel::init(tiny_maxpool_config(2 * n), 7);
    // max_pool carries no k-dependent parameters; share the weights
    for (Parameter* p : a.params().all()) b.params().find(p->name)->value = p->value;

    const Matrix la = a.logits(cloud);
    const Matrix lb = b.logits(doubled);
    for (std::size_t j = 0; j < la.cols(); ++j)
        CHECK(la(0, j) == doctest::Approx(lb(0, j)).epsilon(1e-12));
}

TEST_CASE("desk model logits are permutation invariant in eval mode") {
    Rng rng(6);
    SetMixerModel model = SetMixerModel::init(desk_config(), 11);
    for (int trial = 0; trial < 5; ++trial) {
        PointCloud cloud = random_cloud(rng, 96);
        std::vector<std::size_t> perm(96);
        for (std::size_t i = 0; i < 96; ++i) perm[i] = i;
        rng.shuffle(perm);
        PointCloud shuffled;
        shuffled.coords = Matrix(96, 3);
        for (std::size_t i = 0; i < 96; ++i)
            shuffled.coords.set_row_vec3(i, cloud.coords.row_vec3(perm[i]));
        const Matrix a = model.logits(cloud);
        const Matrix b = model.logits(shuffled);
        for (std::size_t j = 0; j < a.cols(); ++j)
            CHECK(std::abs(a(0, j) - b(0, j)) < 1e-12);
    }
}

TEST_CASE("desk config stays under 1e5 parameters; channel doubling holds") {
    SetMixerModel model = SetMixerModel::init(desk_config(), 1);
    CHECK(model.parameter_count() < 100000);

    Rng rng(7);
    PointCloud cloud = random_cloud(rng, 96);
    ForwardProbe probe;
    const Matrix logits = model.logits_probed(cloud, &probe);
    CHECK(logits.cols() == 8);
    REQUIRE(probe.level_feats.size() == 3);
    // 2*c_in contract per level: 16 -> 32, 32 -> 64, 64 -> 128
    CHECK(probe.level_feats[0].cols() == 32);
    CHECK(probe.level_feats[1].cols() == 64);
    CHECK(probe.level_feats[2].cols() == 128);
    CHECK(probe.level_feats[0].rows() == 64);
    CHECK(probe.level_feats[1].rows() == 16);
    CHECK(probe.level_feats[2].rows() == 1);
}

TEST_CASE("untrained desk model: mean loss over random labels is ~ln(K)") {
    Rng rng(8);
    SetMixerModel model = SetMixerModel::init(desk_config(), 3);
    double total = 0.0;
    const int trials = 48;
    for (int t = 0; t < trials; ++t) {
        const PointCloud cloud = random_cloud(rng, 96);
        const Matrix logits = model.logits(cloud);
        const auto [loss, grad] =
            softmax_xent(logits, {static_cast<int>(rng.below(8))});
        total += loss;
    }
    const double mean = total / trials;
    CHECK(mean == doctest::Approx(std::log(8.0)).epsilon(0.10));
}

TEST_CASE("canonical config builds and produces 40 finite logits on 1024 points") {
    const ModelConfig cfg = canonical_config();
    CHECK(cfg.sa_layers[0].m_sets == 512);
    CHECK(cfg.sa_layers[2].t_channels == std::vector<std::size_t>{256, 512, 512});
    CHECK(cfg.global_feature_channels() == 1024);

    SetMixerModel model = SetMixerModel::init(cfg, 5);
    Rng rng(9);
    const PointCloud cloud = random_cloud(rng, 1024);
    const Matrix logits = model.logits(cloud);
    REQUIRE(logits.cols() == 40);
    CHECK(logits.all_finite());
}

TEST_CASE("ablation variants build and run") {
    Rng rng(10);
    const PointCloud cloud = random_cloud(rng, 96);
    for (AggregatorKind kind : {AggregatorKind::max_pool, AggregatorKind::mean_pool,
                                AggregatorKind::mixer_no_sort}) {
        SetMixerModel model = SetMixerModel::init(with_aggregator(desk_config(), kind), 2);
        CHECK(model.logits(cloud).all_finite());
    }
    SetMixerModel query =
        SetMixerModel::init(with_center_mode(desk_config(), CenterMode::query_point), 2);
    CHECK(query.logits(cloud).all_finite());
    SetMixerModel no_ln = SetMixerModel::init(with_mixer_norm(desk_config(), NormKind::none), 2);
    CHECK(no_ln.logits(cloud).all_finite());

    ModelConfig legacy = with_aggregator(desk_config(), AggregatorKind::max_pool);
    for (auto& sa : legacy.sa_layers) sa.legacy_centering = true;
    SetMixerModel legacy_model = SetMixerModel::init(legacy, 2);
    CHECK(legacy_model.logits(cloud).all_finite());
}

TEST_CASE("mixer_no_sort has the same parameter count as set_mixer") {
    SetMixerModel sorted = SetMixerModel::init(desk_config(), 1);
    SetMixerModel unsorted =
        SetMixerModel::init(with_aggregator(desk_config(), AggregatorKind::mixer_no_sort), 1);
    CHECK(sorted.parameter_count() == unsorted.parameter_count());
}

TEST_CASE("gradcheck: full mixer block (layer norm on, dropout off)") {
    Rng rng(11);
    const std::size_t k = 6, c = 3, n_sort = 2, d = 2;
    ParamStore store;
    MixerParamRefs refs;
    refs.ln_gain = &store.add("ln.g", Matrix(1, n_sort * c, 1.0));
    refs.ln_shift = &store.add("ln.s", Matrix(1, n_sort * c));
    for (std::size_t j = 0; j < 3; ++j) {
        const std::size_t out = j == 2 ? d : k;
        refs.m_w[j] = &store.add("m" + std::to_string(j) + ".w",
                                 oracle::random_matrix(rng, out, k));
        refs.m_b[j] =
            &store.add("m" + std::to_string(j) + ".b", oracle::random_matrix(rng, 1, out));
    }
    refs.r_w = &store.add("r.w", oracle::random_matrix(rng, 2 * c, d * n_sort * c));
    refs.r_b = &store.add("r.b", oracle::random_matrix(rng, 1, 2 * c));

    const Matrix ordered = oracle::random_matrix(rng, 2 * k, n_sort * c);  // two blocks
    const Matrix target = oracle::random_matrix(rng, 2, 2 * c);
    auto loss_fn = [&](bool grads) {
        Graph g(grads);
        MixerRunOptions opt;  // eval; dropout off
        const auto out = build_mixer_tail(g, g.constant(ordered), 2, k, refs, opt);
        const auto loss = g.sum_squared_error(out, target);
        if (grads) {
            store.zero_grads();
            g.backward(loss);
        }
        return g.scalar(loss);
    };
    GradcheckOptions opt;
    opt.max_coords_per_param = 0;
    const auto report = gradcheck(
        store.all(), [&] { return loss_fn(true); }, [&] { return loss_fn(false); }, opt);
    CHECK(report.max_rel_err < 1e-4);
}
