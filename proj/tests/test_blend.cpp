#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "ulab/blend.hpp"
#include "ulab/mathfn.hpp"

using namespace ulab;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed, double spread = 2.0) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(n, d);
    for (double& v : t.values) v = rng.normal() * spread;
    return t;
}

}  // namespace

TEST_CASE("blend_image is the normalized weighted row average") {
    Tensor images({3, 2}, {1.0, 0.0, 0.0, 1.0, 2.0, 2.0});
    BlendWeights w;
    w.raw = {softplus_inv(1.0), softplus_inv(1.0), softplus_inv(2.0)};
    Tensor img = blend_image(images, w);
    REQUIRE(img.shape == std::vector<std::size_t>{1, 2});
    CHECK(img.values[0] == doctest::Approx((1.0 + 0.0 + 4.0) / 4.0).epsilon(1e-12));
    CHECK(img.values[1] == doctest::Approx((0.0 + 1.0 + 4.0) / 4.0).epsilon(1e-12));

    // Equal weights give the plain mean, and the blend always stays inside
    // the coordinatewise hull of its members.
    BlendWeights eq;
    eq.raw.assign(3, softplus_inv(1.0));
    Tensor mean = blend_image(images, eq);
    CHECK(mean.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < 2; ++j) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < 3; ++i) {
            lo = std::min(lo, images.at(i, j));
            hi = std::max(hi, images.at(i, j));
        }
        CHECK(img.values[j] >= lo - 1e-12);
        CHECK(img.values[j] <= hi + 1e-12);
    }

    BlendWeights bad;
    bad.raw = {0.0, 0.0};
    CHECK_THROWS_AS(blend_image(images, bad), InputError);
}

TEST_CASE("blend loss is zero when the blend already has the mean features") {
    // A single member: the blend equals that member, so its features equal
    // the cluster mean features exactly.
    Tensor one = random_rows(1, 4, 8);
    std::vector<Mlp> pool = sample_pool(4, 3, 5);
    BlendWeights w;
    w.raw = {softplus_inv(1.0)};
    CHECK(blend_loss(w, one, pool) == doctest::Approx(0.0).epsilon(1e-18));

    // With several distinct members the mismatch is strictly positive.
    Tensor many = random_rows(6, 4, 9);
    BlendWeights weq;
    weq.raw.assign(6, softplus_inv(1.0));
    CHECK(blend_loss(weq, many, pool) > 0.0);
}

TEST_CASE("optimizing the blend never worsens the pool loss") {
    Tensor images = random_rows(8, 5, 21);
    std::vector<Mlp> pool = sample_pool(5, 4, 33);
    BlendConfig cfg;
    cfg.steps = 60;
    cfg.seed = 3;

    BlendWeights w = optimize_blend(images, cfg, pool);
    REQUIRE(w.raw.size() == 8);
    CHECK(w.final_loss <= w.initial_loss);
    CHECK(w.final_loss == doctest::Approx(blend_loss(w, images, pool)).epsilon(1e-12));
    CHECK(w.final_loss < w.initial_loss);  // this instance actually moves

    // omega() is positive and matches softplus of the raw values.
    std::vector<double> om = w.omega();
    for (std::size_t i = 0; i < om.size(); ++i) {
        CHECK(om[i] > 0.0);
        CHECK(om[i] == doctest::Approx(softplus(w.raw[i])).epsilon(1e-15));
    }

    // Determinism and the zero-step baseline.
    BlendWeights again = optimize_blend(images, cfg, pool);
    CHECK(again.raw == w.raw);
    BlendConfig none = cfg;
    none.steps = 0;
    BlendWeights frozen = optimize_blend(images, none, pool);
    CHECK(frozen.final_loss == frozen.initial_loss);
}

TEST_CASE("per-step extractor resampling still descends on the fixed pool") {
    Tensor images = random_rows(10, 4, 55);
    std::vector<Mlp> pool = sample_pool(4, 4, 66);
    BlendConfig cfg;
    cfg.steps = 40;
    cfg.resample_pool = true;
    cfg.seed = 12;
    BlendWeights w = optimize_blend(images, cfg, pool);
    CHECK(w.final_loss <= w.initial_loss);

    // The resampled trajectory differs from the fixed-pool one.
    BlendConfig fixed = cfg;
    fixed.resample_pool = false;
    CHECK(optimize_blend(images, fixed, pool).raw != w.raw);
}

TEST_CASE("condensing free clusters yields one labeled prototype each") {
    Dataset ds = gen_gaussian_classes(3, 20, 4, 10.0, 17);
    Partition part = partition_dataset(ds, sample_extractor(4, 1), 2, 44);
    // Forget three samples of class 0 to touch at least one cluster.
    std::vector<std::size_t> forget;
    for (std::size_t id : ds.train_ids())
        if (ds.y[id] == 0 && forget.size() < 3) forget.push_back(id);
    SplitResult sr = sample_F(part, forget);
    REQUIRE(!sr.free_cluster_ids.empty());

    BlendConfig cfg;
    cfg.steps = 15;
    cfg.seed = 8;
    CondensedSet cs = condense_free(part, sr, ds, cfg);
    REQUIRE(cs.prototypes.size() == sr.free_cluster_ids.size());

    std::set<std::size_t> free_set(sr.free_cluster_ids.begin(), sr.free_cluster_ids.end());
    for (const Prototype& p : cs.prototypes) {
        CHECK(free_set.count(p.cluster_id));
        CHECK(p.label == part.clusters[p.cluster_id].class_label);
        CHECK(p.image.rows() == 1);
        CHECK(p.image.cols() == 4);
        CHECK(p.weights.raw.size() == part.clusters[p.cluster_id].member_ids.size());
        CHECK(p.weights.final_loss <= p.weights.initial_loss);
    }

    // Parallel per-cluster optimization is reproducible.
    CondensedSet rerun = condense_free(part, sr, ds, cfg);
    REQUIRE(rerun.prototypes.size() == cs.prototypes.size());
    for (std::size_t i = 0; i < cs.prototypes.size(); ++i)
        CHECK(rerun.prototypes[i].image.values == cs.prototypes[i].image.values);
}

TEST_CASE("reduced retain stacks prototypes before residual rows") {
    Dataset ds = gen_gaussian_classes(2, 15, 3, 10.0, 23);
    Partition part = partition_dataset(ds, sample_extractor(3, 2), 3, 7);
    std::vector<std::size_t> forget{ds.train_ids()[0]};
    SplitResult sr = sample_F(part, forget);

    BlendConfig cfg;
    cfg.steps = 5;
    cfg.seed = 1;
    CondensedSet cs = condense_free(part, sr, ds, cfg);
    Batch reduced = build_reduced_retain(cs, sr.residual_image_ids, forget, ds);
    REQUIRE(reduced.size() == cs.prototypes.size() + sr.residual_image_ids.size());

    for (std::size_t i = 0; i < cs.prototypes.size(); ++i) {
        CHECK(reduced.y[i] == cs.prototypes[i].label);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(reduced.x.at(i, j) == cs.prototypes[i].image.values[j]);
    }
    for (std::size_t r = 0; r < sr.residual_image_ids.size(); ++r) {
        std::size_t row = cs.prototypes.size() + r;
        std::size_t id = sr.residual_image_ids[r];
        CHECK(reduced.y[row] == ds.y[id]);
        for (std::size_t j = 0; j < 3; ++j) CHECK(reduced.x.at(row, j) == ds.x.at(id, j));
    }

    // Forget ids hiding in the residual list are flagged, not trained on.
    CHECK_THROWS_AS(build_reduced_retain(cs, forget, forget, ds), ConsistencyError);
}

TEST_CASE("condensed sets survive the text round trip") {
    Dataset ds = gen_gaussian_classes(2, 10, 3, 10.0, 29);
    Partition part = partition_dataset(ds, sample_extractor(3, 3), 2, 11);
    SplitResult sr = sample_F(part, {ds.train_ids()[2]});
    BlendConfig cfg;
    cfg.steps = 4;
    CondensedSet cs = condense_free(part, sr, ds, cfg);

    const char* path = "/tmp/ulab_test_condensed.json";
    save_condensed(cs, path);
    CondensedSet back = load_condensed(path);
    REQUIRE(back.prototypes.size() == cs.prototypes.size());
    for (std::size_t i = 0; i < cs.prototypes.size(); ++i) {
        CHECK(back.prototypes[i].image.values == cs.prototypes[i].image.values);
        CHECK(back.prototypes[i].label == cs.prototypes[i].label);
        CHECK(back.prototypes[i].cluster_id == cs.prototypes[i].cluster_id);
        CHECK(back.prototypes[i].weights.raw == cs.prototypes[i].weights.raw);
    }
    std::remove(path);
}
