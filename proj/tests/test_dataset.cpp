#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ulab/dataset.hpp"

using namespace ulab;

namespace {

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

bool disjoint(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    for (std::size_t x : a)
        if (b.count(x)) return false;
    return true;
}

std::string temp_path(const char* name) { return std::string("/tmp/ulab_test_") + name; }

void corrupt_byte(const std::string& path, long offset, char value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    REQUIRE(f.good());
    f.seekp(offset);
    f.put(value);
}

}  // namespace

TEST_CASE("generated gaussian classes have the documented layout") {
    Dataset ds = gen_gaussian_classes(4, 50, 6, 20.0, 123);
    CHECK(ds.size() == 200);
    CHECK(ds.dim() == 6);
    CHECK(ds.class_count == 4);

    std::vector<std::size_t> train = ds.train_ids();
    std::vector<std::size_t> test = ds.test_ids();
    CHECK(train.size() == 160);  // 80% of each class
    CHECK(test.size() == 40);

    // Per-class counts: 40 train + 10 test each.
    std::vector<int> train_per_class(4, 0), test_per_class(4, 0);
    for (std::size_t id : train) ++train_per_class[static_cast<std::size_t>(ds.y[id])];
    for (std::size_t id : test) ++test_per_class[static_cast<std::size_t>(ds.y[id])];
    for (int c = 0; c < 4; ++c) {
        CHECK(train_per_class[static_cast<std::size_t>(c)] == 40);
        CHECK(test_per_class[static_cast<std::size_t>(c)] == 10);
    }

    // Means lie on a circle of radius 20 with neighbours 0.35 rad apart, so
    // pairwise distance is 40*sin(0.175*|a-b|). Empirical means of 50 draws
    // of unit noise wobble by roughly 2/sqrt(50) per coordinate.
    std::vector<std::vector<double>> means(4, std::vector<double>(6, 0.0));
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < 6; ++j)
            means[static_cast<std::size_t>(ds.y[i])][j] += ds.x.at(i, j) / 50.0;
    for (int a = 0; a < 4; ++a) {
        double radius = 0.0;
        for (double v : means[static_cast<std::size_t>(a)]) radius += v * v;
        CHECK(std::sqrt(radius) == doctest::Approx(20.0).epsilon(0.05));
        for (int b = a + 1; b < 4; ++b) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                double d = means[static_cast<std::size_t>(a)][j] -
                           means[static_cast<std::size_t>(b)][j];
                d2 += d * d;
            }
            double expect = 40.0 * std::sin(0.175 * (b - a));
            CHECK(std::sqrt(d2) == doctest::Approx(expect).epsilon(0.12));
        }
    }

    CHECK(gen_gaussian_classes(4, 50, 6, 20.0, 123).x.values == ds.x.values);
    CHECK(gen_gaussian_classes(4, 50, 6, 20.0, 124).x.values != ds.x.values);

    CHECK_THROWS_AS(gen_gaussian_classes(1, 50, 6, 20.0, 1), InputError);
    CHECK_THROWS_AS(gen_gaussian_classes(4, 0, 6, 20.0, 1), InputError);
}

TEST_CASE("forgetting a class splits train ids cleanly") {
    Dataset ds = gen_gaussian_classes(3, 40, 4, 15.0, 7);
    ForgetSpec spec;
    spec.mode = ForgetMode::RandomClass;
    spec.class_id = 1;
    Splits s = make_splits(ds, spec);

    auto retain = as_set(s.retain_ids);
    auto forget = as_set(s.forget_ids);
    CHECK(forget.size() == 32);  // the class's train share
    for (std::size_t id : forget) CHECK(ds.y[id] == 1);
    for (std::size_t id : retain) CHECK(ds.y[id] != 1);
    CHECK(disjoint(retain, forget));
    CHECK(retain.size() + forget.size() == ds.train_ids().size());

    // Both evaluation pools live in the test split and never overlap.
    auto t = as_set(s.t_ids);
    auto held = as_set(s.test_eval_ids);
    CHECK(disjoint(t, held));
    auto test = as_set(ds.test_ids());
    for (std::size_t id : s.t_ids) CHECK(test.count(id));
    for (std::size_t id : s.test_eval_ids) CHECK(test.count(id));
    CHECK(t.size() + held.size() == test.size());

    // The reference pool holds only test samples of the forgotten class, half
    // of them, with the other half folded into the holdout.
    CHECK(s.t_ids.size() == 4);  // half of the 8 class-1 test samples
    for (std::size_t id : s.t_ids) CHECK(ds.y[id] == 1);
    CHECK(s.test_eval_ids.size() == test.size() - 4);
}

TEST_CASE("a negative class id draws the forgotten class from the seed") {
    Dataset ds = gen_gaussian_classes(5, 20, 4, 15.0, 7);
    ForgetSpec spec;
    spec.mode = ForgetMode::RandomClass;
    spec.class_id = -1;
    spec.seed = 99;
    Splits a = make_splits(ds, spec);
    Splits b = make_splits(ds, spec);
    CHECK(a.forget_ids == b.forget_ids);
    int cls = ds.y[a.forget_ids[0]];
    CHECK(cls >= 0);
    CHECK(cls < 5);
    for (std::size_t id : a.forget_ids) CHECK(ds.y[id] == cls);
}

TEST_CASE("uniform-fraction forgetting sizes off the requested base") {
    Dataset ds = gen_gaussian_classes(4, 50, 4, 15.0, 3);
    std::vector<std::size_t> pool = ds.train_ids();  // 160 ids
    ForgetSpec spec;
    spec.mode = ForgetMode::UniformFraction;
    spec.fraction = 0.1;
    spec.seed = 5;

    Splits s = make_splits_from_pool(ds, pool, spec, 0);
    CHECK(s.forget_ids.size() == 16);  // 10% of the pool itself
    CHECK(as_set(s.forget_ids).size() == 16);
    CHECK(s.retain_ids.size() + s.forget_ids.size() == pool.size());
    CHECK(disjoint(as_set(s.retain_ids), as_set(s.forget_ids)));

    // Second round drawn as a fraction of the original train size, not of the
    // shrunken pool.
    Splits s2 = make_splits_from_pool(ds, s.retain_ids, spec, pool.size());
    CHECK(s2.forget_ids.size() == 16);
    Splits s2_local = make_splits_from_pool(ds, s.retain_ids, spec, 0);
    CHECK(s2_local.forget_ids.size() == 14);  // 10% of 144, rounded

    // Different seeds draw different subsets.
    ForgetSpec other = spec;
    other.seed = 6;
    CHECK(make_splits_from_pool(ds, pool, other, 0).forget_ids != s.forget_ids);
}

TEST_CASE("explicit forget ids are honored and validated") {
    Dataset ds = gen_gaussian_classes(3, 20, 4, 15.0, 11);
    std::vector<std::size_t> pool = ds.train_ids();
    ForgetSpec spec;
    spec.mode = ForgetMode::ExplicitIds;
    spec.explicit_ids = {pool[0], pool[5], pool[17]};
    Splits s = make_splits(ds, spec);
    CHECK(s.forget_ids == spec.explicit_ids);

    // An id outside the pool (for example already forgotten in an earlier
    // round) is an error rather than a silent skip.
    ForgetSpec stale = spec;
    Splits first = make_splits(ds, spec);
    CHECK_THROWS_AS(make_splits_from_pool(ds, first.retain_ids, stale, 0), InputError);

    ForgetSpec dup = spec;
    dup.explicit_ids = {pool[0], pool[0]};
    CHECK_THROWS_AS(make_splits(ds, dup), InputError);

    ForgetSpec none = spec;
    none.explicit_ids = {};
    CHECK_THROWS_AS(make_splits(ds, none), InputError);
}

TEST_CASE("dataset files survive a bit-exact round trip") {
    Dataset ds = gen_gaussian_classes(3, 16, 5, 10.0, 77);
    std::string path = temp_path("roundtrip.ulab");
    save_dataset(ds, path);
    Dataset back = load_dataset(path);
    CHECK(back.x.values == ds.x.values);
    CHECK(back.y == ds.y);
    CHECK(back.mask == ds.mask);
    CHECK(back.class_count == ds.class_count);

    // Saving the loaded copy reproduces the identical byte stream.
    std::string path2 = temp_path("roundtrip2.ulab");
    save_dataset(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("malformed dataset files are rejected with clear errors") {
    Dataset ds = gen_gaussian_classes(2, 8, 3, 10.0, 5);
    std::string path = temp_path("corrupt.ulab");

    SUBCASE("bad magic") {
        save_dataset(ds, path);
        corrupt_byte(path, 0, 'X');
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("unsupported version") {
        save_dataset(ds, path);
        corrupt_byte(path, 4, 9);
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("label out of range") {
        save_dataset(ds, path);
        // Header is magic + 4 u32 fields, then 16 * 3 doubles, then u16 labels.
        long label_off = 4 + 16 + 16 * 3 * 8;
        corrupt_byte(path, label_off, 7);
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("bad mask byte") {
        save_dataset(ds, path);
        long mask_off = 4 + 16 + 16 * 3 * 8 + 16 * 2;
        corrupt_byte(path, mask_off, 5);
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("truncated payload") {
        save_dataset(ds, path);
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<long>(bytes.size() - 7));
        out.close();
        CHECK_THROWS_AS(load_dataset(path), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset(temp_path("nope.ulab")), InputError); }
    std::remove(path.c_str());
}

TEST_CASE("batch_of gathers rows and labels together") {
    Dataset ds = gen_gaussian_classes(2, 10, 3, 10.0, 9);
    std::vector<std::size_t> ids{3, 0, 17};
    Batch b = batch_of(ds, ids);
    REQUIRE(b.size() == 3);
    CHECK(b.x.rows() == 3);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(b.y[i] == ds.y[ids[i]]);
        for (std::size_t j = 0; j < 3; ++j) CHECK(b.x.at(i, j) == ds.x.at(ids[i], j));
    }
    CHECK(batch_of(ds, {}).empty());
    CHECK_THROWS_AS(batch_of(ds, {ds.size()}), InputError);
}
