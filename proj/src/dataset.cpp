#include "ulab/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

static_assert(std::endian::native == std::endian::little,
              "dataset file I/O assumes a little-endian host");

namespace ulab {

std::vector<std::size_t> Dataset::train_ids() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == kMaskTrain) out.push_back(i);
    return out;
}

std::vector<std::size_t> Dataset::test_ids() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == kMaskTest) out.push_back(i);
    return out;
}

Batch batch_of(const Dataset& ds, const std::vector<std::size_t>& ids) {
    Batch b;
    b.x = take_rows(ds.x, ids);
    b.y.reserve(ids.size());
    for (std::size_t id : ids) {
        if (id >= ds.size()) throw InputError("batch_of: sample id out of range");
        b.y.push_back(ds.y[id]);
    }
    return b;
}

const char* forget_mode_name(ForgetMode m) {
    switch (m) {
        case ForgetMode::RandomClass: return "random_class";
        case ForgetMode::UniformFraction: return "uniform_fraction";
        case ForgetMode::ExplicitIds: return "explicit_ids";
    }
    return "?";
}

Splits make_splits_from_pool(const Dataset& ds, const std::vector<std::size_t>& pool,
                             const ForgetSpec& spec, std::size_t fraction_base) {
    for (std::size_t id : pool) {
        if (id >= ds.size()) throw InputError("make_splits: pool id out of range");
        if (ds.mask[id] != kMaskTrain)
            throw InputError("make_splits: pool id is not a training sample");
    }

    std::vector<std::size_t> forget;
    switch (spec.mode) {
        case ForgetMode::RandomClass: {
            int cid = spec.class_id;
            if (cid == -1)
                cid = static_cast<int>(Rng(spec.seed).next_below(
                    static_cast<std::uint64_t>(ds.class_count)));
            if (cid < 0 || cid >= ds.class_count)
                throw InputError("make_splits: forget class out of range");
            for (std::size_t id : pool)
                if (ds.y[id] == cid) forget.push_back(id);
            break;
        }
        case ForgetMode::UniformFraction: {
            if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
                throw InputError("make_splits: fraction must be in (0, 1)");
            std::size_t base = fraction_base ? fraction_base : pool.size();
            auto n_f = static_cast<std::size_t>(
                std::llround(spec.fraction * static_cast<double>(base)));
            if (n_f > pool.size())
                throw InputError("make_splits: forget count exceeds pool size");
            std::vector<std::size_t> shuffled = pool;
            Rng rng(spec.seed);
            rng.shuffle(shuffled);
            forget.assign(shuffled.begin(),
                          shuffled.begin() + static_cast<std::ptrdiff_t>(n_f));
            break;
        }
        case ForgetMode::ExplicitIds: {
            std::set<std::size_t> in_pool(pool.begin(), pool.end());
            for (std::size_t id : spec.explicit_ids) {
                if (!in_pool.count(id))
                    throw InputError(
                        "make_splits: explicit forget id not in the training pool "
                        "(already forgotten or not a training sample)");
                forget.push_back(id);
            }
            break;
        }
    }
    if (forget.empty()) throw InputError("make_splits: empty forget set");
    std::sort(forget.begin(), forget.end());
    if (std::adjacent_find(forget.begin(), forget.end()) != forget.end())
        throw InputError("make_splits: duplicate forget id");

    Splits s;
    s.forget_ids = forget;
    std::set<std::size_t> fset(forget.begin(), forget.end());
    for (std::size_t id : pool)
        if (!fset.count(id)) s.retain_ids.push_back(id);
    std::sort(s.retain_ids.begin(), s.retain_ids.end());

    std::set<int> forget_classes;
    for (std::size_t id : forget) forget_classes.insert(ds.y[id]);

    // Alternate class-matched test samples between T and test_eval so the
    // MIA reference and the accuracy holdout never share a sample.
    std::vector<std::size_t> matched_seen(static_cast<std::size_t>(ds.class_count), 0);
    for (std::size_t id : ds.test_ids()) {
        if (forget_classes.count(ds.y[id])) {
            auto& seen = matched_seen[static_cast<std::size_t>(ds.y[id])];
            if (seen % 2 == 0)
                s.t_ids.push_back(id);
            else
                s.test_eval_ids.push_back(id);
            ++seen;
        } else {
            s.test_eval_ids.push_back(id);
        }
    }
    return s;
}

Splits make_splits(const Dataset& ds, const ForgetSpec& spec) {
    return make_splits_from_pool(ds, ds.train_ids(), spec, 0);
}

Dataset gen_gaussian_classes(int c, std::size_t per_class, std::size_t d, double separation,
                             std::uint64_t seed) {
    if (c < 2) throw InputError("gen_gaussian_classes: need at least 2 classes");
    if (per_class < 2) throw InputError("gen_gaussian_classes: need at least 2 per class");
    if (d < 2) throw InputError("gen_gaussian_classes: dimension must be at least 2");
    if (!(separation >= 0.0))
        throw InputError("gen_gaussian_classes: separation must be nonnegative");

    std::size_t nc = static_cast<std::size_t>(c);

    // Class means sit on a circle of radius `separation` inside a seeded
    // random 2-plane, neighbouring directions kFanStep radians apart (even
    // spacing instead once the fan would wrap past a full circle). Adjacent
    // classes share feature directions while distant ones are nearly
    // opposed, so dropping one class leaves a gap that fine-tuning on the
    // survivors can actually close.
    constexpr double kFanStep = 0.35;
    constexpr double kTau = 6.283185307179586;
    double step = std::min(kFanStep, kTau / static_cast<double>(nc));

    Rng dir_rng(derive_seed(seed, 0xD1F5));
    std::vector<double> e1(d), e2(d);
    for (int attempt = 0;; ++attempt) {
        for (double& e : e1) e = dir_rng.normal();
        for (double& e : e2) e = dir_rng.normal();
        double n1 = 0.0;
        for (double e : e1) n1 += e * e;
        n1 = std::sqrt(n1);
        if (n1 <= 1e-8 && attempt <= 100) continue;
        for (double& e : e1) e /= n1;
        double dot = 0.0;
        for (std::size_t p = 0; p < d; ++p) dot += e2[p] * e1[p];
        for (std::size_t p = 0; p < d; ++p) e2[p] -= dot * e1[p];
        double n2 = 0.0;
        for (double e : e2) n2 += e * e;
        n2 = std::sqrt(n2);
        if (n2 <= 1e-8 && attempt <= 100) continue;
        for (double& e : e2) e /= n2;
        break;
    }

    std::vector<std::vector<double>> means(nc, std::vector<double>(d));
    for (std::size_t ci = 0; ci < nc; ++ci) {
        double theta = (static_cast<double>(ci) - 0.5 * static_cast<double>(nc - 1)) * step;
        double a = separation * std::cos(theta);
        double b = separation * std::sin(theta);
        for (std::size_t p = 0; p < d; ++p) means[ci][p] = a * e1[p] + b * e2[p];
    }

    Dataset ds;
    ds.class_count = c;
    std::size_t n = nc * per_class;
    ds.x = Tensor::zeros(n, d);
    ds.y.resize(n);
    ds.mask.resize(n);
    std::size_t train_per_class = per_class * 4 / 5;

    Rng noise(derive_seed(seed, 0xA011));
    for (std::size_t ci = 0; ci < nc; ++ci)
        for (std::size_t s = 0; s < per_class; ++s) {
            std::size_t row = ci * per_class + s;
            for (std::size_t p = 0; p < d; ++p)
                ds.x.values[row * d + p] = means[ci][p] + noise.normal();
            ds.y[row] = static_cast<int>(ci);
            ds.mask[row] = s < train_per_class ? kMaskTrain : kMaskTest;
        }
    return ds;
}

namespace {

constexpr char kMagic[4] = {'U', 'L', 'A', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::size_t n = ds.size();
    if (ds.y.size() != n || ds.mask.size() != n || ds.x.rows() != n)
        throw ConsistencyError("save_dataset: field lengths disagree");
    if (!ds.x.all_finite()) throw NumericError("save_dataset: non-finite sample value");

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(n));
    put_u32(out, static_cast<std::uint32_t>(ds.dim()));
    put_u32(out, static_cast<std::uint32_t>(ds.class_count));
    out.append(reinterpret_cast<const char*>(ds.x.values.data()),
               ds.x.values.size() * sizeof(double));
    for (int label : ds.y) {
        auto v = static_cast<std::uint16_t>(label);
        char buf[2];
        std::memcpy(buf, &v, 2);
        out.append(buf, 2);
    }
    out.append(reinterpret_cast<const char*>(ds.mask.data()), ds.mask.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("save_dataset: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("load_dataset: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 20)
        throw FormatError("dataset file: truncated header, need 20 bytes, found " +
                          std::to_string(buf.size()));
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError("dataset file: bad magic at offset 0");
    std::uint32_t version = get_u32(buf, 4);
    if (version != kFormatVersion)
        throw FormatError("dataset file: unsupported version " + std::to_string(version) +
                          " at offset 4");
    std::uint64_t n = get_u32(buf, 8);
    std::uint64_t d = get_u32(buf, 12);
    std::uint64_t c = get_u32(buf, 16);
    if (d == 0) throw FormatError("dataset file: zero dimension at offset 12");
    if (c == 0) throw FormatError("dataset file: zero class count at offset 16");

    std::uint64_t expected = 20 + n * d * 8 + n * 2 + n;
    if (buf.size() != expected)
        throw FormatError("dataset file: expected " + std::to_string(expected) +
                          " bytes for N=" + std::to_string(n) + " d=" + std::to_string(d) +
                          ", found " + std::to_string(buf.size()));

    Dataset ds;
    ds.class_count = static_cast<int>(c);
    ds.x = Tensor::zeros(n, d);
    std::memcpy(ds.x.values.data(), buf.data() + 20, n * d * 8);
    if (!ds.x.all_finite())
        throw FormatError("dataset file: non-finite sample value in payload");

    std::size_t label_off = 20 + static_cast<std::size_t>(n * d * 8);
    ds.y.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint16_t v;
        std::memcpy(&v, buf.data() + label_off + i * 2, 2);
        if (v >= c)
            throw FormatError("dataset file: label " + std::to_string(v) + " >= C at offset " +
                              std::to_string(label_off + i * 2));
        ds.y[i] = v;
    }

    std::size_t mask_off = label_off + static_cast<std::size_t>(n) * 2;
    ds.mask.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        auto v = static_cast<std::uint8_t>(buf[mask_off + i]);
        if (v != kMaskTrain && v != kMaskTest)
            throw FormatError("dataset file: invalid mask byte at offset " +
                              std::to_string(mask_off + i));
        ds.mask[i] = v;
    }
    return ds;
}

}  // namespace ulab
