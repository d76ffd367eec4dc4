#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulab {

// Error taxonomy. Everything derives from Error so callers can catch broadly.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimError : Error {
    using Error::Error;
};
struct InputError : Error {
    using Error::Error;
};
struct LabelError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct ConsistencyError : Error {
    using Error::Error;
};

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (element_count(shape) != values.size())
            throw DimError("Tensor: shape does not match value count");
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        if (s.empty()) return 0;
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::size_t r, std::size_t c) {
        return Tensor({r, c}, std::vector<double>(r * c, 0.0));
    }
    static Tensor full(std::size_t r, std::size_t c, double v) {
        return Tensor({r, c}, std::vector<double>(r * c, v));
    }

    std::size_t size() const { return values.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is_matrix() const { return shape.size() == 2; }

    double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// One labeled minibatch / split view: samples as rows plus integer labels.
struct Batch {
    Tensor x;            // n x d
    std::vector<int> y;  // n labels

    std::size_t size() const { return y.size(); }
    bool empty() const { return y.empty(); }
};

// Deterministic RNG. Uniform/normal are hand-rolled on top of splitmix64 so
// streams do not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw InputError("Rng::next_below: n must be positive");
        std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // polar Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Independent deterministic stream id for (base, salt). Parallel units
// (classes, clusters, repeats) each get their own derived seed, so serial
// and parallel execution agree.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL + (salt << 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z ? z : 1;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

// Row subset of a matrix, in the order given by idx.
inline Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
    std::size_t c = t.cols();
    Tensor out = Tensor::zeros(idx.size(), c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= t.rows()) throw InputError("take_rows: index out of range");
        for (std::size_t j = 0; j < c; ++j)
            out.values[i * c + j] = t.values[idx[i] * c + j];
    }
    return out;
}

inline Batch take(const Batch& b, const std::vector<std::size_t>& idx) {
    Batch out;
    out.x = take_rows(b.x, idx);
    out.y.reserve(idx.size());
    for (std::size_t i : idx) out.y.push_back(b.y[i]);
    return out;
}

// Argmax with ties broken to the lowest index.
inline std::size_t argmax_row(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace ulab
