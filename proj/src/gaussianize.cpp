#include "ulab/gaussianize.hpp"

#include <cmath>

#include "ulab/mathfn.hpp"

namespace ulab {

std::vector<double> soft_cdf(const std::vector<double>& x, double k) {
    if (x.empty()) throw InputError("soft_cdf: empty input");
    if (!(k > 0.0)) throw InputError("soft_cdf: temperature must be positive");
    std::size_t n = x.size();
    std::vector<double> q(n);
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += stable_sigmoid(k * (x[i] - x[j]));
        q[i] = acc * inv_n;
    }
    return q;
}

std::vector<double> gaussianize(const std::vector<double>& x, double k) {
    std::vector<double> z = soft_cdf(x, k);
    for (double& q : z) {
        double qc = q < kCdfClampLo ? kCdfClampLo
                                    : (q > 1.0 - kCdfClampLo ? 1.0 - kCdfClampLo : q);
        q = probit(qc);
    }
    return z;
}

namespace {

double kernel_sum(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (double xi : x)
        for (double yj : y) {
            double d = xi - yj;
            acc += std::exp(-0.5 * d * d);
        }
    return acc / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

}  // namespace

double mmd(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw InputError("mmd: empty sample");
    double raw = kernel_sum(a, a) + kernel_sum(b, b) - 2.0 * kernel_sum(a, b);
    return raw > 0.0 ? raw : 0.0;
}

}  // namespace ulab
