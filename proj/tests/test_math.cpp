#include <cmath>

#include "doctest.h"
#include "ulab/mathfn.hpp"

using namespace ulab;

namespace {

// Independent inverse of norm_cdf: plain bisection, no rational approximation.
double bisect_probit(double q) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (norm_cdf(mid) < q)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("norm_cdf matches reference values") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(norm_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(norm_cdf(2.0) == doctest::Approx(0.9772498680518208).epsilon(1e-14));
    CHECK(norm_cdf(0.5) == doctest::Approx(0.6914624612740131).epsilon(1e-14));
    CHECK(norm_cdf(-1.5) == doctest::Approx(0.0668072012688581).epsilon(1e-13));
    CHECK(norm_cdf(-10.0) > 0.0);
    CHECK(norm_cdf(-10.0) < 1e-20);
}

TEST_CASE("probit inverts norm_cdf to bisection accuracy") {
    // Sweep the clamp range used by the gaussianizer plus interior points.
    const double qs[] = {1e-4, 5e-4, 0.001, 0.01, 0.025, 0.1,    0.25,  0.5,
                         0.75, 0.9,  0.975, 0.99, 0.999, 0.9995, 0.9999};
    for (double q : qs) {
        double z = probit(q);
        CHECK(std::abs(z - bisect_probit(q)) < 1e-12);
        CHECK(norm_cdf(z) == doctest::Approx(q).epsilon(1e-12));
    }
}

TEST_CASE("probit reference values and symmetry") {
    CHECK(probit(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(probit(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
    CHECK(probit(0.9) == doctest::Approx(1.2815515655446004).epsilon(1e-13));
    CHECK(probit(0.0001) == doctest::Approx(-3.71901648545568).epsilon(1e-12));
    for (double q : {1e-4, 0.01, 0.2, 0.37, 0.49})
        CHECK(probit(1.0 - q) == doctest::Approx(-probit(q)).epsilon(1e-11));
}

TEST_CASE("probit_deriv matches finite differences") {
    for (double q : {0.001, 0.05, 0.3, 0.5, 0.8, 0.99}) {
        double h = 1e-7;
        double fd = (probit(q + h) - probit(q - h)) / (2.0 * h);
        CHECK(probit_deriv(q) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("softplus and its inverse") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(softplus(800.0) == 800.0);
    CHECK(softplus(-800.0) == 0.0);
    for (double x : {-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 25.0})
        CHECK(softplus_inv(softplus(x)) == doctest::Approx(x).epsilon(1e-9));
    CHECK_THROWS_AS(softplus_inv(0.0), InputError);
    CHECK_THROWS_AS(softplus_inv(-1.0), InputError);
}

TEST_CASE("softplus_deriv is the sigmoid") {
    for (double x : {-700.0, -5.0, 0.0, 5.0, 700.0}) {
        double s = softplus_deriv(x);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK(s == doctest::Approx(stable_sigmoid(x)).epsilon(1e-15));
    }
    CHECK(stable_sigmoid(0.0) == 0.5);
    CHECK(stable_sigmoid(800.0) == 1.0);
    CHECK(stable_sigmoid(-800.0) == doctest::Approx(0.0).epsilon(1e-300));
}
