#include "doctest.h"

#include <cmath>

#include "fnr/adam.hpp"
#include "fnr/tensor.hpp"

using fnr::Adam;
using fnr::Tensor;

TEST_CASE("first Adam step moves by about lr in the gradient sign direction") {
    auto x = Tensor<double>::from_data({2}, {1.0, -2.0}, true);
    Adam<double> opt({{"x", x}}, 0.01);
    auto loss = fnr::sum_all(fnr::mul_scalar(x, 3.0)); // grad = 3 everywhere
    opt.zero_grad();
    loss.backward();
    opt.step();
    CHECK(x.values()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
    CHECK(x.values()[1] == doctest::Approx(-2.0 - 0.01).epsilon(1e-4));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    auto x = Tensor<double>::from_data({2}, {0.5, -0.25}, true);
    Adam<double> opt({{"x", x}}, 0.1);
    auto y = fnr::mul_scalar(x, 0.0);
    opt.zero_grad();
    fnr::sum_all(y).backward();
    opt.step();
    CHECK(x.values()[0] == doctest::Approx(0.5));
    CHECK(x.values()[1] == doctest::Approx(-0.25));
}

TEST_CASE("100 Adam steps on f(x)=x^2 converge near zero and match a scalar oracle") {
    auto x = Tensor<double>::from_data({1}, {1.0}, true);
    Adam<double> opt({{"x", x}}, 0.1);

    // Independent scalar simulation of the same update rule.
    double xs = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    for (int t = 1; t <= 100; ++t) {
        opt.zero_grad();
        fnr::sum_all(fnr::mul(x, x)).backward();
        opt.step();

        const double g = 2.0 * xs;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        xs -= lr * mh / (std::sqrt(vh) + eps);

        CHECK(x.values()[0] == doctest::Approx(xs).epsilon(1e-10));
    }
    CHECK(std::fabs(x.values()[0]) < 0.05);
}
