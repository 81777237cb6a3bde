#include "doctest.h"

#include <cmath>
#include <vector>

#include "fnr/tensor.hpp"

using fnr::Tensor;

TEST_CASE("tensor creation validates shape against data") {
    CHECK_THROWS_AS(Tensor<double>::from_data({2, 3}, {1.0, 2.0}), fnr::ShapeError);
    auto t = Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(t.numel() == 4);
    CHECK(t.shape() == fnr::Shape{2, 2});
}

TEST_CASE("backward of sum gives all-ones gradient") {
    auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto loss = fnr::sum_all(x);
    loss.backward();
    for (double g : x.grad()) {
        CHECK(g == doctest::Approx(1.0));
    }
}

TEST_CASE("backward of sum of squares") {
    auto x = Tensor<double>::from_data({1}, {3.0}, true);
    auto loss = fnr::sum_all(fnr::mul(x, x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    auto y = fnr::mul(x, x);
    CHECK_THROWS_AS(y.backward(), fnr::ShapeError);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
    auto x = Tensor<double>::from_data({1}, {2.0}, true);
    auto y = fnr::add(x, x); // dy/dx = 2
    auto loss = fnr::sum_all(y);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("every reachable grad-requiring tensor gets a gradient") {
    auto x = Tensor<double>::from_data({2}, {1.0, -1.0}, true);
    auto mid = fnr::mul_scalar(x, 3.0);
    auto loss = fnr::sum_all(fnr::mul(mid, mid));
    loss.backward();
    CHECK(x.has_grad());
    CHECK(mid.has_grad());
}

TEST_CASE("detach cuts the graph") {
    auto x = Tensor<double>::from_data({1}, {2.0}, true);
    auto d = fnr::mul_scalar(x, 2.0).detach();
    CHECK_FALSE(d.requires_grad());
    auto loss = fnr::sum_all(fnr::mul(d, d));
    CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    {
        fnr::NoGradGuard guard;
        auto y = fnr::mul(x, x);
        CHECK_FALSE(y.requires_grad());
    }
    auto y = fnr::mul(x, x);
    CHECK(y.requires_grad());
}

TEST_CASE("activations match closed forms") {
    auto x = Tensor<double>::from_data({2}, {0.0, -1.0});
    CHECK(fnr::tanh_op(x).values()[0] == doctest::Approx(0.0));
    CHECK(fnr::leaky_relu(x, 0.2).values()[1] == doctest::Approx(-0.2));
}

TEST_CASE("relu gradient is 1 on the positive side and 0 on the negative side") {
    auto x = Tensor<double>::from_data({2}, {2.0, -2.0}, true);
    fnr::sum_all(fnr::relu(x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax on equal inputs is uniform") {
    auto x = Tensor<double>::from_data({4}, {3.0, 3.0, 3.0, 3.0});
    auto s = fnr::softmax(x, 0);
    for (double v : s.values()) {
        CHECK(v == doctest::Approx(0.25));
    }
}

TEST_CASE("softmax closed form (0, ln 3)") {
    auto x = Tensor<double>::from_data({2}, {0.0, std::log(3.0)});
    auto s = fnr::softmax(x, 0);
    CHECK(s.values()[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(s.values()[1] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("softmax stays normalized for large-magnitude inputs") {
    fnr::Rng rng(7);
    std::vector<double> data(64);
    for (auto& v : data) {
        v = rng.uniform(-1e4, 1e4);
    }
    auto x = Tensor<double>::from_data({4, 16}, std::move(data));
    auto s = fnr::softmax(x, 1);
    for (int row = 0; row < 4; ++row) {
        double sum = 0.0;
        for (int c = 0; c < 16; ++c) {
            // Entries 2e4 below the row max legitimately underflow to 0.
            const double v = s.values()[row * 16 + c];
            CHECK(v >= 0.0);
            CHECK(v < 1.0 + 1e-12);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("softmax matches a high-precision reference") {
    fnr::Rng rng(13);
    std::vector<double> data(32);
    for (auto& v : data) {
        v = rng.uniform(-5.0, 5.0);
    }
    auto x = Tensor<double>::from_data({32}, data);
    auto s = fnr::softmax(x, 0);
    long double mx = data[0];
    for (double v : data) {
        mx = std::max<long double>(mx, v);
    }
    long double denom = 0.0L;
    for (double v : data) {
        denom += std::exp(static_cast<long double>(v) - mx);
    }
    for (int i = 0; i < 32; ++i) {
        const long double ref = std::exp(static_cast<long double>(data[i]) - mx) / denom;
        CHECK(std::fabs(static_cast<double>(ref) - s.values()[i]) < 1e-7);
    }
}

TEST_CASE("sum_axis reduces one axis and keeps it") {
    auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto s = fnr::sum_axis(x, 1);
    CHECK(s.shape() == fnr::Shape{2, 1});
    CHECK(s.values()[0] == doctest::Approx(6.0));
    CHECK(s.values()[1] == doctest::Approx(15.0));
    fnr::sum_all(s).backward();
    for (double g : x.grad()) {
        CHECK(g == doctest::Approx(1.0));
    }
}

TEST_CASE("forward results are deterministic for a fixed seed") {
    auto run = [] {
        fnr::Rng rng(99);
        auto x = Tensor<float>::randn({2, 3, 4, 4}, rng);
        auto y = fnr::tanh_op(fnr::mul_scalar(x, 0.5f));
        return std::vector<float>(y.values().begin(), y.values().end());
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}

TEST_CASE("rng stream save/load replays identically") {
    fnr::Rng rng(5);
    for (int i = 0; i < 7; ++i) {
        rng.normal();
    }
    std::stringstream buf;
    rng.save(buf);
    fnr::Rng copy;
    copy.load(buf);
    for (int i = 0; i < 100; ++i) {
        CHECK(rng.normal() == copy.normal());
        CHECK(rng.next_u64() == copy.next_u64());
    }
}
