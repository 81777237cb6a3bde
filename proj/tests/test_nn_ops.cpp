#include "doctest.h"

#include <cmath>
#include <vector>

#include "fnr/nn.hpp"
#include "fnr/tensor.hpp"

using fnr::Shape;
using fnr::Tensor;

namespace {

// Direct six-loop convolution, the independent oracle for conv2d.
std::vector<double> conv_oracle(const std::vector<double>& x, std::int64_t b, std::int64_t ci,
                                std::int64_t h, std::int64_t w, const std::vector<double>& ker,
                                std::int64_t co, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
    const std::int64_t ow = (w + 2 * pad - k) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(b * co * oh * ow), 0.0);
    for (std::int64_t n = 0; n < b; ++n) {
        for (std::int64_t o = 0; o < co; ++o) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t z = 0; z < ow; ++z) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < ci; ++c) {
                        for (std::int64_t kh = 0; kh < k; ++kh) {
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                const std::int64_t iy = y * stride - pad + kh;
                                const std::int64_t iz = z * stride - pad + kw;
                                if (iy < 0 || iy >= h || iz < 0 || iz >= w) {
                                    continue;
                                }
                                acc += x[((n * ci + c) * h + iy) * w + iz] *
                                       ker[((o * ci + c) * k + kh) * k + kw];
                            }
                        }
                    }
                    out[((n * co + o) * oh + y) * ow + z] = acc;
                }
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("conv2d of all-ones 3x3 with all-ones 3x3 kernel is 9") {
    auto x = Tensor<double>::ones({1, 1, 3, 3});
    auto w = Tensor<double>::ones({1, 1, 3, 3});
    auto y = fnr::conv2d(x, w, Tensor<double>{}, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d with identity 1x1 kernel reproduces the input") {
    fnr::Rng rng(3);
    auto x = Tensor<double>::randn({2, 1, 5, 5}, rng);
    auto w = Tensor<double>::ones({1, 1, 1, 1});
    auto y = fnr::conv2d(x, w, Tensor<double>{}, 1, 0);
    for (std::size_t i = 0; i < x.values().size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]));
    }
}

TEST_CASE("conv2d matches the six-loop oracle on random input") {
    fnr::Rng rng(11);
    auto x = Tensor<double>::randn({2, 3, 8, 8}, rng);
    auto w = Tensor<double>::randn({4, 3, 3, 3}, rng);
    for (std::int64_t stride : {1, 2}) {
        for (std::int64_t pad : {0, 1}) {
            auto y = fnr::conv2d(x, w, Tensor<double>{}, stride, pad);
            auto ref = conv_oracle(std::vector<double>(x.values().begin(), x.values().end()), 2, 3, 8, 8,
                                   std::vector<double>(w.values().begin(), w.values().end()), 4, 3, stride,
                                   pad);
            REQUIRE(y.values().size() == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) {
                CHECK(std::fabs(y.values()[i] - ref[i]) < 1e-6);
            }
        }
    }
}

TEST_CASE("conv2d rejects channel mismatch with a shape error") {
    auto x = Tensor<double>::ones({1, 2, 4, 4});
    auto w = Tensor<double>::ones({1, 3, 3, 3});
    CHECK_THROWS_AS(fnr::conv2d(x, w, Tensor<double>{}, 1, 1), fnr::ShapeError);
}

TEST_CASE("conv2d rejects even kernels") {
    auto x = Tensor<double>::ones({1, 1, 8, 8});
    auto w = Tensor<double>::ones({1, 1, 4, 4});
    CHECK_THROWS_AS(fnr::conv2d(x, w, Tensor<double>{}, 1, 1), fnr::ShapeError);
}

TEST_CASE("replicate padding keeps a constant input constant") {
    auto x = Tensor<double>::full({1, 2, 6, 6}, 0.7);
    fnr::Rng rng(5);
    auto w = Tensor<double>::randn({3, 2, 3, 3}, rng);
    auto y = fnr::conv2d(x, w, Tensor<double>{}, 1, 1, fnr::PadMode::Replicate);
    for (std::int64_t c = 0; c < 3; ++c) {
        const double first = y.values()[c * 36];
        for (std::int64_t i = 0; i < 36; ++i) {
            CHECK(y.values()[c * 36 + i] == doctest::Approx(first).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv_transpose2d output size formula") {
    auto x = Tensor<double>::ones({1, 1, 4, 4});
    auto w = Tensor<double>::ones({1, 1, 4, 4});
    auto y = fnr::conv_transpose2d(x, w, Tensor<double>{}, 2, 1);
    CHECK(y.shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("conv_transpose2d stamps the kernel at a delta input") {
    auto x = Tensor<double>::zeros({1, 1, 3, 3});
    x.values_mut()[4] = 1.0; // center pixel
    fnr::Rng rng(21);
    auto w = Tensor<double>::randn({1, 1, 3, 3}, rng);
    auto y = fnr::conv_transpose2d(x, w, Tensor<double>{}, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 5, 5});
    // Kernel appears centered at (1..3, 1..3).
    for (std::int64_t kh = 0; kh < 3; ++kh) {
        for (std::int64_t kw = 0; kw < 3; ++kw) {
            CHECK(y.values()[(kh + 1) * 5 + (kw + 1)] == doctest::Approx(w.values()[kh * 3 + kw]));
        }
    }
}

TEST_CASE("conv_transpose2d equals the input-gradient of conv2d") {
    fnr::Rng rng(31);
    for (std::int64_t stride : {1, 2}) {
        // Geometry chosen so the strided conv covers the input exactly.
        const std::int64_t k = 3, pad = 1, h = (stride == 1) ? 6 : 7;
        const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
        auto g = Tensor<double>::randn({2, 4, oh, oh}, rng);       // plays grad_out
        auto w = Tensor<double>::randn({4, 3, k, k}, rng);         // conv2d layout [Co,Ci,K,K]
        auto x = Tensor<double>::randn({2, 3, h, h}, rng, 1.0, 0.0, true);

        // Route 1: input gradient of conv2d via backward of sum(conv * g).
        auto y = fnr::conv2d(x, w, Tensor<double>{}, stride, pad);
        fnr::sum_all(fnr::mul(y, g)).backward();
        auto dx = x.grad();

        // Route 2: transposed convolution of g with the same weight buffer,
        // reinterpreted in the [Cin,Cout,K,K] layout.
        auto wt = Tensor<double>::from_data({4, 3, k, k}, std::vector<double>(w.values().begin(), w.values().end()));
        auto z = fnr::conv_transpose2d(g, wt, Tensor<double>{}, stride, pad);
        REQUIRE(z.numel() == static_cast<std::int64_t>(dx.size()));
        for (std::size_t i = 0; i < dx.size(); ++i) {
            CHECK(std::fabs(z.values()[i] - dx[i]) < 1e-6);
        }
    }
}

TEST_CASE("linear with identity weight and zero bias is the identity") {
    fnr::Rng rng(41);
    auto x = Tensor<double>::randn({3, 4}, rng);
    auto w = Tensor<double>::zeros({4, 4});
    for (int i = 0; i < 4; ++i) {
        w.values_mut()[i * 4 + i] = 1.0;
    }
    auto b = Tensor<double>::zeros({4});
    auto y = fnr::linear(x, w, b);
    for (std::size_t i = 0; i < x.values().size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]));
    }
}

TEST_CASE("linear of zero input returns the bias") {
    auto x = Tensor<double>::zeros({2, 8});
    fnr::Rng rng(43);
    auto w = Tensor<double>::randn({3, 8}, rng);
    auto b = Tensor<double>::randn({3}, rng);
    auto y = fnr::linear(x, w, b);
    for (int n = 0; n < 2; ++n) {
        for (int o = 0; o < 3; ++o) {
            CHECK(y.values()[n * 3 + o] == doctest::Approx(b.values()[o]));
        }
    }
}

TEST_CASE("linear matches an explicit double-loop oracle") {
    fnr::Rng rng(47);
    auto x = Tensor<double>::randn({4, 8}, rng);
    auto w = Tensor<double>::randn({3, 8}, rng);
    auto b = Tensor<double>::randn({3}, rng);
    auto y = fnr::linear(x, w, b);
    for (int n = 0; n < 4; ++n) {
        for (int o = 0; o < 3; ++o) {
            double acc = b.values()[o];
            for (int d = 0; d < 8; ++d) {
                acc += x.values()[n * 8 + d] * w.values()[o * 8 + d];
            }
            CHECK(std::fabs(y.values()[n * 3 + o] - acc) < 1e-6);
        }
    }
}

TEST_CASE("linear rejects dimension mismatch") {
    auto x = Tensor<double>::ones({2, 5});
    auto w = Tensor<double>::ones({3, 8});
    CHECK_THROWS_AS(fnr::linear(x, w, Tensor<double>{}), fnr::ShapeError);
}

TEST_CASE("adaptive pooling to 1x1 matches the global mean") {
    auto c = Tensor<double>::full({1, 1, 4, 4}, 3.25);
    CHECK(fnr::adaptive_avg_pool(c, 1, 1).item() == doctest::Approx(3.25));

    auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(fnr::adaptive_avg_pool(x, 1, 1).item() == doctest::Approx(2.5));
}

TEST_CASE("adaptive pooling matches an explicit window-partition oracle") {
    fnr::Rng rng(53);
    auto x = Tensor<double>::randn({2, 3, 7, 5}, rng);
    const std::int64_t oh = 3, ow = 2;
    auto y = fnr::adaptive_avg_pool(x, oh, ow);
    for (std::int64_t bc = 0; bc < 6; ++bc) {
        for (std::int64_t a = 0; a < oh; ++a) {
            const std::int64_t h0 = a * 7 / oh;
            const std::int64_t h1 = (a + 1) * 7 % oh == 0 ? (a + 1) * 7 / oh : (a + 1) * 7 / oh + 1;
            for (std::int64_t b = 0; b < ow; ++b) {
                const std::int64_t w0 = b * 5 / ow;
                const std::int64_t w1 = (b + 1) * 5 % ow == 0 ? (b + 1) * 5 / ow : (b + 1) * 5 / ow + 1;
                double acc = 0.0;
                for (std::int64_t ih = h0; ih < h1; ++ih) {
                    for (std::int64_t iw = w0; iw < w1; ++iw) {
                        acc += x.values()[bc * 35 + ih * 5 + iw];
                    }
                }
                acc /= static_cast<double>((h1 - h0) * (w1 - w0));
                CHECK(std::fabs(y.values()[bc * oh * ow + a * ow + b] - acc) < 1e-6);
            }
        }
    }
}

TEST_CASE("adaptive pooling rejects upsampling targets") {
    auto x = Tensor<double>::ones({1, 1, 2, 2});
    CHECK_THROWS_AS(fnr::adaptive_avg_pool(x, 4, 4), fnr::ShapeError);
}

TEST_CASE("upsample_nearest2x repeats pixels") {
    auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto y = fnr::upsample_nearest2x(x);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[1] == 1.0);
    CHECK(y.values()[5] == 1.0);
    CHECK(y.values()[10] == 4.0);
}

TEST_CASE("instance norm produces zero-mean unit-variance features") {
    fnr::Rng rng(61);
    auto x = Tensor<double>::randn({2, 3, 6, 6}, rng, 4.0, -2.0);
    auto gamma = Tensor<double>::ones({3});
    auto beta = Tensor<double>::zeros({3});
    auto y = fnr::instance_norm2d(x, gamma, beta, 1e-8);
    for (std::int64_t bc = 0; bc < 6; ++bc) {
        double mean = 0.0, var = 0.0;
        for (std::int64_t i = 0; i < 36; ++i) {
            mean += y.values()[bc * 36 + i];
        }
        mean /= 36.0;
        for (std::int64_t i = 0; i < 36; ++i) {
            const double d = y.values()[bc * 36 + i] - mean;
            var += d * d;
        }
        var /= 36.0;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("normalize_channels yields unit pixel vectors") {
    fnr::Rng rng(67);
    auto x = Tensor<double>::randn({2, 3, 4, 4}, rng);
    auto y = fnr::normalize_channels(x, 1e-12);
    for (std::int64_t n = 0; n < 2; ++n) {
        for (std::int64_t i = 0; i < 16; ++i) {
            double ss = 0.0;
            for (std::int64_t c = 0; c < 3; ++c) {
                const double v = y.values()[n * 48 + c * 16 + i];
                ss += v * v;
            }
            CHECK(std::sqrt(ss) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("bmm agrees with per-item dense products") {
    fnr::Rng rng(71);
    auto a = Tensor<double>::randn({2, 3, 4}, rng);
    auto b = Tensor<double>::randn({2, 4, 5}, rng);
    auto c = fnr::bmm(a, b, false, false);
    CHECK(c.shape() == Shape{2, 3, 5});
    for (int n = 0; n < 2; ++n) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += a.values()[n * 12 + i * 4 + k] * b.values()[n * 20 + k * 5 + j];
                }
                CHECK(std::fabs(c.values()[n * 15 + i * 5 + j] - acc) < 1e-9);
            }
        }
    }

    // Transposed-A variant, as used by the attention scores.
    auto at = Tensor<double>::randn({2, 4, 3}, rng);
    auto ct = fnr::bmm(at, b, true, false);
    CHECK(ct.shape() == Shape{2, 3, 5});
    for (int n = 0; n < 2; ++n) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += at.values()[n * 12 + k * 3 + i] * b.values()[n * 20 + k * 5 + j];
                }
                CHECK(std::fabs(ct.values()[n * 15 + i * 5 + j] - acc) < 1e-9);
            }
        }
    }
}

TEST_CASE("modulate_in_channels is exact elementwise broadcast") {
    fnr::Rng rng(73);
    auto w = Tensor<double>::randn({3, 2, 3, 3}, rng);
    auto s = Tensor<double>::from_data({2}, {2.0, -0.5});
    auto wb = fnr::modulate_in_channels(w, s);
    for (std::int64_t j = 0; j < 3; ++j) {
        for (std::int64_t i = 0; i < 2; ++i) {
            for (std::int64_t t = 0; t < 9; ++t) {
                const double expect = w.values()[(j * 2 + i) * 9 + t] * s.values()[i];
                CHECK(std::fabs(wb.values()[(j * 2 + i) * 9 + t] - expect) < 1e-12);
            }
        }
    }
}

TEST_CASE("demodulated weights have unit per-output-channel norm") {
    fnr::Rng rng(79);
    auto w = Tensor<double>::randn({4, 3, 3, 3}, rng);
    auto y = fnr::demodulate_weights(w, 1e-8);
    for (std::int64_t j = 0; j < 4; ++j) {
        double ss = 0.0;
        for (std::int64_t t = 0; t < 27; ++t) {
            const double v = y.values()[j * 27 + t];
            ss += v * v;
        }
        CHECK(std::sqrt(ss) == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("demodulation closed forms") {
    // Single nonzero value per output channel.
    auto w = Tensor<double>::zeros({2, 1, 3, 3});
    w.values_mut()[0] = 5.0;
    w.values_mut()[9 + 4] = -3.0;
    auto y = fnr::demodulate_weights(w, 1e-8);
    CHECK(y.values()[0] == doctest::Approx(5.0 / std::sqrt(25.0 + 1e-8)));
    CHECK(y.values()[13] == doctest::Approx(-3.0 / std::sqrt(9.0 + 1e-8)));

    // All entries equal over fan-in F -> sign(c)/sqrt(F).
    const double c = 0.4;
    auto u = Tensor<double>::full({1, 2, 3, 3}, c);
    auto z = fnr::demodulate_weights(u, 1e-8);
    const double expect = c / std::sqrt(18.0 * c * c + 1e-8);
    for (double v : z.values()) {
        CHECK(v == doctest::Approx(expect).epsilon(1e-9));
    }
}
