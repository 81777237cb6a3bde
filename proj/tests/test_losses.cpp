#include "doctest.h"

#include <array>
#include <cmath>

#include "fnr/losses.hpp"
#include "fnr/nn.hpp"
#include "gradcheck.hpp"

using fnr::Tensor;

namespace {

// Builds a [1,3,H,W] field where every pixel carries the same unit vector.
Tensor<double> uniform_field(std::array<double, 3> n, std::int64_t h, std::int64_t w,
                             bool requires_grad = false) {
    std::vector<double> data(static_cast<std::size_t>(3 * h * w));
    for (int c = 0; c < 3; ++c) {
        std::fill_n(data.begin() + c * h * w, h * w, n[static_cast<std::size_t>(c)]);
    }
    return Tensor<double>::from_data({1, 3, h, w}, std::move(data), requires_grad);
}

Tensor<double> random_unit_field(std::int64_t b, std::int64_t h, std::int64_t w, fnr::Rng& rng,
                                 bool requires_grad = false) {
    auto raw = Tensor<double>::randn({b, 3, h, w}, rng);
    auto unit = fnr::normalize_channels(raw, 1e-12).detach();
    unit.set_requires_grad(requires_grad);
    return unit;
}

} // namespace

TEST_CASE("loss is 0 for identical fields, 2 for antipodal, 1 for orthogonal") {
    auto up = uniform_field({0, 0, 1}, 4, 4);
    auto down = uniform_field({0, 0, -1}, 4, 4);
    auto side = uniform_field({1, 0, 0}, 4, 4);
    CHECK(fnr::normal_reconstruction_loss(up, up).item() == doctest::Approx(0.0));
    CHECK(fnr::normal_reconstruction_loss(down, up).item() == doctest::Approx(2.0));
    CHECK(fnr::normal_reconstruction_loss(side, up).item() == doctest::Approx(1.0));
}

TEST_CASE("loss is invariant under a shared rotation of both fields") {
    fnr::Rng rng(401);
    auto pred = random_unit_field(2, 6, 6, rng);
    auto gt = random_unit_field(2, 6, 6, rng);
    const double base = fnr::normal_reconstruction_loss(pred, gt).item();

    for (int trial = 0; trial < 5; ++trial) {
        // Rodrigues rotation about a random unit axis.
        double ax = rng.normal(), ay = rng.normal(), az = rng.normal();
        const double norm = std::sqrt(ax * ax + ay * ay + az * az);
        ax /= norm;
        ay /= norm;
        az /= norm;
        const double angle = rng.uniform(0.0, 6.28);
        const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
        const double rot[3][3] = {
            {t * ax * ax + c, t * ax * ay - s * az, t * ax * az + s * ay},
            {t * ax * ay + s * az, t * ay * ay + c, t * ay * az - s * ax},
            {t * ax * az - s * ay, t * ay * az + s * ax, t * az * az + c},
        };
        auto rotate = [&](const Tensor<double>& field) {
            const std::int64_t hw = 36;
            std::vector<double> out(field.values().size());
            for (std::int64_t b = 0; b < 2; ++b) {
                for (std::int64_t i = 0; i < hw; ++i) {
                    double v[3];
                    for (int r = 0; r < 3; ++r) {
                        v[r] = field.values()[b * 3 * hw + r * hw + i];
                    }
                    for (int r = 0; r < 3; ++r) {
                        out[b * 3 * hw + r * hw + i] =
                            rot[r][0] * v[0] + rot[r][1] * v[1] + rot[r][2] * v[2];
                    }
                }
            }
            return Tensor<double>::from_data({2, 3, 6, 6}, std::move(out));
        };
        const double rotated = fnr::normal_reconstruction_loss(rotate(pred), rotate(gt)).item();
        CHECK(std::fabs(rotated - base) < 1e-6);
    }
}

TEST_CASE("loss stays in [0,2] on random unit fields") {
    fnr::Rng rng(409);
    for (int trial = 0; trial < 20; ++trial) {
        auto pred = random_unit_field(1, 5, 5, rng);
        auto gt = random_unit_field(1, 5, 5, rng);
        const double v = fnr::normal_reconstruction_loss(pred, gt).item();
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
}

TEST_CASE("masked loss averages over valid pixels only") {
    auto up = uniform_field({0, 0, 1}, 2, 2);
    auto mixed = uniform_field({0, 0, 1}, 2, 2);
    // One antipodal pixel; mask exactly that one out.
    auto vals = mixed.values_mut();
    vals[2 * 4 + 0] = -1.0; // z channel, pixel 0
    auto mask = Tensor<double>::from_data({1, 1, 2, 2}, {0, 1, 1, 1});
    CHECK(fnr::normal_reconstruction_loss(mixed, up, mask).item() == doctest::Approx(0.0));
    // With the pixel included, the mean over 4 pixels picks up 2/4.
    CHECK(fnr::normal_reconstruction_loss(mixed, up).item() == doctest::Approx(0.5));
}

TEST_CASE("empty mask is an error") {
    auto up = uniform_field({0, 0, 1}, 2, 2);
    auto mask = Tensor<double>::zeros({1, 1, 2, 2});
    CHECK_THROWS_AS(fnr::normal_reconstruction_loss(up, up, mask), fnr::Error);
}

TEST_CASE("dimension mismatch is an error") {
    auto a = uniform_field({0, 0, 1}, 2, 2);
    auto b = uniform_field({0, 0, 1}, 4, 4);
    CHECK_THROWS_AS(fnr::normal_reconstruction_loss(a, b), fnr::ShapeError);
}

TEST_CASE("loss gradient w.r.t. predictions passes finite differences") {
    fnr::Rng rng(419);
    auto pred = fnrtest::random_tensor({1, 3, 4, 4}, rng);
    auto gt = random_unit_field(1, 4, 4, rng);
    auto mask = Tensor<double>::from_data({1, 1, 4, 4},
                                          {1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1});
    auto r = fnrtest::gradcheck(
        [&](const std::vector<Tensor<double>>& in) {
            return fnr::normal_reconstruction_loss(in[0], gt, mask);
        },
        {pred});
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("hinge losses match their closed forms") {
    auto real = Tensor<double>::from_data({2, 1}, {1.0, 1.0});
    auto fake = Tensor<double>::from_data({2, 1}, {-1.0, -1.0});
    CHECK(fnr::discriminator_adv_loss(real, fake).item() == doctest::Approx(0.0));

    auto zero = Tensor<double>::from_data({2, 1}, {0.0, 0.0});
    CHECK(fnr::discriminator_adv_loss(zero, zero).item() == doctest::Approx(2.0));

    // Generator loss decreases monotonically in the fake score.
    double prev = 1e9;
    for (double s : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
        auto scores = Tensor<double>::from_data({1, 1}, {s});
        const double g = fnr::generator_adv_loss(scores).item();
        CHECK(g < prev);
        prev = g;
    }
}

TEST_CASE("non-saturating variant is finite and ordered") {
    auto real = Tensor<double>::from_data({1, 1}, {3.0});
    auto fake = Tensor<double>::from_data({1, 1}, {-3.0});
    const double good = fnr::discriminator_adv_loss(real, fake, fnr::AdvLossKind::NonSaturating).item();
    const double bad = fnr::discriminator_adv_loss(fake, real, fnr::AdvLossKind::NonSaturating).item();
    CHECK(good < bad);
    CHECK(std::isfinite(good));
    CHECK(std::isfinite(bad));
}

TEST_CASE("stage-1 composition follows the weighted sum exactly") {
    auto ln = Tensor<double>::from_data({1}, {0.5});
    auto ld = Tensor<double>::from_data({1}, {10.0});
    CHECK(fnr::stage1_total(ln, ld, 1e-4).item() == doctest::Approx(0.501).epsilon(1e-12));
    CHECK(fnr::stage1_total(ln, ld, 0.0).item() == doctest::Approx(0.5));
    auto zero = Tensor<double>::from_data({1}, {0.0});
    CHECK(fnr::stage1_total(ln, zero, 1e-4).item() == doctest::Approx(0.5));
}
