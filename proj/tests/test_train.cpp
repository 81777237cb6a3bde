#include "doctest.h"

#include <cmath>
#include <numeric>

#include "fnr/metrics.hpp"
#include "fnr/train.hpp"

namespace {

fnr::Config tiny_config(std::uint64_t seed = 7) {
    fnr::Config config;
    config.profile.image_size = 64;
    config.profile.cp_widths = {8, 16, 16, 16, 16, 16};
    config.profile.face_widths = {8, 16, 16, 16, 16, 16};
    config.profile.er_widths = {8, 8, 16};
    config.profile.er_fpn_channels = 16;
    config.profile.disc_widths = {8, 16, 16, 16};
    config.train.batch_size = 2;
    config.train.seed = seed;
    return config;
}

std::vector<fnr::Sample> make_samples(int n, std::uint64_t seed = 5000) {
    fnr::SynthProfile profile;
    profile.width = 64;
    profile.height = 64;
    std::vector<fnr::Sample> samples;
    for (int i = 0; i < n; ++i) {
        auto scene = fnr::generate_scene(seed + static_cast<std::uint64_t>(i), profile);
        fnr::Sample s;
        s.gt = fnr::heightfield_to_normals(scene);
        s.image = fnr::render_lambertian(scene, s.gt);
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace

TEST_CASE("pure-reconstruction stage 1 drives the loss down") {
    auto config = tiny_config();
    config.train.lambda_dcp = 0.0;
    config.train.lr = 2e-3;
    auto samples = make_samples(4);
    fnr::Stage1Trainer<float> trainer(config);
    std::vector<float> losses;
    for (int i = 0; i < 120; ++i) {
        losses.push_back(trainer.step(samples).normal_loss);
    }
    const float head = std::accumulate(losses.begin(), losses.begin() + 30, 0.0f) / 30.0f;
    const float tail = std::accumulate(losses.end() - 30, losses.end(), 0.0f) / 30.0f;
    CHECK(tail < head);
    CHECK(std::isfinite(tail));
}

TEST_CASE("adversarial stage 1 runs and keeps both nets finite") {
    auto config = tiny_config();
    config.train.lambda_dcp = 1e-4;
    auto samples = make_samples(4);
    fnr::Stage1Trainer<float> trainer(config);
    for (int i = 0; i < 10; ++i) {
        auto report = trainer.step(samples);
        CHECK(std::isfinite(report.total));
        CHECK(std::isfinite(report.adv_loss));
        CHECK(report.total == doctest::Approx(report.normal_loss + 1e-4f * report.adv_loss)
                                  .epsilon(1e-5));
    }
    // After some updates the discriminator produces a usable learning signal:
    // its score gradient w.r.t. the input is finite and nonzero.
    auto x = fnr::batch_images<float>(samples, std::vector<std::size_t>{0, 1});
    x.set_requires_grad(true);
    auto score = fnr::sum_all(trainer.discriminator().forward(x));
    score.backward();
    double l1 = 0.0;
    for (float g : x.grad()) {
        REQUIRE(std::isfinite(g));
        l1 += std::fabs(g);
    }
    CHECK(l1 > 0.0);
}

TEST_CASE("stage 2 freezes the coarse predictor bitwise") {
    auto config = tiny_config();
    auto samples = make_samples(4);
    fnr::Stage1Trainer<float> stage1(config);
    for (int i = 0; i < 5; ++i) {
        stage1.step(samples);
    }
    fnr::Stage2Trainer<float> stage2(config, stage1.cp());

    std::vector<std::vector<float>> before;
    fnr::ParamList<float> cp_params;
    stage2.cp().collect("cp", cp_params);
    for (auto& p : cp_params) {
        before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    }
    for (int i = 0; i < 8; ++i) {
        auto report = stage2.step(samples);
        CHECK(std::isfinite(report.total));
        CHECK(report.adv_loss == 0.0f); // stage 2 trains with reconstruction only
    }
    for (std::size_t i = 0; i < cp_params.size(); ++i) {
        const std::vector<float> after(cp_params[i].tensor.values().begin(),
                                       cp_params[i].tensor.values().end());
        CHECK(after == before[i]);
    }
}

TEST_CASE("every refinement parameter receives a gradient within 10 stage-2 iterations") {
    auto config = tiny_config();
    auto samples = make_samples(4);
    fnr::Rng rng(3);
    fnr::CpNet<float> cp(config.profile, rng);
    fnr::Stage2Trainer<float> stage2(config, cp);

    std::vector<double> grad_l1(stage2.nr_params().size(), 0.0);
    for (int iter = 0; iter < 10; ++iter) {
        stage2.step(samples);
        for (std::size_t i = 0; i < stage2.nr_params().size(); ++i) {
            auto& p = stage2.nr_params()[i].tensor;
            if (!p.has_grad()) {
                continue;
            }
            for (float g : p.grad()) {
                grad_l1[i] += std::fabs(g);
            }
        }
    }
    for (std::size_t i = 0; i < grad_l1.size(); ++i) {
        CHECK_MESSAGE(grad_l1[i] > 0.0, stage2.nr_params()[i].name);
    }
}

TEST_CASE("inference is deterministic and preserves the input size") {
    auto config = tiny_config();
    auto samples = make_samples(1);
    fnr::Rng rng(9);
    fnr::CpNet<float> cp(config.profile, rng);
    fnr::NrNet<float> nr(config.profile, rng);

    auto [r1, n1] = fnr::infer(samples[0].image, cp, nr, samples[0].gt.mask);
    auto [r2, n2] = fnr::infer(samples[0].image, cp, nr, samples[0].gt.mask);
    CHECK(r1.width == 64);
    CHECK(n1.height == 64);
    CHECK(r1.normals == r2.normals);
    CHECK(n1.normals == n2.normals);
    CHECK(n1.mask == samples[0].gt.mask);

    // Outputs are unit normals on valid pixels.
    const std::size_t plane = n1.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        if (!n1.mask[i]) {
            continue;
        }
        const double norm = std::sqrt(static_cast<double>(n1.normals[i]) * n1.normals[i] +
                                      static_cast<double>(n1.normals[plane + i]) * n1.normals[plane + i] +
                                      static_cast<double>(n1.normals[2 * plane + i]) *
                                          n1.normals[2 * plane + i]);
        CHECK(std::fabs(norm - 1.0) < 1e-5);
    }
}

TEST_CASE("a non-finite loss aborts with a diagnostic error") {
    auto config = tiny_config();
    auto samples = make_samples(2);
    fnr::Stage1Trainer<float> trainer(config);
    // Poison one coarse-net weight.
    trainer.cp_params()[0].tensor.values_mut()[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        trainer.step(samples);
        FAIL("expected TrainingError");
    } catch (const fnr::TrainingError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite") != std::string::npos);
        CHECK(msg.find("batch indices") != std::string::npos);
    }
}

TEST_CASE("identical seeds give identical training trajectories") {
    auto samples = make_samples(3);
    auto run = [&](std::uint64_t seed) {
        auto config = tiny_config(seed);
        config.train.lambda_dcp = 1e-4;
        fnr::Stage1Trainer<double> trainer(config);
        std::vector<double> params;
        for (int i = 0; i < 4; ++i) {
            trainer.step(samples);
        }
        for (auto& p : trainer.cp_params()) {
            params.insert(params.end(), p.tensor.values().begin(), p.tensor.values().end());
        }
        return params;
    };
    CHECK(run(11) == run(11));
    CHECK(run(11) != run(12));
}
