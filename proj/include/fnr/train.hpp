#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fnr/blocks.hpp"
#include "fnr/checkpoint.hpp"
#include "fnr/config.hpp"
#include "fnr/dataset.hpp"
#include "fnr/losses.hpp"
#include "fnr/normal_map.hpp"

namespace fnr {

// ---- batch assembly ----

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
    std::vector<T> data(image.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<T>(image.pixels[i]);
    }
    return Tensor<T>::from_data({1, 3, image.height, image.width}, std::move(data));
}

template <typename T>
Tensor<T> normal_map_to_tensor(const NormalMap& nm) {
    std::vector<T> data(nm.normals.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<T>(nm.normals[i]);
    }
    return Tensor<T>::from_data({1, 3, nm.height, nm.width}, std::move(data));
}

template <typename T>
Tensor<T> batch_images(const std::vector<Sample>& samples, std::span<const std::size_t> idx) {
    std::vector<T> data;
    const auto& first = samples.at(idx[0]).image;
    data.reserve(idx.size() * first.pixels.size());
    for (auto i : idx) {
        const auto& img = samples.at(i).image;
        for (float v : img.pixels) {
            data.push_back(static_cast<T>(v));
        }
    }
    return Tensor<T>::from_data(
        {static_cast<std::int64_t>(idx.size()), 3, first.height, first.width}, std::move(data));
}

template <typename T>
Tensor<T> batch_normals(const std::vector<Sample>& samples, std::span<const std::size_t> idx) {
    std::vector<T> data;
    const auto& first = samples.at(idx[0]).gt;
    data.reserve(idx.size() * first.normals.size());
    for (auto i : idx) {
        const auto& nm = samples.at(i).gt;
        for (float v : nm.normals) {
            data.push_back(static_cast<T>(v));
        }
    }
    return Tensor<T>::from_data(
        {static_cast<std::int64_t>(idx.size()), 3, first.height, first.width}, std::move(data));
}

template <typename T>
Tensor<T> batch_masks(const std::vector<Sample>& samples, std::span<const std::size_t> idx) {
    std::vector<T> data;
    const auto& first = samples.at(idx[0]).gt;
    data.reserve(idx.size() * first.mask.size());
    for (auto i : idx) {
        for (auto m : samples.at(i).gt.mask) {
            data.push_back(m ? T(1) : T(0));
        }
    }
    return Tensor<T>::from_data(
        {static_cast<std::int64_t>(idx.size()), 1, first.height, first.width}, std::move(data));
}

// Extracts one batch item into a NormalMap, renormalized, with the given mask.
template <typename T>
NormalMap tensor_to_normal_map(const Tensor<T>& field, std::int64_t item,
                               const std::vector<std::uint8_t>& mask) {
    const std::int64_t h = field.dim(2), w = field.dim(3);
    NormalMap nm(static_cast<int>(w), static_cast<int>(h));
    const std::size_t plane = nm.plane_size();
    const T* src = field.values().data() + item * 3 * h * w;
    for (std::size_t i = 0; i < 3 * plane; ++i) {
        nm.normals[i] = static_cast<float>(src[i]);
    }
    if (!mask.empty()) {
        nm.mask = mask;
    }
    renormalize(nm);
    return nm;
}

inline std::vector<std::size_t> sample_batch_indices(Rng& rng, std::size_t pool, int batch) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) {
        i = static_cast<std::size_t>(rng.uniform_int(pool));
    }
    return idx;
}

namespace detail {

template <typename T>
void check_finite(T value, const char* label, std::int64_t iteration,
                  std::span<const std::size_t> batch, const std::string& diagnostics_dir) {
    if (std::isfinite(static_cast<double>(value))) {
        return;
    }
    std::string desc = std::string(label) + " became non-finite at iteration " +
                       std::to_string(iteration) + " (batch indices:";
    for (auto i : batch) {
        desc += " " + std::to_string(i);
    }
    desc += ")";
    if (!diagnostics_dir.empty()) {
        std::ofstream dump(diagnostics_dir + "/nonfinite_dump.txt");
        dump << desc << "\n";
    }
    throw TrainingError(desc);
}

} // namespace detail

// ---- stage 1: coarse predictor with self-attention adversarial training ----

template <typename T>
class Stage1Trainer {
public:
    explicit Stage1Trainer(const Config& config)
        : config_(config), rng_(config.train.seed), cp_(config.profile, rng_),
          disc_(config.profile, rng_) {
        cp_.collect("cp", cp_params_);
        disc_.collect("disc", disc_params_);
        opt_g_ = Adam<T>(cp_params_, static_cast<T>(config.train.lr));
        opt_d_ = Adam<T>(disc_params_, static_cast<T>(config.train.lr));
    }

    LossReport<T> step(const std::vector<Sample>& train_samples) {
        const auto idx = sample_batch_indices(rng_, train_samples.size(), config_.train.batch_size);
        auto images = batch_images<T>(train_samples, idx);
        auto gt = batch_normals<T>(train_samples, idx);
        auto mask = batch_masks<T>(train_samples, idx);

        auto pred = cp_.forward(images);
        auto normal_loss = normal_reconstruction_loss(pred, gt, mask);

        LossReport<T> report;
        report.lambda_dcp = static_cast<T>(config_.train.lambda_dcp);
        Tensor<T> total;
        if (config_.train.lambda_dcp != 0.0) {
            // Discriminator update (1:1 with the generator).
            auto real_scores = disc_.forward(gt);
            auto fake_scores = disc_.forward(pred.detach());
            auto d_loss = discriminator_adv_loss(real_scores, fake_scores, config_.profile.adv_loss);
            detail::check_finite(d_loss.item(), "discriminator loss", iteration_, idx, diagnostics_dir_);
            opt_d_.zero_grad();
            d_loss.backward();
            opt_d_.step();

            auto gen_scores = disc_.forward(pred);
            auto g_adv = generator_adv_loss(gen_scores, config_.profile.adv_loss);
            report.adv_loss = g_adv.item();
            total = stage1_total(normal_loss, g_adv, static_cast<T>(config_.train.lambda_dcp));
        } else {
            total = normal_loss;
        }
        report.normal_loss = normal_loss.item();
        report.total = total.item();
        detail::check_finite(report.total, "stage-1 loss", iteration_, idx, diagnostics_dir_);

        opt_g_.zero_grad();
        total.backward();
        opt_g_.step();
        ++iteration_;
        return report;
    }

    void save(const std::string& path) {
        auto arrays = checkpoint_arrays(cp_params_, opt_g_, "adam_g");
        auto disc_arrays = checkpoint_arrays(disc_params_, opt_d_, "adam_d");
        arrays.insert(arrays.end(), disc_arrays.begin(), disc_arrays.end());
        const std::int64_t steps[2] = {opt_g_.iteration_count(), opt_d_.iteration_count()};
        save_checkpoint<T>(path, StageTag::Coarse, iteration_, rng_, steps, arrays);
    }

    void load(const std::string& path) {
        auto arrays = checkpoint_arrays(cp_params_, opt_g_, "adam_g");
        auto disc_arrays = checkpoint_arrays(disc_params_, opt_d_, "adam_d");
        arrays.insert(arrays.end(), disc_arrays.begin(), disc_arrays.end());
        std::int64_t steps[2] = {0, 0};
        const auto header = load_checkpoint<T>(path, StageTag::Coarse, rng_, steps, arrays);
        opt_g_.set_iteration_count(steps[0]);
        opt_d_.set_iteration_count(steps[1]);
        iteration_ = header.iteration;
    }

    std::int64_t iteration() const { return iteration_; }
    CpNet<T>& cp() { return cp_; }
    Discriminator<T>& discriminator() { return disc_; }
    ParamList<T>& cp_params() { return cp_params_; }
    ParamList<T>& disc_params() { return disc_params_; }
    Rng& rng() { return rng_; }
    void set_diagnostics_dir(std::string dir) { diagnostics_dir_ = std::move(dir); }

private:
    Config config_;
    Rng rng_;
    CpNet<T> cp_;
    Discriminator<T> disc_;
    ParamList<T> cp_params_;
    ParamList<T> disc_params_;
    Adam<T> opt_g_;
    Adam<T> opt_d_;
    std::int64_t iteration_ = 0;
    std::string diagnostics_dir_;
};

// ---- stage 2: exemplar-guided refinement, coarse predictor frozen ----

template <typename T>
class Stage2Trainer {
public:
    // The coarse predictor arrives from a stage-1 checkpoint and stays frozen.
    Stage2Trainer(const Config& config, CpNet<T> cp)
        : config_(config), rng_(config.train.seed), cp_(std::move(cp)), nr_(config.profile, rng_) {
        nr_.collect("nr", nr_params_);
        opt_ = Adam<T>(nr_params_, static_cast<T>(config.train.lr));
    }

    LossReport<T> step(const std::vector<Sample>& train_samples) {
        const auto idx = sample_batch_indices(rng_, train_samples.size(), config_.train.batch_size);
        auto images = batch_images<T>(train_samples, idx);
        auto gt = batch_normals<T>(train_samples, idx);
        auto mask = batch_masks<T>(train_samples, idx);

        Tensor<T> exemplar;
        {
            NoGradGuard guard;
            exemplar = cp_.forward(images);
        }
        auto refined = nr_.forward(images, exemplar);
        auto loss = normal_reconstruction_loss(refined, gt, mask);

        LossReport<T> report;
        report.lambda_dcp = T(0);
        report.normal_loss = loss.item();
        report.total = report.normal_loss;
        detail::check_finite(report.total, "stage-2 loss", iteration_, idx, diagnostics_dir_);

        opt_.zero_grad();
        loss.backward();
        opt_.step();
        ++iteration_;
        return report;
    }

    void save(const std::string& path) {
        auto arrays = checkpoint_arrays(nr_params_, opt_, "adam");
        const std::int64_t steps[1] = {opt_.iteration_count()};
        save_checkpoint<T>(path, StageTag::Refine, iteration_, rng_, steps, arrays);
    }

    void load(const std::string& path) {
        auto arrays = checkpoint_arrays(nr_params_, opt_, "adam");
        std::int64_t steps[1] = {0};
        const auto header = load_checkpoint<T>(path, StageTag::Refine, rng_, steps, arrays);
        opt_.set_iteration_count(steps[0]);
        iteration_ = header.iteration;
    }

    std::int64_t iteration() const { return iteration_; }
    CpNet<T>& cp() { return cp_; }
    NrNet<T>& nr() { return nr_; }
    ParamList<T>& nr_params() { return nr_params_; }
    Rng& rng() { return rng_; }
    void set_diagnostics_dir(std::string dir) { diagnostics_dir_ = std::move(dir); }

private:
    Config config_;
    Rng rng_;
    CpNet<T> cp_;
    NrNet<T> nr_;
    ParamList<T> nr_params_;
    Adam<T> opt_;
    std::int64_t iteration_ = 0;
    std::string diagnostics_dir_;
};

// ---- inference ----

// Runs both stages on one image; returns the coarse exemplar R and the
// refined normal N, unit-normalized, carrying the provided validity mask
// (all-valid when empty).
template <typename T>
std::pair<NormalMap, NormalMap> infer(const Image& image, const CpNet<T>& cp, const NrNet<T>& nr,
                                      const std::vector<std::uint8_t>& mask = {}) {
    NoGradGuard guard;
    auto input = image_to_tensor<T>(image);
    auto coarse = cp.forward(input);
    auto refined = nr.forward(input, coarse);
    return {tensor_to_normal_map(coarse, 0, mask), tensor_to_normal_map(refined, 0, mask)};
}

// Loads the coarse predictor out of a stage-1 checkpoint without touching
// optimizer or discriminator state.
template <typename T>
CpNet<T> load_coarse_net(const std::string& path, const Config& config) {
    Stage1Trainer<T> trainer(config);
    trainer.load(path);
    return trainer.cp();
}

} // namespace fnr
