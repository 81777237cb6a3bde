#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fnr/dataset.hpp"
#include "fnr/metrics.hpp"
#include "fnr/png_io.hpp"
#include "fnr/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kBuildId = "facenormals 1.0.0";

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    std::string cp_checkpoint;
    std::string nr_checkpoint;
    std::string profile;
    std::string precision = "f32";
    std::uint64_t seed = 42;
    std::int64_t iterations = 0;
    bool seed_set = false;
    bool iterations_set = false;
};

fnr::Config make_config(const CommonArgs& args, fnr::Stage stage) {
    fnr::Config config;
    if (!args.config_path.empty()) {
        config = fnr::load_config(args.config_path);
    }
    // Explicit flags override config-file values.
    if (!args.profile.empty()) {
        auto fresh = fnr::default_config(args.profile);
        config.profile_name = fresh.profile_name;
        config.profile = fresh.profile;
    }
    if (args.seed_set || args.config_path.empty()) {
        config.train.seed = args.seed;
    }
    if (args.iterations_set) {
        config.train.iterations = args.iterations;
    }
    config.train.stage = stage;
    if (config.train.iterations == 0) {
        config.train.iterations = fnr::default_iterations(config.profile_name, stage);
    }
    return config;
}

void write_run_manifest(const std::string& out_dir, const fnr::Config& config,
                        const std::string& precision, const std::string& command) {
    std::ofstream out(fs::path(out_dir) / "run_manifest.txt");
    out << "build = " << kBuildId << "\n";
    out << "command = " << command << "\n";
    out << "precision = " << precision << "\n";
    out << fnr::config_to_string(config);
}

fnr::SynthProfile synth_profile_for(const fnr::Config& config) {
    fnr::SynthProfile profile;
    profile.width = config.profile.image_size;
    profile.height = config.profile.image_size;
    return profile;
}

int run_gen_synth(const CommonArgs& args, int count) {
    auto config = make_config(args, fnr::Stage::Coarse);
    fs::create_directories(args.out_dir);
    write_run_manifest(args.out_dir, config, args.precision, "gen-synth");
    const auto manifest =
        fnr::build_dataset(count, config.train.seed, 0.8, synth_profile_for(config), args.out_dir);
    std::cout << "wrote " << manifest.pairs.size() << " image/normal pairs to " << args.out_dir << " ("
              << manifest.indices(true).size() << " train / " << manifest.indices(false).size()
              << " test)\n";
    return 0;
}

template <typename T>
int run_train_coarse(const CommonArgs& args) {
    auto config = make_config(args, fnr::Stage::Coarse);
    fs::create_directories(args.out_dir);
    write_run_manifest(args.out_dir, config, args.precision, "train-coarse");

    const auto manifest = fnr::load_manifest((fs::path(args.data_dir) / "manifest.txt").string());
    const auto train_samples = fnr::load_samples(manifest, args.data_dir, true);
    if (train_samples.empty()) {
        throw fnr::Error("dataset has no training samples");
    }

    fnr::Stage1Trainer<T> trainer(config);
    trainer.set_diagnostics_dir(args.out_dir);
    if (!args.cp_checkpoint.empty()) {
        trainer.load(args.cp_checkpoint);
        std::cout << "resumed from " << args.cp_checkpoint << " at iteration " << trainer.iteration()
                  << "\n";
    }

    std::ofstream loss_csv(fs::path(args.out_dir) / "loss_curve.csv");
    loss_csv << "iter,loss_total,loss_normal,loss_adv\n";
    while (trainer.iteration() < config.train.iterations) {
        const auto report = trainer.step(train_samples);
        loss_csv << trainer.iteration() << ',' << report.total << ',' << report.normal_loss << ','
                 << report.adv_loss << "\n";
        if (config.train.checkpoint_every > 0 &&
            trainer.iteration() % config.train.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "cp_iter%07lld.fnrr",
                          static_cast<long long>(trainer.iteration()));
            trainer.save((fs::path(args.out_dir) / name).string());
        }
        if (trainer.iteration() % 500 == 0) {
            std::cout << "iter " << trainer.iteration() << "  loss " << report.total << "\n";
        }
    }
    const auto final_path = (fs::path(args.out_dir) / "cp_final.fnrr").string();
    trainer.save(final_path);
    std::cout << "stage-1 checkpoint written to " << final_path << "\n";
    return 0;
}

template <typename T>
int run_train_refine(const CommonArgs& args) {
    auto config = make_config(args, fnr::Stage::Refine);
    fs::create_directories(args.out_dir);
    write_run_manifest(args.out_dir, config, args.precision, "train-refine");

    const auto manifest = fnr::load_manifest((fs::path(args.data_dir) / "manifest.txt").string());
    const auto train_samples = fnr::load_samples(manifest, args.data_dir, true);
    if (train_samples.empty()) {
        throw fnr::Error("dataset has no training samples");
    }

    auto cp = fnr::load_coarse_net<T>(args.cp_checkpoint, config);
    fnr::Stage2Trainer<T> trainer(config, std::move(cp));
    trainer.set_diagnostics_dir(args.out_dir);
    if (!args.nr_checkpoint.empty()) {
        trainer.load(args.nr_checkpoint);
        std::cout << "resumed from " << args.nr_checkpoint << " at iteration " << trainer.iteration()
                  << "\n";
    }

    std::ofstream loss_csv(fs::path(args.out_dir) / "loss_curve.csv");
    loss_csv << "iter,loss_total,loss_normal,loss_adv\n";
    while (trainer.iteration() < config.train.iterations) {
        const auto report = trainer.step(train_samples);
        loss_csv << trainer.iteration() << ',' << report.total << ',' << report.normal_loss << ",0\n";
        if (config.train.checkpoint_every > 0 &&
            trainer.iteration() % config.train.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "nr_iter%07lld.fnrr",
                          static_cast<long long>(trainer.iteration()));
            trainer.save((fs::path(args.out_dir) / name).string());
        }
        if (trainer.iteration() % 500 == 0) {
            std::cout << "iter " << trainer.iteration() << "  loss " << report.total << "\n";
        }
    }
    const auto final_path = (fs::path(args.out_dir) / "nr_final.fnrr").string();
    trainer.save(final_path);
    std::cout << "stage-2 checkpoint written to " << final_path << "\n";
    return 0;
}

template <typename T>
int run_infer(const CommonArgs& args) {
    auto config = make_config(args, fnr::Stage::Refine);
    fs::create_directories(fs::path(args.out_dir) / "coarse");
    fs::create_directories(fs::path(args.out_dir) / "refined");
    write_run_manifest(args.out_dir, config, args.precision, "infer");

    auto cp = fnr::load_coarse_net<T>(args.cp_checkpoint, config);
    fnr::Rng rng(config.train.seed);
    fnr::Stage2Trainer<T> holder(config, std::move(cp));
    holder.load(args.nr_checkpoint);

    // Either a dataset directory (with manifest.txt) or a directory of PNGs.
    std::vector<std::string> image_files;
    const auto manifest_path = fs::path(args.data_dir) / "manifest.txt";
    if (fs::exists(manifest_path)) {
        const auto manifest = fnr::load_manifest(manifest_path.string());
        for (const auto& pair : manifest.pairs) {
            image_files.push_back((fs::path(args.data_dir) / pair.image_path).string());
        }
    } else {
        for (const auto& entry : fs::directory_iterator(args.data_dir)) {
            if (entry.path().extension() == ".png") {
                image_files.push_back(entry.path().string());
            }
        }
        std::sort(image_files.begin(), image_files.end());
    }
    if (image_files.empty()) {
        throw fnr::Error("no input images found under '" + args.data_dir + "'");
    }

    for (const auto& file : image_files) {
        const auto image = fnr::decode_image_png(file);
        auto [coarse, refined] = fnr::infer(image, holder.cp(), holder.nr());
        const auto name = fs::path(file).filename().string();
        fnr::encode_normal_png(coarse, (fs::path(args.out_dir) / "coarse" / name).string());
        fnr::encode_normal_png(refined, (fs::path(args.out_dir) / "refined" / name).string());
    }
    std::cout << "wrote " << image_files.size() << " coarse and refined normal maps to " << args.out_dir
              << "\n";
    return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& report_path) {
    // Ground truth: a dataset root (test split of manifest.txt) or a plain
    // directory of normal PNGs.
    std::vector<std::pair<std::string, std::string>> pairs; // (pred, gt)
    const auto manifest_path = fs::path(gt_dir) / "manifest.txt";
    if (fs::exists(manifest_path)) {
        const auto manifest = fnr::load_manifest(manifest_path.string());
        for (const auto& pair : manifest.pairs) {
            if (pair.train) {
                continue;
            }
            const auto name = fs::path(pair.normal_path).filename().string();
            pairs.emplace_back((fs::path(pred_dir) / name).string(),
                               (fs::path(gt_dir) / pair.normal_path).string());
        }
    } else {
        for (const auto& entry : fs::directory_iterator(gt_dir)) {
            if (entry.path().extension() == ".png") {
                pairs.emplace_back((fs::path(pred_dir) / entry.path().filename()).string(),
                                   entry.path().string());
            }
        }
        std::sort(pairs.begin(), pairs.end());
    }
    if (pairs.empty()) {
        throw fnr::Error("no ground-truth normal maps found under '" + gt_dir + "'");
    }

    std::vector<fnr::ErrorMap> maps;
    for (const auto& [pred_path, gt_path] : pairs) {
        const auto pred = fnr::decode_normal_png(pred_path);
        const auto gt = fnr::decode_normal_png(gt_path);
        maps.push_back(fnr::angular_error_map(pred, gt));
    }
    const auto report = fnr::compute_metrics(maps);
    if (!report_path.empty()) {
        fs::create_directories(fs::path(report_path).parent_path());
        fnr::write_metrics_csv(report, report_path);
    }
    std::cout << fnr::metrics_table(report);
    return 0;
}

int run_render_shading(const std::string& normals_path, const std::string& out_dir, int lights) {
    fs::create_directories(out_dir);
    const auto nm = fnr::decode_normal_png(normals_path);
    const auto images = fnr::render_shading_suite(nm, lights);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "shading_%02zu.png", i);
        fnr::encode_image_png(images[i], (fs::path(out_dir) / name).string());
    }
    std::cout << "wrote " << images.size() << " shading maps to " << out_dir << "\n";
    return 0;
}

int run_render_error(const std::string& pred_path, const std::string& gt_path,
                     const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto pred = fnr::decode_normal_png(pred_path);
    const auto gt = fnr::decode_normal_png(gt_path);
    const auto em = fnr::angular_error_map(pred, gt);
    fnr::encode_image_png(fnr::render_error_map(em), (fs::path(out_dir) / "error_map.png").string());
    const auto report = fnr::compute_metrics({em});
    std::cout << fnr::metrics_table(report);
    std::cout << "error map written to " << (fs::path(out_dir) / "error_map.png").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine face normal estimation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    int count = 100;
    int lights = 7;
    std::string pred_path, gt_path, report_path;

    auto add_common = [&](CLI::App* cmd, bool with_train_flags) {
        cmd->add_option("--config", args.config_path, "key = value config file");
        cmd->add_option("--seed", args.seed, "random seed (default 42)")
            ->each([&](const std::string&) { args.seed_set = true; });
        cmd->add_option("--profile", args.profile, "architecture profile")
            ->check(CLI::IsMember({"desk", "full"}));
        if (with_train_flags) {
            cmd->add_option("--iterations", args.iterations, "iteration count (0 = profile default)")
                ->each([&](const std::string&) { args.iterations_set = true; });
            cmd->add_option("--precision", args.precision, "numeric precision")
                ->check(CLI::IsMember({"f32", "f64"}));
        }
    };

    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic image/normal dataset");
    gen->add_option("--count", count, "number of scenes")->required();
    gen->add_option("--out", args.out_dir, "output directory")->required();
    add_common(gen, false);

    auto* coarse = app.add_subcommand("train-coarse", "train the coarse predictor (stage 1)");
    coarse->add_option("--data", args.data_dir, "dataset directory")->required();
    coarse->add_option("--out", args.out_dir, "output directory")->required();
    coarse->add_option("--cp-checkpoint", args.cp_checkpoint, "stage-1 checkpoint to resume from");
    add_common(coarse, true);

    auto* refine = app.add_subcommand("train-refine", "train the refinement network (stage 2)");
    refine->add_option("--data", args.data_dir, "dataset directory")->required();
    refine->add_option("--out", args.out_dir, "output directory")->required();
    refine->add_option("--cp-checkpoint", args.cp_checkpoint, "frozen stage-1 checkpoint")->required();
    refine->add_option("--nr-checkpoint", args.nr_checkpoint, "stage-2 checkpoint to resume from");
    add_common(refine, true);

    auto* infer_cmd = app.add_subcommand("infer", "predict coarse and refined normals");
    infer_cmd->add_option("--data", args.data_dir, "dataset directory or directory of PNG images")
        ->required();
    infer_cmd->add_option("--out", args.out_dir, "output directory")->required();
    infer_cmd->add_option("--cp-checkpoint", args.cp_checkpoint, "stage-1 checkpoint")->required();
    infer_cmd->add_option("--nr-checkpoint", args.nr_checkpoint, "stage-2 checkpoint")->required();
    add_common(infer_cmd, true);

    auto* eval_cmd = app.add_subcommand("eval", "compute angular-error metrics");
    eval_cmd->add_option("--pred", pred_path, "directory of predicted normal PNGs")->required();
    eval_cmd->add_option("--gt", gt_path, "dataset root or directory of ground-truth normal PNGs")
        ->required();
    eval_cmd->add_option("--report", report_path, "metrics CSV output path");

    auto* shading = app.add_subcommand("render-shading", "render shading maps for a normal map");
    shading->add_option("--normals", pred_path, "normal map PNG")->required();
    shading->add_option("--out", args.out_dir, "output directory")->required();
    shading->add_option("--lights", lights, "number of illumination directions (default 7)");

    auto* error_cmd = app.add_subcommand("render-error", "render an angular error map");
    error_cmd->add_option("--pred", pred_path, "predicted normal PNG")->required();
    error_cmd->add_option("--gt", gt_path, "ground-truth normal PNG")->required();
    error_cmd->add_option("--out", args.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            return run_gen_synth(args, count);
        }
        const bool use_f64 = args.precision == "f64";
        if (coarse->parsed()) {
            return use_f64 ? run_train_coarse<double>(args) : run_train_coarse<float>(args);
        }
        if (refine->parsed()) {
            return use_f64 ? run_train_refine<double>(args) : run_train_refine<float>(args);
        }
        if (infer_cmd->parsed()) {
            return use_f64 ? run_infer<double>(args) : run_infer<float>(args);
        }
        if (eval_cmd->parsed()) {
            return run_eval(pred_path, gt_path, report_path);
        }
        if (shading->parsed()) {
            return run_render_shading(pred_path, args.out_dir, lights);
        }
        if (error_cmd->parsed()) {
            return run_render_error(pred_path, gt_path, args.out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
