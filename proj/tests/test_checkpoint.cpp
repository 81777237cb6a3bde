#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "fnr/train.hpp"

namespace fs = std::filesystem;

namespace {

fnr::Config tiny_config() {
    fnr::Config config;
    config.profile.image_size = 64;
    config.profile.cp_widths = {8, 8, 8, 8, 8, 8};
    config.profile.face_widths = {8, 8, 8, 8, 8, 8};
    config.profile.er_widths = {8, 8, 8};
    config.profile.er_fpn_channels = 8;
    config.profile.disc_widths = {8, 8, 8, 8};
    config.train.batch_size = 2;
    config.train.seed = 77;
    return config;
}

std::vector<fnr::Sample> tiny_samples(int n) {
    fnr::SynthProfile profile;
    profile.width = 64;
    profile.height = 64;
    std::vector<fnr::Sample> samples;
    for (int i = 0; i < n; ++i) {
        auto scene = fnr::generate_scene(1000 + static_cast<std::uint64_t>(i), profile);
        fnr::Sample s;
        s.gt = fnr::heightfield_to_normals(scene);
        s.image = fnr::render_lambertian(scene, s.gt);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string temp_file(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

template <typename T>
std::vector<std::vector<T>> snapshot(fnr::ParamList<T>& params) {
    std::vector<std::vector<T>> out;
    for (auto& p : params) {
        out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    }
    return out;
}

} // namespace

TEST_CASE("stage-1 checkpoint round trip restores every tensor bitwise") {
    auto config = tiny_config();
    auto samples = tiny_samples(2);
    fnr::Stage1Trainer<double> a(config);
    for (int i = 0; i < 3; ++i) {
        a.step(samples);
    }
    const auto path = temp_file("fnr_ckpt_roundtrip.fnrr");
    a.save(path);

    fnr::Stage1Trainer<double> b(config);
    b.load(path);
    CHECK(b.iteration() == 3);
    auto sa = snapshot(a.cp_params());
    auto sb = snapshot(b.cp_params());
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i] == sb[i]);
    }
    auto da = snapshot(a.disc_params());
    auto db = snapshot(b.disc_params());
    for (std::size_t i = 0; i < da.size(); ++i) {
        CHECK(da[i] == db[i]);
    }
    CHECK(a.rng() == b.rng());
    fs::remove(path);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run bitwise") {
    auto config = tiny_config();
    auto samples = tiny_samples(3);

    // Uninterrupted: 6 steps.
    fnr::Stage1Trainer<double> full(config);
    for (int i = 0; i < 6; ++i) {
        full.step(samples);
    }

    // Interrupted: 3 steps, save, reload, 3 more.
    const auto path = temp_file("fnr_ckpt_resume.fnrr");
    {
        fnr::Stage1Trainer<double> first(config);
        for (int i = 0; i < 3; ++i) {
            first.step(samples);
        }
        first.save(path);
    }
    fnr::Stage1Trainer<double> resumed(config);
    resumed.load(path);
    for (int i = 0; i < 3; ++i) {
        resumed.step(samples);
    }

    auto sa = snapshot(full.cp_params());
    auto sb = snapshot(resumed.cp_params());
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i] == sb[i]);
    }
    fs::remove(path);
}

TEST_CASE("bad magic is an io error") {
    const auto path = temp_file("fnr_ckpt_badmagic.fnrr");
    {
        std::ofstream out(path, std::ios::binary);
        out << "JUNKJUNKJUNKJUNK";
    }
    auto config = tiny_config();
    fnr::Stage1Trainer<double> t(config);
    CHECK_THROWS_AS(t.load(path), fnr::IoError);
    fs::remove(path);
}

TEST_CASE("a bumped format version is a version error naming both versions") {
    auto config = tiny_config();
    fnr::Stage1Trainer<double> t(config);
    const auto path = temp_file("fnr_ckpt_version.fnrr");
    t.save(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t bumped = fnr::kCheckpointVersion + 1;
        f.write(reinterpret_cast<const char*>(&bumped), 4);
    }
    try {
        t.load(path);
        FAIL("expected VersionError");
    } catch (const fnr::VersionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(std::to_string(fnr::kCheckpointVersion + 1)) != std::string::npos);
        CHECK(msg.find(std::to_string(fnr::kCheckpointVersion)) != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("a truncated checkpoint is a truncation error, not a crash") {
    auto config = tiny_config();
    fnr::Stage1Trainer<double> t(config);
    const auto path = temp_file("fnr_ckpt_truncated.fnrr");
    t.save(path);
    const auto full_size = fs::file_size(path);
    fs::resize_file(path, full_size / 2);
    CHECK_THROWS_AS(t.load(path), fnr::TruncatedError);
    fs::remove(path);
}

TEST_CASE("stage and precision mismatches are version errors") {
    auto config = tiny_config();
    const auto path = temp_file("fnr_ckpt_stage.fnrr");
    {
        fnr::Stage1Trainer<double> t(config);
        t.save(path);
    }
    {
        // Stage-2 loader refuses a stage-1 file.
        fnr::Rng rng(1);
        fnr::CpNet<double> cp(config.profile, rng);
        fnr::Stage2Trainer<double> s2(config, cp);
        CHECK_THROWS_AS(s2.load(path), fnr::VersionError);
    }
    {
        // f32 loader refuses an f64 file.
        fnr::Stage1Trainer<float> t32(config);
        CHECK_THROWS_AS(t32.load(path), fnr::VersionError);
    }
    fs::remove(path);
}

TEST_CASE("a profile mismatch is a version error naming the tensor") {
    auto config = tiny_config();
    const auto path = temp_file("fnr_ckpt_profile.fnrr");
    {
        fnr::Stage1Trainer<double> t(config);
        t.save(path);
    }
    auto wide = config;
    wide.profile.cp_widths = {16, 16, 16, 16, 16, 16};
    fnr::Stage1Trainer<double> t(wide);
    try {
        t.load(path);
        FAIL("expected VersionError");
    } catch (const fnr::VersionError& e) {
        CHECK(std::string(e.what()).find("cp.") != std::string::npos);
    }
    fs::remove(path);
}
