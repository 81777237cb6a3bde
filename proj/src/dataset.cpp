#include "fnr/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fnr/errors.hpp"
#include "fnr/png_io.hpp"
#include "fnr/rng.hpp"

namespace fs = std::filesystem;

namespace fnr {

std::uint64_t scene_seed(std::uint64_t base_seed, std::int64_t index) {
    // splitmix64 over the combined words
    std::uint64_t x = base_seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

DatasetManifest build_dataset(int n_scenes, std::uint64_t seed, double split,
                              const SynthProfile& profile, const std::string& out_dir) {
    if (n_scenes < 2) {
        throw Error("build_dataset: need at least 2 scenes, got " + std::to_string(n_scenes));
    }
    if (!(split > 0.0 && split < 1.0)) {
        throw Error("build_dataset: split must be in (0,1)");
    }
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "normals");

    // Deterministic shuffled split.
    std::vector<std::size_t> order(static_cast<std::size_t>(n_scenes));
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng split_rng(seed ^ 0x5eedc0deULL);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(split_rng.uniform_int(i + 1));
        std::swap(order[i], order[j]);
    }
    const std::size_t n_train = static_cast<std::size_t>(
        std::min<std::int64_t>(n_scenes - 1, std::max<std::int64_t>(1, std::llround(split * n_scenes))));
    std::vector<bool> is_train(static_cast<std::size_t>(n_scenes), false);
    for (std::size_t i = 0; i < n_train; ++i) {
        is_train[order[i]] = true;
    }

    DatasetManifest manifest;
    manifest.pairs.resize(static_cast<std::size_t>(n_scenes));
    for (int i = 0; i < n_scenes; ++i) {
        const auto scene = generate_scene(scene_seed(seed, i), profile);
        const auto normals = heightfield_to_normals(scene);
        const auto image = render_lambertian(scene, normals);

        char name[64];
        std::snprintf(name, sizeof(name), "scene_%05d.png", i);
        const std::string img_rel = std::string("images/") + name;
        const std::string nrm_rel = std::string("normals/") + name;
        encode_image_png(image, (fs::path(out_dir) / img_rel).string());
        encode_normal_png(normals, (fs::path(out_dir) / nrm_rel).string());

        auto& pair = manifest.pairs[static_cast<std::size_t>(i)];
        pair.image_path = img_rel;
        pair.normal_path = nrm_rel;
        pair.train = is_train[static_cast<std::size_t>(i)];
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.txt").string());
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& manifest_path) {
    std::ofstream out(manifest_path);
    if (!out) {
        throw IoError("cannot open '" + manifest_path + "' for writing");
    }
    for (const auto& pair : manifest.pairs) {
        out << pair.image_path << '\t' << pair.normal_path << '\t' << (pair.train ? "train" : "test")
            << '\n';
    }
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open manifest '" + manifest_path + "'");
    }
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) {
            throw IoError("manifest '" + manifest_path + "' line " + std::to_string(line_no) +
                          ": expected three tab-separated fields");
        }
        DataPair pair;
        pair.image_path = line.substr(0, tab1);
        pair.normal_path = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string split = line.substr(tab2 + 1);
        if (split == "train") {
            pair.train = true;
        } else if (split == "test") {
            pair.train = false;
        } else {
            throw IoError("manifest '" + manifest_path + "' line " + std::to_string(line_no) +
                          ": unknown split '" + split + "'");
        }
        manifest.pairs.push_back(std::move(pair));
    }
    return manifest;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& dir, bool train) {
    std::vector<Sample> samples;
    for (const auto& pair : manifest.pairs) {
        if (pair.train != train) {
            continue;
        }
        Sample s;
        s.image = decode_image_png((fs::path(dir) / pair.image_path).string());
        s.gt = decode_normal_png((fs::path(dir) / pair.normal_path).string());
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace fnr
