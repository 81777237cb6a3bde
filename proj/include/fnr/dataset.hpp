#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fnr/normal_map.hpp"
#include "fnr/synth.hpp"

namespace fnr {

struct DataPair {
    std::string image_path;  // relative to the manifest directory
    std::string normal_path;
    bool train = true;
};

struct DatasetManifest {
    std::vector<DataPair> pairs;

    std::vector<std::size_t> indices(bool train) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].train == train) {
                out.push_back(i);
            }
        }
        return out;
    }
};

struct Sample {
    Image image;
    NormalMap gt;
};

// Deterministic per-scene seed derived from the dataset seed.
std::uint64_t scene_seed(std::uint64_t base_seed, std::int64_t index);

// Generates n_scenes image/normal pairs under out_dir (images/, normals/),
// assigns a deterministic train/test split, and writes manifest.txt with one
// record per line: <image_path>\t<normal_path>\t<train|test>.
DatasetManifest build_dataset(int n_scenes, std::uint64_t seed, double split,
                              const SynthProfile& profile, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& manifest_path);
void save_manifest(const DatasetManifest& manifest, const std::string& manifest_path);

// Loads the PNG pairs of one split into memory. `dir` is the dataset root
// (the directory containing manifest.txt).
std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& dir, bool train);

} // namespace fnr
