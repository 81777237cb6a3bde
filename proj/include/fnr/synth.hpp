#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fnr/normal_map.hpp"
#include "fnr/rng.hpp"

namespace fnr {

struct IlluminationDirection {
    float lx = 0.0f;
    float ly = 0.0f;
    float lz = 1.0f;
    float intensity = 1.0f;
};

// Knobs for procedural scene generation. Heights are relative to min(W,H).
struct SynthProfile {
    int width = 64;
    int height = 64;
    double dome_height_min = 0.02;
    double dome_height_max = 0.35;
    double bump_amplitude_min = 0.0;
    double bump_amplitude_max = 0.05;
    double bump_freq_min = 2.0; // cycles across the image
    double bump_freq_max = 8.0;
    int bump_waves = 12;
    int max_ridges = 3;
    double ridge_amplitude = 0.04;
    int min_lights = 1;
    int max_lights = 3;
    bool tint = true;
};

// A procedurally generated surface: smooth dome plus band-limited bump noise
// and optional ridge features, with a piecewise-constant albedo and a small
// set of directional lights. Deterministic per seed.
struct SynthScene {
    int width = 0;
    int height = 0;
    std::vector<double> heightfield; // H*W, pixel units
    std::vector<float> albedo;       // H*W
    std::vector<std::uint8_t> mask;  // elliptical support of the surface
    std::vector<IlluminationDirection> lights;
    std::array<float, 3> tint = {1.0f, 1.0f, 1.0f};
    std::uint64_t seed = 0;
};

SynthScene generate_scene(std::uint64_t seed, const SynthProfile& profile);

// Central differences inside, one-sided at borders:
// n = normalize(-dh/dx, -dh/dy, 1).
NormalMap heightfield_to_normals(const SynthScene& scene);

// Lambertian shading: albedo * sum_i intensity_i * max(0, n . l_i), clamped
// to [0,1]; replicated to three channels with the scene tint.
Image render_lambertian(const SynthScene& scene, const NormalMap& normals);

} // namespace fnr
