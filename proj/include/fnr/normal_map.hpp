#pragma once

#include <cstdint>
#include <vector>

namespace fnr {

// Per-pixel unit normals in camera space (+z toward the camera) stored as
// planar [3][H][W] floats, plus a validity mask. Invalid pixels are excluded
// from every loss and metric.
struct NormalMap {
    int width = 0;
    int height = 0;
    std::vector<float> normals; // 3 * height * width, planes x, y, z
    std::vector<std::uint8_t> mask; // height * width, nonzero = valid

    NormalMap() = default;
    NormalMap(int w, int h)
        : width(w), height(h), normals(static_cast<std::size_t>(3 * w * h), 0.0f),
          mask(static_cast<std::size_t>(w * h), 1) {
        // Default to the flat frontal normal.
        const std::size_t plane = static_cast<std::size_t>(w * h);
        for (std::size_t i = 0; i < plane; ++i) {
            normals[2 * plane + i] = 1.0f;
        }
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(width * height); }

    float component(int c, int x, int y) const {
        return normals[static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(y * width + x)];
    }

    void set(int x, int y, float nx, float ny, float nz) {
        const std::size_t plane = plane_size();
        const std::size_t i = static_cast<std::size_t>(y * width + x);
        normals[i] = nx;
        normals[plane + i] = ny;
        normals[2 * plane + i] = nz;
    }

    bool valid(int x, int y) const { return mask[static_cast<std::size_t>(y * width + x)] != 0; }

    std::int64_t valid_count() const {
        std::int64_t n = 0;
        for (auto m : mask) {
            n += (m != 0);
        }
        return n;
    }
};

// RGB image with planar [3][H][W] float channels in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3 * w * h), 0.0f) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(width * height); }

    float channel(int c, int x, int y) const {
        return pixels[static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(y * width + x)];
    }

    void set(int x, int y, float r, float g, float b) {
        const std::size_t plane = plane_size();
        const std::size_t i = static_cast<std::size_t>(y * width + x);
        pixels[i] = r;
        pixels[plane + i] = g;
        pixels[2 * plane + i] = b;
    }
};

// Renormalizes all valid pixels to unit length in place.
void renormalize(NormalMap& nm);

} // namespace fnr
