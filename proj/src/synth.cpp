#include "fnr/synth.hpp"

#include <algorithm>
#include <cmath>

#include "fnr/errors.hpp"

namespace fnr {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Wave {
    double fx, fy, phase, amplitude;
};

struct Ridge {
    double px, py, dirx, diry, sigma, amplitude;
};

} // namespace

SynthScene generate_scene(std::uint64_t seed, const SynthProfile& profile) {
    const int w = profile.width;
    const int h = profile.height;
    if (w < 8 || h < 8) {
        throw Error("synth profile resolution too small");
    }
    const double size = static_cast<double>(std::min(w, h));

    Rng rng(seed);
    SynthScene scene;
    scene.width = w;
    scene.height = h;
    scene.seed = seed;
    scene.heightfield.assign(static_cast<std::size_t>(w * h), 0.0);
    scene.albedo.assign(static_cast<std::size_t>(w * h), 0.25f);
    scene.mask.assign(static_cast<std::size_t>(w * h), 0);

    // Elliptical support with a mild center jitter.
    const double cx = 0.5 * w * (1.0 + 0.1 * (rng.uniform() - 0.5));
    const double cy = 0.5 * h * (1.0 + 0.1 * (rng.uniform() - 0.5));
    const double rx = w * rng.uniform(0.32, 0.44);
    const double ry = h * rng.uniform(0.34, 0.46);

    const double dome_height = size * rng.uniform(profile.dome_height_min, profile.dome_height_max);
    const double bump_amp = size * rng.uniform(profile.bump_amplitude_min, profile.bump_amplitude_max);

    std::vector<Wave> waves(static_cast<std::size_t>(profile.bump_waves));
    for (auto& wave : waves) {
        const double freq = rng.uniform(profile.bump_freq_min, profile.bump_freq_max);
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        wave.fx = freq * std::cos(theta) / size;
        wave.fy = freq * std::sin(theta) / size;
        wave.phase = rng.uniform(0.0, 2.0 * kPi);
        wave.amplitude = bump_amp / std::sqrt(static_cast<double>(profile.bump_waves));
    }

    const int n_ridges = profile.max_ridges > 0 ? static_cast<int>(rng.uniform_int(
                             static_cast<std::uint64_t>(profile.max_ridges + 1)))
                                                : 0;
    std::vector<Ridge> ridges(static_cast<std::size_t>(n_ridges));
    for (auto& ridge : ridges) {
        ridge.px = cx + rx * (rng.uniform() - 0.5);
        ridge.py = cy + ry * (rng.uniform() - 0.5);
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        ridge.dirx = std::cos(theta);
        ridge.diry = std::sin(theta);
        ridge.sigma = size * rng.uniform(0.01, 0.03);
        ridge.amplitude = size * profile.ridge_amplitude * (rng.uniform() < 0.5 ? -1.0 : 1.0) *
                          rng.uniform(0.4, 1.0);
    }

    // Piecewise-constant albedo patches from two thresholded low-frequency waves.
    const double base_albedo = rng.uniform(0.45, 0.75);
    Wave alb1, alb2;
    for (Wave* a : {&alb1, &alb2}) {
        const double freq = rng.uniform(0.8, 2.2);
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        a->fx = freq * std::cos(theta) / size;
        a->fy = freq * std::sin(theta) / size;
        a->phase = rng.uniform(0.0, 2.0 * kPi);
        a->amplitude = 1.0;
    }

    if (profile.tint) {
        scene.tint = {static_cast<float>(rng.uniform(0.88, 1.0)),
                      static_cast<float>(rng.uniform(0.88, 1.0)),
                      static_cast<float>(rng.uniform(0.88, 1.0))};
    }

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * w + x);
            const double dx = (x - cx) / rx;
            const double dy = (y - cy) / ry;
            const double r2 = dx * dx + dy * dy;
            if (r2 > 1.0) {
                continue;
            }
            scene.mask[i] = 1;
            const double window = (1.0 - r2) * (1.0 - r2);

            double height = dome_height * (1.0 - r2);
            double detail = 0.0;
            for (const auto& wave : waves) {
                detail += wave.amplitude * std::sin(2.0 * kPi * (wave.fx * x + wave.fy * y) + wave.phase);
            }
            for (const auto& ridge : ridges) {
                // Perpendicular distance to the ridge line.
                const double d = (x - ridge.px) * (-ridge.diry) + (y - ridge.py) * ridge.dirx;
                detail += ridge.amplitude * std::exp(-d * d / (2.0 * ridge.sigma * ridge.sigma));
            }
            scene.heightfield[i] = height + window * detail;

            const double g1 = std::sin(2.0 * kPi * (alb1.fx * x + alb1.fy * y) + alb1.phase);
            const double g2 = std::sin(2.0 * kPi * (alb2.fx * x + alb2.fy * y) + alb2.phase);
            double albedo = base_albedo;
            if (g1 > 0.0) {
                albedo += 0.12;
            }
            if (g2 > 0.4) {
                albedo -= 0.12;
            }
            scene.albedo[i] = static_cast<float>(std::clamp(albedo, 0.2, 0.95));
        }
    }

    const int n_lights =
        profile.min_lights +
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(profile.max_lights - profile.min_lights + 1)));
    scene.lights.resize(static_cast<std::size_t>(n_lights));
    double total = 0.0;
    for (auto& light : scene.lights) {
        const double elev = rng.uniform(0.0, 50.0 * kPi / 180.0);
        const double azim = rng.uniform(0.0, 2.0 * kPi);
        light.lx = static_cast<float>(std::sin(elev) * std::cos(azim));
        light.ly = static_cast<float>(std::sin(elev) * std::sin(azim));
        light.lz = static_cast<float>(std::cos(elev));
        light.intensity = static_cast<float>(rng.uniform(0.5, 1.0));
        total += light.intensity;
    }
    const double target = rng.uniform(0.9, 1.25);
    for (auto& light : scene.lights) {
        light.intensity = static_cast<float>(light.intensity * target / total);
    }
    return scene;
}

NormalMap heightfield_to_normals(const SynthScene& scene) {
    const int w = scene.width;
    const int h = scene.height;
    NormalMap nm(w, h);
    nm.mask = scene.mask;
    const auto& field = scene.heightfield;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto at = [&](int xx, int yy) { return field[static_cast<std::size_t>(yy * w + xx)]; };
            double gx, gy;
            if (x == 0) {
                gx = at(1, y) - at(0, y);
            } else if (x == w - 1) {
                gx = at(w - 1, y) - at(w - 2, y);
            } else {
                gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            }
            if (y == 0) {
                gy = at(x, 1) - at(x, 0);
            } else if (y == h - 1) {
                gy = at(x, h - 1) - at(x, h - 2);
            } else {
                gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            }
            const double norm = std::sqrt(gx * gx + gy * gy + 1.0);
            nm.set(x, y, static_cast<float>(-gx / norm), static_cast<float>(-gy / norm),
                   static_cast<float>(1.0 / norm));
        }
    }
    return nm;
}

Image render_lambertian(const SynthScene& scene, const NormalMap& normals) {
    if (scene.lights.empty()) {
        throw Error("render_lambertian: scene has no lights");
    }
    if (normals.width != scene.width || normals.height != scene.height) {
        throw ShapeError("render_lambertian: normal map size does not match scene");
    }
    Image img(scene.width, scene.height);
    const std::size_t plane = img.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        const float nx = normals.normals[i];
        const float ny = normals.normals[plane + i];
        const float nz = normals.normals[2 * plane + i];
        float shade = 0.0f;
        for (const auto& light : scene.lights) {
            const float dot = nx * light.lx + ny * light.ly + nz * light.lz;
            shade += light.intensity * std::max(0.0f, dot);
        }
        const float value = std::clamp(scene.albedo[i] * shade, 0.0f, 1.0f);
        img.pixels[i] = value * scene.tint[0];
        img.pixels[plane + i] = value * scene.tint[1];
        img.pixels[2 * plane + i] = value * scene.tint[2];
    }
    return img;
}

} // namespace fnr
