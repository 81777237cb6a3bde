#include "fnr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fnr/errors.hpp"

namespace fnr {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw ShapeError("angular_error_map: size mismatch " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + " vs " + std::to_string(gt.width) + "x" +
                         std::to_string(gt.height));
    }
    ErrorMap em;
    em.width = pred.width;
    em.height = pred.height;
    const std::size_t plane = pred.plane_size();
    em.degrees.assign(plane, 0.0f);
    em.mask.assign(plane, 0);
    for (std::size_t i = 0; i < plane; ++i) {
        if (!pred.mask[i] || !gt.mask[i]) {
            continue;
        }
        em.mask[i] = 1;
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) {
            dot += static_cast<double>(pred.normals[static_cast<std::size_t>(c) * plane + i]) *
                   static_cast<double>(gt.normals[static_cast<std::size_t>(c) * plane + i]);
        }
        dot = std::clamp(dot, -1.0, 1.0);
        em.degrees[i] = static_cast<float>(std::acos(dot) * 180.0 / kPi);
    }
    return em;
}

MetricsReport compute_metrics(const std::vector<ErrorMap>& maps) {
    MetricsReport report;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::int64_t lt20 = 0, lt25 = 0, lt30 = 0;
    for (const auto& em : maps) {
        for (std::size_t i = 0; i < em.degrees.size(); ++i) {
            if (!em.mask[i]) {
                continue;
            }
            const double deg = em.degrees[i];
            sum += deg;
            sum_sq += deg * deg;
            lt20 += deg < 20.0;
            lt25 += deg < 25.0;
            lt30 += deg < 30.0;
            ++report.n_pixels;
        }
    }
    if (report.n_pixels == 0) {
        throw Error("compute_metrics: no valid pixels");
    }
    const double n = static_cast<double>(report.n_pixels);
    report.mean_deg = sum / n;
    const double var = std::max(0.0, sum_sq / n - report.mean_deg * report.mean_deg);
    report.std_deg = std::sqrt(var);
    report.pct_lt20 = 100.0 * static_cast<double>(lt20) / n;
    report.pct_lt25 = 100.0 * static_cast<double>(lt25) / n;
    report.pct_lt30 = 100.0 * static_cast<double>(lt30) / n;
    return report;
}

Image render_error_map(const ErrorMap& errors) {
    // Stops: black at 0 degrees, (1.0, 0.8, 0.2) at >= 45 degrees.
    constexpr float kHi[3] = {1.0f, 0.8f, 0.2f};
    Image img(errors.width, errors.height);
    const std::size_t plane = img.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        if (!errors.mask[i]) {
            continue;
        }
        const float t = std::clamp(errors.degrees[i] / 45.0f, 0.0f, 1.0f);
        img.pixels[i] = t * kHi[0];
        img.pixels[plane + i] = t * kHi[1];
        img.pixels[2 * plane + i] = t * kHi[2];
    }
    return img;
}

std::vector<IlluminationDirection> shading_light_directions(int k) {
    if (k < 1) {
        throw Error("shading_light_directions: k must be >= 1");
    }
    std::vector<IlluminationDirection> lights;
    lights.reserve(static_cast<std::size_t>(k));
    int cone_count = k;
    if (k % 2 == 1) {
        lights.push_back({0.0f, 0.0f, 1.0f, 1.0f});
        cone_count = k - 1;
    }
    const double elevation = 45.0 * kPi / 180.0;
    for (int i = 0; i < cone_count; ++i) {
        const double azimuth = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(cone_count);
        IlluminationDirection l;
        l.lx = static_cast<float>(std::sin(elevation) * std::cos(azimuth));
        l.ly = static_cast<float>(std::sin(elevation) * std::sin(azimuth));
        l.lz = static_cast<float>(std::cos(elevation));
        l.intensity = 1.0f;
        lights.push_back(l);
    }
    return lights;
}

std::vector<Image> render_shading_suite(const NormalMap& nm, int k) {
    const auto lights = shading_light_directions(k);
    std::vector<Image> images;
    images.reserve(lights.size());
    const std::size_t plane = nm.plane_size();
    for (const auto& light : lights) {
        Image img(nm.width, nm.height);
        for (std::size_t i = 0; i < plane; ++i) {
            if (!nm.mask[i]) {
                continue;
            }
            const float dot = nm.normals[i] * light.lx + nm.normals[plane + i] * light.ly +
                              nm.normals[2 * plane + i] * light.lz;
            const float shade = std::max(0.0f, dot);
            img.pixels[i] = shade;
            img.pixels[plane + i] = shade;
            img.pixels[2 * plane + i] = shade;
        }
        images.push_back(std::move(img));
    }
    return images;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << "metric,value\n";
    out << "mean_deg," << report.mean_deg << "\n";
    out << "std_deg," << report.std_deg << "\n";
    out << "pct_lt20," << report.pct_lt20 << "\n";
    out << "pct_lt25," << report.pct_lt25 << "\n";
    out << "pct_lt30," << report.pct_lt30 << "\n";
    out << "n_pixels," << report.n_pixels << "\n";
}

std::string metrics_table(const MetricsReport& report) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mean angular error : %7.3f deg\n", report.mean_deg);
    os << buf;
    std::snprintf(buf, sizeof(buf), "std (population)   : %7.3f deg\n", report.std_deg);
    os << buf;
    std::snprintf(buf, sizeof(buf), "< 20 deg           : %7.2f %%\n", report.pct_lt20);
    os << buf;
    std::snprintf(buf, sizeof(buf), "< 25 deg           : %7.2f %%\n", report.pct_lt25);
    os << buf;
    std::snprintf(buf, sizeof(buf), "< 30 deg           : %7.2f %%\n", report.pct_lt30);
    os << buf;
    std::snprintf(buf, sizeof(buf), "valid pixels       : %lld\n",
                  static_cast<long long>(report.n_pixels));
    os << buf;
    return os.str();
}

} // namespace fnr
