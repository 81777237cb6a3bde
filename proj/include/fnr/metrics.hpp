#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fnr/normal_map.hpp"
#include "fnr/synth.hpp"

namespace fnr {

// Per-pixel angular error in degrees; invalid pixels carry 0 and are masked.
struct ErrorMap {
    int width = 0;
    int height = 0;
    std::vector<float> degrees;
    std::vector<std::uint8_t> mask;
};

struct MetricsReport {
    double mean_deg = 0.0;
    double std_deg = 0.0; // population standard deviation over pooled pixels
    double pct_lt20 = 0.0;
    double pct_lt25 = 0.0;
    double pct_lt30 = 0.0;
    std::int64_t n_pixels = 0;
};

// theta = acos(clamp(n_pred . n_gt, -1, 1)) in degrees per valid pixel.
// The maps must match in size; validity is the AND of both masks.
ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt);

// Pooled statistics over all valid pixels of all maps. Threshold percentages
// use strict less-than. Throws on an empty pixel set.
MetricsReport compute_metrics(const std::vector<ErrorMap>& maps);

// Linear two-stop ramp over [0, 45] degrees, clamped above. The stops are
// (0,0,0) at 0 degrees and (255,204,51) at >=45 degrees in 8-bit terms;
// invalid pixels render black.
Image render_error_map(const ErrorMap& errors);

// k unit light directions: for odd k one frontal light plus k-1 directions on
// a 45-degree cone at azimuths 360*i/(k-1); for even k, k cone directions at
// azimuths 360*i/k.
std::vector<IlluminationDirection> shading_light_directions(int k);

// One image per light: max(0, n . l) with albedo 1; invalid pixels are 0.
std::vector<Image> render_shading_suite(const NormalMap& nm, int k = 7);

// CSV rows "metric,value" plus a human-readable table.
void write_metrics_csv(const MetricsReport& report, const std::string& path);
std::string metrics_table(const MetricsReport& report);

} // namespace fnr
