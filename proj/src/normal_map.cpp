#include "fnr/normal_map.hpp"

#include <cmath>

namespace fnr {

void renormalize(NormalMap& nm) {
    const std::size_t plane = nm.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        if (!nm.mask[i]) {
            continue;
        }
        const float x = nm.normals[i];
        const float y = nm.normals[plane + i];
        const float z = nm.normals[2 * plane + i];
        const float norm = std::sqrt(x * x + y * y + z * z);
        if (norm > 0.0f) {
            nm.normals[i] = x / norm;
            nm.normals[plane + i] = y / norm;
            nm.normals[2 * plane + i] = z / norm;
        } else {
            nm.normals[i] = 0.0f;
            nm.normals[plane + i] = 0.0f;
            nm.normals[2 * plane + i] = 1.0f;
        }
    }
}

} // namespace fnr
