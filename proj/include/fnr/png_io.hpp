#pragma once

#include <string>

#include "fnr/normal_map.hpp"

namespace fnr {

// Normal-map codec: 8-bit RGBA PNG with channel c = round((n_c + 1) / 2 * 255)
// (round half up) and the validity mask in alpha (255 valid, 0 invalid).
// Invalid pixels are written as RGB (0,0,0). Decoding inverts the mapping and
// renormalizes valid pixels to unit length.
void encode_normal_png(const NormalMap& nm, const std::string& path);
NormalMap decode_normal_png(const std::string& path);

// Plain 8-bit RGB PNG for rendered images; values are clamped to [0, 1].
void encode_image_png(const Image& img, const std::string& path);
Image decode_image_png(const std::string& path);

} // namespace fnr
