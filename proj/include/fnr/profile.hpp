#pragma once

#include <array>
#include <string>

namespace fnr {

enum class MergeMode { Sum, Concat };
enum class NormKind { Instance, None };
enum class AdvLossKind { Hinge, NonSaturating };

// Architecture hyperparameters. The desk profile trains in minutes on a CPU;
// the full profile mirrors the 256x256 setting and is kept configurable.
struct ArchProfile {
    std::string name = "desk";
    int image_size = 64;

    // Coarse predictor encoder widths, mirrored by its decoder (6 levels,
    // image_size must be divisible by 2^6 / 2^?; the U-Net downsamples to
    // image_size / 64 at the innermost level).
    std::array<int, 6> cp_widths = {16, 32, 64, 128, 256, 256};

    // Face structure encoder widths for f_0..f_5; level i has spatial size
    // image_size / 2^i.
    std::array<int, 6> face_widths = {16, 32, 64, 128, 256, 256};

    // Exemplar encoder pyramid widths (three levels) and fused lateral width.
    std::array<int, 3> er_widths = {16, 32, 64};
    int er_fpn_channels = 64;

    // Exemplar feature length; fixed by the architecture.
    int z_dim = 256;

    std::array<int, 4> disc_widths = {16, 32, 64, 128};
    // The attention block sits on the feature map of spatial size
    // image_size / 2^disc_attention_level.
    int disc_attention_level = 1;
    // Largest H*W the attention map is allowed to cover.
    int attention_max_hw = 64 * 64;

    MergeMode merge = MergeMode::Sum;
    NormKind norm = NormKind::Instance;
    AdvLossKind adv_loss = AdvLossKind::Hinge;
    float leaky_slope = 0.2f;
    float epsilon_demod = 1e-8f;

    static ArchProfile desk() { return ArchProfile{}; }

    static ArchProfile full() {
        ArchProfile p;
        p.name = "full";
        p.image_size = 256;
        p.cp_widths = {64, 128, 256, 512, 512, 512};
        p.face_widths = {64, 128, 256, 512, 512, 512};
        p.er_widths = {64, 128, 256};
        p.er_fpn_channels = 256;
        p.disc_widths = {64, 128, 256, 512};
        p.disc_attention_level = 3; // 256 -> 32 after three halvings
        return p;
    }
};

} // namespace fnr
