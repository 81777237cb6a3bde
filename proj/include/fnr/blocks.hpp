#pragma once

#include <array>
#include <string>
#include <vector>

#include "fnr/adam.hpp"
#include "fnr/nn.hpp"
#include "fnr/profile.hpp"
#include "fnr/rng.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

// Convolution weights start at normal(0, 0.02), biases at zero.
template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    PadMode pad_mode = PadMode::Zero;

    Conv2dLayer() = default;
    Conv2dLayer(std::int64_t c_in, std::int64_t c_out, std::int64_t k, std::int64_t stride_, Rng& rng,
                PadMode mode = PadMode::Zero)
        : weight(Tensor<T>::randn({c_out, c_in, k, k}, rng, T(0.02), T(0), true)),
          bias(Tensor<T>::zeros({c_out}, true)), stride(stride_), padding(k / 2), pad_mode(mode) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, weight, bias, stride, padding, pad_mode);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct ConvTranspose2dLayer {
    Tensor<T> weight; // [Cin, Cout, K, K]
    Tensor<T> bias;
    std::int64_t stride = 2;
    std::int64_t padding = 1;

    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(std::int64_t c_in, std::int64_t c_out, std::int64_t k, std::int64_t stride_,
                         std::int64_t padding_, Rng& rng)
        : weight(Tensor<T>::randn({c_in, c_out, k, k}, rng, T(0.02), T(0), true)),
          bias(Tensor<T>::zeros({c_out}, true)), stride(stride_), padding(padding_) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, padding);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

// Optional instance normalization, controlled by the profile. Planes with
// fewer than 8 pixels carry no usable statistics (a 1x1 plane would be
// standardized to exactly zero), so normalization passes such maps through.
template <typename T>
struct NormLayer {
    bool enabled = false;
    Tensor<T> gamma;
    Tensor<T> beta;

    NormLayer() = default;
    NormLayer(std::int64_t channels, NormKind kind) : enabled(kind == NormKind::Instance) {
        if (enabled) {
            gamma = Tensor<T>::ones({channels}, true);
            beta = Tensor<T>::zeros({channels}, true);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (!enabled || x.dim(2) * x.dim(3) < 8) {
            return x;
        }
        return instance_norm2d(x, gamma, beta, T(1e-5));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        if (enabled) {
            out.push_back({prefix + ".gamma", gamma});
            out.push_back({prefix + ".beta", beta});
        }
    }
};

template <typename T>
struct LinearLayer {
    Tensor<T> weight;
    Tensor<T> bias;

    LinearLayer() = default;
    LinearLayer(std::int64_t d_in, std::int64_t d_out, Rng& rng, T bias_init = T(0))
        : weight(Tensor<T>::randn({d_out, d_in}, rng, T(0.02), T(0), true)),
          bias(Tensor<T>::full({d_out}, bias_init, true)) {}

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

// Self-attention over spatial positions: phi = softmax(f(x)^T g(x)) with rows
// summing to 1, beta = h(x) * phi, out = gamma * beta + x. gamma starts at 0,
// making the block an exact residual identity.
template <typename T>
struct SelfAttentionBlock {
    Conv2dLayer<T> f_proj;
    Conv2dLayer<T> g_proj;
    Conv2dLayer<T> h_proj;
    Tensor<T> gamma;
    std::int64_t max_hw = 64 * 64;

    SelfAttentionBlock() = default;
    SelfAttentionBlock(std::int64_t channels, std::int64_t max_hw_, Rng& rng)
        : f_proj(channels, channels / 8, 1, 1, rng), g_proj(channels, channels / 8, 1, 1, rng),
          h_proj(channels, channels, 1, 1, rng), gamma(Tensor<T>::zeros({1}, true)), max_hw(max_hw_) {
        if (channels < 8) {
            throw ShapeError("self-attention requires at least 8 channels, got " +
                             std::to_string(channels));
        }
    }

    // Computes the HW x HW attention map phi for each batch item.
    Tensor<T> attention_map(const Tensor<T>& x) const {
        const std::int64_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
        const std::int64_t hw = h * w;
        if (hw > max_hw) {
            throw ResourceError("attention map over " + std::to_string(hw) +
                                " positions exceeds the configured cap of " + std::to_string(max_hw));
        }
        const std::int64_t c = channels / 8;
        auto f = reshape(f_proj.forward(x), {batch, c, hw});
        auto g = reshape(g_proj.forward(x), {batch, c, hw});
        auto scores = bmm(f, g, true, false); // [B, HW, HW]
        return softmax(scores, 2);            // rows sum to 1
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const std::int64_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
        const std::int64_t hw = h * w;
        auto phi = attention_map(x);
        auto hval = reshape(h_proj.forward(x), {batch, channels, hw});
        auto beta = bmm(hval, phi, false, false); // [B, C, HW]
        auto out = add(scale_by(reshape(beta, {batch, channels, h, w}), gamma), x);
        return out;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        f_proj.collect(prefix + ".f", out);
        g_proj.collect(prefix + ".g", out);
        h_proj.collect(prefix + ".h", out);
        out.push_back({prefix + ".gamma", gamma});
    }
};

// Modulated 3x3 convolution: w_bar = w * s * Linear(z) per input channel,
// demodulated to unit per-output-channel norm, then a same-padding conv.
template <typename T>
struct ModulatedConv {
    Tensor<T> weight; // [Cj, Ci, K, K]
    LinearLayer<T> style_proj; // z (256) -> per-input-channel scales, bias starts at 1
    Tensor<T> gain; // learned scalar s, starts at 1
    Tensor<T> bias; // [Cj], added after the convolution
    T eps = T(1e-8);

    ModulatedConv() = default;
    ModulatedConv(std::int64_t c_in, std::int64_t c_out, std::int64_t k, std::int64_t z_dim, Rng& rng,
                  T eps_ = T(1e-8))
        : weight(Tensor<T>::randn({c_out, c_in, k, k}, rng, T(0.02), T(0), true)),
          style_proj(z_dim, c_in, rng, T(1)), gain(Tensor<T>::ones({1}, true)),
          bias(Tensor<T>::zeros({c_out}, true)), eps(eps_) {}

    // Eq-style weight modulation for a single style vector z: [1, z_dim].
    Tensor<T> modulate(const Tensor<T>& z_one) const {
        auto scales = reshape(style_proj.forward(z_one), {weight.dim(1)});
        return scale_by(modulate_in_channels(weight, scales), gain);
    }

    // x: [B, Ci, H, W], z: [B, z_dim]. Each batch item is convolved with its
    // own modulated weights. The modulate/demodulate pair runs as one fused
    // pass per item.
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& z) const {
        if (x.dim(0) != z.dim(0)) {
            throw ShapeError("modulated conv: batch mismatch between features and styles");
        }
        const std::int64_t batch = x.dim(0);
        const std::int64_t k = weight.dim(2);
        std::vector<Tensor<T>> outputs;
        outputs.reserve(static_cast<std::size_t>(batch));
        for (std::int64_t b = 0; b < batch; ++b) {
            auto scales = reshape(style_proj.forward(narrow_batch(z, b)), {weight.dim(1)});
            auto w_demod = modulate_demodulate(weight, scales, gain, eps);
            outputs.push_back(conv2d(narrow_batch(x, b), w_demod, bias, 1, k / 2));
        }
        if (batch == 1) {
            return outputs[0];
        }
        return concat_batch(outputs);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        style_proj.collect(prefix + ".style", out);
        out.push_back({prefix + ".gain", gain});
        out.push_back({prefix + ".bias", bias});
    }
};

// Face structure encoder E_I: six levels, level 0 at full resolution, each
// further level halving the spatial size.
template <typename T>
struct FaceEncoder {
    std::array<Conv2dLayer<T>, 6> convs;
    std::array<NormLayer<T>, 6> norms;
    T slope = T(0.2);

    FaceEncoder() = default;
    FaceEncoder(const ArchProfile& profile, Rng& rng) : slope(static_cast<T>(profile.leaky_slope)) {
        std::int64_t c_in = 3;
        for (int i = 0; i < 6; ++i) {
            const std::int64_t c_out = profile.face_widths[static_cast<std::size_t>(i)];
            const std::int64_t spatial = profile.image_size >> i;
            convs[static_cast<std::size_t>(i)] = Conv2dLayer<T>(c_in, c_out, 3, i == 0 ? 1 : 2, rng);
            norms[static_cast<std::size_t>(i)] =
                NormLayer<T>(c_out, spatial * spatial >= 8 ? profile.norm : NormKind::None);
            c_in = c_out;
        }
    }

    std::array<Tensor<T>, 6> forward(const Tensor<T>& image) const {
        if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0) {
            throw ShapeError("face encoder input size must be divisible by 32, got " +
                             shape_to_string(image.shape()));
        }
        std::array<Tensor<T>, 6> features;
        Tensor<T> cur = image;
        for (int i = 0; i < 6; ++i) {
            cur = leaky_relu(norms[static_cast<std::size_t>(i)].forward(
                                 convs[static_cast<std::size_t>(i)].forward(cur)),
                             slope);
            features[static_cast<std::size_t>(i)] = cur;
        }
        return features;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int i = 0; i < 6; ++i) {
            convs[static_cast<std::size_t>(i)].collect(prefix + ".conv" + std::to_string(i), out);
            norms[static_cast<std::size_t>(i)].collect(prefix + ".norm" + std::to_string(i), out);
        }
    }
};

// Exemplar normal feature encoder E_R: a three-level pyramid with top-down
// lateral fusion, global pooling, and a final 1x1 conv to the z vector.
// Replicate padding keeps constant inputs constant, so z is invariant to the
// spatial size of a uniform exemplar.
template <typename T>
struct NormalFeatureEncoder {
    std::array<Conv2dLayer<T>, 3> down;
    std::array<Conv2dLayer<T>, 3> refine;
    std::array<Conv2dLayer<T>, 3> lateral;
    Conv2dLayer<T> head;
    T slope = T(0.2);
    int z_dim = 256;

    NormalFeatureEncoder() = default;
    NormalFeatureEncoder(const ArchProfile& profile, Rng& rng)
        : slope(static_cast<T>(profile.leaky_slope)), z_dim(profile.z_dim) {
        std::int64_t c_in = 3;
        for (int i = 0; i < 3; ++i) {
            const std::int64_t c_out = profile.er_widths[static_cast<std::size_t>(i)];
            down[static_cast<std::size_t>(i)] = Conv2dLayer<T>(c_in, c_out, 3, 2, rng, PadMode::Replicate);
            refine[static_cast<std::size_t>(i)] =
                Conv2dLayer<T>(c_out, c_out, 3, 1, rng, PadMode::Replicate);
            lateral[static_cast<std::size_t>(i)] =
                Conv2dLayer<T>(c_out, profile.er_fpn_channels, 1, 1, rng);
            c_in = c_out;
        }
        head = Conv2dLayer<T>(profile.er_fpn_channels, z_dim, 1, 1, rng);
    }

    Tensor<T> forward(const Tensor<T>& exemplar) const {
        if (exemplar.dim(2) % 8 != 0 || exemplar.dim(3) % 8 != 0 || exemplar.dim(2) < 8 ||
            exemplar.dim(3) < 8) {
            throw ShapeError("exemplar encoder input must be at least 8x8 and divisible by 8, got " +
                             shape_to_string(exemplar.shape()));
        }
        std::array<Tensor<T>, 3> c;
        Tensor<T> cur = exemplar;
        for (int i = 0; i < 3; ++i) {
            cur = leaky_relu(down[static_cast<std::size_t>(i)].forward(cur), slope);
            cur = leaky_relu(refine[static_cast<std::size_t>(i)].forward(cur), slope);
            c[static_cast<std::size_t>(i)] = cur;
        }
        auto p2 = lateral[2].forward(c[2]);
        auto p1 = add(lateral[1].forward(c[1]), upsample_nearest2x(p2));
        auto p0 = add(lateral[0].forward(c[0]), upsample_nearest2x(p1));
        auto pooled = adaptive_avg_pool(p0, 1, 1);
        auto z = head.forward(pooled);
        return reshape(z, {exemplar.dim(0), static_cast<std::int64_t>(z_dim)});
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int i = 0; i < 3; ++i) {
            down[static_cast<std::size_t>(i)].collect(prefix + ".down" + std::to_string(i), out);
            refine[static_cast<std::size_t>(i)].collect(prefix + ".refine" + std::to_string(i), out);
            lateral[static_cast<std::size_t>(i)].collect(prefix + ".lateral" + std::to_string(i), out);
        }
        head.collect(prefix + ".head", out);
    }
};

// Refinement decoder D_N: five upsampling levels. Each level upsamples via a
// transposed conv followed by two convs (d_N^j), injects the modulated skip
// features F_j, and merges them (sum by default).
template <typename T>
struct NrDecoder {
    struct Level {
        ConvTranspose2dLayer<T> up;
        NormLayer<T> up_norm;
        Conv2dLayer<T> conv_a;
        NormLayer<T> norm_a;
        Conv2dLayer<T> conv_b;
        NormLayer<T> norm_b;
        ModulatedConv<T> inject;
        Conv2dLayer<T> fuse; // only used in concat merge mode
    };

    std::array<Level, 5> levels;
    Conv2dLayer<T> to_normal;
    MergeMode merge = MergeMode::Sum;
    T slope = T(0.2);

    NrDecoder() = default;
    NrDecoder(const ArchProfile& profile, Rng& rng)
        : merge(profile.merge), slope(static_cast<T>(profile.leaky_slope)) {
        std::int64_t c_in = profile.face_widths[5];
        for (int j = 0; j < 5; ++j) {
            const std::int64_t skip_c = profile.face_widths[static_cast<std::size_t>(4 - j)];
            const std::int64_t spatial = profile.image_size >> (4 - j);
            const NormKind kind = spatial * spatial >= 8 ? profile.norm : NormKind::None;
            auto& lvl = levels[static_cast<std::size_t>(j)];
            lvl.up = ConvTranspose2dLayer<T>(c_in, skip_c, 4, 2, 1, rng);
            lvl.up_norm = NormLayer<T>(skip_c, kind);
            lvl.conv_a = Conv2dLayer<T>(skip_c, skip_c, 3, 1, rng);
            lvl.norm_a = NormLayer<T>(skip_c, kind);
            lvl.conv_b = Conv2dLayer<T>(skip_c, skip_c, 3, 1, rng);
            lvl.norm_b = NormLayer<T>(skip_c, kind);
            lvl.inject = ModulatedConv<T>(skip_c, skip_c, 3, profile.z_dim, rng,
                                          static_cast<T>(profile.epsilon_demod));
            if (merge == MergeMode::Concat) {
                lvl.fuse = Conv2dLayer<T>(2 * skip_c, skip_c, 1, 1, rng);
            }
            c_in = skip_c;
        }
        to_normal = Conv2dLayer<T>(c_in, 3, 3, 1, rng);
    }

    Tensor<T> forward(const std::array<Tensor<T>, 6>& face_features, const Tensor<T>& z) const {
        Tensor<T> cur = face_features[5];
        for (int j = 0; j < 5; ++j) {
            const auto& lvl = levels[static_cast<std::size_t>(j)];
            const auto& skip = face_features[static_cast<std::size_t>(4 - j)];
            auto up = leaky_relu(lvl.up_norm.forward(lvl.up.forward(cur)), slope);
            if (up.dim(2) != skip.dim(2) || up.dim(3) != skip.dim(3)) {
                throw ShapeError("decoder level " + std::to_string(j) + ": upsampled size " +
                                 shape_to_string(up.shape()) + " does not match skip features " +
                                 shape_to_string(skip.shape()));
            }
            auto d = leaky_relu(lvl.norm_a.forward(lvl.conv_a.forward(up)), slope);
            d = leaky_relu(lvl.norm_b.forward(lvl.conv_b.forward(d)), slope);
            auto injected = lvl.inject.forward(skip, z);
            if (merge == MergeMode::Sum) {
                cur = leaky_relu(add(d, injected), slope);
            } else {
                cur = leaky_relu(lvl.fuse.forward(concat_channels(d, injected)), slope);
            }
        }
        return normalize_channels(tanh_op(to_normal.forward(cur)), T(1e-12));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int j = 0; j < 5; ++j) {
            auto& lvl = levels[static_cast<std::size_t>(j)];
            const std::string base = prefix + ".level" + std::to_string(j);
            lvl.up.collect(base + ".up", out);
            lvl.up_norm.collect(base + ".up_norm", out);
            lvl.conv_a.collect(base + ".conv_a", out);
            lvl.norm_a.collect(base + ".norm_a", out);
            lvl.conv_b.collect(base + ".conv_b", out);
            lvl.norm_b.collect(base + ".norm_b", out);
            lvl.inject.collect(base + ".inject", out);
            if (merge == MergeMode::Concat) {
                lvl.fuse.collect(base + ".fuse", out);
            }
        }
        to_normal.collect(prefix + ".to_normal", out);
    }
};

// Coarse predictor: a U-Net in the image-to-image translation style, tanh
// head, outputs renormalized to unit-length normals.
template <typename T>
struct CpNet {
    std::array<Conv2dLayer<T>, 6> enc;
    std::array<NormLayer<T>, 6> enc_norms;
    std::array<ConvTranspose2dLayer<T>, 6> dec;
    std::array<NormLayer<T>, 6> dec_norms;
    int image_size = 64;
    T slope = T(0.2);

    CpNet() = default;
    CpNet(const ArchProfile& profile, Rng& rng)
        : image_size(profile.image_size), slope(static_cast<T>(profile.leaky_slope)) {
        const auto& w = profile.cp_widths;
        std::int64_t c_in = 3;
        for (int i = 0; i < 6; ++i) {
            const std::int64_t spatial = profile.image_size >> (i + 1);
            enc[static_cast<std::size_t>(i)] = Conv2dLayer<T>(c_in, w[static_cast<std::size_t>(i)], 3, 2, rng);
            // No norm on the outermost level or on planes too small for stats.
            enc_norms[static_cast<std::size_t>(i)] = NormLayer<T>(
                w[static_cast<std::size_t>(i)],
                (i == 0 || spatial * spatial < 8) ? NormKind::None : profile.norm);
            c_in = w[static_cast<std::size_t>(i)];
        }
        // Decoder mirrors the encoder; skip connections are concatenated.
        for (int i = 0; i < 6; ++i) {
            const std::int64_t out_c = i == 5 ? 3 : w[static_cast<std::size_t>(4 - i)];
            const std::int64_t in_c = i == 0 ? w[5] : 2 * w[static_cast<std::size_t>(5 - i)];
            const std::int64_t spatial = profile.image_size >> (5 - i);
            dec[static_cast<std::size_t>(i)] = ConvTranspose2dLayer<T>(in_c, out_c, 4, 2, 1, rng);
            dec_norms[static_cast<std::size_t>(i)] = NormLayer<T>(
                out_c, (i == 5 || spatial * spatial < 8) ? NormKind::None : profile.norm);
        }
    }

    Tensor<T> forward(const Tensor<T>& image) const {
        if (image.dim(2) % 64 != 0 || image.dim(3) % 64 != 0 || image.dim(2) < 64 || image.dim(3) < 64) {
            throw ShapeError("coarse predictor input size must be a positive multiple of 64, got " +
                             shape_to_string(image.shape()));
        }
        std::array<Tensor<T>, 6> skips;
        Tensor<T> cur = image;
        for (int i = 0; i < 6; ++i) {
            cur = enc_norms[static_cast<std::size_t>(i)].forward(enc[static_cast<std::size_t>(i)].forward(
                i == 0 ? cur : leaky_relu(cur, slope)));
            skips[static_cast<std::size_t>(i)] = cur;
        }
        for (int i = 0; i < 6; ++i) {
            cur = dec[static_cast<std::size_t>(i)].forward(leaky_relu(cur, slope));
            if (i < 5) {
                cur = dec_norms[static_cast<std::size_t>(i)].forward(cur);
                cur = concat_channels(cur, skips[static_cast<std::size_t>(4 - i)]);
            }
        }
        return normalize_channels(tanh_op(cur), T(1e-12));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int i = 0; i < 6; ++i) {
            enc[static_cast<std::size_t>(i)].collect(prefix + ".enc" + std::to_string(i), out);
            enc_norms[static_cast<std::size_t>(i)].collect(prefix + ".enc_norm" + std::to_string(i), out);
            dec[static_cast<std::size_t>(i)].collect(prefix + ".dec" + std::to_string(i), out);
            dec_norms[static_cast<std::size_t>(i)].collect(prefix + ".dec_norm" + std::to_string(i), out);
        }
    }
};

// Self-attention discriminator: strided conv stack with one attention block
// at the profile's configured level, ending in a scalar realness score.
template <typename T>
struct Discriminator {
    std::array<Conv2dLayer<T>, 4> convs;
    SelfAttentionBlock<T> attention;
    Conv2dLayer<T> head;
    int attention_level = 1;
    T slope = T(0.2);

    Discriminator() = default;
    Discriminator(const ArchProfile& profile, Rng& rng)
        : attention_level(profile.disc_attention_level), slope(static_cast<T>(profile.leaky_slope)) {
        std::int64_t c_in = 3;
        for (int i = 0; i < 4; ++i) {
            convs[static_cast<std::size_t>(i)] =
                Conv2dLayer<T>(c_in, profile.disc_widths[static_cast<std::size_t>(i)], 3, 2, rng);
            c_in = profile.disc_widths[static_cast<std::size_t>(i)];
        }
        if (attention_level < 1 || attention_level > 4) {
            throw ShapeError("discriminator attention level must be in [1,4]");
        }
        attention = SelfAttentionBlock<T>(
            profile.disc_widths[static_cast<std::size_t>(attention_level - 1)], profile.attention_max_hw,
            rng);
        head = Conv2dLayer<T>(c_in, 1, 3, 1, rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> cur = x;
        for (int i = 0; i < 4; ++i) {
            cur = leaky_relu(convs[static_cast<std::size_t>(i)].forward(cur), slope);
            if (i + 1 == attention_level) {
                cur = attention.forward(cur);
            }
        }
        auto score_map = head.forward(cur);
        auto pooled = adaptive_avg_pool(score_map, 1, 1);
        return reshape(pooled, {x.dim(0), 1});
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int i = 0; i < 4; ++i) {
            convs[static_cast<std::size_t>(i)].collect(prefix + ".conv" + std::to_string(i), out);
        }
        attention.collect(prefix + ".attention", out);
        head.collect(prefix + ".head", out);
    }
};

// The refinement stage bundle: face encoder, exemplar encoder, and decoder.
template <typename T>
struct NrNet {
    FaceEncoder<T> face_encoder;
    NormalFeatureEncoder<T> exemplar_encoder;
    NrDecoder<T> decoder;

    NrNet() = default;
    NrNet(const ArchProfile& profile, Rng& rng)
        : face_encoder(profile, rng), exemplar_encoder(profile, rng), decoder(profile, rng) {}

    // image: [B,3,H,W], exemplar: [B,3,H,W] (the coarse normal map R).
    Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& exemplar) const {
        auto z = exemplar_encoder.forward(exemplar);
        auto features = face_encoder.forward(image);
        return decoder.forward(features, z);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        face_encoder.collect(prefix + ".face", out);
        exemplar_encoder.collect(prefix + ".exemplar", out);
        decoder.collect(prefix + ".decoder", out);
    }
};

} // namespace fnr
