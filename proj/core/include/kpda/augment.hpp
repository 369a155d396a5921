#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "kpda/types.hpp"

namespace kpda {

/// Sampling ranges for perturbations. Defaults: rotation within +-45 degrees,
/// scale 0.6-1.4, additive noise within +-0.2.
struct PerturbationConfig {
    double max_rotation = 45.0;   // degrees, symmetric
    double scale_min = 0.6;
    double scale_max = 1.4;
    double flip_prob = 0.5;
    double occlusion_prob = 0.5;
    double occluder_min = 0.1;    // occluder side as a fraction of the image side
    double occluder_max = 0.4;
    double noise_sigma_max = 0.1;
    double noise_clip = 0.2;      // per-pixel noise is clipped to +-noise_clip
    std::array<float, 3> fill{0.5f, 0.5f, 0.5f};

    static PerturbationConfig identity();
    void validate() const;
};

struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;  // exclusive
    int y1 = 0;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// A sampled augmentation. The geometric part (flip, then rotation and scale about the
/// image centre) applies to images and heatmaps alike; the photometric part (occluder,
/// noise) only ever touches images.
struct Perturbation {
    double rotation = 0.0;  // degrees, counter-clockwise on screen
    double scale = 1.0;
    bool flip = false;
    std::optional<PixelRect> occluder;
    std::array<float, 3> fill{0.5f, 0.5f, 0.5f};
    double noise_sigma = 0.0;
    double noise_clip = 0.2;
    std::uint64_t noise_seed = 0;

    bool geometric_identity() const { return !flip && rotation == 0.0 && scale == 1.0; }
    bool photometric_identity() const { return !occluder && noise_sigma == 0.0; }
    bool is_identity() const { return geometric_identity() && photometric_identity(); }
    Perturbation geometric_part() const;

    friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

Perturbation sample_perturbation(std::mt19937_64& rng, const PerturbationConfig& cfg,
                                 int image_size);

/// Geometric then photometric. `image` is [3, H, W] (or [B, 3, H, W] with one shared
/// perturbation); output clamped to [0, 1].
torch::Tensor apply_to_image(const Perturbation& p, const torch::Tensor& image);

/// Flip/rotation/scale on a [K, h, w] or [B, K, h, w] heatmap tensor. When flipping,
/// channel c moves to flip_partner[c]. Throws std::invalid_argument if the pairing is
/// not an involution over K channels.
torch::Tensor apply_geometric_to_heatmaps(const Perturbation& p, const torch::Tensor& heatmaps,
                                          std::span<const int> flip_partner);

/// The same geometric map on keypoints of a (width x height) grid, with left/right
/// relabelling. Joints leaving the grid become invisible.
std::vector<Keypoint> transform_keypoints(const Perturbation& p, std::span<const Keypoint> kps,
                                          int width, int height, std::span<const int> flip_partner);

/// Draw lambda ~ Beta(alpha, alpha). Throws for alpha <= 0.
double sample_mix_lambda(std::mt19937_64& rng, double mix_alpha);

struct MixedPair {
    double source_weight = 1.0;  // lambda' = max(lambda, 1 - lambda)
    torch::Tensor source_image;  // lambda' I_S + (1 - lambda') I_T
    torch::Tensor source_heatmaps;
    torch::Tensor target_image;  // min(lambda, 1 - lambda) I_S + ...
    torch::Tensor target_heatmaps;
};

/// MixUp with a given lambda; the mixed source keeps the source domain label and
/// carries the larger share of the source sample.
MixedPair mixup(const torch::Tensor& src_image, const torch::Tensor& src_heatmaps,
                const torch::Tensor& tgt_image, const torch::Tensor& tgt_heatmaps, double lambda);

MixedPair mixup(const torch::Tensor& src_image, const torch::Tensor& src_heatmaps,
                const torch::Tensor& tgt_image, const torch::Tensor& tgt_heatmaps,
                std::mt19937_64& rng, double mix_alpha);

} // namespace kpda
