#pragma once

#include <span>
#include <vector>

#include "kpda/types.hpp"

namespace kpda {

/// Unit-peak Gaussian per visible joint, zero channel per invisible joint.
/// Throws std::invalid_argument for sigma <= 0 or a visible joint outside the grid.
HeatmapStack encode_heatmap(std::span<const Keypoint> keypoints, int height, int width,
                            double sigma);

/// Batched encode: one [K, h, w] stack per keypoint list, stacked to [B, K, h, w].
torch::Tensor encode_heatmaps(std::span<const std::vector<Keypoint>> batch, int height,
                              int width, double sigma);

struct DecodedPose {
    std::vector<Keypoint> keypoints;
    std::vector<double> confidences;
};

/// Argmax per channel; ties resolve to the first cell in row-major order. An all-zero
/// channel decodes to (0, 0) with confidence 0.
DecodedPose decode_heatmap(const HeatmapStack& heatmaps);

/// Decode every element of a [B, K, h, w] tensor.
std::vector<DecodedPose> decode_heatmaps(const torch::Tensor& batch);

} // namespace kpda
