#include "kpda/heatmap.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kpda {

HeatmapStack encode_heatmap(std::span<const Keypoint> keypoints, int height, int width,
                            double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("encode_heatmap: sigma must be positive");
    if (height <= 0 || width <= 0) throw std::invalid_argument("encode_heatmap: empty grid");

    const auto k = static_cast<int64_t>(keypoints.size());
    auto out = torch::zeros({k, height, width}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    const double denom = 2.0 * sigma * sigma;
    for (int64_t c = 0; c < k; ++c) {
        const Keypoint& kp = keypoints[c];
        if (!kp.visible) continue;
        if (!(kp.x >= 0.0 && kp.x < width && kp.y >= 0.0 && kp.y < height)) {
            throw std::invalid_argument("encode_heatmap: visible joint " + std::to_string(c) +
                                        " lies outside the " + std::to_string(width) + "x" +
                                        std::to_string(height) + " grid");
        }
        for (int i = 0; i < height; ++i) {
            const double dy = i - kp.y;
            for (int j = 0; j < width; ++j) {
                const double dx = j - kp.x;
                acc[c][i][j] = static_cast<float>(std::exp(-(dy * dy + dx * dx) / denom));
            }
        }
    }
    return HeatmapStack(out);
}

torch::Tensor encode_heatmaps(std::span<const std::vector<Keypoint>> batch, int height,
                              int width, double sigma) {
    std::vector<torch::Tensor> stacks;
    stacks.reserve(batch.size());
    for (const auto& kps : batch) stacks.push_back(encode_heatmap(kps, height, width, sigma).values());
    return torch::stack(stacks);
}

namespace {

DecodedPose decode_one(const torch::TensorAccessor<float, 3>& acc, int k, int h, int w) {
    DecodedPose out;
    out.keypoints.reserve(k);
    out.confidences.reserve(k);
    for (int c = 0; c < k; ++c) {
        int best_i = 0;
        int best_j = 0;
        float best = acc[c][0][0];
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                if (acc[c][i][j] > best) {
                    best = acc[c][i][j];
                    best_i = i;
                    best_j = j;
                }
            }
        }
        out.keypoints.push_back({static_cast<double>(best_j), static_cast<double>(best_i), true, true});
        out.confidences.push_back(static_cast<double>(best));
    }
    return out;
}

} // namespace

DecodedPose decode_heatmap(const HeatmapStack& heatmaps) {
    auto v = heatmaps.values().detach().to(torch::kCPU, torch::kFloat32).contiguous();
    return decode_one(v.accessor<float, 3>(), heatmaps.joints(), heatmaps.height(), heatmaps.width());
}

std::vector<DecodedPose> decode_heatmaps(const torch::Tensor& batch) {
    if (batch.dim() != 4) throw std::invalid_argument("decode_heatmaps expects [B, K, h, w]");
    auto v = batch.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    auto acc = v.accessor<float, 4>();
    std::vector<DecodedPose> out;
    out.reserve(v.size(0));
    for (int64_t b = 0; b < v.size(0); ++b) {
        out.push_back(decode_one(acc[b], static_cast<int>(v.size(1)), static_cast<int>(v.size(2)),
                                 static_cast<int>(v.size(3))));
    }
    return out;
}

} // namespace kpda
