#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace kpda {

/// 8-bit RGB PNG -> float [3, H, W] in [0, 1]. Throws DataError on failure.
torch::Tensor read_png(const std::filesystem::path& path);

/// float [3, H, W] in [0, 1] -> 8-bit RGB PNG (values rounded, clamped).
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

} // namespace kpda
