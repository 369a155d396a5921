#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kpda/types.hpp"

namespace kpda {

inline constexpr int kPseudoStoreVersion = 1;

/// Machine-generated annotation for one target image. Keypoints are in output-heatmap
/// coordinates; joints filtered out for low confidence are stored invisible.
struct PseudoLabel {
    std::string sample_id;
    std::vector<Keypoint> keypoints;
    std::vector<double> confidence;

    friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
    friend std::ostream& operator<<(std::ostream& os, const PseudoLabel& l) {
        os << l.sample_id << ":";
        for (const auto& k : l.keypoints) os << " " << k;
        return os;
    }
};

/// JSON lines, one `{"id", "kpts": [[x, y, conf], ...], "vis": [0|1, ...], "version": 1}`
/// per sample. Written atomically. Throws std::invalid_argument on duplicate ids or a
/// confidence outside [0, 1].
void write_pseudo_labels(std::span<const PseudoLabel> labels, const std::filesystem::path& path);

/// Throws DataError on a missing file, malformed line or version mismatch.
std::vector<PseudoLabel> read_pseudo_labels(const std::filesystem::path& path);

} // namespace kpda
