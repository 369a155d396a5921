#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kpda/types.hpp"

namespace kpda {

/// Which ground-truth joints are scored.
enum class JointFilter {
    visible,  // annotated and visible
    labeled,  // every annotated joint, occluded ones included
};

struct PckReport {
    double alpha = 0.05;
    std::vector<std::optional<double>> per_joint;  // nullopt: joint never scored
    std::vector<std::pair<std::string, std::optional<double>>> per_group;
    std::optional<double> mean;                     // nullopt: no scored joints at all
    std::vector<long> scored;                       // denominators per joint
    std::vector<long> correct;                      // numerators per joint

    bool has_data() const { return mean.has_value(); }
};

/// PCK reference length: the longer bounding-box side.
inline double reference_length(const BBox& box) {
    return std::max(box.width(), box.height());
}

/// Accumulates per-joint hit counts over many samples.
class PckAccumulator {
public:
    PckAccumulator(int joints, double alpha, JointFilter filter = JointFilter::visible);

    /// `ref_length` is in the same units as the keypoints. A hit is a distance of at
    /// most alpha * ref_length.
    void add(std::span<const Keypoint> pred, std::span<const Keypoint> gt, double ref_length);

    PckReport report(const Skeleton* skeleton = nullptr) const;

private:
    double alpha_;
    JointFilter filter_;
    std::vector<long> scored_;
    std::vector<long> correct_;
};

/// Single-sample PCK; `box` must be in keypoint units.
PckReport pck(std::span<const Keypoint> pred, std::span<const Keypoint> gt, const BBox& box,
              double alpha, const Skeleton* skeleton = nullptr,
              JointFilter filter = JointFilter::visible);

} // namespace kpda
