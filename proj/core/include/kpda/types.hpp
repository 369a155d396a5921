#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace kpda {

enum class Domain { source, target };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

/// Joint location in output-heatmap pixels. `labeled` distinguishes an annotated
/// but occluded joint (visible=false, labeled=true) from a missing annotation.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
    bool labeled = true;

    friend bool operator==(const Keypoint&, const Keypoint&) = default;
    friend std::ostream& operator<<(std::ostream& os, const Keypoint& k) {
        return os << "(" << k.x << ", " << k.y << (k.visible ? ", vis" : ", occ") << (k.labeled ? ")" : ", unlabeled)");
    }
};

struct BBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    BBox scaled(double factor) const;

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Joint naming, grouping for reports, and the left/right pairing used by flips.
struct Skeleton {
    std::vector<std::string> joint_names;
    std::vector<std::string> joint_groups;  // group name per joint
    std::vector<int> flip_partner;           // involution over joint indices

    int size() const { return static_cast<int>(joint_names.size()); }
    /// Group names in order of first appearance.
    std::vector<std::string> group_order() const;
    void validate() const;

    /// Single "all" group, no left/right pairs.
    static Skeleton plain(int joint_count);
};

/// Throws std::invalid_argument unless partner is an involution over [0, size).
void validate_flip_partner(std::span<const int> partner);

/// K per-joint score maps, stored channel-first as a float tensor [K, h, w].
class HeatmapStack {
public:
    HeatmapStack() = default;
    explicit HeatmapStack(torch::Tensor values);

    const torch::Tensor& values() const { return values_; }
    int joints() const { return static_cast<int>(values_.size(0)); }
    int height() const { return static_cast<int>(values_.size(1)); }
    int width() const { return static_cast<int>(values_.size(2)); }

private:
    torch::Tensor values_;
};

/// One image with optional keypoints. Target-domain keypoints sit behind an access
/// guard: while a `SupervisionGuard` is alive anywhere in the process, reading them
/// records a violation and throws.
class PoseSample {
public:
    std::string id;
    torch::Tensor image;  // float [3, H, W] in [0, 1]
    Domain domain = Domain::source;
    BBox bbox;            // input-image pixels

    bool has_keypoints() const { return !keypoints_.empty(); }
    const std::vector<Keypoint>& keypoints() const;
    void set_keypoints(std::vector<Keypoint> kps) { keypoints_ = std::move(kps); }
    void clear_keypoints() { keypoints_.clear(); }

private:
    std::vector<Keypoint> keypoints_;
};

/// RAII scope marking "training is in progress": target ground truth is off limits.
class SupervisionGuard {
public:
    SupervisionGuard();
    ~SupervisionGuard();
    SupervisionGuard(const SupervisionGuard&) = delete;
    SupervisionGuard& operator=(const SupervisionGuard&) = delete;

    static bool active();
    /// Total number of guarded target-keypoint reads since process start.
    static std::uint64_t violations();
};

/// Input pixel coordinate -> output-heatmap coordinate (pixel-centre aligned).
inline double to_output_coord(double input_coord, int input_size, int output_size) {
    const double s = static_cast<double>(output_size) / input_size;
    return (input_coord + 0.5) * s - 0.5;
}

inline double to_input_coord(double output_coord, int input_size, int output_size) {
    const double s = static_cast<double>(input_size) / output_size;
    return (output_coord + 0.5) * s - 0.5;
}

} // namespace kpda
