#include "kpda/pck.hpp"

#include <cmath>
#include <stdexcept>

namespace kpda {

PckAccumulator::PckAccumulator(int joints, double alpha, JointFilter filter)
    : alpha_(alpha), filter_(filter), scored_(joints, 0), correct_(joints, 0) {
    if (!(alpha > 0.0)) throw std::invalid_argument("pck: alpha must be positive");
}

void PckAccumulator::add(std::span<const Keypoint> pred, std::span<const Keypoint> gt,
                         double ref_length) {
    if (pred.size() != gt.size() || gt.size() != scored_.size()) {
        throw std::invalid_argument("pck: prediction and ground truth must both have K joints");
    }
    const double limit = alpha_ * ref_length;
    for (std::size_t c = 0; c < gt.size(); ++c) {
        const bool counts = filter_ == JointFilter::visible ? gt[c].visible : gt[c].labeled;
        if (!counts) continue;
        ++scored_[c];
        const double d = std::hypot(pred[c].x - gt[c].x, pred[c].y - gt[c].y);
        if (d <= limit) ++correct_[c];
    }
}

PckReport PckAccumulator::report(const Skeleton* skeleton) const {
    PckReport r;
    r.alpha = alpha_;
    r.scored = scored_;
    r.correct = correct_;
    long total = 0;
    long hits = 0;
    for (std::size_t c = 0; c < scored_.size(); ++c) {
        total += scored_[c];
        hits += correct_[c];
        if (scored_[c] > 0) {
            r.per_joint.emplace_back(static_cast<double>(correct_[c]) / scored_[c]);
        } else {
            r.per_joint.emplace_back(std::nullopt);
        }
    }
    if (total > 0) r.mean = static_cast<double>(hits) / total;

    if (skeleton != nullptr) {
        if (skeleton->size() != static_cast<int>(scored_.size())) {
            throw std::invalid_argument("pck: skeleton joint count does not match report");
        }
        for (const auto& group : skeleton->group_order()) {
            long g_total = 0;
            long g_hits = 0;
            for (int c = 0; c < skeleton->size(); ++c) {
                if (skeleton->joint_groups[c] != group) continue;
                g_total += scored_[c];
                g_hits += correct_[c];
            }
            std::optional<double> acc;
            if (g_total > 0) acc = static_cast<double>(g_hits) / g_total;
            r.per_group.emplace_back(group, acc);
        }
    }
    return r;
}

PckReport pck(std::span<const Keypoint> pred, std::span<const Keypoint> gt, const BBox& box,
              double alpha, const Skeleton* skeleton, JointFilter filter) {
    PckAccumulator acc(static_cast<int>(gt.size()), alpha, filter);
    acc.add(pred, gt, reference_length(box));
    return acc.report(skeleton);
}

} // namespace kpda
