#include "kpda/types.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>

#include "kpda/errors.hpp"

namespace kpda {

namespace {
std::atomic<int> g_guard_depth{0};
std::atomic<std::uint64_t> g_guard_violations{0};
} // namespace

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw std::invalid_argument("unknown domain '" + s + "' (expected source|target)");
}

BBox BBox::scaled(double factor) const {
    return {x0 * factor, y0 * factor, x1 * factor, y1 * factor};
}

std::vector<std::string> Skeleton::group_order() const {
    std::vector<std::string> order;
    for (const auto& g : joint_groups) {
        if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
    }
    return order;
}

void validate_flip_partner(std::span<const int> partner) {
    const int n = static_cast<int>(partner.size());
    for (int i = 0; i < n; ++i) {
        const int p = partner[i];
        if (p < 0 || p >= n || partner[p] != i) {
            throw std::invalid_argument("flip pairing is not an involution at joint " +
                                        std::to_string(i));
        }
    }
}

void Skeleton::validate() const {
    if (joint_groups.size() != joint_names.size() || flip_partner.size() != joint_names.size()) {
        throw std::invalid_argument("skeleton: names, groups and flip pairs must all have K entries");
    }
    validate_flip_partner(flip_partner);
}

Skeleton Skeleton::plain(int joint_count) {
    Skeleton s;
    for (int i = 0; i < joint_count; ++i) {
        s.joint_names.push_back("joint" + std::to_string(i));
        s.joint_groups.emplace_back("all");
        s.flip_partner.push_back(i);
    }
    return s;
}

HeatmapStack::HeatmapStack(torch::Tensor values) : values_(std::move(values)) {
    if (!values_.defined() || values_.dim() != 3) {
        throw std::invalid_argument("HeatmapStack expects a [K, h, w] tensor");
    }
}

const std::vector<Keypoint>& PoseSample::keypoints() const {
    if (domain == Domain::target && SupervisionGuard::active()) {
        g_guard_violations.fetch_add(1);
        throw SupervisionLeakError("target ground truth read during training (sample " + id + ")");
    }
    return keypoints_;
}

SupervisionGuard::SupervisionGuard() { g_guard_depth.fetch_add(1); }
SupervisionGuard::~SupervisionGuard() { g_guard_depth.fetch_sub(1); }
bool SupervisionGuard::active() { return g_guard_depth.load() > 0; }
std::uint64_t SupervisionGuard::violations() { return g_guard_violations.load(); }

} // namespace kpda
