#include "kpda/losses.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kpda {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

void check_cutoff(std::size_t k, int alpha_n) {
    if (alpha_n < 1 || static_cast<std::size_t>(alpha_n) > k) {
        throw std::invalid_argument("cut-off index " + std::to_string(alpha_n) +
                                    " outside [1, " + std::to_string(k) + "]");
    }
}

constexpr double kProbEps = 1e-7;

} // namespace

torch::Tensor mse_heatmap_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "mse_heatmap_loss");
    return (pred - target).pow(2).mean();
}

torch::Tensor per_joint_mse(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "per_joint_mse");
    if (pred.dim() < 3) throw std::invalid_argument("per_joint_mse: expected [..., K, h, w]");
    return (pred - target).pow(2).mean({-2, -1});
}

std::vector<int> smallest_joints(std::span<const double> joint_losses, int alpha_n) {
    check_cutoff(joint_losses.size(), alpha_n);
    std::vector<int> order(joint_losses.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return joint_losses[a] < joint_losses[b]; });
    order.resize(alpha_n);
    return order;
}

double dynamic_threshold(std::span<const double> joint_losses, int alpha_n) {
    const auto order = smallest_joints(joint_losses, alpha_n);
    return joint_losses[order.back()];
}

JointSelection selected_pseudo_loss(std::span<const double> joint_losses, int alpha_n) {
    JointSelection sel;
    sel.indices = smallest_joints(joint_losses, alpha_n);
    double sum = 0.0;
    for (int c : sel.indices) sum += joint_losses[c];
    sel.value = sum / static_cast<double>(sel.indices.size());
    return sel;
}

SelectedLoss selected_pseudo_loss(const torch::Tensor& joint_losses, int alpha_n,
                                  const torch::Tensor& available) {
    if (joint_losses.dim() != 2) throw std::invalid_argument("selected_pseudo_loss: expected [B, K]");
    check_same_shape(joint_losses, available, "selected_pseudo_loss");
    const int64_t batch = joint_losses.size(0);
    const int64_t k = joint_losses.size(1);
    check_cutoff(static_cast<std::size_t>(k), alpha_n);

    auto losses = joint_losses.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    auto avail = available.to(torch::kCPU, torch::kBool).contiguous();
    auto l_acc = losses.accessor<double, 2>();
    auto a_acc = avail.accessor<bool, 2>();

    auto selected = torch::zeros({batch, k}, torch::kBool);
    auto s_acc = selected.accessor<bool, 2>();
    auto weights = torch::zeros({batch, k}, torch::kFloat64);
    auto w_acc = weights.accessor<double, 2>();
    int64_t contributing = 0;
    for (int64_t b = 0; b < batch; ++b) {
        std::vector<int> idx;
        std::vector<double> vals;
        for (int64_t c = 0; c < k; ++c) {
            if (a_acc[b][c]) {
                idx.push_back(static_cast<int>(c));
                vals.push_back(l_acc[b][c]);
            }
        }
        if (idx.empty()) continue;
        const int keep = std::min<int>(alpha_n, static_cast<int>(idx.size()));
        const auto local = smallest_joints(vals, keep);
        for (int j : local) {
            s_acc[b][idx[j]] = true;
            w_acc[b][idx[j]] = 1.0 / keep;
        }
        ++contributing;
    }

    SelectedLoss out;
    out.selected = selected.to(joint_losses.device());
    if (contributing == 0) {
        out.value = (joint_losses * 0.0).sum();
        return out;
    }
    auto w = weights.to(joint_losses.options().dtype());
    out.value = (joint_losses * w).sum() / static_cast<double>(contributing);
    return out;
}

DomainLosses domain_losses(const torch::Tensor& logit_source, const torch::Tensor& logit_target) {
    auto p_source = torch::sigmoid(logit_source).clamp(kProbEps, 1.0 - kProbEps);
    auto p_target = torch::sigmoid(logit_target).clamp(kProbEps, 1.0 - kProbEps);
    // Source is labelled 1, target 0.
    auto l_d = -torch::log(p_source).mean() - torch::log(1.0 - p_target).mean();
    return {l_d, -l_d};
}

LossBreakdown total_loss(LossBreakdown c, const ScheduleState& s) {
    const double inner = s.lambda_sd * c.l_sd + s.lambda_T * c.l_pseudo_mdam;
    const double outer = s.lambda_mt * c.l_mt + s.lambda_R * c.l_pseudo_refine;
    c.total = c.l_source + s.lambda_adv * c.l_adv + inner + outer;
    return c;
}

torch::Tensor weighted_objective(const torch::Tensor& l_source, const torch::Tensor& l_sd,
                                 const torch::Tensor& l_pseudo_mdam, const torch::Tensor& l_mt,
                                 const torch::Tensor& l_pseudo_refine, const ScheduleState& s) {
    return l_source + s.lambda_sd * l_sd + s.lambda_T * l_pseudo_mdam + s.lambda_mt * l_mt +
           s.lambda_R * l_pseudo_refine;
}

} // namespace kpda
