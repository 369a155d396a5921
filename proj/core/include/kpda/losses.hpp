#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "kpda/schedules.hpp"

namespace kpda {

/// (1/N) sum (pred - target)^2 with N = h*w*K, averaged over any leading batch dims.
torch::Tensor mse_heatmap_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Per-channel mean squared error over the spatial dims: [..., K, h, w] -> [..., K].
torch::Tensor per_joint_mse(const torch::Tensor& pred, const torch::Tensor& target);

/// Indices of the alpha_n smallest losses, in ascending (loss, index) order.
std::vector<int> smallest_joints(std::span<const double> joint_losses, int alpha_n);

/// The alpha_n-th smallest joint loss (1-based).
double dynamic_threshold(std::span<const double> joint_losses, int alpha_n);

struct JointSelection {
    double value = 0.0;        // mean loss over the selected joints
    std::vector<int> indices;  // selected set C, in ascending-loss order
};

/// Small-loss selection for one sample: keeps every joint whose loss is at most the
/// dynamic threshold, admitting ties in sort order until exactly alpha_n survive.
JointSelection selected_pseudo_loss(std::span<const double> joint_losses, int alpha_n);

struct SelectedLoss {
    torch::Tensor value;     // scalar, differentiable w.r.t. the joint losses
    torch::Tensor selected;  // bool [B, K]
};

/// Batched, differentiable selection. `available` ([B, K] bool) marks joints that carry
/// a pseudo label; each sample keeps min(alpha_n, #available) of them. The result is
/// the mean over samples that keep at least one joint (zero if none do).
SelectedLoss selected_pseudo_loss(const torch::Tensor& joint_losses, int alpha_n,
                                  const torch::Tensor& available);

struct DomainLosses {
    torch::Tensor l_d;    // classifier cross-entropy, batch mean
    torch::Tensor l_adv;  // == -l_d
};

/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
DomainLosses domain_losses(const torch::Tensor& logit_source, const torch::Tensor& logit_target);

/// Scalar values of every objective term for one step.
struct LossBreakdown {
    double l_source = 0.0;
    double l_adv = 0.0;
    double l_d = 0.0;
    double l_sd = 0.0;
    double l_pseudo_mdam = 0.0;
    double l_mt = 0.0;
    double l_pseudo_refine = 0.0;
    double total = 0.0;
    std::vector<std::vector<int>> selected_joints_mdam;
    std::vector<std::vector<int>> selected_joints_refine;
};

/// total = L_S + l_adv*L_adv + (l_sd*L_sd + l_T*L_T) + (l_mt*L_mt + l_R*L_R).
LossBreakdown total_loss(LossBreakdown components, const ScheduleState& schedule);

/// Tensor form of the same weighted sum, used for backpropagation. The adversarial
/// term is left out: it reaches the extractor through gradient reversal instead.
torch::Tensor weighted_objective(const torch::Tensor& l_source, const torch::Tensor& l_sd,
                                 const torch::Tensor& l_pseudo_mdam, const torch::Tensor& l_mt,
                                 const torch::Tensor& l_pseudo_refine,
                                 const ScheduleState& schedule);

} // namespace kpda
