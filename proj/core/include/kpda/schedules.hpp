#pragma once

#include <string>
#include <vector>

namespace kpda {

/// Curriculum and optimiser hyperparameters. Defaults target the 18-joint setting.
struct ScheduleConfig {
    double ramp_epochs = 10.0;     // lambda_sd / lambda_mt reach their max here
    double ramp_max = 90.0;
    double decay_start = 15.0;     // lambda_T / lambda_R
    double decay_end = 8.0;
    double decay_epochs = 15.0;
    int joints = 18;               // K, initial cut-off index
    int alpha_min = 9;
    double lambda_adv = 0.0005;
    double base_lr = 0.00025;
    double poly_power = 0.9;
    std::vector<int> step_milestones{60, 90};
    double step_gamma = 0.1;

    // Ablation switches. Off means the corresponding weights stay at zero and
    // the matching pseudo-label loss keeps every joint.
    bool inner_loop = true;
    bool outer_loop = true;
    bool adversarial = true;

    void validate() const;
};

/// Everything the trainer needs to know about "where in the curriculum" it is.
struct ScheduleState {
    int epoch = 0;
    long iter = 0;
    double lambda_sd = 0.0;
    double lambda_mt = 0.0;
    double lambda_T = 0.0;
    double lambda_R = 0.0;
    double lambda_adv = 0.0;
    int alpha_N_T = 0;  // cut-off index for the MDAM pseudo loss
    int alpha_N_R = 0;  // cut-off index for the refinement pseudo loss
    double lr = 0.0;

    /// The cut-off index shared by both selections whenever both loops are active.
    int alpha_N() const { return alpha_N_R; }

    friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

/// max_value * exp(-5 (1 - x)^2) with x = min(epoch / ramp_epochs, 1).
double ramp_weight(double epoch, double ramp_epochs = 10.0, double max_value = 90.0);

/// Linear from `start` at epoch 0 to `end` at `decay_epochs`, constant afterwards.
double decay_weight(double epoch, double start = 15.0, double end = 8.0,
                    double decay_epochs = 15.0);

/// max(K - epoch, alpha_min).
int cutoff_index(int epoch, int joints = 18, int alpha_min = 9);

/// base * (1 - iter / total_iters)^power.
double poly_lr(long iter, long total_iters, double base = 0.00025, double power = 0.9);

/// base * gamma^(number of milestones <= epoch).
double step_lr(int epoch, double base = 0.00025, const std::vector<int>& milestones = {60, 90},
               double gamma = 0.1);

/// Adaptation-stage state at (epoch, iter) out of `total_iters` optimiser steps.
ScheduleState adaptation_schedule(int epoch, long iter, long total_iters, const ScheduleConfig& cfg);

} // namespace kpda
