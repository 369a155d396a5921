#include "kpda/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kpda {

void ScheduleConfig::validate() const {
    if (ramp_epochs <= 0.0 || decay_epochs <= 0.0) {
        throw std::invalid_argument("schedule: ramp/decay lengths must be positive");
    }
    if (decay_end > decay_start) throw std::invalid_argument("schedule: decay_end must not exceed decay_start");
    if (joints < 1 || alpha_min < 1 || alpha_min > joints) {
        throw std::invalid_argument("schedule: need 1 <= alpha_min <= joints");
    }
    if (ramp_max < 0.0 || decay_end < 0.0 || lambda_adv < 0.0 || base_lr < 0.0) {
        throw std::invalid_argument("schedule: weights and learning rate must be non-negative");
    }
}

double ramp_weight(double epoch, double ramp_epochs, double max_value) {
    if (epoch < 0.0) throw std::invalid_argument("ramp_weight: negative epoch");
    const double x = std::min(epoch / ramp_epochs, 1.0);
    const double d = 1.0 - x;
    return max_value * std::exp(-5.0 * d * d);
}

double decay_weight(double epoch, double start, double end, double decay_epochs) {
    if (epoch < 0.0) throw std::invalid_argument("decay_weight: negative epoch");
    if (epoch >= decay_epochs) return end;
    return start + (end - start) * (epoch / decay_epochs);
}

int cutoff_index(int epoch, int joints, int alpha_min) {
    if (epoch < 0) throw std::invalid_argument("cutoff_index: negative epoch");
    return std::max(joints - epoch, alpha_min);
}

double poly_lr(long iter, long total_iters, double base, double power) {
    if (total_iters <= 0 || iter < 0 || iter > total_iters) {
        throw std::invalid_argument("poly_lr: need 0 <= iter <= total_iters, total_iters > 0");
    }
    return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total_iters), power);
}

double step_lr(int epoch, double base, const std::vector<int>& milestones, double gamma) {
    if (epoch < 0) throw std::invalid_argument("step_lr: negative epoch");
    const auto passed = std::count_if(milestones.begin(), milestones.end(),
                                      [epoch](int m) { return m <= epoch; });
    return base * std::pow(gamma, static_cast<double>(passed));
}

ScheduleState adaptation_schedule(int epoch, long iter, long total_iters, const ScheduleConfig& cfg) {
    ScheduleState s;
    s.epoch = epoch;
    s.iter = iter;
    const double ramp = ramp_weight(epoch, cfg.ramp_epochs, cfg.ramp_max);
    const double decay = decay_weight(epoch, cfg.decay_start, cfg.decay_end, cfg.decay_epochs);
    const int cutoff = cutoff_index(epoch, cfg.joints, cfg.alpha_min);

    // The inner and outer loops are tied (lambda_sd == lambda_mt, lambda_T == lambda_R)
    // whenever both run; ablations switch one side off.
    s.lambda_sd = cfg.inner_loop ? ramp : 0.0;
    s.lambda_mt = cfg.outer_loop ? ramp : 0.0;
    s.lambda_T = decay;
    s.lambda_R = decay;
    s.alpha_N_T = cfg.inner_loop ? cutoff : cfg.joints;
    s.alpha_N_R = cfg.outer_loop ? cutoff : cfg.joints;
    s.lambda_adv = cfg.adversarial ? cfg.lambda_adv : 0.0;
    s.lr = poly_lr(std::min(iter, total_iters), total_iters, cfg.base_lr, cfg.poly_power);
    return s;
}

} // namespace kpda
