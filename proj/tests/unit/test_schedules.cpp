#include <doctest.h>

#include <cmath>

#include "kpda/schedules.hpp"

using namespace kpda;

TEST_SUITE("schedules") {

TEST_CASE("ramp weight values") {
    CHECK(ramp_weight(10) == 90.0);
    CHECK(ramp_weight(25) == 90.0);
    CHECK(std::abs(ramp_weight(0) - 90 * std::exp(-5.0)) < 1e-9);
    CHECK(ramp_weight(0) == doctest::Approx(0.606415).epsilon(1e-6));
    CHECK(ramp_weight(5) == doctest::Approx(25.788).epsilon(1e-4));
    CHECK(std::abs(ramp_weight(5) - 90 * std::exp(-1.25)) < 1e-12);
}

TEST_CASE("ramp weight is continuous and non-decreasing") {
    double prev = ramp_weight(0);
    for (double e = 0.01; e <= 15; e += 0.01) {
        const double v = ramp_weight(e);
        CHECK(v >= prev);
        CHECK(v - prev < 0.5);
        prev = v;
    }
}

TEST_CASE("decay weight values") {
    CHECK(decay_weight(0) == 15.0);
    CHECK(decay_weight(15) == 8.0);
    CHECK(decay_weight(40) == 8.0);
    CHECK(decay_weight(7) == doctest::Approx(15 - 7.0 * 7 / 15).epsilon(1e-12));
    CHECK(decay_weight(7) == doctest::Approx(11.733).epsilon(1e-4));
    double prev = decay_weight(0);
    for (int e = 1; e < 30; ++e) {
        CHECK(decay_weight(e) <= prev);
        prev = decay_weight(e);
    }
}

TEST_CASE("cut-off index trajectory") {
    CHECK(cutoff_index(0) == 18);
    CHECK(cutoff_index(9) == 9);
    CHECK(cutoff_index(50) == 9);
    for (int e = 0; e < 40; ++e) {
        CHECK(cutoff_index(e) == std::max(18 - e, 9));
        if (e > 0) CHECK(cutoff_index(e - 1) - cutoff_index(e) <= 1);
    }
    CHECK(cutoff_index(3, 10, 5) == 7);
}

TEST_CASE("polynomial learning rate") {
    CHECK(poly_lr(0, 1000) == 0.00025);
    CHECK(poly_lr(1000, 1000) == 0.0);
    CHECK(poly_lr(500, 1000) == doctest::Approx(0.00025 * std::pow(0.5, 0.9)).epsilon(1e-12));
    CHECK(poly_lr(500, 1000) == doctest::Approx(1.3397e-4).epsilon(1e-4));
    for (long i = 1; i < 1000; ++i) CHECK(poly_lr(i, 1000) < poly_lr(i - 1, 1000));
}

TEST_CASE("step learning rate") {
    CHECK(step_lr(59) == 0.00025);
    CHECK(step_lr(60) == doctest::Approx(2.5e-5).epsilon(1e-12));
    CHECK(step_lr(95) == doctest::Approx(2.5e-6).epsilon(1e-12));
}

TEST_CASE("adaptation schedule ties and bounds") {
    ScheduleConfig cfg;
    for (int e = 0; e < 80; ++e) {
        auto s = adaptation_schedule(e, e * 10, 800, cfg);
        CHECK(s.lambda_sd == s.lambda_mt);
        CHECK(s.lambda_T == s.lambda_R);
        CHECK(s.alpha_N_T == s.alpha_N_R);
        CHECK(s.alpha_N() >= cfg.alpha_min);
        CHECK(s.alpha_N() <= cfg.joints);
        CHECK(s.lambda_sd == ramp_weight(e));
        CHECK(s.lambda_T == decay_weight(e));
        CHECK(s.alpha_N() == cutoff_index(e));
        CHECK(s.lambda_adv == 0.0005);
        CHECK(s.lr == poly_lr(e * 10, 800));
        CHECK(s.epoch == e);
    }
}

TEST_CASE("ablation switches zero their weights and disable selection") {
    ScheduleConfig cfg;
    cfg.inner_loop = false;
    cfg.outer_loop = false;
    cfg.adversarial = false;
    auto s = adaptation_schedule(12, 0, 100, cfg);
    CHECK(s.lambda_sd == 0.0);
    CHECK(s.lambda_mt == 0.0);
    CHECK(s.lambda_adv == 0.0);
    CHECK(s.alpha_N_T == 18);
    CHECK(s.alpha_N_R == 18);
    CHECK(s.lambda_T == decay_weight(12));

    cfg.outer_loop = true;
    auto t = adaptation_schedule(12, 0, 100, cfg);
    CHECK(t.lambda_mt == 90.0);
    CHECK(t.alpha_N_R == 9);
    CHECK(t.alpha_N_T == 18);
}

TEST_CASE("config validation") {
    ScheduleConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha_min = 19;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ScheduleConfig{};
    cfg.decay_end = 20;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}
