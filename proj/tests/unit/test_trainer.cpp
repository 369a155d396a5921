#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "kpda/checkpoint.hpp"
#include "kpda/errors.hpp"
#include "kpda/heatmap.hpp"
#include "kpda/toy.hpp"
#include "kpda/trainer.hpp"

using namespace kpda;
using kpda::testing::TempDir;
using kpda::testing::tiny_model;
using kpda::testing::tiny_train;

namespace {

std::vector<PoseSample> toy_set(int n, Domain style, std::uint64_t offset = 0) {
    std::vector<PoseSample> out;
    for (int i = 0; i < n; ++i) out.push_back(generate_toy_sample(offset + i, style));
    return out;
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
    auto pb = b.named_parameters();
    for (const auto& p : a.named_parameters()) {
        if (!torch::equal(p.value(), pb[p.key()])) return false;
    }
    return true;
}

// Pseudo labels straight from the generator's shared pose sampler: the source twin of
// each target sample carries the same keypoints, so no target annotation is touched.
std::vector<PseudoLabel> twin_labels(const std::vector<PoseSample>& target, std::uint64_t offset) {
    std::vector<PseudoLabel> out;
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto twin = generate_toy_sample(offset + i, Domain::source);
        PseudoLabel l{target[i].id, twin.keypoints(), std::vector<double>(kToyJoints, 1.0)};
        out.push_back(l);
    }
    return out;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("config from the registry") {
    Config c;
    c.set("model.joints", "10");
    c.set("schedule.alpha_min", "5");
    auto t = TrainConfig::from(c);
    CHECK(t.model.joints == 10);
    CHECK(t.schedule.joints == 10);
    CHECK(t.epochs_stage1 == 100);
    CHECK(t.epochs_stage2 == 80);
    CHECK(t.confidence_threshold == 0.5);
    CHECK(t.ema_alpha == 0.999);
    CHECK(t.mixup);
    CHECK(t.run_hash == c.hash());
    c.set("train.confidence_threshold", "1.5");
    CHECK_THROWS_AS(TrainConfig::from(c), UsageError);
}

TEST_CASE("zero pretraining epochs leaves the initial weights") {
    TempDir dir("tr");
    auto cfg = tiny_train();
    cfg.epochs_stage1 = 0;
    cfg.checkpoint = dir / "p.ckpt";
    torch::manual_seed(cfg.seed);
    StudentNet init(cfg.model);
    StudentNet reference = clone_student(init);
    auto res = pretrain(cfg, toy_set(4, Domain::source), toy_skeleton(), init);
    CHECK(res.steps == 0);
    StudentNet loaded(cfg.model);
    auto meta = load_checkpoint(cfg.checkpoint, loaded, nullptr);
    CHECK(meta.stage == "pretrain");
    CHECK(meta.epochs_completed == 0);
    CHECK(same_parameters(*loaded, *reference));
}

TEST_CASE("pretraining is deterministic in the seed") {
    auto cfg = tiny_train();
    cfg.epochs_stage1 = 2;
    const auto data = toy_set(8, Domain::source);
    auto a = pretrain(cfg, data, toy_skeleton());
    auto b = pretrain(cfg, data, toy_skeleton());
    REQUIRE(a.epoch_loss.size() == 2);
    CHECK(a.steps == 4);
    CHECK(a.epoch_loss.back() == doctest::Approx(b.epoch_loss.back()).epsilon(1e-4));
    CHECK(same_parameters(*a.student, *b.student));
}

TEST_CASE("epoch hook sees every epoch and can stop early") {
    auto cfg = tiny_train();
    cfg.epochs_stage1 = 5;
    const auto data = toy_set(8, Domain::source);
    std::vector<std::pair<int, long>> seen;
    auto res = pretrain(cfg, data, toy_skeleton(), nullptr, [&](int epochs, long steps, StudentNet& s) {
        CHECK(s->is_training());
        seen.emplace_back(epochs, steps);
        return epochs < 3;
    });
    REQUIRE(seen.size() == 3);
    CHECK(seen[0] == std::pair<int, long>{1, 2});
    CHECK(seen[2] == std::pair<int, long>{3, 6});
    CHECK(res.steps == 6);
    CHECK(res.epoch_loss.size() == 3);
}

TEST_CASE("non-finite loss aborts and keeps the last checkpoint") {
    TempDir dir("tr");
    auto cfg = tiny_train();
    cfg.epochs_stage1 = 3;
    cfg.checkpoint = dir / "p.ckpt";
    auto data = toy_set(4, Domain::source);
    data[2].image = torch::full_like(data[2].image, std::nan(""));
    CHECK_THROWS_AS(pretrain(cfg, data, toy_skeleton()), NumericalError);
    CHECK_FALSE(std::filesystem::exists(cfg.checkpoint));

    // adaptation writes its starting point before the first step
    auto good = toy_set(4, Domain::source);
    auto pre = pretrain(tiny_train(), good, toy_skeleton());
    auto target = toy_set(4, Domain::target, 100);
    auto labels = twin_labels(target, 100);
    target[1].image = torch::full_like(target[1].image, std::nan(""));
    auto tcfg = tiny_train();
    tcfg.checkpoint = dir / "a.ckpt";
    CHECK_THROWS_AS(train(tcfg, good, target, labels, toy_skeleton(), pre.student), NumericalError);
    REQUIRE(std::filesystem::exists(tcfg.checkpoint));
    CHECK(read_checkpoint_meta(tcfg.checkpoint).epochs_completed == 0);
}

TEST_CASE("pseudo labels never read target annotations") {
    auto pre = pretrain(tiny_train(), toy_set(4, Domain::source), toy_skeleton());
    const auto target = toy_set(6, Domain::target, 50);
    const auto before = SupervisionGuard::violations();
    auto labels = generate_pseudo_labels(pre.student, target, 0.5);
    CHECK(SupervisionGuard::violations() == before);
    REQUIRE(labels.size() == 6);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        CHECK(labels[i].sample_id == target[i].id);
        CHECK(labels[i].keypoints.size() == static_cast<std::size_t>(kToyJoints));
        for (std::size_t c = 0; c < labels[i].keypoints.size(); ++c) {
            CHECK(labels[i].confidence[c] >= 0.0);
            CHECK(labels[i].confidence[c] <= 1.0);
            CHECK(labels[i].keypoints[c].visible == (labels[i].confidence[c] >= 0.5));
        }
    }
}

TEST_CASE("confidence threshold sweep") {
    auto pre = pretrain(tiny_train(), toy_set(4, Domain::source), toy_skeleton());
    const auto target = toy_set(6, Domain::target, 50);
    auto kept = [&](double th) {
        long n = 0;
        for (const auto& l : generate_pseudo_labels(pre.student, target, th)) {
            for (const auto& k : l.keypoints) n += k.visible;
        }
        return n;
    };
    CHECK(kept(0.0) == 6 * kToyJoints);
    long prev = kept(0.0);
    for (double th : {0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0}) {
        const long n = kept(th);
        CHECK(n <= prev);
        prev = n;
    }
    // an untrained network never reaches a unit peak
    CHECK(kept(1.0) == 0);
    CHECK_THROWS_AS(generate_pseudo_labels(pre.student, target, 1.2), UsageError);
}

TEST_CASE("adaptation needs a pseudo label for every target sample") {
    auto pre = pretrain(tiny_train(), toy_set(4, Domain::source), toy_skeleton());
    const auto source = toy_set(4, Domain::source);
    const auto target = toy_set(4, Domain::target, 100);
    auto labels = twin_labels(target, 100);
    labels.pop_back();
    CHECK_THROWS_AS(train(tiny_train(), source, target, labels, toy_skeleton(), pre.student), DataError);
}

TEST_CASE("one step matches an independently wired reference graph") {
    // With lambda_sd = lambda_mt = lambda_adv = 0 and alpha_N = K the objective is plain
    // supervised MSE on source plus pseudo-labelled target.
    torch::manual_seed(5);
    auto cfg = tiny_train();
    cfg.mixup = false;
    cfg.schedule.inner_loop = cfg.schedule.outer_loop = cfg.schedule.adversarial = false;
    StudentNet a(cfg.model);
    StudentNet b = clone_student(a);

    auto src = torch::rand({3, 3, 64, 64});
    auto tgt = torch::rand({3, 3, 64, 64});
    auto h_src = torch::rand({3, 10, 64, 64});
    auto h_tgt = torch::rand({3, 10, 64, 64});
    AdaptBatch batch;
    batch.src_images = src;
    batch.src_heatmaps = h_src;
    batch.tgt_images = tgt;
    batch.tgt_pseudo = h_tgt;
    batch.available = torch::ones({3, 10}, torch::kBool);
    batch.teacher_targets = torch::rand({3, 10, 64, 64});
    auto state = adaptation_schedule(4, 0, 10, cfg.schedule);
    REQUIRE(state.lambda_sd == 0.0);
    REQUIRE(state.alpha_N_T == 10);
    REQUIRE(state.alpha_N_R == 10);

    auto losses = adaptation_losses(a, batch, state, cfg);
    losses.objective.backward();

    auto out = b->forward(torch::cat({src, tgt}));
    auto mse = [](const torch::Tensor& p, const torch::Tensor& t) { return (p - t).pow(2).mean(); };
    auto ref = mse(out.heatmaps.slice(0, 0, 3), h_src) + mse(out.refined.slice(0, 0, 3), h_src) +
               state.lambda_T * mse(out.heatmaps.slice(0, 3, 6), h_tgt) +
               state.lambda_R * mse(out.refined.slice(0, 3, 6), h_tgt);
    ref.backward();

    CHECK(losses.objective.item<double>() == doctest::Approx(ref.item<double>()).epsilon(1e-5));
    auto pb = b->named_parameters();
    for (const auto& p : a->named_parameters()) {
        const auto& ga = p.value().grad();
        const auto& gb = pb[p.key()].grad();
        if (!gb.defined()) {
            CHECK((!ga.defined() || ga.abs().max().item<float>() == 0.0f));
            continue;
        }
        REQUIRE(ga.defined());
        const double scale = gb.abs().max().item<double>() + 1e-8;
        CHECK((ga - gb).abs().max().item<double>() / scale < 1e-4);
    }
}

TEST_CASE("self-distillation only trains the pose head side") {
    torch::manual_seed(6);
    auto cfg = tiny_train();
    cfg.mixup = false;
    cfg.source_supervises_refined = true;
    StudentNet s(cfg.model);
    AdaptBatch batch;
    batch.src_images = torch::rand({2, 3, 64, 64});
    batch.src_heatmaps = torch::zeros({2, 10, 64, 64});
    batch.tgt_images = torch::rand({2, 3, 64, 64});
    batch.tgt_pseudo = torch::zeros({2, 10, 64, 64});
    batch.available = torch::zeros({2, 10}, torch::kBool);
    batch.teacher_targets = torch::zeros({2, 10, 64, 64});
    ScheduleState only_sd;
    only_sd.lambda_sd = 1.0;
    only_sd.alpha_N_T = only_sd.alpha_N_R = 10;
    cfg.schedule.adversarial = false;
    auto l = adaptation_losses(s, batch, only_sd, cfg);
    // drop the source term: it legitimately reaches the refinement block
    auto sd_only = l.objective - l.breakdown.l_source;
    (void)sd_only;
    auto out = s->forward(batch.tgt_images);
    auto l_sd = (out.heatmaps - out.refined.detach()).pow(2).mean();
    l_sd.backward();
    for (const auto& p : s->pose->named_parameters()) {
        if (p.key().rfind("refine", 0) != 0) continue;
        const auto& g = p.value().grad();
        CHECK((!g.defined() || g.abs().max().item<float>() == 0.0f));
    }
    CHECK(s->pose->named_parameters()["to_heatmaps.weight"].grad().abs().max().item<float>() > 0.0f);
    CHECK(l.breakdown.l_sd > 0.0);
}

TEST_CASE("training run contract") {
    TempDir dir("tr");
    auto pcfg = tiny_train();
    const auto source = toy_set(8, Domain::source);
    auto pre = pretrain(pcfg, source, toy_skeleton());
    const auto target = toy_set(8, Domain::target, 200);
    auto labels = twin_labels(target, 200);
    // drop a few joints so selection has something to work around
    for (int c = 0; c < 7; ++c) labels[0].keypoints[c].visible = false;

    auto cfg = tiny_train();
    cfg.epochs_stage2 = 3;
    cfg.iters_per_epoch = 2;
    cfg.schedule.ramp_epochs = 2;
    cfg.checkpoint = dir / "a.ckpt";
    cfg.metrics = dir / "m.jsonl";
    cfg.ema_alpha = 0.5;

    const auto violations = SupervisionGuard::violations();
    auto res = train(cfg, source, target, labels, toy_skeleton(), pre.student);
    CHECK(SupervisionGuard::violations() == violations);
    CHECK(res.epochs_completed == 3);
    REQUIRE(res.steps.size() == 6);
    REQUIRE(res.epoch_states.size() == 3);

    // pretrained weights are untouched; the result moved
    CHECK_FALSE(same_parameters(*pre.student, *res.student));

    for (const auto& rec : res.steps) {
        const auto expect = adaptation_schedule(rec.epoch, rec.iter, 6, cfg.schedule);
        CHECK(rec.schedule == expect);
        CHECK(std::isfinite(rec.losses.total));
        CHECK(rec.losses.l_adv == -rec.losses.l_d);
        CHECK(rec.losses.total == doctest::Approx(total_loss(rec.losses, rec.schedule).total));
        for (std::size_t b = 0; b < rec.losses.selected_joints_mdam.size(); ++b) {
            const auto& sel = rec.losses.selected_joints_mdam[b];
            if (sel.size() < static_cast<std::size_t>(rec.schedule.alpha_N_T)) {
                // only samples short of pseudo-visible joints may keep fewer
                CHECK(sel.size() <= 3);
            } else {
                CHECK(sel.size() == static_cast<std::size_t>(rec.schedule.alpha_N_T));
            }
            CHECK(rec.losses.selected_joints_refine[b].size() <= static_cast<std::size_t>(rec.schedule.alpha_N_R));
        }
    }
    for (int e = 0; e < 3; ++e) CHECK(res.epoch_states[e] == adaptation_schedule(e, 2 * e, 6, cfg.schedule));

    // metrics stream: one record per step
    std::ifstream in(cfg.metrics);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("iter"));
        CHECK(j.contains("epoch"));
        CHECK(j.at("losses").contains("total"));
        CHECK(j.at("schedule").contains("lambda_sd"));
        ++lines;
    }
    CHECK(lines == 6);

    auto meta = read_checkpoint_meta(cfg.checkpoint);
    CHECK(meta.stage == "adapt");
    CHECK(meta.epochs_completed == 3);
    CHECK(meta.iter == 6);
    CHECK(meta.schedule == adaptation_schedule(3, 6, 6, cfg.schedule));
}

TEST_CASE("teacher follows the ema of the student") {
    auto pcfg = tiny_train();
    const auto source = toy_set(4, Domain::source);
    auto pre = pretrain(pcfg, source, toy_skeleton());
    const auto target = toy_set(4, Domain::target, 300);
    auto cfg = tiny_train();
    cfg.iters_per_epoch = 1;
    cfg.ema_alpha = 0.25;
    auto res = train(cfg, source, target, twin_labels(target, 300), toy_skeleton(), pre.student);
    REQUIRE(res.steps.size() == 1);
    // after one step: theta' = alpha * theta'_0 + (1 - alpha) * theta_1, theta'_0 = pretrained
    auto teacher = res.teacher->net()->named_parameters();
    auto before = pre.student->pose->named_parameters();
    for (const auto& p : res.student->pose->named_parameters()) {
        auto expect = 0.25 * before[p.key()] + 0.75 * p.value();
        CHECK(torch::allclose(teacher[p.key()], expect, 1e-5, 1e-6));
    }
}

TEST_CASE("zero adaptation epochs keep the input weights") {
    TempDir dir("tr");
    auto pre = pretrain(tiny_train(), toy_set(4, Domain::source), toy_skeleton());
    const auto target = toy_set(4, Domain::target, 400);
    auto cfg = tiny_train();
    cfg.epochs_stage2 = 0;
    cfg.checkpoint = dir / "a.ckpt";
    auto res = train(cfg, toy_set(4, Domain::source), target, twin_labels(target, 400), toy_skeleton(), pre.student);
    CHECK(res.steps.empty());
    StudentNet loaded(cfg.model);
    load_checkpoint(cfg.checkpoint, loaded, nullptr);
    CHECK(same_parameters(*loaded, *pre.student));
}

TEST_CASE("resume continues the schedule where it stopped") {
    TempDir dir("tr");
    const auto source = toy_set(4, Domain::source);
    auto pre = pretrain(tiny_train(), source, toy_skeleton());
    const auto target = toy_set(4, Domain::target, 500);
    const auto labels = twin_labels(target, 500);
    auto cfg = tiny_train();
    cfg.epochs_stage2 = 5;
    cfg.iters_per_epoch = 1;
    cfg.checkpoint = dir / "a.ckpt";
    cfg.stop_after_epoch = 3;
    auto first = train(cfg, source, target, labels, toy_skeleton(), pre.student);
    CHECK(first.interrupted);
    CHECK(first.epochs_completed == 3);
    auto meta = read_checkpoint_meta(cfg.checkpoint);
    CHECK(meta.schedule.epoch == 3);
    CHECK(meta.schedule.alpha_N() == 10 - 3);

    cfg.stop_after_epoch = -1;
    auto second = train(cfg, source, target, labels, toy_skeleton(), pre.student, cfg.checkpoint);
    CHECK(second.epochs_completed == 5);
    REQUIRE(second.steps.size() == 2);
    CHECK(second.steps.front().epoch == 3);
    CHECK(second.steps.front().iter == 3);

    auto wrong = cfg;
    wrong.run_hash = "different";
    auto with_hash = cfg;
    with_hash.run_hash = "original";
    with_hash.checkpoint = dir / "b.ckpt";
    with_hash.stop_after_epoch = 1;
    train(with_hash, source, target, labels, toy_skeleton(), pre.student);
    CHECK_THROWS_AS(train(wrong, source, target, labels, toy_skeleton(), pre.student, with_hash.checkpoint),
                    DataError);
}

TEST_CASE("predict returns the chosen head") {
    torch::manual_seed(9);
    StudentNet s(tiny_model());
    const auto data = toy_set(3, Domain::source);
    auto r = predict(s, data, Head::refined, 2);
    auto m = predict(s, data, Head::mdam, 2);
    CHECK(r.sizes() == torch::IntArrayRef{3, 10, 64, 64});
    CHECK_FALSE(torch::equal(r, m));
    CHECK(s->is_training());
}

}
