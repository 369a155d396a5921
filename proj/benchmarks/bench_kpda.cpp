#include <random>

#include <benchmark/benchmark.h>

#include "kpda/augment.hpp"
#include "kpda/heatmap.hpp"
#include "kpda/losses.hpp"
#include "kpda/model.hpp"
#include "kpda/toy.hpp"

using namespace kpda;

namespace {

std::vector<Keypoint> random_pose(std::mt19937_64& rng, int joints, int size) {
    std::uniform_real_distribution<double> u(0, size - 1);
    std::vector<Keypoint> k;
    for (int j = 0; j < joints; ++j) k.push_back({u(rng), u(rng), true, true});
    return k;
}

ModelConfig toy_model() {
    ModelConfig m;
    m.joints = kToyJoints;
    m.input_size = 64;
    m.encoder_widths = {16, 32, 64};
    m.stem_stride = 1;
    m.decoder_width = 16;
    m.refine_width = 8;
    m.dc_channels = {16, 32, 64, 128, 256, 1};
    return m;
}

void BM_EncodeHeatmap(benchmark::State& state) {
    const int joints = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    const auto k = random_pose(rng, joints, 64);
    for (auto _ : state) benchmark::DoNotOptimize(encode_heatmap(k, 64, 64, 2.0));
}
BENCHMARK(BM_EncodeHeatmap)->Arg(10)->Arg(18);

void BM_DecodeHeatmaps(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    torch::manual_seed(1);
    auto h = torch::rand({batch, 18, 64, 64});
    for (auto _ : state) benchmark::DoNotOptimize(decode_heatmaps(h));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DecodeHeatmaps)->Arg(1)->Arg(32);

void BM_SmallLossSelection(benchmark::State& state) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(18);
    for (auto& x : v) x = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(selected_pseudo_loss(v, 12));
}
BENCHMARK(BM_SmallLossSelection);

void BM_BatchedSelection(benchmark::State& state) {
    torch::manual_seed(3);
    auto losses = torch::rand({32, 18});
    auto available = torch::rand({32, 18}) > 0.2;
    for (auto _ : state) benchmark::DoNotOptimize(selected_pseudo_loss(losses, 12, available).value);
}
BENCHMARK(BM_BatchedSelection);

void BM_Perturbation(benchmark::State& state) {
    std::mt19937_64 rng(4);
    PerturbationConfig cfg;
    auto image = torch::rand({3, 64, 64});
    for (auto _ : state) {
        const auto p = sample_perturbation(rng, cfg, 64);
        benchmark::DoNotOptimize(apply_to_image(p, image));
    }
}
BENCHMARK(BM_Perturbation);

void BM_ToySample(benchmark::State& state) {
    std::uint64_t seed = 0;
    const auto style = state.range(0) ? Domain::target : Domain::source;
    for (auto _ : state) benchmark::DoNotOptimize(generate_toy_sample(seed++, style));
}
BENCHMARK(BM_ToySample)->Arg(0)->Arg(1);

void BM_StudentForward(benchmark::State& state) {
    torch::manual_seed(5);
    StudentNet s(toy_model());
    s->eval();
    torch::NoGradGuard no_grad;
    auto x = torch::rand({state.range(0), 3, 64, 64});
    for (auto _ : state) benchmark::DoNotOptimize(s->forward(x).refined);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StudentForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_StudentTrainStep(benchmark::State& state) {
    torch::manual_seed(6);
    StudentNet s(toy_model());
    torch::optim::Adam opt(s->parameters(), torch::optim::AdamOptions(1e-3));
    auto x = torch::rand({16, 3, 64, 64});
    auto t = torch::rand({16, kToyJoints, 64, 64});
    for (auto _ : state) {
        auto out = s->forward(x);
        auto loss = mse_heatmap_loss(out.heatmaps, t) + mse_heatmap_loss(out.refined, t) +
                    s->classify(out, 0.0005).mean();
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
}
BENCHMARK(BM_StudentTrainStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
