#include <doctest.h>

#include <cmath>
#include <random>

#include "kpda/augment.hpp"
#include "kpda/heatmap.hpp"
#include "kpda/toy.hpp"

using namespace kpda;

namespace {

const std::vector<int> kPairs{0, 1, 3, 2, 5, 4, 7, 6, 9, 8};

Keypoint vis(double x, double y) { return {x, y, true, true}; }

} // namespace

TEST_SUITE("augment") {

TEST_CASE("identity ranges give the identity perturbation") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        auto p = sample_perturbation(rng, PerturbationConfig::identity(), 64);
        CHECK(p.is_identity());
    }
}

TEST_CASE("sampling is deterministic in the generator state") {
    std::mt19937_64 a(77), b(77);
    PerturbationConfig cfg;
    for (int i = 0; i < 50; ++i) CHECK(sample_perturbation(a, cfg, 64) == sample_perturbation(b, cfg, 64));
}

TEST_CASE("sampled parameters stay inside the configured ranges") {
    std::mt19937_64 rng(2);
    PerturbationConfig cfg;
    double lo = 1e9, hi = -1e9;
    int flips = 0;
    for (int i = 0; i < 10000; ++i) {
        auto p = sample_perturbation(rng, cfg, 64);
        lo = std::min(lo, p.rotation);
        hi = std::max(hi, p.rotation);
        CHECK(p.scale >= 0.6);
        CHECK(p.scale <= 1.4);
        CHECK(p.noise_sigma <= cfg.noise_sigma_max);
        if (p.occluder) {
            CHECK(p.occluder->x0 >= 0);
            CHECK(p.occluder->y1 <= 64);
            CHECK(p.occluder->x1 > p.occluder->x0);
        }
        flips += p.flip;
    }
    CHECK(lo >= -45.0);
    CHECK(hi <= 45.0);
    CHECK(lo < -44.0);
    CHECK(hi > 44.0);
    CHECK(flips > 4500);
    CHECK(flips < 5500);
}

TEST_CASE("config validation") {
    PerturbationConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_rotation = 50;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PerturbationConfig{};
    c.scale_min = 0.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("identity perturbation leaves an image unchanged") {
    auto img = torch::rand({3, 32, 32});
    CHECK(torch::equal(apply_to_image(Perturbation{}, img), img));
}

TEST_CASE("flipping twice restores the image") {
    auto img = torch::rand({3, 32, 32});
    Perturbation p;
    p.flip = true;
    auto once = apply_to_image(p, img);
    CHECK_FALSE(torch::equal(once, img));
    CHECK(torch::equal(apply_to_image(p, once), img));
}

TEST_CASE("full-image occluder yields the fill colour") {
    auto img = torch::rand({3, 16, 16});
    Perturbation p;
    p.occluder = PixelRect{0, 0, 16, 16};
    p.fill = {0.2f, 0.4f, 0.6f};
    auto out = apply_to_image(p, img);
    CHECK(out[0].eq(0.2f).all().item<bool>());
    CHECK(out[1].eq(0.4f).all().item<bool>());
    CHECK(out[2].eq(0.6f).all().item<bool>());
}

TEST_CASE("noisy output stays in the unit range and within the clip") {
    auto img = torch::rand({3, 32, 32});
    Perturbation p;
    p.noise_sigma = 0.5;
    p.noise_clip = 0.2;
    p.noise_seed = 3;
    auto out = apply_to_image(p, img);
    CHECK(out.min().item<float>() >= 0.0f);
    CHECK(out.max().item<float>() <= 1.0f);
    CHECK((out - img).abs().max().item<float>() <= 0.2f + 1e-6f);
    CHECK(torch::equal(out, apply_to_image(p, img)));
}

TEST_CASE("photometric parts never touch heatmaps") {
    auto h = torch::rand({10, 16, 16});
    Perturbation p;
    p.occluder = PixelRect{0, 0, 8, 8};
    p.noise_sigma = 0.1;
    CHECK(torch::equal(apply_geometric_to_heatmaps(p, h, kPairs), h));
}

TEST_CASE("flip moves a left peak onto its right partner") {
    std::vector<Keypoint> k(10, Keypoint{0, 0, false, true});
    k[2] = vis(10, 20);  // l_shoulder
    auto h = encode_heatmap(k, 64, 64, 2.0).values();
    Perturbation p;
    p.flip = true;
    auto d = decode_heatmap(HeatmapStack(apply_geometric_to_heatmaps(p, h, kPairs)));
    CHECK(d.keypoints[3].x == 63 - 10);
    CHECK(d.keypoints[3].y == 20);
    CHECK(d.confidences[3] == 1.0);
    CHECK(d.confidences[2] == 0.0);
}

TEST_CASE("non-involutive pairing is rejected") {
    auto h = torch::zeros({3, 8, 8});
    Perturbation p;
    p.flip = true;
    std::vector<int> bad{1, 2, 0};
    CHECK_THROWS_AS(apply_geometric_to_heatmaps(p, h, bad), std::invalid_argument);
    std::vector<int> short_pairs{0, 1};
    CHECK_THROWS_AS(apply_geometric_to_heatmaps(p, h, short_pairs), std::invalid_argument);
}

TEST_CASE("flip equivariance is exact") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> cell(0, 63);
    Perturbation p;
    p.flip = true;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Keypoint> k;
        for (int c = 0; c < 10; ++c) k.push_back(vis(cell(rng), cell(rng)));
        auto h = encode_heatmap(k, 64, 64, 2.0).values();
        auto d = decode_heatmap(HeatmapStack(apply_geometric_to_heatmaps(p, h, kPairs)));
        auto expect = transform_keypoints(p, k, 64, 64, kPairs);
        for (int c = 0; c < 10; ++c) CHECK(d.keypoints[c] == expect[c]);
    }
}

TEST_CASE("rotation equivariance within one pixel") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> angle(-45, 45);
    std::uniform_int_distribution<int> cell(16, 47);
    for (int trial = 0; trial < 100; ++trial) {
        Perturbation p;
        p.rotation = angle(rng);
        p.flip = trial % 2 == 0;
        std::vector<Keypoint> k;
        for (int c = 0; c < 10; ++c) k.push_back(vis(cell(rng), cell(rng)));
        auto h = encode_heatmap(k, 64, 64, 2.0).values();
        auto d = decode_heatmap(HeatmapStack(apply_geometric_to_heatmaps(p, h, kPairs)));
        auto expect = transform_keypoints(p, k, 64, 64, kPairs);
        for (int c = 0; c < 10; ++c) {
            REQUIRE(expect[c].visible);
            CHECK(std::abs(d.keypoints[c].x - expect[c].x) <= 1.0);
            CHECK(std::abs(d.keypoints[c].y - expect[c].y) <= 1.0);
        }
    }
}

TEST_CASE("image and keypoints move together") {
    // A bright dot on a dark image must land where transform_keypoints says.
    Perturbation p;
    p.rotation = 30;
    p.scale = 1.2;
    auto img = torch::zeros({3, 64, 64});
    std::vector<Keypoint> k{vis(40, 22)};
    std::vector<int> single{0};
    img.index_put_({torch::indexing::Slice(), 22, 40}, 1.0f);
    auto out = apply_to_image(p, img)[0];
    auto idx = out.argmax().item<int64_t>();
    auto expect = transform_keypoints(p, k, 64, 64, single)[0];
    CHECK(std::abs(static_cast<double>(idx % 64) - expect.x) <= 1.0);
    CHECK(std::abs(static_cast<double>(idx / 64) - expect.y) <= 1.0);
}

TEST_CASE("keypoints leaving the grid become invisible") {
    Perturbation p;
    p.scale = 1.4;
    std::vector<Keypoint> k{vis(1, 1), vis(32, 32)};
    std::vector<int> pairs{0, 1};
    auto out = transform_keypoints(p, k, 64, 64, pairs);
    CHECK_FALSE(out[0].visible);
    CHECK(out[0].x >= 0.0);
    CHECK(out[1].visible);
}

TEST_CASE("mixup with lambda one half averages the images") {
    auto a = torch::rand({3, 8, 8});
    auto b = torch::rand({3, 8, 8});
    auto ha = torch::rand({2, 4, 4});
    auto hb = torch::rand({2, 4, 4});
    auto m = mixup(a, ha, b, hb, 0.5);
    CHECK(torch::allclose(m.source_image, (a + b) / 2));
    CHECK(torch::allclose(m.target_image, (a + b) / 2));
    CHECK(m.source_weight == 0.5);
}

TEST_CASE("mixup keeps the larger share on the source side") {
    auto a = torch::ones({3, 4, 4});
    auto b = torch::zeros({3, 4, 4});
    auto h = torch::zeros({1, 2, 2});
    auto m = mixup(a, h, b, h, 0.3);
    CHECK(m.source_weight == doctest::Approx(0.7));
    CHECK(m.source_image.mean().item<double>() == doctest::Approx(0.7));
    CHECK(m.target_image.mean().item<double>() == doctest::Approx(0.3));
    auto m2 = mixup(a, h, b, h, 0.7);
    CHECK(torch::allclose(m.source_image, m2.source_image));
}

TEST_CASE("mixup properties over many draws") {
    std::mt19937_64 rng(21);
    auto a = torch::rand({3, 8, 8});
    auto b = torch::rand({3, 8, 8});
    auto ha = torch::rand({2, 4, 4});
    auto hb = torch::rand({2, 4, 4});
    auto lo = torch::minimum(a, b);
    auto hi = torch::maximum(a, b);
    for (int i = 0; i < 10000; ++i) {
        const double lambda = sample_mix_lambda(rng, 0.2);
        REQUIRE(lambda >= 0.0);
        REQUIRE(lambda <= 1.0);
        if (i % 50 != 0) {
            CHECK(std::max(lambda, 1 - lambda) >= 0.5);
            continue;
        }
        auto m = mixup(a, ha, b, hb, lambda);
        CHECK(m.source_weight >= 0.5);
        CHECK((m.source_image >= lo - 1e-6).all().item<bool>());
        CHECK((m.source_image <= hi + 1e-6).all().item<bool>());
        CHECK((m.target_image >= lo - 1e-6).all().item<bool>());
        CHECK((m.target_image <= hi + 1e-6).all().item<bool>());
        // the target mix is the mirror image of the source mix
        CHECK(torch::allclose(m.source_image + m.target_image, a + b, 1e-5, 1e-6));
        CHECK(torch::allclose(m.source_heatmaps + m.target_heatmaps, ha + hb, 1e-5, 1e-6));
    }
}

TEST_CASE("mixup rejects bad arguments") {
    std::mt19937_64 rng(1);
    auto a = torch::rand({3, 8, 8});
    auto h = torch::rand({2, 4, 4});
    CHECK_THROWS_AS(sample_mix_lambda(rng, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mixup(a, h, torch::rand({3, 4, 4}), h, 0.5), std::invalid_argument);
}

}
