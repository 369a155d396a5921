#include "kpda/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace kpda {

namespace {

enum Joint { kHead, kTail, kLShoulder, kRShoulder, kLFront, kRFront, kLHip, kRHip, kLHind, kRHind };

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

// Counter-clockwise on screen (y down).
Vec2 rotate(Vec2 v, double degrees) {
    const double t = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

using Rgb = std::array<float, 3>;

class Canvas {
public:
    explicit Canvas(int size) : size_(size), px_(3 * size * size, 0.0f) {}

    int size() const { return size_; }
    float& at(int c, int y, int x) { return px_[(c * size_ + y) * size_ + x]; }

    void blend(int y, int x, const Rgb& color, double alpha) {
        if (alpha <= 0.0) return;
        alpha = std::min(alpha, 1.0);
        for (int c = 0; c < 3; ++c) {
            float& v = at(c, y, x);
            v = static_cast<float>((1.0 - alpha) * v + alpha * color[c]);
        }
    }

    // Anti-aliased capsule of radius r around segment ab.
    void stroke(Vec2 a, Vec2 b, double r, const Rgb& color) {
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
        const int x1 = std::min(size_ - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
        const int y1 = std::min(size_ - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
        const Vec2 ab = b - a;
        const double len2 = ab.x * ab.x + ab.y * ab.y;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
                double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const Vec2 q = a + t * ab;
                const double d = std::hypot(p.x - q.x, p.y - q.y);
                blend(y, x, color, r + 0.5 - d);
            }
        }
    }

    void disc(Vec2 c, double r, const Rgb& color) { stroke(c, c, r, color); }

    void rect(int x0, int y0, int x1, int y1, const Rgb& color) {
        for (int y = std::max(0, y0); y < std::min(size_, y1); ++y) {
            for (int x = std::max(0, x0); x < std::min(size_, x1); ++x) blend(y, x, color, 1.0);
        }
    }

    torch::Tensor tensor() const {
        return torch::from_blob(const_cast<float*>(px_.data()), {3, size_, size_}, torch::kFloat32)
            .clone()
            .clamp(0.0, 1.0);
    }

private:
    int size_;
    std::vector<float> px_;
};

// Pose sampler shared by both styles.
std::array<Vec2, kToyJoints> sample_pose(std::mt19937_64& rng, int size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double s = size;
    for (;;) {
        std::array<Vec2, kToyJoints> j{};
        const Vec2 centre{s / 2 + u(-0.08, 0.08) * s, s / 2 + u(-0.06, 0.06) * s};
        const Vec2 dir = rotate({0.0, -1.0}, u(-35.0, 35.0));  // heading, "up" by default
        const Vec2 left = rotate(dir, 90.0);
        const double spine = u(0.26, 0.36) * s;
        const Vec2 shoulders = centre + (spine / 2) * dir;
        const Vec2 hips = centre - (spine / 2) * dir;
        j[kHead] = shoulders + u(0.10, 0.15) * s * rotate(dir, u(-25.0, 25.0));
        j[kTail] = hips - u(0.12, 0.20) * s * rotate(dir, u(-35.0, 35.0));
        const double shoulder_w = u(0.07, 0.10) * s;
        const double hip_w = u(0.06, 0.09) * s;
        j[kLShoulder] = shoulders + shoulder_w * left;
        j[kRShoulder] = shoulders - shoulder_w * left;
        j[kLHip] = hips + hip_w * left;
        j[kRHip] = hips - hip_w * left;
        // Legs swing within +-60 degrees of straight out sideways.
        j[kLFront] = j[kLShoulder] + u(0.12, 0.19) * s * rotate(left, u(-60.0, 60.0));
        j[kRFront] = j[kRShoulder] + u(0.12, 0.19) * s * rotate(-1.0 * left, u(-60.0, 60.0));
        j[kLHind] = j[kLHip] + u(0.12, 0.19) * s * rotate(left, u(-60.0, 60.0));
        j[kRHind] = j[kRHip] + u(0.12, 0.19) * s * rotate(-1.0 * left, u(-60.0, 60.0));
        const double margin = 2.0;
        const bool inside = std::all_of(j.begin(), j.end(), [&](const Vec2& p) {
            return p.x >= margin && p.x <= s - 1 - margin && p.y >= margin && p.y <= s - 1 - margin;
        });
        if (inside) return j;
    }
}

Rgb jitter(const Rgb& c, double amount, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-amount, amount);
    Rgb out{};
    for (int i = 0; i < 3; ++i) out[i] = static_cast<float>(std::clamp(c[i] + d(rng), 0.0, 1.0));
    return out;
}

void draw_creature(Canvas& cv, const std::array<Vec2, kToyJoints>& j, const Rgb& body,
                   const Rgb& legs, const Rgb& head, const Rgb& paws) {
    const double s = cv.size();
    const double limb = std::max(1.0, 0.022 * s);
    const Vec2 shoulders = 0.5 * (j[kLShoulder] + j[kRShoulder]);
    const Vec2 hips = 0.5 * (j[kLHip] + j[kRHip]);
    cv.stroke(hips, j[kTail], limb * 0.8, body);
    cv.stroke(j[kLShoulder], j[kLFront], limb, legs);
    cv.stroke(j[kRShoulder], j[kRFront], limb, legs);
    cv.stroke(j[kLHip], j[kLHind], limb, legs);
    cv.stroke(j[kRHip], j[kRHind], limb, legs);
    cv.stroke(j[kLShoulder], j[kRShoulder], limb * 1.2, body);
    cv.stroke(j[kLHip], j[kRHip], limb * 1.2, body);
    cv.stroke(shoulders, hips, limb * 1.8, body);
    cv.stroke(shoulders, j[kHead], limb * 1.1, body);
    cv.disc(j[kHead], limb * 2.2, head);
    for (int p : {kLFront, kRFront, kLHind, kRHind}) cv.disc(j[p], limb * 1.4, paws);
}

} // namespace

Skeleton toy_skeleton() {
    Skeleton s;
    s.joint_names = {"head", "tail", "l_shoulder", "r_shoulder", "l_front_paw",
                     "r_front_paw", "l_hip", "r_hip", "l_hind_paw", "r_hind_paw"};
    s.joint_groups = {"Head", "Tail", "Shoulder", "Shoulder", "FrontPaw",
                      "FrontPaw", "Hip", "Hip", "HindPaw", "HindPaw"};
    s.flip_partner = {0, 1, 3, 2, 5, 4, 7, 6, 9, 8};
    return s;
}

PoseSample generate_toy_sample(std::uint64_t seed, Domain style, const ToyConfig& cfg) {
    const int size = cfg.image_size;
    std::mt19937_64 pose_rng(seed * 0x9E3779B97F4A7C15ULL + 1);
    const auto joints = sample_pose(pose_rng, size);

    std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + (style == Domain::source ? 7 : 13));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    Canvas cv(size);
    const Rgb body{0.35f, 0.22f, 0.12f};
    const Rgb legs{0.20f, 0.20f, 0.25f};
    const Rgb head{0.80f, 0.15f, 0.10f};
    const Rgb paws{0.95f, 0.85f, 0.20f};

    if (style == Domain::source) {
        const float g = static_cast<float>(u(0.72, 0.9));
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                for (int c = 0; c < 3; ++c) cv.at(c, y, x) = g;
        draw_creature(cv, joints, body, legs, head, paws);
    } else {
        // Textured background: two coloured gratings over a random base colour.
        const double lo = 0.5 - cfg.background_spread;
        const double hi = 0.5 + cfg.background_spread;
        const Rgb base{static_cast<float>(u(lo, hi)), static_cast<float>(u(lo, hi)),
                       static_cast<float>(u(lo, hi))};
        struct Grating {
            double fx, fy, phase;
            Rgb tint;
        };
        std::array<Grating, 2> gratings{};
        for (auto& gr : gratings) {
            const double freq = u(0.1, 0.6);
            const double ang = u(0.0, std::numbers::pi);
            gr = {freq * std::cos(ang), freq * std::sin(ang), u(0.0, 2 * std::numbers::pi),
                  Rgb{static_cast<float>(u(-1, 1)), static_cast<float>(u(-1, 1)),
                      static_cast<float>(u(-1, 1))}};
        }
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double v = base[c];
                    for (const auto& gr : gratings) {
                        v += cfg.texture_strength * 0.5 * gr.tint[c] *
                             std::sin(gr.fx * x + gr.fy * y + gr.phase);
                    }
                    cv.at(c, y, x) = static_cast<float>(v);
                }
            }
        }
        // Distractor strokes in creature-like colours.
        const double limb = std::max(1.0, 0.022 * size);
        for (int i = 0; i < cfg.clutter_strokes; ++i) {
            const Vec2 a{u(0, size - 1), u(0, size - 1)};
            const Vec2 b = a + u(0.08, 0.2) * size * rotate({1.0, 0.0}, u(0.0, 360.0));
            cv.stroke(a, b, limb * u(0.7, 1.3), jitter(i % 2 == 0 ? legs : body, 0.15, rng));
            if (unit(rng) < 0.5) cv.disc(b, limb * 1.4, jitter(paws, 0.2, rng));
        }
        draw_creature(cv, joints, jitter(body, cfg.color_jitter, rng), jitter(legs, cfg.color_jitter, rng),
                      jitter(head, cfg.color_jitter, rng), jitter(paws, cfg.color_jitter, rng));

        const int n_occ = static_cast<int>(u(0.0, cfg.max_occluders + 1 - 1e-9));
        for (int i = 0; i < n_occ; ++i) {
            const int w = std::max(2, static_cast<int>(u(0.1, cfg.occluder_size) * size));
            const int h = std::max(2, static_cast<int>(u(0.1, cfg.occluder_size) * size));
            const int x0 = static_cast<int>(u(0, size - w));
            const int y0 = static_cast<int>(u(0, size - h));
            cv.rect(x0, y0, x0 + w, y0 + h,
                    Rgb{static_cast<float>(u(0.1, 0.9)), static_cast<float>(u(0.1, 0.9)),
                        static_cast<float>(u(0.1, 0.9))});
        }
    }

    PoseSample sample;
    sample.id = std::string(style == Domain::source ? "src_" : "tgt_") + std::to_string(seed);
    sample.domain = style;
    auto image = cv.tensor();
    if (style == Domain::target) {
        // Global contrast/brightness change and occasional blur.
        const double contrast = u(0.6, 1.2);
        const double bright = u(-0.15, 0.15);
        image = ((image - 0.5) * contrast + 0.5 + bright).clamp(0.0, 1.0);
        if (unit(rng) < cfg.blur_prob) {
            auto k = torch::tensor({0.25f, 0.5f, 0.25f});
            auto kernel = torch::outer(k, k).view({1, 1, 3, 3}).repeat({3, 1, 1, 1});
            namespace F = torch::nn::functional;
            image = F::conv2d(F::pad(image.unsqueeze(0), F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate)),
                              kernel, F::Conv2dFuncOptions().groups(3))
                        .squeeze(0);
        }
    }
    sample.image = image.contiguous();

    double x0 = size, y0 = size, x1 = 0, y1 = 0;
    std::vector<Keypoint> kps;
    for (int k = 0; k < kToyJoints; ++k) {
        const auto& p = joints[k];
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
        kps.push_back({to_output_coord(p.x, size, cfg.output_size),
                       to_output_coord(p.y, size, cfg.output_size), true, true});
    }
    const double pad = 0.05 * size;
    sample.bbox = {std::max(0.0, std::floor(x0 - pad)), std::max(0.0, std::floor(y0 - pad)),
                   std::min<double>(size, std::ceil(x1 + pad)), std::min<double>(size, std::ceil(y1 + pad))};
    sample.set_keypoints(std::move(kps));
    return sample;
}

} // namespace kpda
