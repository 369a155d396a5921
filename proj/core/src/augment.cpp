#include "kpda/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kpda {

namespace {

// Forward map on normalised coordinates ([-1, 1], align_corners=false) after the
// optional flip: u' = scale * R(theta) u, with R a counter-clockwise on-screen rotation
// (y grows downwards).
struct Affine {
    double a00, a01, a10, a11;
};

Affine forward_affine(const Perturbation& p) {
    const double t = p.rotation * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    return {p.scale * c, p.scale * s, -p.scale * s, p.scale * c};
}

torch::Tensor warp(const torch::Tensor& batch, const Perturbation& p) {
    if (p.rotation == 0.0 && p.scale == 1.0) return batch;
    const Affine f = forward_affine(p);
    // affine_grid wants the inverse map: output location -> sampling location.
    const double det = f.a00 * f.a11 - f.a01 * f.a10;
    const double i00 = f.a11 / det, i01 = -f.a01 / det, i10 = -f.a10 / det, i11 = f.a00 / det;
    auto theta = torch::tensor({i00, i01, 0.0, i10, i11, 0.0}, torch::kFloat32)
                     .view({1, 2, 3})
                     .expand({batch.size(0), 2, 3})
                     .to(batch.dtype());
    namespace F = torch::nn::functional;
    auto grid = F::affine_grid(theta, batch.sizes(), /*align_corners=*/false);
    return F::grid_sample(batch, grid,
                          F::GridSampleFuncOptions()
                              .mode(torch::kBilinear)
                              .padding_mode(torch::kZeros)
                              .align_corners(false));
}

torch::Tensor as_batch(const torch::Tensor& t, int expected_dim, bool& squeezed) {
    squeezed = t.dim() == expected_dim - 1;
    if (!squeezed && t.dim() != expected_dim) {
        throw std::invalid_argument("expected a " + std::to_string(expected_dim - 1) + "-d or " +
                                    std::to_string(expected_dim) + "-d tensor");
    }
    return squeezed ? t.unsqueeze(0) : t;
}

} // namespace

PerturbationConfig PerturbationConfig::identity() {
    PerturbationConfig c;
    c.max_rotation = 0.0;
    c.scale_min = c.scale_max = 1.0;
    c.flip_prob = 0.0;
    c.occlusion_prob = 0.0;
    c.noise_sigma_max = 0.0;
    return c;
}

void PerturbationConfig::validate() const {
    if (max_rotation < 0.0 || max_rotation > 45.0) {
        throw std::invalid_argument("perturbation: max_rotation must lie in [0, 45]");
    }
    if (scale_min > scale_max || scale_min < 0.6 || scale_max > 1.4) {
        throw std::invalid_argument("perturbation: scale range must lie in [0.6, 1.4]");
    }
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!prob(flip_prob) || !prob(occlusion_prob)) {
        throw std::invalid_argument("perturbation: probabilities must lie in [0, 1]");
    }
    if (occluder_min <= 0.0 || occluder_min > occluder_max || occluder_max > 1.0) {
        throw std::invalid_argument("perturbation: occluder size range must lie in (0, 1]");
    }
    if (noise_sigma_max < 0.0 || noise_clip < 0.0) {
        throw std::invalid_argument("perturbation: noise parameters must be non-negative");
    }
}

Perturbation Perturbation::geometric_part() const {
    Perturbation g;
    g.rotation = rotation;
    g.scale = scale;
    g.flip = flip;
    return g;
}

Perturbation sample_perturbation(std::mt19937_64& rng, const PerturbationConfig& cfg,
                                 int image_size) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    Perturbation p;
    // Every field consumes the same number of draws regardless of the ranges, so two
    // configs that differ only in ranges stay in lock-step.
    p.rotation = uniform(-cfg.max_rotation, cfg.max_rotation);
    p.scale = uniform(cfg.scale_min, cfg.scale_max);
    p.flip = unit(rng) < cfg.flip_prob;
    const bool occlude = unit(rng) < cfg.occlusion_prob;
    const double ow = uniform(cfg.occluder_min, cfg.occluder_max);
    const double oh = uniform(cfg.occluder_min, cfg.occluder_max);
    const double ox = unit(rng);
    const double oy = unit(rng);
    if (occlude) {
        const int w = std::max(1, static_cast<int>(std::lround(ow * image_size)));
        const int h = std::max(1, static_cast<int>(std::lround(oh * image_size)));
        const int x0 = static_cast<int>(ox * (image_size - w + 1));
        const int y0 = static_cast<int>(oy * (image_size - h + 1));
        p.occluder = PixelRect{x0, y0, std::min(x0 + w, image_size), std::min(y0 + h, image_size)};
    }
    p.fill = cfg.fill;
    p.noise_sigma = uniform(0.0, cfg.noise_sigma_max);
    p.noise_clip = cfg.noise_clip;
    p.noise_seed = rng();
    return p;
}

torch::Tensor apply_to_image(const Perturbation& p, const torch::Tensor& image) {
    bool squeezed = false;
    auto batch = as_batch(image, 4, squeezed);
    if (p.is_identity()) return image.clone();

    auto out = batch;
    if (p.flip) out = out.flip({3});
    out = warp(out, p);
    if (p.occluder) {
        const auto& r = *p.occluder;
        auto fill = torch::tensor({p.fill[0], p.fill[1], p.fill[2]}, out.options()).view({1, 3, 1, 1});
        out = out.clone();
        out.index_put_({torch::indexing::Slice(), torch::indexing::Slice(),
                        torch::indexing::Slice(r.y0, r.y1), torch::indexing::Slice(r.x0, r.x1)},
                       fill.expand({out.size(0), 3, r.y1 - r.y0, r.x1 - r.x0}));
    }
    if (p.noise_sigma > 0.0) {
        auto gen = at::detail::createCPUGenerator(p.noise_seed);
        auto noise = at::normal(0.0, p.noise_sigma, out.sizes(), gen, out.options().device(torch::kCPU))
                         .clamp(-p.noise_clip, p.noise_clip);
        out = out + noise.to(out.device());
    }
    out = out.clamp(0.0, 1.0);
    return squeezed ? out.squeeze(0) : out;
}

torch::Tensor apply_geometric_to_heatmaps(const Perturbation& p, const torch::Tensor& heatmaps,
                                          std::span<const int> flip_partner) {
    bool squeezed = false;
    auto batch = as_batch(heatmaps, 4, squeezed);
    if (static_cast<int64_t>(flip_partner.size()) != batch.size(1)) {
        throw std::invalid_argument("apply_geometric_to_heatmaps: flip pairing must cover every channel");
    }
    validate_flip_partner(flip_partner);
    if (p.geometric_identity()) return heatmaps.clone();

    auto out = batch;
    if (p.flip) {
        // Channel c of the flipped stack is the mirrored channel of c's partner.
        std::vector<int64_t> order(flip_partner.begin(), flip_partner.end());
        out = out.index_select(1, torch::tensor(order, torch::kLong).to(out.device())).flip({3});
    }
    out = warp(out, p);
    return squeezed ? out.squeeze(0) : out;
}

std::vector<Keypoint> transform_keypoints(const Perturbation& p, std::span<const Keypoint> kps,
                                          int width, int height, std::span<const int> flip_partner) {
    if (flip_partner.size() != kps.size()) {
        throw std::invalid_argument("transform_keypoints: flip pairing must cover every joint");
    }
    validate_flip_partner(flip_partner);
    std::vector<Keypoint> out(kps.begin(), kps.end());
    if (p.flip) {
        for (std::size_t c = 0; c < kps.size(); ++c) {
            Keypoint k = kps[flip_partner[c]];
            k.x = width - 1 - k.x;
            out[c] = k;
        }
    }
    if (p.rotation != 0.0 || p.scale != 1.0) {
        const Affine f = forward_affine(p);
        for (auto& k : out) {
            const double u = (2.0 * k.x + 1.0) / width - 1.0;
            const double v = (2.0 * k.y + 1.0) / height - 1.0;
            const double u2 = f.a00 * u + f.a01 * v;
            const double v2 = f.a10 * u + f.a11 * v;
            k.x = ((u2 + 1.0) * width - 1.0) / 2.0;
            k.y = ((v2 + 1.0) * height - 1.0) / 2.0;
        }
    }
    for (auto& k : out) {
        if (k.x < 0.0 || k.x > width - 1 || k.y < 0.0 || k.y > height - 1) {
            k.visible = false;
            k.labeled = false;
            k.x = std::clamp(k.x, 0.0, static_cast<double>(width - 1));
            k.y = std::clamp(k.y, 0.0, static_cast<double>(height - 1));
        }
    }
    return out;
}

double sample_mix_lambda(std::mt19937_64& rng, double mix_alpha) {
    if (!(mix_alpha > 0.0)) throw std::invalid_argument("mixup: Beta parameter must be positive");
    std::gamma_distribution<double> gamma(mix_alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    if (a + b == 0.0) return 0.5;
    return a / (a + b);
}

MixedPair mixup(const torch::Tensor& src_image, const torch::Tensor& src_heatmaps,
                const torch::Tensor& tgt_image, const torch::Tensor& tgt_heatmaps, double lambda) {
    if (src_image.sizes() != tgt_image.sizes() || src_heatmaps.sizes() != tgt_heatmaps.sizes()) {
        throw std::invalid_argument("mixup: source and target shapes differ");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup: lambda outside [0, 1]");
    const double hi = std::max(lambda, 1.0 - lambda);
    const double lo = 1.0 - hi;
    MixedPair m;
    m.source_weight = hi;
    m.source_image = hi * src_image + (1.0 - hi) * tgt_image;
    m.source_heatmaps = hi * src_heatmaps + (1.0 - hi) * tgt_heatmaps;
    m.target_image = lo * src_image + (1.0 - lo) * tgt_image;
    m.target_heatmaps = lo * src_heatmaps + (1.0 - lo) * tgt_heatmaps;
    return m;
}

MixedPair mixup(const torch::Tensor& src_image, const torch::Tensor& src_heatmaps,
                const torch::Tensor& tgt_image, const torch::Tensor& tgt_heatmaps,
                std::mt19937_64& rng, double mix_alpha) {
    return mixup(src_image, src_heatmaps, tgt_image, tgt_heatmaps, sample_mix_lambda(rng, mix_alpha));
}

} // namespace kpda
