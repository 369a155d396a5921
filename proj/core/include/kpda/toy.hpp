#pragma once

#include <cstdint>

#include "kpda/types.hpp"

namespace kpda {

/// Procedural stick-creature seen from above: a spine with head and tail and four
/// legs. Both styles share one pose sampler, so for equal seeds they differ only
/// in appearance.
///
/// Joints (K = 10): head, tail, l/r shoulder, l/r front paw, l/r hip, l/r hind paw.
/// "Left" is the creature's left, which is image-left for an upright creature.
/// Target occluders change appearance only; annotations stay visible so keypoints
/// match across styles exactly.
struct ToyConfig {
    int image_size = 64;
    int output_size = 64;

    // Target-style appearance knobs.
    double background_spread = 0.3;  // base colour channels drawn from 0.5 +- this
    double texture_strength = 0.35;  // amplitude of background gratings
    int clutter_strokes = 6;         // limb-like distractor strokes on the background
    double color_jitter = 0.25;      // per-sample colour shift of the creature
    int max_occluders = 2;
    double occluder_size = 0.22;     // max occluder side, fraction of image
    double blur_prob = 0.3;
};

inline constexpr int kToyJoints = 10;

Skeleton toy_skeleton();

/// Deterministic in (seed, style). Keypoints are in output-heatmap coordinates.
PoseSample generate_toy_sample(std::uint64_t seed, Domain style, const ToyConfig& cfg = {});

} // namespace kpda
