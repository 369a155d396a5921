#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kpda/types.hpp"

namespace kpda {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// On-disk layout: `root/images/*.png`, `root/annotations.json` (flat list of
/// `{"id", "image", "bbox": [x0,y0,x1,y1], "keypoints": [[x,y,v], ...]}` in original
/// image pixels), and optionally `root/skeleton.json` with joint names, groups and
/// flip pairs.
struct DatasetSpec {
    std::filesystem::path root;
    Split split = Split::train;
    Domain domain = Domain::source;
    int joint_count = 0;        // K; 0 accepts whatever the skeleton declares
    int input_size = 256;       // images are resized to input_size x input_size
    int output_size = 64;       // keypoints are converted to this heatmap grid
    bool shuffle = true;
    std::uint64_t shuffle_seed = 0;
};

/// Loads the skeleton from `root/skeleton.json`, or a plain one for `joint_count`.
Skeleton load_skeleton(const std::filesystem::path& root, int joint_count);

/// Loads every record. Annotated joints outside their bounding box are clamped into it
/// and flagged invisible and unlabeled. Throws DataError naming the sample id for a
/// missing image and the line number for a malformed keypoint row.
std::vector<PoseSample> load_dataset(const DatasetSpec& spec);

/// Writes samples (images must be input_size square) in the layout above.
/// Output is byte-identical for identical inputs.
void write_dataset(const std::filesystem::path& root, std::span<const PoseSample> samples,
                   const Skeleton& skeleton, int output_size);

void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton);

} // namespace kpda
