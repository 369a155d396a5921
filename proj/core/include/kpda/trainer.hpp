#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpda/augment.hpp"
#include "kpda/checkpoint.hpp"
#include "kpda/config.hpp"
#include "kpda/losses.hpp"
#include "kpda/model.hpp"
#include "kpda/pseudo_store.hpp"
#include "kpda/schedules.hpp"
#include "kpda/types.hpp"

namespace kpda {

enum class Head { mdam, refined };
std::string to_string(Head h);
Head head_from_string(const std::string& s);

struct TrainConfig {
    ModelConfig model;
    ScheduleConfig schedule;
    PerturbationConfig augment;
    double sigma = 2.0;
    int batch_size = 16;
    int epochs_stage1 = 100;
    int epochs_stage2 = 80;
    int iters_per_epoch = 0;    // 0: ceil(target size / batch size)
    int stop_after_epoch = -1;  // >= 0: return after this many epochs, as if interrupted
    std::uint64_t seed = 0;
    double confidence_threshold = 0.5;
    bool mixup = true;
    double mixup_alpha = 0.2;
    double ema_alpha = 0.999;
    double stage1_lr = 0.00025;
    bool source_supervises_refined = true;
    bool augment_source = true;
    Head pseudo_head = Head::refined;
    std::filesystem::path checkpoint;  // empty: no checkpoints written
    std::filesystem::path metrics;     // empty: no metrics stream
    std::string run_hash;

    static TrainConfig from(const Config& cfg);
    void validate() const;
};

/// One logged optimiser step.
struct StepRecord {
    long iter = 0;
    int epoch = 0;
    LossBreakdown losses;
    ScheduleState schedule;
};

struct PretrainResult {
    StudentNet student{nullptr};
    std::vector<double> epoch_loss;  // mean L_S per epoch
    long steps = 0;
};

/// Called after every pretraining epoch with (epochs done, steps so far, student).
/// Returning false ends pretraining early.
using EpochHook = std::function<bool(int, long, StudentNet&)>;

/// Stage 1: L_S on the source set with step learning-rate decay. Both heads are
/// supervised. `init` (optional) supplies the starting weights. Throws NumericalError on
/// a non-finite loss; the last completed epoch's checkpoint stays on disk.
PretrainResult pretrain(const TrainConfig& cfg, std::span<const PoseSample> source,
                        const Skeleton& skeleton, StudentNet init = nullptr, const EpochHook& on_epoch = {});

/// Decodes every target image with the given head. Joints whose confidence is below
/// `threshold` are stored invisible. Never reads target annotations.
std::vector<PseudoLabel> generate_pseudo_labels(StudentNet& student, std::span<const PoseSample> target,
                                                double threshold, Head head = Head::refined,
                                                int batch_size = 32);

/// Everything one adaptation step consumes, already augmented. Target tensors are the
/// perturbed view; `teacher_targets` is the teacher output on the clean view moved by
/// the same geometric transform. `mix_*` are set only when MixUp is on.
struct AdaptBatch {
    torch::Tensor src_images;
    torch::Tensor src_heatmaps;
    torch::Tensor tgt_images;
    torch::Tensor tgt_pseudo;
    torch::Tensor available;  // bool [B, K]: joint carries a pseudo label
    torch::Tensor teacher_targets;
    torch::Tensor mix_images;
    torch::Tensor mix_targets;
};

struct AdaptLosses {
    torch::Tensor objective;  // what gets backpropagated
    LossBreakdown breakdown;  // scalar values, total per the weighted sum
};

/// One forward of the student on the concatenated batch and every loss term.
AdaptLosses adaptation_losses(StudentNet& student, const AdaptBatch& batch, const ScheduleState& state,
                              const TrainConfig& cfg);

struct AdaptResult {
    StudentNet student{nullptr};
    std::optional<Teacher> teacher;
    std::vector<StepRecord> steps;            // steps run by this call only
    std::vector<ScheduleState> epoch_states;  // state at the start of each epoch run
    int epochs_completed = 0;
    bool interrupted = false;
};

/// Stage 2. Starts from `pretrained` unless `resume` names an adaptation checkpoint, in
/// which case student, teacher, optimiser and schedule position are restored from it.
/// Target samples must have a pseudo label with the same id. Target annotations are
/// never read; the whole call runs under a SupervisionGuard.
AdaptResult train(const TrainConfig& cfg, std::span<const PoseSample> source,
                  std::span<const PoseSample> target, std::span<const PseudoLabel> pseudo,
                  const Skeleton& skeleton, StudentNet pretrained,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Per-sample forward in eval mode, returning [B, K, h, w] heatmaps of the chosen head.
torch::Tensor predict(StudentNet& student, std::span<const PoseSample> samples, Head head,
                      int batch_size = 32);

/// Independent copy of every parameter and buffer.
StudentNet clone_student(const StudentNet& src);

/// Stacks sample images into [B, 3, H, W].
torch::Tensor stack_images(std::span<const PoseSample> samples);

} // namespace kpda
