#pragma once

#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "kpda/model.hpp"
#include "kpda/schedules.hpp"

namespace kpda {

struct CheckpointMeta {
    std::string stage;       // "init", "pretrain" or "adapt"
    std::string model_hash;  // ModelConfig::fingerprint()
    std::string run_hash;    // hash of the resolved run configuration
    int epochs_completed = 0;
    long iter = 0;
    ScheduleState schedule;
};

/// Single archive with student, teacher, optimiser state and metadata. Written to a
/// temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, StudentNet& student,
                     Teacher& teacher, torch::optim::Optimizer* optimizer = nullptr);

/// Metadata only. Throws DataError on a missing or unreadable archive.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Restores parameters (and optimiser state when given and present). Throws DataError
/// when the stored model hash differs from the student's configuration.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, StudentNet& student, Teacher* teacher,
                               torch::optim::Optimizer* optimizer = nullptr);

} // namespace kpda
