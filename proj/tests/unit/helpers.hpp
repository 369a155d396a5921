#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "kpda/model.hpp"
#include "kpda/trainer.hpp"

namespace kpda::testing {

// Smallest network that still satisfies the classifier's size constraints.
inline ModelConfig tiny_model(int joints = 10) {
    ModelConfig m;
    m.joints = joints;
    m.input_size = 64;
    m.encoder_widths = {8, 8, 16};
    m.stem_stride = 1;
    m.decoder_width = 8;
    m.refine_width = 4;
    m.dc_channels = {8, 8, 8, 8, 8, 1};
    return m;
}

inline TrainConfig tiny_train(int joints = 10) {
    TrainConfig t;
    t.model = tiny_model(joints);
    t.schedule.joints = joints;
    t.schedule.alpha_min = joints / 2;
    t.schedule.base_lr = 1e-3;
    t.stage1_lr = 1e-3;
    t.batch_size = 4;
    t.epochs_stage1 = 1;
    t.epochs_stage2 = 1;
    return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("kpda_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace kpda::testing
