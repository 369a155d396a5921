#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpda/model.hpp"
#include "kpda/pck.hpp"
#include "kpda/trainer.hpp"
#include "kpda/types.hpp"

namespace kpda {

enum class EvalMode { visible, full };
std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct EvalOptions {
    double alpha = 0.05;
    EvalMode mode = EvalMode::visible;
    Head head = Head::refined;
    // remap[j] is the model joint scored against dataset joint j. Required when the
    // dataset and the model disagree on K.
    std::vector<int> remap;
    int batch_size = 32;
};

struct EvalReport {
    std::string dataset;
    EvalMode mode = EvalMode::visible;
    Head head = Head::refined;
    long samples = 0;
    std::vector<std::string> joint_names;
    PckReport pck;

    double alpha() const { return pck.alpha; }
    std::optional<double> mean() const { return pck.mean; }
};

/// Student forward (no augmentation, eval mode) on every sample, PCK grouped by the
/// dataset skeleton. The bbox sets the reference length. Throws UsageError on a joint
/// count mismatch without a remap.
EvalReport evaluate(StudentNet& student, std::span<const PoseSample> samples, const Skeleton& skeleton,
                    const EvalOptions& options, const std::string& dataset = "");

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
/// Groups as columns, accuracies in percent.
std::string report_table(std::span<const EvalReport> rows);

struct Comparison {
    std::vector<std::pair<std::string, std::optional<double>>> group_delta;  // a - b
    std::optional<double> mean_delta;
};

/// Throws UsageError unless both reports share dataset, alpha, mode and groups.
Comparison compare_runs(const EvalReport& a, const EvalReport& b);
nlohmann::json comparison_to_json(const Comparison& c);

/// Parses "[2, 0, 1]" or "2,0,1".
std::vector<int> parse_remap(const std::string& text);

} // namespace kpda
