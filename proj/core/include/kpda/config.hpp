#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpda/augment.hpp"
#include "kpda/model.hpp"
#include "kpda/schedules.hpp"
#include "kpda/toy.hpp"

namespace kpda {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string description;
};

/// Every recognised key with its default. Keys are "section.name".
const std::vector<ConfigKey>& config_registry();

/// Resolved key/value configuration. Unknown keys are rejected with a UsageError that
/// lists the valid ones.
class Config {
public:
    Config();

    void set(const std::string& key, const std::string& value);
    /// "key=value"
    void set_assignment(const std::string& assignment);
    /// Reads a text file of `key = value` lines (`#` comments, optional `[section]`
    /// headers prefixing the keys that follow) or a run manifest (.json).
    void merge_file(const std::filesystem::path& path);

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    long get_long(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string to_text() const;
    nlohmann::json to_json() const;
    /// FNV-1a over the canonical text, excluding keys that only steer bookkeeping.
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

ModelConfig model_config(const Config& cfg);
ScheduleConfig schedule_config(const Config& cfg);
PerturbationConfig perturbation_config(const Config& cfg);
ToyConfig toy_config(const Config& cfg);

} // namespace kpda
