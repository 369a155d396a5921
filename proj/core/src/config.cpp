#include "kpda/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "kpda/errors.hpp"

namespace kpda {

namespace fs = std::filesystem;

const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"data.source_train", "", "labelled source training set root"},
        {"data.source_test", "", "labelled source test set root"},
        {"data.target_train", "", "unlabelled target training set root"},
        {"data.target_test", "", "target evaluation set root"},

        {"model.joints", "18", "joint count K"},
        {"model.input_size", "256", "square input resolution"},
        {"model.backbone", "small", "feature extractor: small | resnet50"},
        {"model.encoder_widths", "24,48,96,160", "small backbone stage widths"},
        {"model.stem_stride", "2", "small backbone stem stride (1 or 2)"},
        {"model.decoder_width", "256", "pose-head conv/deconv width"},
        {"model.refine_width", "64", "refinement bottleneck inner width"},
        {"model.dc_channels", "64,128,256,512,1024,1", "domain classifier widths"},
        {"model.dc_input", "multiscale", "domain classifier input: multiscale | features"},
        {"model.leaky_slope", "0.2", "domain classifier leaky ReLU slope"},
        {"model.sigma", "2.0", "Gaussian target sigma (heatmap pixels)"},

        {"ema.alpha", "0.999", "teacher smoothing coefficient"},

        {"schedule.ramp_epochs", "10", "epochs for lambda_sd/lambda_mt ramp-up"},
        {"schedule.ramp_max", "90", "max lambda_sd = lambda_mt"},
        {"schedule.decay_start", "15", "initial lambda_T = lambda_R"},
        {"schedule.decay_end", "8", "final lambda_T = lambda_R"},
        {"schedule.decay_epochs", "15", "epochs for lambda_T/lambda_R decay"},
        {"schedule.alpha_min", "9", "minimum cut-off index"},
        {"schedule.lambda_adv", "0.0005", "adversarial weight"},

        {"optim.lr", "0.00025", "base learning rate"},
        {"optim.poly_power", "0.9", "polynomial decay power (adaptation stage)"},
        {"optim.stage1_milestones", "60,90", "pretraining step-decay epochs"},
        {"optim.stage1_gamma", "0.1", "pretraining step-decay factor"},
        {"optim.stage1_lr", "0.00025", "pretraining base learning rate"},

        {"train.batch_size", "16", "samples per domain per step"},
        {"train.epochs_stage1", "100", "pretraining epochs"},
        {"train.epochs_stage2", "80", "adaptation epochs"},
        {"train.iters_per_epoch", "0", "adaptation steps per epoch (0: one pass over target)"},
        {"train.stop_after_epoch", "-1", "stop (as if interrupted) after this epoch; -1 runs to the end"},
        {"train.seed", "0", "global seed"},
        {"train.confidence_threshold", "0.5", "pseudo-label confidence filter"},
        {"train.mixup", "true", "MixUp between source and pseudo-labelled target"},
        {"train.mixup_alpha", "0.2", "Beta(alpha, alpha) parameter"},
        {"train.inner_loop", "true", "self-distillation + small-loss selection on the pose head"},
        {"train.outer_loop", "true", "mean teacher + small-loss selection on the refinement block"},
        {"train.adversarial", "true", "multi-scale domain classifier with gradient reversal"},
        {"train.source_supervises_refined", "true", "also supervise the refinement block on source"},
        {"train.pseudo_head", "refined", "head used to generate pseudo labels: mdam | refined"},
        {"train.augment_source", "true", "augment source images during training"},
        {"train.checkpoint", "", "output checkpoint path (default: <output root>/<command>.ckpt)"},
        {"train.metrics", "", "metrics JSON-lines path (default: next to the checkpoint)"},

        {"augment.max_rotation", "45", "rotation range +- degrees"},
        {"augment.scale_min", "0.6", "scale range lower bound"},
        {"augment.scale_max", "1.4", "scale range upper bound"},
        {"augment.flip_prob", "0.5", "horizontal flip probability"},
        {"augment.occlusion_prob", "0.5", "random occluder probability"},
        {"augment.occluder_min", "0.1", "occluder side, min fraction of image"},
        {"augment.occluder_max", "0.4", "occluder side, max fraction of image"},
        {"augment.noise_sigma_max", "0.1", "max Gaussian noise std"},
        {"augment.noise_clip", "0.2", "per-pixel noise clipped to +-this"},

        {"eval.alpha", "0.05", "PCK threshold fraction"},
        {"eval.head", "refined", "evaluated head: mdam | refined"},
        {"eval.mode", "visible", "visible | full"},
        {"eval.remap", "", "JSON list mapping dataset joint -> model joint"},

        {"toy.image_size", "64", "toy image resolution"},
        {"toy.background_spread", "0.3", "target background colour spread around 0.5"},
        {"toy.texture_strength", "0.35", "target background texture amplitude"},
        {"toy.clutter_strokes", "6", "target distractor strokes"},
        {"toy.color_jitter", "0.25", "target creature colour jitter"},
        {"toy.max_occluders", "2", "target occluders per image"},
        {"toy.occluder_size", "0.22", "target occluder max side fraction"},
        {"toy.blur_prob", "0.3", "target blur probability"},
    };
    return keys;
}

namespace {

const ConfigKey* find_key(const std::string& name) {
    const auto& reg = config_registry();
    auto it = std::find_if(reg.begin(), reg.end(), [&](const ConfigKey& k) { return k.name == name; });
    return it == reg.end() ? nullptr : &*it;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw UsageError("config key '" + key + "': value '" + value + "' is not " + expected);
}

// Keys that name output locations or interruption points; they never change results.
bool bookkeeping_key(const std::string& key) {
    return key == "train.checkpoint" || key == "train.metrics" || key == "train.stop_after_epoch" ||
           key.rfind("data.", 0) == 0;
}

} // namespace

Config::Config() {
    for (const auto& k : config_registry()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
    if (find_key(key) == nullptr) {
        std::string msg = "unknown config key '" + key + "'. Valid keys:";
        for (const auto& k : config_registry()) msg += "\n  " + k.name;
        throw UsageError(msg);
    }
    values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ": " + e.what());
        }
        const auto& cfg = j.contains("config") ? j.at("config") : j;
        for (const auto& [k, v] : cfg.items()) set(k, v.is_string() ? v.get<std::string>() : v.dump());
        return;
    }
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        set(key, trim(line.substr(eq + 1)));
    }
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
}

int Config::get_int(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) bad_value(key, v, "an integer");
        return out;
    } catch (const std::logic_error&) {
        bad_value(key, v, "an integer");
    }
}

long Config::get_long(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t pos = 0;
        const long out = std::stol(v, &pos);
        if (pos != v.size()) bad_value(key, v, "an integer");
        return out;
    } catch (const std::logic_error&) {
        bad_value(key, v, "an integer");
    }
}

double Config::get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) bad_value(key, v, "a number");
        return out;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a number");
    }
}

bool Config::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    bad_value(key, v, "a boolean");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (double d : get_double_list(key)) {
        if (d != static_cast<int>(d)) bad_value(key, get(key), "a list of integers");
        out.push_back(static_cast<int>(d));
    }
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) bad_value(key, get(key), "a comma-separated list of numbers");
        } catch (const std::logic_error&) {
            bad_value(key, get(key), "a comma-separated list of numbers");
        }
    }
    return out;
}

std::string Config::to_text() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string Config::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [k, v] : values_) {
        if (bookkeeping_key(k)) continue;
        for (unsigned char ch : k + "=" + v + "\n") {
            h ^= ch;
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

ModelConfig model_config(const Config& cfg) {
    ModelConfig m;
    m.joints = cfg.get_int("model.joints");
    m.input_size = cfg.get_int("model.input_size");
    m.backbone = backbone_from_string(cfg.get("model.backbone"));
    m.encoder_widths = cfg.get_int_list("model.encoder_widths");
    m.stem_stride = cfg.get_int("model.stem_stride");
    m.decoder_width = cfg.get_int("model.decoder_width");
    m.refine_width = cfg.get_int("model.refine_width");
    m.dc_channels = cfg.get_int_list("model.dc_channels");
    m.dc_input = dc_input_from_string(cfg.get("model.dc_input"));
    m.leaky_slope = cfg.get_double("model.leaky_slope");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return m;
}

ScheduleConfig schedule_config(const Config& cfg) {
    ScheduleConfig s;
    s.ramp_epochs = cfg.get_double("schedule.ramp_epochs");
    s.ramp_max = cfg.get_double("schedule.ramp_max");
    s.decay_start = cfg.get_double("schedule.decay_start");
    s.decay_end = cfg.get_double("schedule.decay_end");
    s.decay_epochs = cfg.get_double("schedule.decay_epochs");
    s.joints = cfg.get_int("model.joints");
    s.alpha_min = cfg.get_int("schedule.alpha_min");
    s.lambda_adv = cfg.get_double("schedule.lambda_adv");
    s.base_lr = cfg.get_double("optim.lr");
    s.poly_power = cfg.get_double("optim.poly_power");
    s.step_milestones = cfg.get_int_list("optim.stage1_milestones");
    s.step_gamma = cfg.get_double("optim.stage1_gamma");
    s.inner_loop = cfg.get_bool("train.inner_loop");
    s.outer_loop = cfg.get_bool("train.outer_loop");
    s.adversarial = cfg.get_bool("train.adversarial");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return s;
}

PerturbationConfig perturbation_config(const Config& cfg) {
    PerturbationConfig p;
    p.max_rotation = cfg.get_double("augment.max_rotation");
    p.scale_min = cfg.get_double("augment.scale_min");
    p.scale_max = cfg.get_double("augment.scale_max");
    p.flip_prob = cfg.get_double("augment.flip_prob");
    p.occlusion_prob = cfg.get_double("augment.occlusion_prob");
    p.occluder_min = cfg.get_double("augment.occluder_min");
    p.occluder_max = cfg.get_double("augment.occluder_max");
    p.noise_sigma_max = cfg.get_double("augment.noise_sigma_max");
    p.noise_clip = cfg.get_double("augment.noise_clip");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return p;
}

ToyConfig toy_config(const Config& cfg) {
    ToyConfig t;
    t.image_size = cfg.get_int("toy.image_size");
    t.output_size = model_config(cfg).output_size();
    t.background_spread = cfg.get_double("toy.background_spread");
    t.texture_strength = cfg.get_double("toy.texture_strength");
    t.clutter_strokes = cfg.get_int("toy.clutter_strokes");
    t.color_jitter = cfg.get_double("toy.color_jitter");
    t.max_occluders = cfg.get_int("toy.max_occluders");
    t.occluder_size = cfg.get_double("toy.occluder_size");
    t.blur_prob = cfg.get_double("toy.blur_prob");
    return t;
}

} // namespace kpda
