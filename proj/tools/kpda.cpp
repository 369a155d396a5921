// kpda: toy data generation, two-stage training and PCK evaluation.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kpda/checkpoint.hpp"
#include "kpda/config.hpp"
#include "kpda/dataset.hpp"
#include "kpda/errors.hpp"
#include "kpda/eval.hpp"
#include "kpda/pseudo_store.hpp"
#include "kpda/toy.hpp"
#include "kpda/trainer.hpp"

namespace fs = std::filesystem;
using namespace kpda;

namespace {

struct Common {
    std::vector<std::string> config_files;
    std::vector<std::string> overrides;
    std::string output_root;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_files, "config file (key = value lines or a run manifest)");
    cmd->add_option("-s,--set", c.overrides, "override one key, e.g. --set train.seed=3");
    cmd->add_option("-o,--output-root", c.output_root, "output directory (default $KPDA_OUTPUT_ROOT or ./runs)");
}

Config resolve(const Common& c) {
    Config cfg;
    for (const auto& f : c.config_files) cfg.merge_file(f);
    for (const auto& o : c.overrides) cfg.set_assignment(o);
    return cfg;
}

fs::path output_root(const Common& c) {
    if (!c.output_root.empty()) return c.output_root;
    if (const char* env = std::getenv("KPDA_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

// Written before any compute; `--config <manifest>` replays the resolved configuration.
void write_manifest(const fs::path& root, const std::string& command, const Config& cfg,
                    const nlohmann::json& extra = nlohmann::json::object()) {
    fs::create_directories(root);
    nlohmann::json m{{"command", command},
                     {"started", timestamp()},
                     {"seed", cfg.get("train.seed")},
                     {"config_hash", cfg.hash()},
                     {"config", cfg.to_json()},
                     {"arguments", extra}};
    const auto path = root / (command + ".manifest.json");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << m.dump(2) << "\n";
}

fs::path require_path(const Config& cfg, const std::string& key) {
    const auto& v = cfg.get(key);
    if (v.empty()) throw UsageError(key + " is not set");
    if (!fs::exists(v)) throw DataError(key + ": path " + v + " does not exist");
    return v;
}

std::vector<PoseSample> load(const Config& cfg, const fs::path& root, Split split, Domain domain) {
    if (!fs::exists(root)) throw DataError("dataset path " + root.string() + " does not exist");
    const auto m = model_config(cfg);
    DatasetSpec spec;
    spec.root = root;
    spec.split = split;
    spec.domain = domain;
    spec.joint_count = m.joints;
    spec.input_size = m.input_size;
    spec.output_size = m.output_size();
    spec.shuffle_seed = static_cast<std::uint64_t>(cfg.get_long("train.seed"));
    return load_dataset(spec);
}

fs::path checkpoint_path(const Config& cfg, const fs::path& root, const std::string& name) {
    const auto& v = cfg.get("train.checkpoint");
    return v.empty() ? root / (name + ".ckpt") : fs::path(v);
}

StudentNet load_student(const ModelConfig& m, const fs::path& path) {
    StudentNet s(m);
    load_checkpoint(path, s, nullptr);
    return s;
}

std::string registry_help() {
    std::ostringstream out;
    out << "Configuration keys (file: key = value, or --set key=value):\n";
    for (const auto& k : config_registry()) {
        out << "  " << std::left << std::setw(34) << k.name << " default: "
            << (k.default_value.empty() ? "(unset)" : k.default_value) << "\n      " << k.description;
        out << "\n";
    }
    out << "Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.\n";
    return out.str();
}

int run(int argc, char** argv) {
    CLI::App app{"Unsupervised domain adaptation for 2D keypoint estimation"};
    app.require_subcommand(1);
    app.footer(registry_help());

    // toydata
    Common toy_c;
    int n_source = 500, n_target = 500, n_source_test = 200, n_target_test = 200;
    long toy_seed = 0;
    std::string toy_out;
    auto* toy = app.add_subcommand("toydata", "write procedural source/target train/test datasets");
    add_common(toy, toy_c);
    toy->add_option("--out", toy_out, "dataset root (default <output root>/toy)");
    toy->add_option("--n-source", n_source, "source training samples");
    toy->add_option("--n-target", n_target, "target training samples");
    toy->add_option("--n-source-test", n_source_test, "source test samples");
    toy->add_option("--n-target-test", n_target_test, "target test samples");
    toy->add_option("--seed", toy_seed, "generator seed");

    // pretrain
    Common pre_c;
    int pre_epochs = -1;
    auto* pre = app.add_subcommand("pretrain", "stage 1: supervised training on source data");
    add_common(pre, pre_c);
    pre->add_option("--epochs", pre_epochs, "shorthand for train.epochs_stage1");

    // gen-labels
    Common gen_c;
    std::string gen_ckpt, gen_out;
    auto* gen = app.add_subcommand("gen-labels", "decode pseudo labels for the target training set");
    add_common(gen, gen_c);
    gen->add_option("--checkpoint", gen_ckpt, "pretrained checkpoint")->required();
    gen->add_option("--out", gen_out, "pseudo-label file (default <output root>/pseudo_labels.jsonl)");

    // train
    Common tr_c;
    std::string tr_init, tr_labels, tr_resume;
    int tr_epochs = -1;
    auto* tr = app.add_subcommand("train", "stage 2: adaptation with pseudo labels");
    add_common(tr, tr_c);
    tr->add_option("--init", tr_init, "pretrained checkpoint")->required();
    tr->add_option("--labels", tr_labels, "pseudo-label file")->required();
    tr->add_option("--resume", tr_resume, "continue from an adaptation checkpoint");
    tr->add_option("--epochs", tr_epochs, "shorthand for train.epochs_stage2");

    // eval
    Common ev_c;
    std::string ev_ckpt, ev_data, ev_json, ev_name;
    auto* ev = app.add_subcommand("eval", "PCK of a checkpoint on a labelled dataset");
    add_common(ev, ev_c);
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint to evaluate")->required();
    ev->add_option("--dataset", ev_data, "dataset root (default data.target_test)");
    ev->add_option("--name", ev_name, "dataset name shown in the report");
    ev->add_option("--json", ev_json, "also write the report as JSON");

    // compare
    std::string cmp_a, cmp_b;
    auto* cmp = app.add_subcommand("compare", "per-group and mean PCK deltas between two eval reports (a - b)");
    cmp->add_option("a", cmp_a, "report JSON")->required();
    cmp->add_option("b", cmp_b, "report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (toy->parsed()) {
        auto cfg = resolve(toy_c);
        const auto root = output_root(toy_c);
        const fs::path out = toy_out.empty() ? root / "toy" : fs::path(toy_out);
        write_manifest(root, "toydata", cfg,
                       {{"out", out.string()}, {"n_source", n_source}, {"n_target", n_target},
                        {"n_source_test", n_source_test}, {"n_target_test", n_target_test}, {"seed", toy_seed}});
        const auto tc = toy_config(cfg);
        const auto skeleton = toy_skeleton();
        struct Part {
            const char* dir;
            Domain style;
            int count;
            std::uint64_t offset;
        };
        const Part parts[] = {{"source/train", Domain::source, n_source, 0},
                              {"source/test", Domain::source, n_source_test, 1000000},
                              {"target/train", Domain::target, n_target, 2000000},
                              {"target/test", Domain::target, n_target_test, 3000000}};
        for (const auto& p : parts) {
            std::vector<PoseSample> samples;
            for (int i = 0; i < p.count; ++i) {
                const auto seed = static_cast<std::uint64_t>(toy_seed) * 10000000ULL + p.offset + static_cast<std::uint64_t>(i);
                samples.push_back(generate_toy_sample(seed, p.style, tc));
            }
            write_dataset(out / p.dir, samples, skeleton, tc.output_size);
            std::cout << "wrote " << samples.size() << " samples to " << (out / p.dir).string() << "\n";
        }
        return 0;
    }

    if (pre->parsed()) {
        auto cfg = resolve(pre_c);
        if (pre_epochs >= 0) cfg.set("train.epochs_stage1", std::to_string(pre_epochs));
        const auto root = output_root(pre_c);
        write_manifest(root, "pretrain", cfg);
        auto tcfg = TrainConfig::from(cfg);
        tcfg.checkpoint = checkpoint_path(cfg, root, "pretrain");
        const auto data = require_path(cfg, "data.source_train");
        const auto samples = load(cfg, data, Split::train, Domain::source);
        const auto skeleton = load_skeleton(data, tcfg.model.joints);
        auto res = pretrain(tcfg, samples, skeleton);
        std::cout << "pretrained " << res.steps << " steps";
        if (!res.epoch_loss.empty()) std::cout << ", final loss " << res.epoch_loss.back();
        std::cout << "\ncheckpoint: " << tcfg.checkpoint.string() << "\n";
        return 0;
    }

    if (gen->parsed()) {
        auto cfg = resolve(gen_c);
        const auto root = output_root(gen_c);
        const fs::path out = gen_out.empty() ? root / "pseudo_labels.jsonl" : fs::path(gen_out);
        write_manifest(root, "gen-labels", cfg, {{"checkpoint", gen_ckpt}, {"out", out.string()}});
        const auto m = model_config(cfg);
        auto student = load_student(m, gen_ckpt);
        const auto data = require_path(cfg, "data.target_train");
        const auto samples = load(cfg, data, Split::train, Domain::target);
        const auto labels = generate_pseudo_labels(student, samples, cfg.get_double("train.confidence_threshold"),
                                                   head_from_string(cfg.get("train.pseudo_head")));
        write_pseudo_labels(labels, out);
        long kept = 0, all = 0;
        for (const auto& l : labels) {
            for (const auto& k : l.keypoints) {
                kept += k.visible;
                ++all;
            }
        }
        std::cout << "wrote " << labels.size() << " pseudo labels (" << kept << "/" << all << " joints kept) to "
                  << out.string() << "\n";
        return 0;
    }

    if (tr->parsed()) {
        auto cfg = resolve(tr_c);
        if (tr_epochs >= 0) cfg.set("train.epochs_stage2", std::to_string(tr_epochs));
        const auto root = output_root(tr_c);
        write_manifest(root, "train", cfg, {{"init", tr_init}, {"labels", tr_labels}, {"resume", tr_resume}});
        auto tcfg = TrainConfig::from(cfg);
        tcfg.checkpoint = checkpoint_path(cfg, root, "adapt");
        tcfg.metrics = cfg.get("train.metrics").empty() ? root / "metrics.jsonl" : fs::path(cfg.get("train.metrics"));
        const auto src_root = require_path(cfg, "data.source_train");
        const auto tgt_root = require_path(cfg, "data.target_train");
        const auto source = load(cfg, src_root, Split::train, Domain::source);
        const auto target = load(cfg, tgt_root, Split::train, Domain::target);
        const auto skeleton = load_skeleton(src_root, tcfg.model.joints);
        const auto labels = read_pseudo_labels(tr_labels);
        auto student = load_student(tcfg.model, tr_init);
        std::optional<fs::path> resume;
        if (!tr_resume.empty()) resume = tr_resume;
        auto res = train(tcfg, source, target, labels, skeleton, student, resume);
        std::cout << "adapted " << res.steps.size() << " steps, " << res.epochs_completed << " epochs completed";
        if (res.interrupted) std::cout << " (stopped early)";
        std::cout << "\ncheckpoint: " << tcfg.checkpoint.string() << "\n";
        return 0;
    }

    if (ev->parsed()) {
        auto cfg = resolve(ev_c);
        const auto root = output_root(ev_c);
        write_manifest(root, "eval", cfg, {{"checkpoint", ev_ckpt}, {"dataset", ev_data}});
        const fs::path data = ev_data.empty() ? require_path(cfg, "data.target_test") : fs::path(ev_data);
        const auto m = model_config(cfg);
        auto student = load_student(m, ev_ckpt);
        DatasetSpec spec;
        spec.root = data;
        spec.split = Split::test;
        spec.domain = Domain::target;
        spec.input_size = m.input_size;
        spec.output_size = m.output_size();
        spec.shuffle = false;
        if (!fs::exists(data)) throw DataError("dataset path " + data.string() + " does not exist");
        const auto samples = load_dataset(spec);
        const auto skeleton = load_skeleton(data, 0);
        EvalOptions opts;
        opts.alpha = cfg.get_double("eval.alpha");
        opts.mode = eval_mode_from_string(cfg.get("eval.mode"));
        opts.head = head_from_string(cfg.get("eval.head"));
        opts.remap = parse_remap(cfg.get("eval.remap"));
        const auto report = evaluate(student, samples, skeleton, opts, ev_name.empty() ? data.filename().string() : ev_name);
        std::cout << report_table(std::span(&report, 1));
        if (!ev_json.empty()) {
            std::ofstream out(ev_json);
            if (!out) throw DataError("cannot write " + ev_json);
            out << report_to_json(report).dump(2) << "\n";
        }
        return 0;
    }

    if (cmp->parsed()) {
        auto read = [](const std::string& p) {
            std::ifstream in(p);
            if (!in) throw DataError("cannot open " + p);
            try {
                return report_from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::exception& e) {
                throw DataError(p + ": " + e.what());
            }
        };
        const auto c = compare_runs(read(cmp_a), read(cmp_b));
        std::cout << comparison_to_json(c).dump(2) << "\n";
        return 0;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "kpda: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "kpda: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "kpda: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "kpda: " << e.what() << "\n";
        return 2;
    }
}
