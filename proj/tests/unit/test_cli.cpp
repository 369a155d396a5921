#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "helpers.hpp"
#include "kpda/checkpoint.hpp"
#include "kpda/config.hpp"
#include "kpda/dataset.hpp"
#include "kpda/errors.hpp"

using namespace kpda;
using kpda::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr
};

Run kpda_cli(const std::string& args) {
    const std::string cmd = std::string(KPDA_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Small network and the toy data locations under `root`.
fs::path write_config(const fs::path& root) {
    const auto p = root / "tiny.conf";
    std::ofstream out(p);
    out << "# test network\n"
           "[model]\njoints = 10\ninput_size = 64\nencoder_widths = 8,8,16\nstem_stride = 1\n"
           "decoder_width = 8\nrefine_width = 4\ndc_channels = 8,8,8,8,8,1\n"
           "[schedule]\nalpha_min = 5\n"
           "[train]\nbatch_size = 4\nepochs_stage1 = 1\nepochs_stage2 = 1\n"
           "[data]\n"
        << "source_train = " << (root / "toy/source/train").string() << "\n"
        << "source_test = " << (root / "toy/source/test").string() << "\n"
        << "target_train = " << (root / "toy/target/train").string() << "\n"
        << "target_test = " << (root / "toy/target/test").string() << "\n";
    return p;
}

std::string toydata_args(const fs::path& root, int n = 10) {
    const auto s = std::to_string(n);
    return "toydata -o " + root.string() + " --n-source " + s + " --n-target " + s + " --n-source-test " + s +
           " --n-target-test " + s;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("config keys and overrides") {
    Config c;
    CHECK(c.get("ema.alpha") == "0.999");
    c.set_assignment("train.seed=7");
    CHECK(c.get_long("train.seed") == 7);
    CHECK_THROWS_AS(c.set("train.sede", "1"), UsageError);
    try {
        c.set("nope.key", "1");
        FAIL("unknown key accepted");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("train.seed") != std::string::npos);
    }
    CHECK_THROWS_AS(c.set_assignment("no equals sign"), UsageError);
    c.set("train.seed", "x");
    CHECK_THROWS_AS(c.get_long("train.seed"), UsageError);
    for (const auto& k : config_registry()) CHECK_NOTHROW(c.get(k.name));
}

TEST_CASE("config file with sections and comments") {
    TempDir dir("cli");
    {
        std::ofstream out(dir / "a.conf");
        out << "# comment\n[train]\nseed = 4  # trailing\nbatch_size=3\n\n[ema]\nalpha = 0.5\n";
    }
    Config c;
    c.merge_file(dir / "a.conf");
    CHECK(c.get_int("train.seed") == 4);
    CHECK(c.get_int("train.batch_size") == 3);
    CHECK(c.get_double("ema.alpha") == 0.5);
    {
        std::ofstream out(dir / "bad.conf");
        out << "[train]\nseeed = 4\n";
    }
    CHECK_THROWS_AS(c.merge_file(dir / "bad.conf"), UsageError);
    CHECK_THROWS_AS(c.merge_file(dir / "missing.conf"), DataError);
}

TEST_CASE("config hash ignores bookkeeping keys") {
    Config a, b;
    b.set("train.checkpoint", "/elsewhere.ckpt");
    b.set("train.stop_after_epoch", "2");
    b.set("data.target_train", "/x");
    CHECK(a.hash() == b.hash());
    b.set("train.seed", "9");
    CHECK(a.hash() != b.hash());
}

TEST_CASE("toydata writes loadable, reproducible datasets") {
    TempDir a("cli"), b("cli");
    auto ra = kpda_cli(toydata_args(a.path()));
    REQUIRE(ra.code == 0);
    REQUIRE(kpda_cli(toydata_args(b.path())).code == 0);
    const auto ann = nlohmann::json::parse(slurp(a / "toy/source/train/annotations.json"));
    CHECK(ann.size() == 10);
    for (const char* part : {"source/train", "source/test", "target/train", "target/test"}) {
        const auto rel = fs::path("toy") / part / "annotations.json";
        CHECK(slurp(a.path() / rel) == slurp(b.path() / rel));
        DatasetSpec spec;
        spec.root = a.path() / "toy" / part;
        spec.joint_count = 10;
        CHECK(load_dataset(spec).size() == 10);
    }
    CHECK(fs::exists(a / "toydata.manifest.json"));

    TempDir c("cli");
    REQUIRE(kpda_cli(toydata_args(c.path()) + " --seed 1").code == 0);
    CHECK(slurp(a / "toy/target/train/annotations.json") != slurp(c / "toy/target/train/annotations.json"));
}

TEST_CASE("usage and data errors map to exit codes") {
    TempDir dir("cli");
    auto unknown = kpda_cli("pretrain -o " + dir.path().string() + " --set train.bogus=1");
    CHECK(unknown.code == 1);
    CHECK(unknown.output.find("train.bogus") != std::string::npos);
    CHECK(unknown.output.find("train.seed") != std::string::npos);

    const std::string missing = (dir / "nowhere").string();
    auto absent = kpda_cli("pretrain -o " + dir.path().string() + " --set data.source_train=" + missing);
    CHECK(absent.code == 2);
    CHECK(absent.output.find(missing) != std::string::npos);

    CHECK(kpda_cli("").code == 1);
    CHECK(kpda_cli("frobnicate").code == 1);
    CHECK(kpda_cli("eval").code == 1);  // --checkpoint is required
}

TEST_CASE("help lists every key with its default") {
    auto r = kpda_cli("--help");
    CHECK(r.code == 0);
    for (const auto& k : config_registry()) {
        const auto at = r.output.find(k.name);
        REQUIRE_MESSAGE(at != std::string::npos, k.name);
        if (!k.default_value.empty()) CHECK(r.output.find(k.default_value, at) != std::string::npos);
    }
    CHECK(r.output.find("Exit codes") != std::string::npos);
}

TEST_CASE("pipeline: random baseline, zero-epoch train, manifest replay") {
    TempDir dir("cli");
    const auto root = dir.path();
    REQUIRE(kpda_cli(toydata_args(root, 40)).code == 0);
    const auto conf = write_config(root).string();
    const std::string base = " -c " + conf + " -o " + root.string();

    // zero epochs: the checkpoint holds the random initialisation
    auto pre = kpda_cli("pretrain --epochs 0" + base);
    REQUIRE_MESSAGE(pre.code == 0, pre.output);
    const auto ckpt = root / "pretrain.ckpt";
    REQUIRE(fs::exists(ckpt));

    auto ev = kpda_cli("eval --checkpoint " + ckpt.string() + " --json " + (root / "r.json").string() + base);
    REQUIRE_MESSAGE(ev.code == 0, ev.output);
    const auto report = nlohmann::json::parse(slurp(root / "r.json"));
    CHECK(report.at("samples").get<long>() == 40);
    CHECK(report.at("mean").get<double>() < 0.2);
    CHECK(ev.output.find("Mean") != std::string::npos);

    auto cmp = kpda_cli("compare " + (root / "r.json").string() + " " + (root / "r.json").string());
    REQUIRE(cmp.code == 0);
    CHECK(nlohmann::json::parse(cmp.output).at("mean_delta").get<double>() == 0.0);

    auto gen = kpda_cli("gen-labels --checkpoint " + ckpt.string() + base);
    REQUIRE_MESSAGE(gen.code == 0, gen.output);
    REQUIRE(fs::exists(root / "pseudo_labels.jsonl"));

    auto tr = kpda_cli("train --epochs 0 --init " + ckpt.string() + " --labels " +
                       (root / "pseudo_labels.jsonl").string() + base);
    REQUIRE_MESSAGE(tr.code == 0, tr.output);
    const ModelConfig m = model_config([&] {
        Config c;
        c.merge_file(conf);
        return c;
    }());
    StudentNet in(m), out(m);
    load_checkpoint(ckpt, in, nullptr);
    load_checkpoint(root / "adapt.ckpt", out, nullptr);
    auto po = out->named_parameters();
    for (const auto& p : in->named_parameters()) CHECK(torch::equal(p.value(), po[p.key()]));
    auto bo = out->named_buffers();
    for (const auto& b : in->named_buffers()) CHECK(torch::equal(b.value(), bo[b.key()]));

    // one real adaptation epoch on the 40 pseudo-labelled targets
    auto tr1 = kpda_cli("train --epochs 1 --init " + ckpt.string() + " --labels " +
                        (root / "pseudo_labels.jsonl").string() + " --set train.metrics=" +
                        (root / "m.jsonl").string() + base);
    REQUIRE_MESSAGE(tr1.code == 0, tr1.output);
    CHECK(read_checkpoint_meta(root / "adapt.ckpt").epochs_completed == 1);
    std::ifstream metrics(root / "m.jsonl");
    int lines = 0;
    for (std::string l; std::getline(metrics, l);) ++lines;
    CHECK(lines == 10);

    // replaying the manifest reproduces the resolved configuration
    const auto manifest = nlohmann::json::parse(slurp(root / "train.manifest.json"));
    Config replay;
    replay.merge_file(root / "train.manifest.json");
    CHECK(replay.hash() == manifest.at("config_hash").get<std::string>());
    CHECK(replay.to_json() == manifest.at("config"));
    CHECK(manifest.at("command") == "train");
}

TEST_CASE("numerical abort exits with 3") {
    TempDir dir("cli");
    const auto root = dir.path();
    REQUIRE(kpda_cli(toydata_args(root, 8)).code == 0);
    const auto conf = write_config(root).string();
    auto r = kpda_cli("pretrain -c " + conf + " -o " + root.string() + " --set optim.stage1_lr=1e30");
    CHECK(r.code == 3);
    CHECK(r.output.find("non-finite") != std::string::npos);
}

}
