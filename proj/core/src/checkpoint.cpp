#include "kpda/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "kpda/errors.hpp"
#include "kpda/json_io.hpp"

namespace kpda {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string meta_to_string(const CheckpointMeta& m) {
    return json{{"stage", m.stage},
                {"model_hash", m.model_hash},
                {"run_hash", m.run_hash},
                {"epochs_completed", m.epochs_completed},
                {"iter", m.iter},
                {"schedule", schedule_to_json(m.schedule)}}
        .dump();
}

CheckpointMeta meta_from_string(const std::string& s) {
    const json j = json::parse(s);
    CheckpointMeta m;
    m.stage = j.at("stage").get<std::string>();
    m.model_hash = j.at("model_hash").get<std::string>();
    m.run_hash = j.at("run_hash").get<std::string>();
    m.epochs_completed = j.at("epochs_completed").get<int>();
    m.iter = j.at("iter").get<long>();
    m.schedule = schedule_from_json(j.at("schedule"));
    return m;
}

torch::serialize::InputArchive open_archive(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("checkpoint " + path.string() + " does not exist");
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw DataError("checkpoint " + path.string() + " is unreadable or truncated: " + e.what_without_backtrace());
    }
    return archive;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& archive, const fs::path& path) {
    c10::IValue v;
    try {
        archive.read("meta", v);
        return meta_from_string(v.toStringRef());
    } catch (const std::exception& e) {
        throw DataError("checkpoint " + path.string() + " has no valid metadata: " + e.what());
    }
}

} // namespace

void save_checkpoint(const fs::path& path, const CheckpointMeta& meta, StudentNet& student, Teacher& teacher,
                     torch::optim::Optimizer* optimizer) {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive s_arch;
    student->save(s_arch);
    archive.write("student", s_arch);
    torch::serialize::OutputArchive t_arch;
    teacher.net()->save(t_arch);
    archive.write("teacher", t_arch);
    if (optimizer != nullptr) {
        torch::serialize::OutputArchive o_arch;
        optimizer->save(o_arch);
        archive.write("optimizer", o_arch);
    }
    archive.write("meta", c10::IValue(meta_to_string(meta)));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
    auto archive = open_archive(path);
    return read_meta(archive, path);
}

CheckpointMeta load_checkpoint(const fs::path& path, StudentNet& student, Teacher* teacher,
                               torch::optim::Optimizer* optimizer) {
    auto archive = open_archive(path);
    CheckpointMeta meta = read_meta(archive, path);
    const std::string expected = student->cfg.fingerprint();
    if (meta.model_hash != expected) {
        throw DataError("checkpoint " + path.string() + " was written for model configuration " + meta.model_hash +
                        ", current configuration is " + expected);
    }
    try {
        torch::serialize::InputArchive s_arch;
        archive.read("student", s_arch);
        student->load(s_arch);
        if (teacher != nullptr) {
            torch::serialize::InputArchive t_arch;
            archive.read("teacher", t_arch);
            teacher->net()->load(t_arch);
            for (auto& p : teacher->net()->parameters()) p.set_requires_grad(false);
        }
        if (optimizer != nullptr) {
            torch::serialize::InputArchive o_arch;
            if (archive.try_read("optimizer", o_arch)) optimizer->load(o_arch);
        }
    } catch (const c10::Error& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    return meta;
}

} // namespace kpda
