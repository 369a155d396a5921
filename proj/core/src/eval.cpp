#include "kpda/eval.hpp"

#include <cstdio>
#include <sstream>

#include "kpda/errors.hpp"
#include "kpda/heatmap.hpp"
#include "kpda/json_io.hpp"

namespace kpda {

using nlohmann::json;

std::string to_string(EvalMode m) { return m == EvalMode::visible ? "visible" : "full"; }

EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "visible") return EvalMode::visible;
    if (s == "full") return EvalMode::full;
    throw UsageError("unknown eval mode '" + s + "' (expected visible or full)");
}

EvalReport evaluate(StudentNet& student, std::span<const PoseSample> samples, const Skeleton& skeleton,
                    const EvalOptions& options, const std::string& dataset) {
    if (options.alpha <= 0) throw UsageError("PCK alpha must be positive");
    const int model_k = student->cfg.joints;
    const int data_k = skeleton.size();
    std::vector<int> remap = options.remap;
    if (remap.empty()) {
        if (data_k != model_k) {
            throw UsageError("dataset has " + std::to_string(data_k) + " joints, model has " +
                             std::to_string(model_k) + "; supply a joint remap");
        }
        for (int j = 0; j < data_k; ++j) remap.push_back(j);
    }
    if (static_cast<int>(remap.size()) != data_k) {
        throw UsageError("joint remap has " + std::to_string(remap.size()) + " entries, dataset has " +
                         std::to_string(data_k) + " joints");
    }
    for (int m : remap) {
        if (m < 0 || m >= model_k) throw UsageError("joint remap entry " + std::to_string(m) + " out of range");
    }

    const int input = student->cfg.input_size;
    const int output = student->cfg.output_size();
    const auto decoded = decode_heatmaps(predict(student, samples, options.head, options.batch_size));
    PckAccumulator acc(data_k, options.alpha,
                       options.mode == EvalMode::visible ? JointFilter::visible : JointFilter::labeled);
    std::vector<Keypoint> pred(static_cast<std::size_t>(data_k));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& gt = samples[i].keypoints();
        if (static_cast<int>(gt.size()) != data_k) {
            throw DataError("sample " + samples[i].id + " has " + std::to_string(gt.size()) + " joints, expected " +
                            std::to_string(data_k));
        }
        for (int j = 0; j < data_k; ++j) pred[j] = decoded[i].keypoints[remap[j]];
        const double ref = reference_length(samples[i].bbox.scaled(static_cast<double>(output) / input));
        acc.add(pred, gt, ref);
    }

    EvalReport r;
    r.dataset = dataset;
    r.mode = options.mode;
    r.head = options.head;
    r.samples = static_cast<long>(samples.size());
    r.joint_names = skeleton.joint_names;
    r.pck = acc.report(&skeleton);
    return r;
}

json report_to_json(const EvalReport& r) {
    json j = pck_to_json(r.pck);
    j["dataset"] = r.dataset;
    j["mode"] = to_string(r.mode);
    j["head"] = to_string(r.head);
    j["samples"] = r.samples;
    j["joints"] = r.joint_names;
    return j;
}

EvalReport report_from_json(const json& j) {
    auto opt = [](const json& v) { return v.is_null() ? std::optional<double>{} : std::optional<double>(v.get<double>()); };
    try {
        EvalReport r;
        r.dataset = j.at("dataset").get<std::string>();
        r.mode = eval_mode_from_string(j.at("mode").get<std::string>());
        r.head = head_from_string(j.at("head").get<std::string>());
        r.samples = j.at("samples").get<long>();
        r.joint_names = j.at("joints").get<std::vector<std::string>>();
        r.pck.alpha = j.at("alpha").get<double>();
        r.pck.mean = opt(j.at("mean"));
        for (const auto& v : j.at("per_joint")) r.pck.per_joint.push_back(opt(v));
        for (const auto& g : j.at("per_group")) r.pck.per_group.emplace_back(g.at("group").get<std::string>(), opt(g.at("pck")));
        r.pck.scored = j.at("scored").get<std::vector<long>>();
        r.pck.correct = j.at("correct").get<std::vector<long>>();
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed evaluation report: ") + e.what());
    }
}

std::string report_table(std::span<const EvalReport> rows) {
    if (rows.empty()) return "";
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (v) {
            std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
        } else {
            std::snprintf(buf, sizeof buf, "-");
        }
        return std::string(buf);
    };
    std::size_t name_w = 7;
    for (const auto& r : rows) name_w = std::max(name_w, r.dataset.size());
    std::vector<std::size_t> widths;
    for (const auto& [g, v] : rows.front().pck.per_group) widths.push_back(std::max<std::size_t>(g.size(), 6));

    std::ostringstream out;
    auto pad = [&](const std::string& s, std::size_t w) { out << std::string(w - std::min(w, s.size()), ' ') << s; };
    out << "Dataset" << std::string(name_w - 7, ' ');
    for (std::size_t i = 0; i < widths.size(); ++i) {
        out << "  ";
        pad(rows.front().pck.per_group[i].first, widths[i]);
    }
    out << "    Mean\n";
    for (const auto& r : rows) {
        out << r.dataset << std::string(name_w - r.dataset.size(), ' ');
        for (std::size_t i = 0; i < widths.size(); ++i) {
            out << "  ";
            pad(i < r.pck.per_group.size() ? cell(r.pck.per_group[i].second) : "-", widths[i]);
        }
        out << "  ";
        pad(cell(r.pck.mean), 6);
        out << "\n";
    }
    return out.str();
}

Comparison compare_runs(const EvalReport& a, const EvalReport& b) {
    if (a.dataset != b.dataset) throw UsageError("reports cover different datasets: " + a.dataset + " vs " + b.dataset);
    if (a.pck.alpha != b.pck.alpha) throw UsageError("reports use different PCK thresholds");
    if (a.mode != b.mode) throw UsageError("reports use different modes: " + to_string(a.mode) + " vs " + to_string(b.mode));
    if (a.pck.per_group.size() != b.pck.per_group.size()) throw UsageError("reports have different joint groups");
    Comparison c;
    for (std::size_t i = 0; i < a.pck.per_group.size(); ++i) {
        const auto& [name, va] = a.pck.per_group[i];
        const auto& [other, vb] = b.pck.per_group[i];
        if (name != other) throw UsageError("reports have different joint groups");
        c.group_delta.emplace_back(name, va && vb ? std::optional<double>(*va - *vb) : std::nullopt);
    }
    if (a.pck.mean && b.pck.mean) c.mean_delta = *a.pck.mean - *b.pck.mean;
    return c;
}

json comparison_to_json(const Comparison& c) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json groups = json::array();
    for (const auto& [g, v] : c.group_delta) groups.push_back({{"group", g}, {"delta", opt(v)}});
    return {{"per_group", groups}, {"mean_delta", opt(c.mean_delta)}};
}

std::vector<int> parse_remap(const std::string& text) {
    std::string s;
    for (char ch : text) s += (ch == '[' || ch == ']') ? ' ' : ch;
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t\n");
        if (b == std::string::npos) continue;
        try {
            std::size_t pos = 0;
            const auto e = item.find_last_not_of(" \t\n");
            const std::string t = item.substr(b, e - b + 1);
            out.push_back(std::stoi(t, &pos));
            if (pos != t.size()) throw std::invalid_argument(t);
        } catch (const std::logic_error&) {
            throw UsageError("joint remap '" + text + "' is not a list of integers");
        }
    }
    return out;
}

} // namespace kpda
