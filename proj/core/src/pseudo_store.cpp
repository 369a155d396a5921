#include "kpda/pseudo_store.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kpda/errors.hpp"

namespace kpda {

namespace fs = std::filesystem;
using json = nlohmann::json;

void write_pseudo_labels(std::span<const PseudoLabel> labels, const fs::path& path) {
    std::set<std::string> seen;
    std::ostringstream buf;
    for (const auto& label : labels) {
        if (!seen.insert(label.sample_id).second) {
            throw std::invalid_argument("pseudo store: duplicate sample id '" + label.sample_id + "'");
        }
        if (label.keypoints.size() != label.confidence.size()) {
            throw std::invalid_argument("pseudo store: keypoint/confidence count mismatch for '" +
                                        label.sample_id + "'");
        }
        json kpts = json::array();
        json vis = json::array();
        for (std::size_t k = 0; k < label.keypoints.size(); ++k) {
            const double conf = label.confidence[k];
            if (!(conf >= 0.0 && conf <= 1.0)) {
                throw std::invalid_argument("pseudo store: confidence " + std::to_string(conf) +
                                            " outside [0, 1] for '" + label.sample_id + "'");
            }
            kpts.push_back({label.keypoints[k].x, label.keypoints[k].y, conf});
            vis.push_back(label.keypoints[k].visible ? 1 : 0);
        }
        buf << json{{"id", label.sample_id}, {"kpts", kpts}, {"vis", vis}, {"version", kPseudoStoreVersion}}.dump()
            << "\n";
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << buf.str();
        if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<PseudoLabel> read_pseudo_labels(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open pseudo-label store " + path.string());
    std::vector<PseudoLabel> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const json rec = json::parse(line);
            const int version = rec.at("version").get<int>();
            if (version != kPseudoStoreVersion) {
                throw DataError(where + ": pseudo-label store version " + std::to_string(version) +
                                ", expected " + std::to_string(kPseudoStoreVersion));
            }
            PseudoLabel label;
            label.sample_id = rec.at("id").get<std::string>();
            const json& kpts = rec.at("kpts");
            const json vis = rec.contains("vis") ? rec.at("vis") : json::array();
            for (std::size_t k = 0; k < kpts.size(); ++k) {
                const auto& row = kpts[k];
                if (!row.is_array() || row.size() != 3) throw DataError(where + ": malformed keypoint row");
                const bool visible = vis.empty() ? true : vis.at(k).get<int>() != 0;
                label.keypoints.push_back({row[0].get<double>(), row[1].get<double>(), visible, true});
                label.confidence.push_back(row[2].get<double>());
            }
            out.push_back(std::move(label));
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

} // namespace kpda
