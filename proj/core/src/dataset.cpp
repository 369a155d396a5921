#include "kpda/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kpda/errors.hpp"
#include "kpda/image_io.hpp"

namespace kpda {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "' (expected train|test)");
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Line numbers of each record's keypoint rows. Records are the depth-1 objects of the
// top-level list; keypoint rows are the only arrays nested three deep.
std::vector<std::vector<int>> keypoint_row_lines(const std::string& text) {
    std::vector<std::vector<int>> rows;
    int line = 1;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (char ch : text) {
        if (ch == '\n') ++line;
        if (in_string) {
            if (escaped) escaped = false;
            else if (ch == '\\') escaped = true;
            else if (ch == '"') in_string = false;
            continue;
        }
        switch (ch) {
        case '"': in_string = true; break;
        case '[':
        case '{':
            if (depth == 1 && ch == '{') rows.emplace_back();
            if (depth == 3 && ch == '[' && !rows.empty()) rows.back().push_back(line);
            ++depth;
            break;
        case ']':
        case '}': --depth; break;
        default: break;
        }
    }
    return rows;
}

int line_of(const std::vector<std::vector<int>>& lines, std::size_t record, std::size_t row) {
    if (record < lines.size() && row < lines[record].size()) return lines[record][row];
    return 0;
}

} // namespace

void write_skeleton(const fs::path& path, const Skeleton& skeleton) {
    json j = json::array();
    for (int i = 0; i < skeleton.size(); ++i) {
        j.push_back({{"name", skeleton.joint_names[i]},
                     {"group", skeleton.joint_groups[i]},
                     {"flip", skeleton.flip_partner[i]}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << json{{"joints", j}}.dump(2) << "\n";
}

Skeleton load_skeleton(const fs::path& root, int joint_count) {
    const fs::path p = root / "skeleton.json";
    if (!fs::exists(p)) {
        if (joint_count <= 0) throw DataError(root.string() + ": no skeleton.json and no joint count given");
        return Skeleton::plain(joint_count);
    }
    Skeleton s;
    try {
        const json j = json::parse(read_text(p));
        for (const auto& joint : j.at("joints")) {
            s.joint_names.push_back(joint.at("name").get<std::string>());
            s.joint_groups.push_back(joint.at("group").get<std::string>());
            s.flip_partner.push_back(joint.at("flip").get<int>());
        }
        s.validate();
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(p.string() + ": " + e.what());
    }
    if (joint_count > 0 && s.size() != joint_count) {
        throw DataError(p.string() + ": skeleton has " + std::to_string(s.size()) +
                        " joints, expected " + std::to_string(joint_count));
    }
    return s;
}

std::vector<PoseSample> load_dataset(const DatasetSpec& spec) {
    const fs::path ann = spec.root / "annotations.json";
    const std::string text = read_text(ann);
    json records;
    try {
        records = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(ann.string() + ": " + e.what());
    }
    if (!records.is_array()) throw DataError(ann.string() + ": expected a JSON list of records");
    const auto row_lines = keypoint_row_lines(text);

    std::vector<PoseSample> samples;
    samples.reserve(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        const json& rec = records[r];
        PoseSample s;
        s.domain = spec.domain;
        try {
            s.id = rec.at("id").get<std::string>();
            const auto image_rel = rec.at("image").get<std::string>();
            const fs::path image_path = spec.root / image_rel;
            if (!fs::exists(image_path)) {
                throw DataError("sample '" + s.id + "': image file " + image_path.string() + " is missing");
            }
            auto image = read_png(image_path);
            const int orig_h = static_cast<int>(image.size(1));
            const int orig_w = static_cast<int>(image.size(2));
            if (orig_h != spec.input_size || orig_w != spec.input_size) {
                namespace F = torch::nn::functional;
                image = F::interpolate(image.unsqueeze(0),
                                       F::InterpolateFuncOptions()
                                           .size(std::vector<int64_t>{spec.input_size, spec.input_size})
                                           .mode(torch::kBilinear)
                                           .align_corners(false))
                            .squeeze(0)
                            .clamp(0.0, 1.0);
            }
            s.image = image.contiguous();

            const auto box = rec.at("bbox").get<std::vector<double>>();
            if (box.size() != 4 || !(box[0] <= box[2]) || !(box[1] <= box[3]) || box[0] < 0 ||
                box[1] < 0 || box[2] > orig_w || box[3] > orig_h) {
                throw DataError("sample '" + s.id + "': bbox must be [x0,y0,x1,y1] inside the image");
            }
            const double sx = static_cast<double>(spec.input_size) / orig_w;
            const double sy = static_cast<double>(spec.input_size) / orig_h;
            s.bbox = {box[0] * sx, box[1] * sy, box[2] * sx, box[3] * sy};

            if (rec.contains("keypoints") && !rec.at("keypoints").empty()) {
                const json& rows = rec.at("keypoints");
                if (spec.joint_count > 0 && static_cast<int>(rows.size()) != spec.joint_count) {
                    throw DataError(ann.string() + ":" + std::to_string(line_of(row_lines, r, 0)) +
                                    ": sample '" + s.id + "' has " + std::to_string(rows.size()) +
                                    " keypoints, expected " + std::to_string(spec.joint_count));
                }
                std::vector<Keypoint> kps;
                for (std::size_t k = 0; k < rows.size(); ++k) {
                    const json& row = rows[k];
                    const bool ok = row.is_array() && row.size() == 3 && row[0].is_number() &&
                                    row[1].is_number() && row[2].is_number_integer() &&
                                    (row[2].get<int>() == 0 || row[2].get<int>() == 1);
                    if (!ok) {
                        throw DataError(ann.string() + ":" + std::to_string(line_of(row_lines, r, k)) +
                                        ": malformed keypoint row " + std::to_string(k) + " of sample '" +
                                        s.id + "' (expected [x, y, v] with v in {0, 1})");
                    }
                    double x = row[0].get<double>();
                    double y = row[1].get<double>();
                    Keypoint kp{0.0, 0.0, row[2].get<int>() == 1, true};
                    if (x < box[0] || x > box[2] || y < box[1] || y > box[3]) {
                        x = std::clamp(x, box[0], box[2]);
                        y = std::clamp(y, box[1], box[3]);
                        kp.visible = false;
                        kp.labeled = false;
                    }
                    kp.x = std::clamp(to_output_coord(x, orig_w, spec.output_size), 0.0,
                                      static_cast<double>(spec.output_size - 1));
                    kp.y = std::clamp(to_output_coord(y, orig_h, spec.output_size), 0.0,
                                      static_cast<double>(spec.output_size - 1));
                    kps.push_back(kp);
                }
                s.set_keypoints(std::move(kps));
            }
        } catch (const json::exception& e) {
            throw DataError(ann.string() + ": record " + std::to_string(r) + ": " + e.what());
        }
        samples.push_back(std::move(s));
    }

    if (spec.shuffle) {
        std::mt19937_64 rng(spec.shuffle_seed);
        std::shuffle(samples.begin(), samples.end(), rng);
    }
    return samples;
}

void write_dataset(const fs::path& root, std::span<const PoseSample> samples,
                   const Skeleton& skeleton, int output_size) {
    fs::create_directories(root / "images");
    std::ostringstream ann;
    ann << "[\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const PoseSample& s = samples[i];
        const int size = static_cast<int>(s.image.size(2));
        const std::string rel = "images/" + s.id + ".png";
        write_png(root / rel, s.image);
        json kps = json::array();
        if (s.has_keypoints()) {
            for (const auto& k : s.keypoints()) {
                kps.push_back({to_input_coord(k.x, size, output_size), to_input_coord(k.y, size, output_size),
                               k.visible ? 1 : 0});
            }
        }
        json rec = {{"id", s.id},
                    {"image", rel},
                    {"bbox", {s.bbox.x0, s.bbox.y0, s.bbox.x1, s.bbox.y1}},
                    {"keypoints", kps}};
        ann << rec.dump() << (i + 1 < samples.size() ? ",\n" : "\n");
    }
    ann << "]\n";
    std::ofstream out(root / "annotations.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (root / "annotations.json").string());
    out << ann.str();
    write_skeleton(root / "skeleton.json", skeleton);
}

} // namespace kpda
