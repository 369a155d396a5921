#include "kpda/json_io.hpp"

namespace kpda {

using json = nlohmann::json;

json schedule_to_json(const ScheduleState& s) {
    return {{"epoch", s.epoch},         {"iter", s.iter},           {"lambda_sd", s.lambda_sd},
            {"lambda_mt", s.lambda_mt}, {"lambda_T", s.lambda_T},   {"lambda_R", s.lambda_R},
            {"lambda_adv", s.lambda_adv}, {"alpha_N", s.alpha_N()}, {"alpha_N_T", s.alpha_N_T},
            {"alpha_N_R", s.alpha_N_R}, {"lr", s.lr}};
}

ScheduleState schedule_from_json(const json& j) {
    ScheduleState s;
    s.epoch = j.at("epoch").get<int>();
    s.iter = j.at("iter").get<long>();
    s.lambda_sd = j.at("lambda_sd").get<double>();
    s.lambda_mt = j.at("lambda_mt").get<double>();
    s.lambda_T = j.at("lambda_T").get<double>();
    s.lambda_R = j.at("lambda_R").get<double>();
    s.lambda_adv = j.at("lambda_adv").get<double>();
    s.alpha_N_T = j.at("alpha_N_T").get<int>();
    s.alpha_N_R = j.at("alpha_N_R").get<int>();
    s.lr = j.at("lr").get<double>();
    return s;
}

json losses_to_json(const LossBreakdown& b) {
    auto mean_size = [](const std::vector<std::vector<int>>& sets) {
        if (sets.empty()) return 0.0;
        double n = 0.0;
        for (const auto& s : sets) n += static_cast<double>(s.size());
        return n / static_cast<double>(sets.size());
    };
    return {{"l_source", b.l_source},
            {"l_adv", b.l_adv},
            {"l_d", b.l_d},
            {"l_sd", b.l_sd},
            {"l_pseudo_mdam", b.l_pseudo_mdam},
            {"l_mt", b.l_mt},
            {"l_pseudo_refine", b.l_pseudo_refine},
            {"total", b.total},
            {"mean_selected_mdam", mean_size(b.selected_joints_mdam)},
            {"mean_selected_refine", mean_size(b.selected_joints_refine)}};
}

json pck_to_json(const PckReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json per_joint = json::array();
    for (const auto& v : r.per_joint) per_joint.push_back(opt(v));
    json groups = json::array();
    for (const auto& [name, v] : r.per_group) groups.push_back({{"group", name}, {"pck", opt(v)}});
    return {{"alpha", r.alpha},   {"mean", opt(r.mean)},     {"per_joint", per_joint},
            {"per_group", groups}, {"scored", r.scored},     {"correct", r.correct}};
}

} // namespace kpda
