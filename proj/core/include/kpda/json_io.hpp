#pragma once

#include <nlohmann/json.hpp>

#include "kpda/losses.hpp"
#include "kpda/pck.hpp"
#include "kpda/schedules.hpp"

namespace kpda {

nlohmann::json schedule_to_json(const ScheduleState& s);
ScheduleState schedule_from_json(const nlohmann::json& j);

/// Loss values only; the per-sample selected sets are summarised by their sizes.
nlohmann::json losses_to_json(const LossBreakdown& b);

nlohmann::json pck_to_json(const PckReport& r);

} // namespace kpda
