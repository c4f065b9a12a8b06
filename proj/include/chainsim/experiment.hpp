#pragma once

#include <map>
#include <optional>
#include <string>

#include "chainsim/report.hpp"
#include "chainsim/scenario.hpp"

namespace chainsim {

// Canned experiment shapes. Each names a structural pattern the scenario
// must already contain; run_experiment checks the pattern and runs one or
// more simulation variants off the same scenario.
enum class ExperimentPreset {
    custom,
    mixed_vr_holograms,
    network_assisted_transport,
    detnet,
    hp_monitoring,
};

const char* preset_name(ExperimentPreset p);
std::optional<ExperimentPreset> preset_from_name(const std::string& s);

// Reports keyed by variant name ("run", or "assisted"/"baseline" for the
// paired-transport preset).
struct ReportBundle {
    std::map<std::string, SimulationReport> variants;

    nlohmann::ordered_json to_json() const;
};

// The same scenario with every transport assistant demoted to a plain
// forwarder and every flow running its own end to end loop. Induced losses,
// rates and seeds stay identical, so paired comparisons isolate the
// in-network recovery machinery.
Scenario derive_baseline(const Scenario& scn);

// Throws PresetPreconditionFailed naming the missing structure.
void check_preset(const Scenario& scn, ExperimentPreset preset);

ReportBundle run_experiment(const Scenario& scn, ExperimentPreset preset);

// Recursive numeric diff of two bundle JSON trees: deltas are b minus a.
// Keys present on only one side are skipped and listed under "warnings".
nlohmann::ordered_json compare(const nlohmann::json& a, const nlohmann::json& b);

} // namespace chainsim
