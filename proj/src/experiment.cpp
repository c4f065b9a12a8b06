#include "chainsim/experiment.hpp"

#include <algorithm>

#include "chainsim/simulator.hpp"
#include "chainsim/topology.hpp"

namespace chainsim {

const char* preset_name(ExperimentPreset p) {
    switch (p) {
    case ExperimentPreset::custom: return "custom";
    case ExperimentPreset::mixed_vr_holograms: return "mixed_vr_holograms";
    case ExperimentPreset::network_assisted_transport: return "network_assisted_transport";
    case ExperimentPreset::detnet: return "detnet";
    case ExperimentPreset::hp_monitoring: return "hp_monitoring";
    }
    return "custom";
}

std::optional<ExperimentPreset> preset_from_name(const std::string& s) {
    for (ExperimentPreset p :
         {ExperimentPreset::custom, ExperimentPreset::mixed_vr_holograms,
          ExperimentPreset::network_assisted_transport, ExperimentPreset::detnet,
          ExperimentPreset::hp_monitoring})
        if (s == preset_name(p)) return p;
    return std::nullopt;
}

nlohmann::ordered_json ReportBundle::to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [name, rep] : variants) j[name] = rep.to_json();
    return j;
}

Scenario derive_baseline(const Scenario& scn) {
    Scenario b = scn;
    for (auto& c : b.chains)
        for (auto& nf : c.nfs)
            if (nf.kind == NfKind::transport_assistant) nf.kind = NfKind::forwarder;
    for (auto& f : b.flows) f.transport = TransportMode::e2e;
    return b;
}

namespace {

bool chain_has(const ScenarioChain& c, NfKind k) {
    return std::any_of(c.nfs.begin(), c.nfs.end(),
                       [k](const NfSpec& nf) { return nf.kind == k; });
}

} // namespace

void check_preset(const Scenario& scn, ExperimentPreset preset) {
    switch (preset) {
    case ExperimentPreset::custom:
        return;
    case ExperimentPreset::mixed_vr_holograms: {
        for (const auto& c : scn.chains)
            if (chain_has(c, NfKind::encoder) && chain_has(c, NfKind::cropper)) return;
        throw PresetPreconditionFailed(
            "mixed_vr_holograms needs a chain with an encoder and a cropper");
    }
    case ExperimentPreset::network_assisted_transport: {
        for (const auto& c : scn.chains)
            if (chain_has(c, NfKind::transport_assistant)) return;
        throw PresetPreconditionFailed(
            "network_assisted_transport needs a chain with a transport assistant");
    }
    case ExperimentPreset::detnet: {
        const ScenarioChain* chain = nullptr;
        for (const auto& c : scn.chains)
            if (chain_has(c, NfKind::prf) && chain_has(c, NfKind::pef) && chain_has(c, NfKind::pof))
                chain = &c;
        if (!chain)
            throw PresetPreconditionFailed(
                "detnet needs a chain with replication, elimination and ordering functions");
        // The replicated span must actually have two link-disjoint paths.
        PhysicalTopology topo = scn.build_topology();
        for (const auto& f : scn.flows) {
            if (f.chain != chain->name) continue;
            PopId sp = topo.endpoint_pop(scn.endpoint_id(f.src));
            for (const auto& d : f.dsts) {
                PopId dp = topo.endpoint_pop(scn.endpoint_id(d));
                if (sp == dp) continue;
                try {
                    if (disjoint_paths(topo, sp, dp, 2).size() < 2)
                        throw PresetPreconditionFailed(
                            "detnet needs two link-disjoint paths between " + f.src + " and " + d);
                } catch (const NoPathError&) {
                    throw PresetPreconditionFailed("no path between " + f.src + " and " + d);
                }
            }
        }
        return;
    }
    case ExperimentPreset::hp_monitoring: {
        for (const auto& c : scn.chains)
            if (chain_has(c, NfKind::monitor)) return;
        throw PresetPreconditionFailed("hp_monitoring needs a chain with a monitor function");
    }
    }
}

ReportBundle run_experiment(const Scenario& scn, ExperimentPreset preset) {
    check_preset(scn, preset);
    ReportBundle bundle;
    if (preset == ExperimentPreset::network_assisted_transport) {
        {
            Simulator sim(scn);
            bundle.variants["assisted"] = sim.run();
        }
        {
            Simulator sim(derive_baseline(scn));
            bundle.variants["baseline"] = sim.run();
        }
        return bundle;
    }
    Simulator sim(scn);
    bundle.variants["run"] = sim.run();
    return bundle;
}

////////////////////////////////////////////////////////////////////////////////
// Bundle diffing

namespace {

void diff_walk(const nlohmann::json& a, const nlohmann::json& b, const std::string& path,
               nlohmann::ordered_json& deltas, std::vector<std::string>& warnings) {
    if (a.is_object() && b.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            std::string sub = path.empty() ? it.key() : path + "." + it.key();
            if (!b.contains(it.key())) {
                warnings.push_back("only in a: " + sub);
                continue;
            }
            diff_walk(it.value(), b.at(it.key()), sub, deltas, warnings);
        }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key()))
                warnings.push_back("only in b: " + (path.empty() ? it.key() : path + "." + it.key()));
        return;
    }
    if (a.is_array() && b.is_array()) {
        size_t n = std::min(a.size(), b.size());
        if (a.size() != b.size())
            warnings.push_back(path + ": array sizes differ (" + std::to_string(a.size()) + " vs " +
                               std::to_string(b.size()) + ")");
        for (size_t i = 0; i < n; i++)
            diff_walk(a[i], b[i], path + "[" + std::to_string(i) + "]", deltas, warnings);
        return;
    }
    if (a.is_number() && b.is_number()) {
        double d = b.get<double>() - a.get<double>();
        if (d != 0.0) deltas[path] = d;
        return;
    }
    if (a != b) warnings.push_back(path + ": non-numeric values differ");
}

} // namespace

nlohmann::ordered_json compare(const nlohmann::json& a, const nlohmann::json& b) {
    nlohmann::ordered_json out;
    nlohmann::ordered_json deltas = nlohmann::ordered_json::object();
    std::vector<std::string> warnings;
    diff_walk(a, b, "", deltas, warnings);
    out["deltas"] = deltas; // sign convention: b minus a
    out["warnings"] = warnings;
    return out;
}

} // namespace chainsim
