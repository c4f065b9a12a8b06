#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chainsim/experiment.hpp"
#include "chainsim/simulator.hpp"

namespace py = pybind11;
using namespace chainsim;

namespace {

std::string run_json(const Scenario& scn) {
    Simulator sim(scn);
    return sim.run().to_json().dump(2);
}

std::string run_experiment_json(const Scenario& scn, const std::string& preset) {
    auto p = preset_from_name(preset);
    if (!p) throw InvalidSpecError("unknown preset '" + preset + "'");
    return run_experiment(scn, *p).to_json().dump(2);
}

std::string compare_json(const std::string& a, const std::string& b) {
    return compare(nlohmann::json::parse(a), nlohmann::json::parse(b)).dump(2);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "service chain network simulator";

    // Base first: translators run newest-first, so derived classes match
    // before the catch-all.
    py::register_exception<SimError>(m, "SimulatorError");
    py::register_exception<ParseError>(m, "ScenarioParseError");
    py::register_exception<PresetPreconditionFailed>(m, "PresetPreconditionError");

    py::class_<Scenario>(m, "Scenario")
        .def_readwrite("seed", &Scenario::seed)
        .def_readwrite("duration", &Scenario::duration)
        .def("emit", &Scenario::emit, "canonical text form")
        .def("__repr__", [](const Scenario& s) {
            return "<Scenario pops=" + std::to_string(s.pops.size()) +
                   " chains=" + std::to_string(s.chains.size()) +
                   " flows=" + std::to_string(s.flows.size()) + ">";
        });

    m.def("load_scenario", &load_scenario, py::arg("path"),
          "parse and validate a scenario file");
    m.def("parse_scenario", &parse_scenario, py::arg("text"),
          "parse and validate scenario text");
    m.def("derive_baseline", &derive_baseline, py::arg("scenario"),
          "same scenario with assistants demoted and flows end to end");
    m.def("run", &run_json, py::arg("scenario"),
          "run one simulation, returns the report as a JSON string");
    m.def("run_experiment", &run_experiment_json, py::arg("scenario"), py::arg("preset"),
          "run an experiment preset, returns the bundle as a JSON string");
    m.def("compare", &compare_json, py::arg("bundle_a"), py::arg("bundle_b"),
          "numeric diff of two bundle JSON strings (deltas are b minus a)");
    m.def("presets", [] {
        return std::vector<std::string>{"custom", "mixed_vr_holograms",
                                        "network_assisted_transport", "detnet", "hp_monitoring"};
    });
}
