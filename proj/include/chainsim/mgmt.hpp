#pragma once

#include <map>
#include <string>
#include <vector>

#include "chainsim/simulator.hpp"

namespace chainsim {

// Management plane: chain admission and embedding, elastic scaling on a
// periodic controller tick, failure handling and periodic monitors. Control
// traffic is abstracted as scheduling delay (half a control RTT per one-way
// message) rather than packets on data links.
class Manager {
  public:
    explicit Manager(Simulator& sim) : _sim(sim) {}

    // Admission: translate + map now, resources reserved immediately;
    // instances come up one control RTT plus boot time later. On placement
    // failure the app is marked failed and nothing stays reserved.
    void signal_instantiate(uint32_t app_idx);
    void release_app(uint32_t app_idx);

    // Periodic utilization scan; schedules itself.
    void controller_tick();

    // Fault plumbing from the engine.
    void on_link_change(LinkId id, bool up);
    void on_pop_change(PopId id, bool up);

    // Periodic monitors from the [monitoring] section.
    void start_monitors();
    void set_monitor_period(const std::string& target, double period);

  private:
    void provision_backups(AppRt& app);
    void scale_out(AppRt& app, const std::string& nf, double util);
    void scale_in(AppRt& app, const std::string& nf, double util);
    void fail_over_pop(AppRt& app, PopId pop, double fail_time);
    void monitor_fire(size_t idx);
    double monitor_value(const ScenarioMonitor& m, double period);

    Simulator& _sim;
    struct MonitorRt {
        ScenarioMonitor cfg;
        double last_at = 0.0;
    };
    std::vector<MonitorRt> _monitors;
    // Compute reserved outside the embedding plan (spares, scaled instances,
    // reactive replacements), so release stays exact.
    std::map<uint64_t, ResourceVector> _manual_reserved;
};

} // namespace chainsim
