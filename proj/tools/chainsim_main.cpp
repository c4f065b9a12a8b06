#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "chainsim/experiment.hpp"
#include "chainsim/simulator.hpp"

using namespace chainsim;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("cannot write " + path.string());
    out << text;
}

int do_validate(const std::string& file) {
    try {
        Scenario s = load_scenario(file);
        std::cout << "ok: " << file << " (" << s.pops.size() << " pops, " << s.links.size()
                  << " links, " << s.chains.size() << " chains, " << s.flows.size() << " flows)"
                  << std::endl;
        return 0;
    } catch (const SimError& e) {
        std::cerr << "invalid: " << e.what() << std::endl;
        return 1;
    }
}

int do_run(const std::string& file, const std::string& preset_s,
           std::optional<uint64_t> seed, const std::string& out_dir) {
    Scenario scn;
    try {
        scn = load_scenario(file);
    } catch (const SimError& e) {
        std::cerr << "invalid: " << e.what() << std::endl;
        return 1;
    }
    auto preset = preset_from_name(preset_s);
    if (!preset) {
        std::cerr << "invalid: unknown preset '" << preset_s << "'" << std::endl;
        return 1;
    }
    if (seed) scn.seed = *seed;

    ReportBundle bundle;
    try {
        check_preset(scn, *preset);
    } catch (const PresetPreconditionFailed& e) {
        std::cerr << "invalid: " << e.what() << std::endl;
        return 1;
    }
    try {
        bundle = run_experiment(scn, *preset);
    } catch (const SimError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }

    try {
        std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        write_text(dir / "bundle.json", bundle.to_json().dump(2) + "\n");
        for (const auto& [name, rep] : bundle.variants) {
            write_text(dir / ("report_" + name + ".json"), rep.to_json().dump(2) + "\n");
            write_text(dir / ("report_" + name + ".csv"), rep.to_csv());
            write_text(dir / ("monitor_" + name + ".csv"), rep.monitor_csv());
            uint64_t delivered = 0, dropped = 0;
            for (const auto& [fid, fs] : rep.flows) {
                delivered += fs.delivered;
                dropped += fs.dropped_loss + fs.dropped_queue + fs.dropped_failure +
                           fs.dropped_admin + fs.dropped_stale;
            }
            std::cout << name << ": " << rep.events_executed << " events, " << delivered
                      << " delivered, " << dropped << " dropped" << std::endl;
        }
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "bundle.json").string()
                  << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}

int do_compare(const std::string& a_path, const std::string& b_path) {
    nlohmann::json a, b;
    try {
        std::ifstream fa(a_path), fb(b_path);
        if (!fa) throw SimError("cannot read " + a_path);
        if (!fb) throw SimError("cannot read " + b_path);
        a = nlohmann::json::parse(fa);
        b = nlohmann::json::parse(fb);
    } catch (const std::exception& e) {
        std::cerr << "invalid: " << e.what() << std::endl;
        return 1;
    }
    try {
        std::cout << compare(a, b).dump(2) << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"service chain network simulator"};
    app.require_subcommand(1);

    std::string file;
    std::string preset = "custom";
    std::string out_dir = ".";
    std::optional<uint64_t> seed;
    std::string cmp_a, cmp_b;

    CLI::App* validate = app.add_subcommand("validate", "parse and check a scenario file");
    validate->add_option("file", file, "scenario file")->required();

    CLI::App* run = app.add_subcommand("run", "run a scenario and write reports");
    run->add_option("file", file, "scenario file")->required();
    run->add_option("--preset", preset, "experiment preset")->capture_default_str();
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--out", out_dir, "output directory")->capture_default_str();

    CLI::App* cmp = app.add_subcommand("compare", "diff two report bundles");
    cmp->add_option("a", cmp_a, "first bundle.json")->required();
    cmp->add_option("b", cmp_b, "second bundle.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (validate->parsed()) return do_validate(file);
    if (run->parsed()) return do_run(file, preset, seed, out_dir);
    if (cmp->parsed()) return do_compare(cmp_a, cmp_b);
    return 1;
}
