#include "glidesim/scenario.hpp"
#include "glidesim/simulation.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

namespace {

glidesim::Scenario load(const std::string& path, std::optional<std::uint64_t> seed) {
    auto s = path.empty() ? glidesim::default_scenario() : glidesim::load_scenario(path);
    if (seed) s.engine.seed = *seed;
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"glidesim: pilot-job overlay simulator"};
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "print the default scenario with documentation and exit");

    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    auto common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--scenario", scenario_path, "scenario file (defaults apply when omitted)");
        if (needs_out) sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "overrides engine.seed");
    };

    auto* run = app.add_subcommand("run", "simulate one scenario");
    common(run, true);

    auto* sweep = app.add_subcommand("sweep", "simulate one scenario per value of a key");
    common(sweep, true);
    std::string key;
    std::vector<std::string> values;
    sweep->add_option("--key", key, "section.key to vary")->required();
    sweep->add_option("--values", values, "values, comma separated")->required()->delimiter(',');

    auto* validate = app.add_subcommand("validate", "payload oracle and schedule-invariance checks");
    common(validate, false);
    int instances = 100;
    validate->add_option("--instances", instances, "random payload instances");

    auto* report = app.add_subcommand("report", "re-render summary and charts from metrics.csv");
    report->add_option("--out", out_dir, "directory holding metrics.csv");

    CLI11_PARSE(app, argc, argv);

    if (print_defaults) {
        std::cout << glidesim::scenario_text(glidesim::default_scenario(), true);
        return 0;
    }
    try {
        if (run->parsed()) {
            const auto s = load(scenario_path, seed);
            const int code = glidesim::run(s, out_dir);
            std::cout << fmt::format("wrote {} (exit {})\n", out_dir, code);
            return code;
        }
        if (sweep->parsed()) {
            const auto s = load(scenario_path, seed);
            const auto rows = glidesim::sweep(s, key, values);
            std::filesystem::create_directories(out_dir);
            const auto csv = glidesim::sweep_csv(glidesim::resolve_key(key), rows);
            std::ofstream(std::filesystem::path(out_dir) / "sweep.csv") << csv;
            std::cout << csv;
            return 0;
        }
        if (validate->parsed()) {
            const auto oracle = glidesim::check_payload_oracle(instances, seed.value_or(1));
            std::cout << fmt::format("payload oracle: {} instances, max |dsnr| = {:.3g}, argmax mismatches = {}: {}\n",
                                     oracle.instances, oracle.max_abs_dsnr, oracle.argmax_mismatches,
                                     oracle.ok() ? "PASS" : "FAIL");
            auto s = scenario_path.empty() ? glidesim::invariance_scenario() : glidesim::load_scenario(scenario_path);
            const auto inv = glidesim::check_schedule_invariance(s, {1, 2, 3});
            std::cout << fmt::format("schedule invariance over seeds 1,2,3: {}\n", inv.identical() ? "PASS" : "FAIL");
            return oracle.ok() && inv.identical() ? 0 : 2;
        }
        if (report->parsed()) {
            const auto s = glidesim::report(out_dir);
            std::cout << glidesim::summary_text(s);
            return 0;
        }
    } catch (const glidesim::ScenarioError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cout << app.help();
    return 1;
}
