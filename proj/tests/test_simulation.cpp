#include "doctest.h"

#include "glidesim/simulation.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace glidesim;

namespace {

// 4x4x4 torus, two 2-node pilots, 100 short inspiral tasks.
Scenario tiny() {
    Scenario s = default_scenario();
    s.cluster.g = 4;
    s.pilots.groups = 2;
    s.pilots.nodes_per_group = 2;
    s.pilots.stagger_s = 900;
    s.workflow.data_days = 0.001;
    s.workflow.scale = 1;
    s.workflow.runtime_lo_s = 600;
    s.workflow.runtime_hi_s = 1200;
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream b;
    b << in.rdbuf();
    return b.str();
}

}  // namespace

TEST_CASE("a small run completes with consistent samples") {
    const auto r = simulate(tiny());
    CHECK(r.exit_code == 0);
    CHECK(r.summary.complete);
    CHECK(r.summary.tasks_done == r.summary.tasks_total);
    CHECK(r.summary.tasks_total == 102);
    REQUIRE_FALSE(r.samples.empty());
    for (const auto& s : r.samples) {
        CHECK(s.cores_busy <= s.cores_provisioned);
        CHECK(s.tasks_waiting >= 0);
    }
    CHECK(r.samples.back().tasks_running == 0);
    CHECK(r.samples.back().pilots_active == 0);
    CHECK(r.invariant_violations == 0);
    CHECK(r.summary.time_avg_utilization > 0);
    CHECK(r.summary.time_avg_utilization <= 1);
}

TEST_CASE("nothing is provisioned before the first pilot starts") {
    auto s = tiny();
    s.pilots.offsets_s = {600, 900};
    const auto r = simulate(s);
    int before = 0;
    for (const auto& x : r.samples) {
        if (x.t_s >= 600) break;
        CHECK(x.cores_provisioned == 0);
        ++before;
    }
    CHECK(before > 0);
}

TEST_CASE("busy core time equals the sum of task runtimes") {
    const auto r = simulate(tiny());
    CHECK(r.summary.busy_core_seconds == doctest::Approx(r.summary.expected_busy_core_seconds).epsilon(1e-6));
    double want = 0;
    const auto fresh = generate(tiny().workflow, tiny().engine.seed);
    for (const auto& t : fresh.tasks()) {
        if (t.stage == Stage::Inspiral) want += t.runtime_s;
    }
    CHECK(r.summary.busy_core_seconds == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("slow binding stretches busy time by the speed factor") {
    auto s = tiny();
    s.pilots.depth = 4;
    const auto r = simulate(s);
    CHECK(r.exit_code == 0);
    const auto fresh = generate(s.workflow, s.engine.seed);
    double want = 0;
    for (const auto& t : fresh.tasks()) {
        if (t.stage == Stage::Inspiral) want += t.runtime_s / 0.25;
    }
    CHECK(r.summary.busy_core_seconds == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("pilot lifecycle in the log") {
    const auto r = simulate(tiny());
    std::map<std::int64_t, std::vector<std::string>> events;
    for (const auto& e : r.pilot_log) events[e.pilot_id].push_back(e.event.substr(0, e.event.find(' ')));
    REQUIRE(events.size() == 2);
    for (const auto& [pid, ev] : events) {
        REQUIRE(ev.size() == 4);
        CHECK(ev[0] == "submitted");
        CHECK(ev[1] == "provisioned");
        CHECK(ev[2] == "serving");
        CHECK(ev[3] == "drained");
    }
}

TEST_CASE("a pilot that arrives after the queue empties exits at once") {
    auto s = tiny();
    s.pilots.offsets_s = {0, 30000};
    const auto r = simulate(s);
    CHECK(r.exit_code == 0);
    double serving = -1, ended = -1;
    for (const auto& e : r.pilot_log) {
        if (e.pilot_id != 2) continue;
        if (e.event == "serving") serving = e.t.seconds();
        if (e.event == "idle") ended = e.t.seconds();
    }
    CHECK(serving >= 30000);
    CHECK(ended == serving);
}

TEST_CASE("pilots drain only after their last task") {
    const auto r = simulate(tiny());
    double last_end = 0;
    for (const auto& e : r.pilot_log) {
        if (e.event == "drained") last_end = std::max(last_end, e.t.seconds());
    }
    // the final Post task runs locally after the last inspiral finishes on a pilot
    CHECK(last_end <= r.summary.makespan_s);
    CHECK(last_end >= r.summary.makespan_s - tiny().workflow.local_runtime_s - 1);
    CHECK(r.summary.last_pilot_end_s == doctest::Approx(last_end));
}

TEST_CASE("walltime kills preempt and requeue, then fail permanently") {
    auto s = tiny();
    s.pilots.walltime_s = 300;
    s.engine.end_time_s = 86400;
    const auto r = simulate(s);
    CHECK(r.exit_code == 2);
    int retried = 0;
    for (const auto& row : parse_dag_dump(r.dag_dump).tasks) retried += row.attempts > 0;
    CHECK(retried > 0);
    int kills = 0;
    for (const auto& e : r.pilot_log) kills += e.event == "walltime-killed";
    CHECK(kills == 2);
}

TEST_CASE("a full scratch volume leads to exit 2") {
    auto s = tiny();
    s.staging.scratch_capacity_bytes = 10'000'000;
    const auto r = simulate(s);
    CHECK(r.exit_code == 2);
    CHECK(r.summary.tasks_failed > 0);
}

TEST_CASE("random preemptions are absorbed by retries") {
    auto s = tiny();
    s.faults.preemption_rate_per_hour = 2;
    s.faults.preemption_hold_s = 600;
    s.workflow.retry_limit = 50;
    const auto r = simulate(s);
    CHECK(r.summary.preemptions > 0);
    CHECK(r.exit_code == 0);
    CHECK(r.invariant_violations == 0);
}

TEST_CASE("runs are byte-identical for a fixed seed") {
    const auto a = simulate(tiny()), b = simulate(tiny());
    CHECK(metrics_csv(a.samples) == metrics_csv(b.samples));
    auto s = tiny();
    s.engine.seed = 2;
    CHECK(metrics_csv(simulate(s).samples) != metrics_csv(a.samples));
}

TEST_CASE("outputs are written and report rebuilds the summary") {
    const auto dir = std::filesystem::temp_directory_path() / "glidesim_sim_test";
    std::filesystem::remove_all(dir);
    auto s = tiny();
    s.payload.enabled = true;
    CHECK(run(s, dir.string()) == 0);
    for (const char* f : {"metrics.csv", "summary.txt", "io.csv", "pilots.log", "pool.csv", "availability.csv",
                          "dag.txt", "utilization.svg", "io.svg", "triggers.csv", "scenario.txt"}) {
        CAPTURE(f);
        CHECK(std::filesystem::exists(dir / f));
    }
    const auto rebuilt = report(dir.string());
    const auto again = summarize(parse_metrics_csv(slurp(dir / "metrics.csv")));
    CHECK(rebuilt.plateau_count == again.plateau_count);
    CHECK(std::filesystem::exists(dir / "report.txt"));
    CHECK(slurp(dir / "pool.csv").rfind("t_s,pilot_id,site,slots_total,slots_busy\n", 0) == 0);
    CHECK(slurp(dir / "availability.csv").rfind("t_s,free_cores,drained_cores,busy_cores\n", 0) == 0);
    const auto parsed = parse_scenario(slurp(dir / "scenario.txt"));
    CHECK(scenario_text(parsed) == scenario_text(s));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a single-value sweep matches a plain run") {
    const auto rows = sweep(tiny(), "nodes_per_group", {"2"});
    REQUIRE(rows.size() == 1);
    const auto r = simulate(tiny());
    CHECK(summary_text(rows[0].summary) == summary_text(r.summary));
    CHECK_THROWS_AS(sweep(tiny(), "nope", {"1"}), ScenarioError);
    const auto csv = sweep_csv("nodes_per_group", rows);
    CHECK(csv.rfind("nodes_per_group,exit_code,", 0) == 0);
}

TEST_CASE("payload oracle and invariance helpers") {
    CHECK(check_payload_oracle(5, 1).ok());
    const auto inv = check_schedule_invariance(invariance_scenario(), {1, 2});
    CHECK(inv.identical());
    CHECK(inv.csvs.front().find("rank,template_id") == 0);
}

TEST_CASE("small pilot groups reach steady state first") {
    const auto base = load_scenario(std::string(GLIDESIM_SOURCE_DIR) + "/scenarios/fig5.scenario");
    const auto rows = sweep(base, "nodes_per_group", {"10", "25", "50", "100"});
    REQUIRE(rows.size() == 4);
    const auto& first = rows[0].summary;
    REQUIRE(first.steady_state_s >= 0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double t = rows[i].summary.steady_state_s;
        CHECK((t < 0 || t > first.steady_state_s));
        CHECK(rows[i].summary.time_avg_utilization < first.time_avg_utilization);
    }
}
