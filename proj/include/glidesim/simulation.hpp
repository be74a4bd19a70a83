#pragma once

#include "glidesim/cluster.hpp"
#include "glidesim/matchmaker.hpp"
#include "glidesim/metrics.hpp"
#include "glidesim/payload.hpp"
#include "glidesim/pilot.hpp"
#include "glidesim/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace glidesim {

struct RunOptions {
    /// Re-verify cluster occupancy after every batch start and end (O(nodes) each).
    bool check_invariants_every_event = false;
};

struct PoolSample {
    double t_s = 0;
    PoolRow row;
};

/// Cumulative counters at each sample, kept for analysis but not exported.
struct CumulativePoint {
    double t_s = 0;
    double read_bytes = 0;
    double write_bytes = 0;
    std::int64_t task_starts = 0;
};

struct RunResult {
    int exit_code = 0;  // 0 complete, 2 permanent failure or unfinished
    RunSummary summary;
    std::vector<Sample> samples;
    std::vector<CumulativePoint> cumulative;
    std::vector<PilotLogEntry> pilot_log;
    std::vector<PoolSample> pool;
    std::vector<AvailabilityRow> availability;
    std::vector<Trigger> top_triggers;
    std::string dag_dump;

    std::uint64_t invariant_violations = 0;
    std::uint64_t invariant_checks = 0;
    bool drain_ahead_respected = true;
    double drain_begin_s = -1;
    double reservation_at_s = -1;
    double reservation_started_s = -1;
    double max_batch_walltime_s = 0;
    std::int64_t mds_ops = 0;
    std::int64_t mds_nodes_attached = 0;
    std::int64_t osg_task_starts = 0;
    double peak_transfer_rate_Bps = 0;
};

/// Runs one scenario to completion (or to engine.end_time_s).
RunResult simulate(const Scenario& scenario, const RunOptions& options = {});

/// Writes metrics.csv, summary.txt, pilots.log, pool.csv, io.csv,
/// availability.csv, dag.txt, the SVG charts and triggers.csv (payload runs).
void write_outputs(const RunResult& result, const Scenario& scenario, const std::string& out_dir);

/// simulate + write_outputs; returns the exit code.
int run(const Scenario& scenario, const std::string& out_dir);

struct SweepRow {
    std::string value;
    int exit_code = 0;
    RunSummary summary;
};

/// One run per value of `key`; throws ScenarioError for an unknown key or bad value.
std::vector<SweepRow> sweep(const Scenario& base, const std::string& key, const std::vector<std::string>& values);
std::string sweep_csv(const std::string& key, const std::vector<SweepRow>& rows);

struct PayloadCheck {
    int instances = 0;
    double max_abs_dsnr = 0;
    int argmax_mismatches = 0;
    bool ok() const { return max_abs_dsnr <= 1e-9 && argmax_mismatches == 0; }
};

/// FFT path against the time-domain reference on random instances.
PayloadCheck check_payload_oracle(int instances, std::uint64_t seed, int n = 256, int m = 32, int k = 8);

struct InvarianceCheck {
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> csvs;
    bool identical() const;
};

/// Small payload-enabled workload used when no scenario is given.
Scenario invariance_scenario();

/// Runs the payload-enabled scenario once per engine seed and collects trigger CSVs.
InvarianceCheck check_schedule_invariance(const Scenario& scenario, const std::vector<std::uint64_t>& seeds);

/// Rebuilds summary.txt fields and charts from an existing metrics.csv.
RunSummary report(const std::string& out_dir, double threshold = 0.95, double min_plateau_s = 600);

}  // namespace glidesim
