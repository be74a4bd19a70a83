#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace glidesim {

struct Sample {
    double t_s = 0;
    std::int64_t cores_provisioned = 0;
    std::int64_t cores_busy = 0;
    double read_MBps = 0;
    double write_MBps = 0;
    std::int64_t pilots_active = 0;
    std::int64_t tasks_waiting = 0;
    std::int64_t tasks_running = 0;
    std::int64_t tasks_done = 0;
    std::int64_t tasks_failed = 0;
    double mds_ops_per_s = 0;
    // Not part of metrics.csv; exported in io.csv.
    std::int64_t active_transfers = 0;
};

struct RunSummary {
    int plateau_count = 0;
    double steady_state_s = -1;  // -1 when never reached
    double makespan_s = 0;
    double peak_read_MBps = 0;
    double time_avg_utilization = 0;
    double opportunistic_core_hours = 0;

    double steady_state_threshold = 0.95;
    bool complete = false;
    std::int64_t tasks_total = 0;
    std::int64_t tasks_done = 0;
    std::int64_t tasks_failed = 0;
    double last_task_start_s = 0;
    double last_pilot_end_s = 0;
    /// Earliest time from which at most one pilot stays active; -1 if never.
    double single_pilot_from_s = -1;
    double busy_core_seconds = 0;
    double provisioned_core_seconds = 0;
    double expected_busy_core_seconds = 0;
    std::int64_t mds_ops = 0;
    double read_bytes = 0;
    double write_bytes = 0;
    std::int64_t preemptions = 0;
};

inline constexpr const char* kMetricsHeader =
    "t_s,cores_provisioned,cores_busy,read_MBps,write_MBps,pilots_active,tasks_waiting,tasks_running,tasks_done,"
    "tasks_failed,mds_ops_per_s";

/// Counts constant runs of cores_provisioned lasting longer than
/// min_plateau_s, with strictly increasing non-zero values, from the start up
/// to and including the first run at the series maximum.
int detect_plateaus(const std::vector<Sample>& series, double min_plateau_s = 600);

/// First sample time with cores_busy >= threshold * max(cores_provisioned), or -1.
double steady_state_time(const std::vector<Sample>& series, double threshold = 0.95);

/// Sample-derived fields (plateaus, steady state, peak read rate). The
/// remaining fields come from exact integrals kept by the simulation.
RunSummary summarize(const std::vector<Sample>& series, double threshold = 0.95, double min_plateau_s = 600);

/// Maximal runs of read_MBps at or above frac * max(read_MBps).
int count_read_spikes(const std::vector<Sample>& series, double frac = 0.5);

/// Coefficient of determination of the least-squares line y ~ a + b x.
double linear_r2(const std::vector<double>& x, const std::vector<double>& y);

std::string metrics_csv(const std::vector<Sample>& series);
std::vector<Sample> parse_metrics_csv(std::string_view text);
std::string io_csv(const std::vector<Sample>& series);
std::string summary_text(const RunSummary& s);

std::string utilization_svg(const std::vector<Sample>& series);
std::string io_svg(const std::vector<Sample>& series);

}  // namespace glidesim
