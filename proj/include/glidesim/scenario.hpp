#pragma once

#include "glidesim/cluster.hpp"
#include "glidesim/payload.hpp"
#include "glidesim/pilot.hpp"
#include "glidesim/staging.hpp"
#include "glidesim/workflow.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace glidesim {

struct StagingParams {
    double aggregate_MBps = 72.7;
    double per_stream_cap_MBps = 72.7;
    FsConfig fs;
    std::int64_t scratch_capacity_bytes = kUnlimitedScratch;
    std::int64_t scratch_per_task_bytes = 50'000'000;
};

struct EngineParams {
    std::uint64_t seed = 1;
    double end_time_s = 7 * 86400.0;
    double sample_period_s = 60;
};

struct FaultParams {
    double preemption_rate_per_hour = 0;
    double preemption_hold_s = 1800;
    double hpc_background_load = 0;
    int hpc_max_dim = 0;  // 0: half the torus edge
    double reservation_at_s = -1;  // < 0: no reservation
    double reservation_duration_s = 12 * 3600.0;
};

struct Scenario {
    TorusSpec cluster;
    PilotPlan pilots;
    bool workflow_enabled = true;
    WorkflowParams workflow;
    StagingParams staging;
    PayloadParams payload;
    EngineParams engine;
    FaultParams faults;
    double steady_state_threshold = 0.95;
    double min_plateau_s = 600;
};

/// Parse or validation failure; line is 0 when not tied to a line.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(int line, const std::string& what);
    int line() const { return line_; }

private:
    int line_;
};

/// Defaults replay the 50-node staggered production run.
Scenario default_scenario();

/// `[section]` headers, `key = value` lines, `#` comments. Unknown sections
/// or keys, out-of-range values and duplicates raise ScenarioError.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

/// Cross-field checks; throws ScenarioError.
void validate(const Scenario& s);

/// Sets one key ("section.key", or a bare key when unambiguous) from text.
void set_value(Scenario& s, const std::string& key, const std::string& value);
std::string get_value(const Scenario& s, const std::string& key);
/// Canonical "section.key" for a possibly bare key; throws ScenarioError if unknown.
std::string resolve_key(const std::string& key);

/// Re-parsable scenario text; with `documented` every key carries its range and meaning.
std::string scenario_text(const Scenario& s, bool documented = false);

}  // namespace glidesim
