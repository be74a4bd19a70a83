#pragma once

#include "glidesim/engine.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace glidesim {

/// How pilots are released onto the cluster. `offsets_s`, when non-empty,
/// overrides the uniform stagger with explicit per-group submit offsets.
struct PilotPlan {
    int groups = 5;
    int nodes_per_group = 10;
    std::int64_t stagger_s = 1800;
    std::vector<std::int64_t> offsets_s;
    int depth = 32;
    std::int64_t walltime_s = 48 * 3600;
    std::int64_t startup_s = 60;
    int processes_per_node = 16;
    std::string site = "BlueWaters";

    int group_count() const { return offsets_s.empty() ? groups : static_cast<int>(offsets_s.size()); }
};

/// Throws std::invalid_argument when a plan field is out of range.
void validate(const PilotPlan& plan);

enum class PilotState : std::uint8_t { Queued, Provisioned, Serving, Draining, Terminated };
std::string_view to_string(PilotState s);

/// Fraction of nominal throughput when `processes_per_node` processes share
/// min(depth, cores_per_node) cores.
double effective_speed(int depth, int cores_per_node, int processes_per_node);

struct PilotLaunch {
    int group = 0;
    SimTime submit_at{};
    int nodes = 0;
};

/// Group k is submitted at t0 + k * stagger (or t0 + offsets[k]).
std::vector<PilotLaunch> launch_plan(const PilotPlan& plan, SimTime t0);

class Pilot {
public:
    Pilot(std::int64_t id, int group, int node_count, int processes_per_node, double speed_factor);

    std::int64_t id() const { return id_; }
    int group() const { return group_; }
    int node_count() const { return node_count_; }
    int slots() const { return node_count_ * processes_per_node_; }
    double speed_factor() const { return speed_factor_; }
    PilotState state() const { return state_; }
    const std::vector<int>& nodes() const { return nodes_; }
    bool holds_nodes() const { return !nodes_.empty(); }
    bool active() const { return state_ == PilotState::Serving || state_ == PilotState::Draining; }

    std::int64_t batch_job() const { return batch_job_; }
    void set_batch_job(std::int64_t job) { batch_job_ = job; }

    /// Transitions are monotone in the listed order; skipping forward is
    /// allowed (a killed pilot goes straight to Terminated).
    void provision(std::vector<int> nodes);
    void serve();
    void drain();
    void terminate();

private:
    void advance(PilotState to);

    std::int64_t id_;
    int group_;
    int node_count_;
    int processes_per_node_;
    double speed_factor_;
    PilotState state_ = PilotState::Queued;
    std::vector<int> nodes_;
    std::int64_t batch_job_ = -1;
};

struct PilotLogEntry {
    SimTime t{};
    std::int64_t pilot_id = 0;
    std::string event;
};

}  // namespace glidesim
