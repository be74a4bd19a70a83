#pragma once

#include "glidesim/engine.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace glidesim {

using JobId = std::int64_t;

/// g x g x g routers with nodes_per_router nodes each.
struct TorusSpec {
    int g = 24;
    int nodes_per_router = 2;
    int cores_per_node = 16;

    int routers() const { return g * g * g; }
    int nodes() const { return routers() * nodes_per_router; }
    std::int64_t cores() const { return static_cast<std::int64_t>(nodes()) * cores_per_node; }
    int router_index(int x, int y, int z) const;
    std::array<int, 3> router_coords(int router) const;
    int router_of_node(int node) const { return node / nodes_per_router; }
};

struct PrismDims {
    int dx = 1, dy = 1, dz = 1;
    int volume() const { return dx * dy * dz; }
    friend bool operator==(const PrismDims&, const PrismDims&) = default;
};

enum class JobKind : std::uint8_t { Hpc, Pilot };
enum class BatchState : std::uint8_t { Queued, Running, Done, Killed };

std::string_view to_string(BatchState s);

struct BatchJob {
    JobId id = 0;
    JobKind kind = JobKind::Hpc;
    PrismDims dims;          // Hpc only, in routers
    int node_count = 0;      // Pilot only
    double walltime_s = 0;
    /// Actual run length; negative means "until released" (pilots).
    double runtime_s = -1;
    int priority = 0;
    bool background = false;
    BatchState state = BatchState::Queued;
};

struct Placement {
    JobId job_id = 0;
    std::array<int, 3> origin{0, 0, 0};  // prism origin for Hpc jobs
    std::vector<int> routers;
    std::vector<int> nodes;
    SimTime start{};
    SimTime kill_at{};
};

struct Reservation {
    JobId job_id = 0;
    std::vector<int> node_set;  // sorted
    SimTime start_at{};
    SimTime duration{};
    SimTime created_at{};
};

struct CoreHours {
    double available = 0;
    double drained = 0;
    double busy = 0;
};

struct AvailabilityRow {
    SimTime t{};
    std::int64_t free_cores = 0;     // free and usable
    std::int64_t drained_cores = 0;  // free but blocked by drain-ahead
    std::int64_t busy_cores = 0;
};

/// HPC resource model: 3D torus, EASY backfill with one system reservation,
/// drain-ahead, walltime enforcement, and topology-free pilot placement.
class TorusCluster {
public:
    using StartFn = std::function<void(const BatchJob&, const Placement&)>;
    using EndFn = std::function<void(const BatchJob&, const Placement&, bool killed)>;

    TorusCluster(Engine& engine, TorusSpec spec, double max_walltime_s = 48 * 3600.0);

    const TorusSpec& spec() const { return spec_; }
    double max_walltime_s() const { return max_walltime_s_; }

    void on_start(StartFn fn) { on_start_ = std::move(fn); }
    void on_end(EndFn fn) { on_end_ = std::move(fn); }

    /// Enqueues and runs a backfill pass; returns the placement if the job started now.
    std::optional<Placement> place_hpc(BatchJob job, SimTime now);
    std::optional<Placement> place_pilot(BatchJob job, SimTime now);
    /// Enqueue without an immediate pass (a tick is scheduled at `now`).
    JobId submit(BatchJob job, SimTime now);

    /// EASY pass: start the head if possible, otherwise reserve it at its
    /// earliest feasible time and backfill jobs that do not delay it.
    std::vector<Placement> backfill_tick(SimTime now);

    /// Ends a running job normally (pilot drained).
    void release(JobId job, SimTime now);
    /// Forced termination at kill_at; no-op if the job already ended.
    void walltime_kill(JobId job, SimTime now);

    /// Full-system reservation: a prism g x g x g job that starts at `start_at`.
    JobId reserve_full_system(SimTime start_at, SimTime duration, SimTime now);
    const std::optional<Reservation>& reservation() const { return reservation_; }
    /// First instant free reserved nodes became unusable for a max-walltime job.
    std::optional<SimTime> drain_begin() const;

    double available_core_hours(SimTime window_start, SimTime window_end) const;
    CoreHours core_hours(SimTime window_start, SimTime window_end) const;
    AvailabilityRow availability_at(SimTime t) const;

    int free_nodes() const { return free_nodes_; }
    int occupied_nodes() const { return spec_.nodes() - free_nodes_; }
    bool node_free(int node) const { return owner_[static_cast<std::size_t>(node)] < 0; }
    JobId owner(int node) const { return owner_[static_cast<std::size_t>(node)]; }
    std::int64_t busy_cores() const { return static_cast<std::int64_t>(occupied_nodes()) * spec_.cores_per_node; }

    const BatchJob& job(JobId id) const { return jobs_.at(id); }
    bool has_job(JobId id) const { return jobs_.count(id) != 0; }
    const Placement* placement(JobId id) const;
    std::size_t queue_length() const { return queue_.size(); }
    std::vector<JobId> queued_jobs() const { return queue_; }
    std::vector<JobId> running_jobs() const;

    /// Occupancy conservation and disjointness, recomputed from placements.
    bool check_invariants() const;
    /// Every placement that started before a reservation on reserved nodes ends by its start.
    bool drain_ahead_respected() const { return drain_violations_ == 0; }
    std::uint64_t events_checked() const { return events_checked_; }

    /// Sum of cores held by background jobs, running or queued.
    std::int64_t background_demand_cores() const;

private:
    struct Shadow {
        SimTime at{};
        std::vector<char> nodes;  // mask, empty means none
    };

    JobId enqueue(BatchJob job);
    bool reserved_node(int node) const;
    std::optional<std::array<int, 3>> find_prism(const PrismDims& d, const std::vector<char>& node_free,
                                                 const std::vector<char>* forbidden) const;
    std::vector<int> prism_routers(const std::array<int, 3>& origin, const PrismDims& d) const;
    std::optional<std::vector<int>> find_nodes(int count, const std::vector<char>& node_free,
                                               const std::vector<char>* forbidden) const;
    std::optional<Placement> try_start(BatchJob& job, SimTime now, const Shadow* shadow);
    Placement start(BatchJob& job, std::vector<int> routers, std::vector<int> nodes, std::array<int, 3> origin,
                    SimTime now);
    void finish(JobId id, SimTime now, bool killed);
    std::optional<Shadow> compute_shadow(const BatchJob& head, SimTime now) const;
    void request_tick(SimTime now);
    void record_segment(SimTime now);
    void try_start_reservation(SimTime now);
    std::int64_t free_reserved_cores() const;

    Engine& engine_;
    TorusSpec spec_;
    double max_walltime_s_;
    std::vector<JobId> owner_;  // per node, -1 when free
    int free_nodes_;
    std::map<JobId, BatchJob> jobs_;
    std::map<JobId, Placement> placements_;
    std::map<JobId, std::uint64_t> generation_;
    std::vector<JobId> queue_;  // kept sorted by (priority desc, id)
    JobId next_id_ = 1;
    std::optional<Reservation> reservation_;
    std::vector<char> reserved_mask_;
    bool reservation_started_ = false;
    bool tick_pending_ = false;
    StartFn on_start_;
    EndFn on_end_;

    struct Segment {
        SimTime t{};
        std::int64_t free_reserved = 0;
        std::int64_t free_other = 0;
        std::int64_t busy = 0;
    };
    struct DrainWindow {
        SimTime from{};
        SimTime until{};
    };
    std::vector<Segment> history_;
    std::vector<DrainWindow> drain_windows_;
    std::uint64_t drain_violations_ = 0;
    std::uint64_t events_checked_ = 0;
};

/// Closed-loop generator of background prism jobs that keeps the offered
/// demand near a target fraction of the machine.
struct BackgroundLoadParams {
    double target_fraction = 0.0;
    int max_dim = 0;  // 0 means g / 2
    double walltime_min_s = 3600;
    double walltime_max_s = 48 * 3600.0;
    double runtime_min_fraction = 0.5;
};

class BackgroundLoad {
public:
    BackgroundLoad(TorusCluster& cluster, BackgroundLoadParams params, std::uint64_t seed);

    /// Fills the machine at `now` with jobs whose residual runtimes are drawn
    /// uniformly, so the run starts near steady state.
    void prime(SimTime now);
    /// Tops the queue back up to the target demand.
    void replenish(SimTime now);
    std::size_t generated() const { return generated_; }

private:
    BatchJob draw_job(bool residual);

    TorusCluster& cluster_;
    BackgroundLoadParams params_;
    RandomStream rng_;
    std::size_t generated_ = 0;
};

}  // namespace glidesim
