#pragma once

#include "glidesim/classad.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace glidesim {

using TaskId = std::int64_t;

struct FileRef {
    std::string name;
    std::int64_t size_bytes = 0;
};

enum class Stage : std::uint8_t { Pre, Inspiral, Post };
enum class TaskState : std::uint8_t { Waiting, Ready, Staging, Running, Done, Failed };
enum class SiteClass : std::uint8_t { Local, Osg };

std::string_view to_string(Stage s);
std::string_view to_string(TaskState s);
std::string_view to_string(SiteClass s);

struct TaskSpec {
    TaskId id = 0;
    Stage stage = Stage::Pre;
    std::vector<FileRef> inputs;
    double runtime_lo_s = 0;
    double runtime_hi_s = 0;
    double runtime_s = 0;  // sampled from [lo, hi)
    std::int64_t memory_demand_bytes = 0;
    std::int64_t io_demand_bytes = 0;
    std::int64_t output_bytes = 0;
    int reread_count = 0;
    int frame_index = 0;
    RequirementExpr requirements;
    SiteClass route = SiteClass::Local;
    TaskState state = TaskState::Waiting;
    int attempts = 0;
};

struct WorkflowParams {
    double data_days = 0.083;
    double scale = 1.0;
    std::int64_t frame_bytes = 400'000'000;
    double frame_span_s = 4096;
    double runtime_lo_s = 3 * 3600.0;
    double runtime_hi_s = 5 * 3600.0;
    double local_runtime_s = 30;
    std::int64_t memory_bytes = 1'500'000'000;
    std::int64_t output_bytes = 10'000'000;
    int reread_count = 3;
    int retry_limit = 3;
};

using RoutePolicy = std::map<Stage, SiteClass>;

RoutePolicy default_route_policy();

enum class FailureReason : std::uint8_t { Preempted, WalltimeKilled, ScratchFull, Rejected, Other };
std::string_view to_string(FailureReason r);

enum class FailureOutcome : std::uint8_t { Retry, Permanent };

struct StateCounts {
    std::int64_t waiting = 0, ready = 0, staging = 0, running = 0, done = 0, failed = 0;
    std::int64_t total() const { return waiting + ready + staging + running + done + failed; }
};

/// Staged task graph: Pre -> Inspiral fan-out -> Post fan-in.
class WorkflowDag {
public:
    WorkflowDag() = default;

    /// Builds an empty graph; tasks and edges are added by hand (tests) or by generate().
    TaskId add_task(TaskSpec spec);
    void add_edge(TaskId parent, TaskId child);

    const TaskSpec& task(TaskId id) const;
    TaskSpec& task(TaskId id);
    bool has_task(TaskId id) const { return id >= 0 && static_cast<std::size_t>(id) < tasks_.size(); }
    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    const std::vector<TaskId>& parents(TaskId id) const { return parents_.at(static_cast<std::size_t>(id)); }
    const std::vector<TaskId>& children(TaskId id) const { return children_.at(static_cast<std::size_t>(id)); }
    std::vector<std::pair<TaskId, TaskId>> edges() const;

    std::size_t size() const { return tasks_.size(); }
    std::size_t count_stage(Stage s) const;

    const RoutePolicy& route() const { return route_; }
    void set_route(RoutePolicy policy) { route_ = std::move(policy); }

    int retry_limit() const { return retry_limit_; }
    void set_retry_limit(int limit) { retry_limit_ = limit; }

    /// Waiting tasks whose parents are all Done move to Ready and are returned.
    std::vector<TaskId> ready_tasks();

    void mark_staging(TaskId id);
    void mark_running(TaskId id);
    void mark_done(TaskId id);
    /// Task must be Staging or Running. Throws std::invalid_argument otherwise.
    FailureOutcome record_failure(TaskId id, FailureReason reason);
    /// Ready task refused by admission control.
    void mark_rejected(TaskId id);

    StateCounts counts() const;
    bool complete() const;
    bool has_permanent_failure() const { return permanent_failures_ > 0; }
    /// No task is Ready/Staging/Running and nothing Waiting can still become ready.
    bool finished() const;

    bool is_acyclic() const;
    /// Property checks: acyclic, Inspiral has a Pre parent, Post has an Inspiral parent.
    bool well_formed() const;

    /// `id,stage,state,attempts,inputs;` per task followed by the edge list.
    std::string dump() const;

private:
    void transition(TaskId id, TaskState from, TaskState to);

    std::vector<TaskSpec> tasks_;
    std::vector<std::vector<TaskId>> parents_;
    std::vector<std::vector<TaskId>> children_;
    std::vector<int> undone_parents_;
    RoutePolicy route_ = default_route_policy();
    int retry_limit_ = 3;
    std::int64_t permanent_failures_ = 0;
    std::vector<TaskId> waiting_roots_;
};

/// Builds a workflow with round(100000 * data_days * scale) inspiral tasks.
WorkflowDag generate(const WorkflowParams& params, std::uint64_t root_seed);

/// Rewrites each task's requirements; osg-routed tasks require a glidein at `site`.
void route_stages(WorkflowDag& dag, const RoutePolicy& policy, const std::string& site);

struct DagDumpRow {
    TaskId id = 0;
    std::string stage;
    std::string state;
    int attempts = 0;
    std::vector<std::string> inputs;
};

struct ParsedDagDump {
    std::vector<DagDumpRow> tasks;
    std::vector<std::pair<TaskId, TaskId>> edges;
};

ParsedDagDump parse_dag_dump(std::string_view text);

}  // namespace glidesim
