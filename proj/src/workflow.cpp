#include "glidesim/workflow.hpp"

#include "glidesim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Pre: return "Pre";
        case Stage::Inspiral: return "Inspiral";
        case Stage::Post: return "Post";
    }
    return "?";
}

std::string_view to_string(TaskState s) {
    switch (s) {
        case TaskState::Waiting: return "Waiting";
        case TaskState::Ready: return "Ready";
        case TaskState::Staging: return "Staging";
        case TaskState::Running: return "Running";
        case TaskState::Done: return "Done";
        case TaskState::Failed: return "Failed";
    }
    return "?";
}

std::string_view to_string(SiteClass s) { return s == SiteClass::Local ? "local" : "osg"; }

std::string_view to_string(FailureReason r) {
    switch (r) {
        case FailureReason::Preempted: return "preempted";
        case FailureReason::WalltimeKilled: return "walltime";
        case FailureReason::ScratchFull: return "scratch-full";
        case FailureReason::Rejected: return "rejected";
        case FailureReason::Other: return "other";
    }
    return "?";
}

RoutePolicy default_route_policy() {
    return {{Stage::Pre, SiteClass::Local}, {Stage::Inspiral, SiteClass::Osg}, {Stage::Post, SiteClass::Local}};
}

TaskId WorkflowDag::add_task(TaskSpec spec) {
    const auto id = static_cast<TaskId>(tasks_.size());
    spec.id = id;
    spec.state = TaskState::Waiting;
    tasks_.push_back(std::move(spec));
    parents_.emplace_back();
    children_.emplace_back();
    undone_parents_.push_back(0);
    waiting_roots_.push_back(id);
    return id;
}

void WorkflowDag::add_edge(TaskId parent, TaskId child) {
    if (!has_task(parent) || !has_task(child)) {
        throw std::invalid_argument(fmt::format("edge {}->{} references unknown task", parent, child));
    }
    if (parent == child) throw std::invalid_argument("self edge");
    parents_[static_cast<std::size_t>(child)].push_back(parent);
    children_[static_cast<std::size_t>(parent)].push_back(child);
    if (tasks_[static_cast<std::size_t>(parent)].state != TaskState::Done) {
        ++undone_parents_[static_cast<std::size_t>(child)];
    }
}

const TaskSpec& WorkflowDag::task(TaskId id) const {
    if (!has_task(id)) throw std::out_of_range(fmt::format("unknown task id {}", id));
    return tasks_[static_cast<std::size_t>(id)];
}

TaskSpec& WorkflowDag::task(TaskId id) {
    if (!has_task(id)) throw std::out_of_range(fmt::format("unknown task id {}", id));
    return tasks_[static_cast<std::size_t>(id)];
}

std::vector<std::pair<TaskId, TaskId>> WorkflowDag::edges() const {
    std::vector<std::pair<TaskId, TaskId>> out;
    for (std::size_t p = 0; p < children_.size(); ++p) {
        for (TaskId c : children_[p]) out.emplace_back(static_cast<TaskId>(p), c);
    }
    return out;
}

std::size_t WorkflowDag::count_stage(Stage s) const {
    return static_cast<std::size_t>(
        std::count_if(tasks_.begin(), tasks_.end(), [s](const TaskSpec& t) { return t.stage == s; }));
}

std::vector<TaskId> WorkflowDag::ready_tasks() {
    std::vector<TaskId> out;
    for (TaskId id : waiting_roots_) {
        auto& t = tasks_[static_cast<std::size_t>(id)];
        if (t.state != TaskState::Waiting) continue;
        if (undone_parents_[static_cast<std::size_t>(id)] == 0) {
            t.state = TaskState::Ready;
            out.push_back(id);
        }
    }
    // Tasks still blocked are re-listed by mark_done when their last parent finishes.
    waiting_roots_.clear();
    std::sort(out.begin(), out.end());
    return out;
}

void WorkflowDag::transition(TaskId id, TaskState from, TaskState to) {
    auto& t = task(id);
    if (t.state != from) {
        throw std::logic_error(fmt::format("task {}: illegal transition {} -> {} (state is {})", id,
                                           to_string(from), to_string(to), to_string(t.state)));
    }
    t.state = to;
}

void WorkflowDag::mark_staging(TaskId id) { transition(id, TaskState::Ready, TaskState::Staging); }
void WorkflowDag::mark_running(TaskId id) { transition(id, TaskState::Staging, TaskState::Running); }

void WorkflowDag::mark_done(TaskId id) {
    transition(id, TaskState::Running, TaskState::Done);
    for (TaskId c : children_[static_cast<std::size_t>(id)]) {
        if (--undone_parents_[static_cast<std::size_t>(c)] == 0) waiting_roots_.push_back(c);
    }
}

FailureOutcome WorkflowDag::record_failure(TaskId id, FailureReason reason) {
    auto& t = task(id);
    if (t.state != TaskState::Running && t.state != TaskState::Staging) {
        throw std::invalid_argument(fmt::format("task {} cannot fail ({}) from state {}", id, to_string(reason),
                                                to_string(t.state)));
    }
    ++t.attempts;
    if (t.attempts < retry_limit_) {
        t.state = TaskState::Ready;
        return FailureOutcome::Retry;
    }
    t.state = TaskState::Failed;
    ++permanent_failures_;
    return FailureOutcome::Permanent;
}

void WorkflowDag::mark_rejected(TaskId id) {
    transition(id, TaskState::Ready, TaskState::Failed);
    ++permanent_failures_;
}

StateCounts WorkflowDag::counts() const {
    StateCounts c;
    for (const auto& t : tasks_) {
        switch (t.state) {
            case TaskState::Waiting: ++c.waiting; break;
            case TaskState::Ready: ++c.ready; break;
            case TaskState::Staging: ++c.staging; break;
            case TaskState::Running: ++c.running; break;
            case TaskState::Done: ++c.done; break;
            case TaskState::Failed: ++c.failed; break;
        }
    }
    return c;
}

bool WorkflowDag::complete() const {
    return std::all_of(tasks_.begin(), tasks_.end(), [](const TaskSpec& t) { return t.state == TaskState::Done; });
}

bool WorkflowDag::finished() const {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        const auto s = tasks_[i].state;
        if (s == TaskState::Ready || s == TaskState::Staging || s == TaskState::Running) return false;
        if (s == TaskState::Waiting && undone_parents_[i] == 0) return false;
    }
    return true;
}

bool WorkflowDag::is_acyclic() const {
    std::vector<int> indeg(tasks_.size(), 0);
    for (std::size_t i = 0; i < tasks_.size(); ++i) indeg[i] = static_cast<int>(parents_[i].size());
    std::vector<TaskId> frontier;
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (indeg[i] == 0) frontier.push_back(static_cast<TaskId>(i));
    }
    std::size_t visited = 0;
    while (!frontier.empty()) {
        TaskId n = frontier.back();
        frontier.pop_back();
        ++visited;
        for (TaskId c : children_[static_cast<std::size_t>(n)]) {
            if (--indeg[static_cast<std::size_t>(c)] == 0) frontier.push_back(c);
        }
    }
    return visited == tasks_.size();
}

bool WorkflowDag::well_formed() const {
    if (!is_acyclic()) return false;
    for (const auto& t : tasks_) {
        const auto& ps = parents_[static_cast<std::size_t>(t.id)];
        auto has_parent = [&](Stage s) {
            return std::any_of(ps.begin(), ps.end(), [&](TaskId p) { return task(p).stage == s; });
        };
        if (t.stage == Stage::Inspiral && !has_parent(Stage::Pre)) return false;
        if (t.stage == Stage::Post && !has_parent(Stage::Inspiral)) return false;
    }
    return true;
}

std::string WorkflowDag::dump() const {
    std::string out;
    out.reserve(tasks_.size() * 48);
    for (const auto& t : tasks_) {
        std::string inputs;
        for (std::size_t i = 0; i < t.inputs.size(); ++i) {
            if (i) inputs += '|';
            inputs += t.inputs[i].name;
        }
        out += fmt::format("{},{},{},{},{};\n", t.id, to_string(t.stage), to_string(t.state), t.attempts, inputs);
    }
    out += "edges\n";
    for (const auto& [p, c] : edges()) out += fmt::format("{}->{}\n", p, c);
    return out;
}

ParsedDagDump parse_dag_dump(std::string_view text) {
    ParsedDagDump out;
    std::istringstream in{std::string(text)};
    std::string line;
    bool in_edges = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line == "edges") {
            in_edges = true;
            continue;
        }
        if (in_edges) {
            const auto arrow = line.find("->");
            if (arrow == std::string::npos) throw std::runtime_error(fmt::format("dag dump line {}: bad edge", lineno));
            out.edges.emplace_back(std::stoll(line.substr(0, arrow)), std::stoll(line.substr(arrow + 2)));
            continue;
        }
        if (line.back() != ';') throw std::runtime_error(fmt::format("dag dump line {}: missing ';'", lineno));
        line.pop_back();
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            const auto comma = line.find(',', start);
            if (comma == std::string::npos) throw std::runtime_error(fmt::format("dag dump line {}: too few fields", lineno));
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        DagDumpRow row;
        row.id = std::stoll(fields[0]);
        row.stage = fields[1];
        row.state = fields[2];
        row.attempts = std::stoi(fields[3]);
        std::string rest = line.substr(start);
        std::size_t pos = 0;
        while (!rest.empty() && pos <= rest.size()) {
            const auto bar = rest.find('|', pos);
            row.inputs.push_back(rest.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos));
            if (bar == std::string::npos) break;
            pos = bar + 1;
        }
        out.tasks.push_back(std::move(row));
    }
    return out;
}

WorkflowDag generate(const WorkflowParams& p, std::uint64_t root_seed) {
    if (!(p.data_days > 0)) throw std::invalid_argument("data_days must be positive");
    if (!(p.scale > 0) || p.scale > 1) throw std::invalid_argument("scale must be in (0, 1]");
    if (p.frame_bytes <= 0) throw std::invalid_argument("frame size must be positive");
    if (p.runtime_lo_s > p.runtime_hi_s) throw std::invalid_argument("runtime range inverted");

    const auto n_inspiral = static_cast<std::int64_t>(std::llround(100000.0 * p.data_days * p.scale));
    WorkflowDag dag;
    dag.set_retry_limit(p.retry_limit);
    if (n_inspiral <= 0) return dag;

    std::int64_t n_frames = static_cast<std::int64_t>(std::ceil(p.data_days * 86400.0 / p.frame_span_s));
    n_frames = std::clamp<std::int64_t>(n_frames, 1, n_inspiral);
    const std::int64_t per_frame = (n_inspiral + n_frames - 1) / n_frames;
    n_frames = (n_inspiral + per_frame - 1) / per_frame;

    std::vector<TaskId> pre_ids;
    for (std::int64_t f = 0; f < n_frames; ++f) {
        TaskSpec t;
        t.stage = Stage::Pre;
        t.frame_index = static_cast<int>(f);
        t.runtime_lo_s = t.runtime_hi_s = t.runtime_s = p.local_runtime_s;
        t.memory_demand_bytes = p.memory_bytes;
        t.output_bytes = p.frame_bytes;
        t.io_demand_bytes = p.frame_bytes;
        pre_ids.push_back(dag.add_task(std::move(t)));
    }

    std::vector<std::vector<TaskId>> by_frame(static_cast<std::size_t>(n_frames));
    for (std::int64_t i = 0; i < n_inspiral; ++i) {
        const auto frame = i / per_frame;
        TaskSpec t;
        t.stage = Stage::Inspiral;
        t.frame_index = static_cast<int>(frame);
        t.inputs.push_back(FileRef{fmt::format("frame-{:06d}.gwf", frame), p.frame_bytes});
        t.runtime_lo_s = p.runtime_lo_s;
        t.runtime_hi_s = p.runtime_hi_s;
        RandomStream rs(root_seed, fmt::format("workflow/inspiral/{}", i));
        t.runtime_s = draw_uniform(rs, p.runtime_lo_s, p.runtime_hi_s);
        t.memory_demand_bytes = p.memory_bytes;
        t.reread_count = p.reread_count;
        t.output_bytes = p.output_bytes;
        t.io_demand_bytes = p.frame_bytes * p.reread_count + p.output_bytes;
        const auto id = dag.add_task(std::move(t));
        dag.add_edge(pre_ids[static_cast<std::size_t>(frame)], id);
        by_frame[static_cast<std::size_t>(frame)].push_back(id);
    }

    for (std::int64_t f = 0; f < n_frames; ++f) {
        TaskSpec t;
        t.stage = Stage::Post;
        t.frame_index = static_cast<int>(f);
        t.runtime_lo_s = t.runtime_hi_s = t.runtime_s = p.local_runtime_s;
        t.memory_demand_bytes = p.memory_bytes;
        t.output_bytes = p.output_bytes;
        const auto id = dag.add_task(std::move(t));
        for (TaskId parent : by_frame[static_cast<std::size_t>(f)]) dag.add_edge(parent, id);
    }
    return dag;
}

void route_stages(WorkflowDag& dag, const RoutePolicy& policy, const std::string& site) {
    for (Stage s : {Stage::Pre, Stage::Inspiral, Stage::Post}) {
        if (!policy.count(s)) {
            throw std::invalid_argument(fmt::format("route policy does not cover stage {}", to_string(s)));
        }
    }
    for (const auto& spec : dag.tasks()) {
        auto& t = dag.task(spec.id);
        t.route = policy.at(t.stage);
        t.requirements = RequirementExpr{};
        if (t.route == SiteClass::Osg) {
            t.requirements.require(attr::kIsGlidein, PredicateOp::MetaEqual, true)
                .require(attr::kDesiredSites, PredicateOp::Contains, site);
        } else {
            t.requirements.require(attr::kSite, PredicateOp::Equal, std::string("local"));
        }
    }
    dag.set_route(policy);
}

}  // namespace glidesim
