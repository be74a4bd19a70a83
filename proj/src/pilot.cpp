#include "glidesim/pilot.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

std::string_view to_string(PilotState s) {
    switch (s) {
        case PilotState::Queued: return "queued";
        case PilotState::Provisioned: return "provisioned";
        case PilotState::Serving: return "serving";
        case PilotState::Draining: return "draining";
        case PilotState::Terminated: return "terminated";
    }
    return "?";
}

void validate(const PilotPlan& plan) {
    if (plan.offsets_s.empty() && plan.groups < 1) throw std::invalid_argument("pilot plan needs at least one group");
    if (plan.nodes_per_group < 1) throw std::invalid_argument("nodes_per_group must be >= 1");
    if (plan.stagger_s < 0) throw std::invalid_argument("stagger_s must be >= 0");
    if (plan.depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (plan.processes_per_node < 1) throw std::invalid_argument("processes_per_node must be >= 1");
    if (plan.walltime_s <= 0 || plan.walltime_s > 48 * 3600) {
        throw std::invalid_argument("pilot walltime must be in (0, 48 h]");
    }
    if (plan.startup_s < 0) throw std::invalid_argument("startup_s must be >= 0");
    for (auto off : plan.offsets_s) {
        if (off < 0) throw std::invalid_argument("pilot offsets must be >= 0");
    }
}

double effective_speed(int depth, int cores_per_node, int processes_per_node) {
    if (depth < 1 || cores_per_node < 1 || processes_per_node < 1) {
        throw std::invalid_argument("effective_speed arguments must be >= 1");
    }
    const double usable = static_cast<double>(std::min(depth, cores_per_node));
    return std::min(1.0, usable / static_cast<double>(processes_per_node));
}

std::vector<PilotLaunch> launch_plan(const PilotPlan& plan, SimTime t0) {
    std::vector<PilotLaunch> out;
    const int n = plan.group_count();
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const std::int64_t offset =
            plan.offsets_s.empty() ? static_cast<std::int64_t>(k) * plan.stagger_s : plan.offsets_s[static_cast<std::size_t>(k)];
        out.push_back(PilotLaunch{k, t0 + SimTime{offset * 1000}, plan.nodes_per_group});
    }
    return out;
}

Pilot::Pilot(std::int64_t id, int group, int node_count, int processes_per_node, double speed_factor)
    : id_(id), group_(group), node_count_(node_count), processes_per_node_(processes_per_node),
      speed_factor_(speed_factor) {
    if (!(speed_factor > 0.0) || speed_factor > 1.0) {
        throw std::invalid_argument(fmt::format("pilot speed factor {} outside (0, 1]", speed_factor));
    }
}

void Pilot::advance(PilotState to) {
    if (static_cast<int>(to) <= static_cast<int>(state_)) {
        throw std::logic_error(
            fmt::format("pilot {}: transition {} -> {} is not forward", id_, to_string(state_), to_string(to)));
    }
    state_ = to;
}

void Pilot::provision(std::vector<int> nodes) {
    advance(PilotState::Provisioned);
    nodes_ = std::move(nodes);
}

void Pilot::serve() { advance(PilotState::Serving); }
void Pilot::drain() { advance(PilotState::Draining); }

void Pilot::terminate() {
    advance(PilotState::Terminated);
    nodes_.clear();
}

}  // namespace glidesim
