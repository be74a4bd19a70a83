#pragma once

#include "glidesim/classad.hpp"
#include "glidesim/engine.hpp"
#include "glidesim/workflow.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace glidesim {

using PilotId = std::int64_t;

enum class Priority : std::uint8_t { Normal = 0, High = 1 };

struct JobAd {
    TaskId task_id = 0;
    SiteClass route = SiteClass::Osg;
    Priority priority = Priority::Normal;
    RequirementExpr requirements;
    std::int64_t memory_demand_bytes = 0;
    double walltime_estimate_s = 0;
    std::int64_t io_demand_bytes = 0;
    SimTime submit_time{};
};

struct GlideinAd {
    PilotId pilot_id = 0;
    std::string site;
    int free_slots = 0;
    AttributeSet attributes;
};

/// Limits imposed on grid-routed jobs.
struct AdmissionLimits {
    std::int64_t max_memory_bytes = 2'000'000'000;
    double max_walltime_s = 12 * 3600.0;
    std::int64_t max_io_bytes = 10'000'000'000;
};

enum class RejectReason : std::uint8_t { None, Memory, Walltime, Io };
std::string_view to_string(RejectReason r);

struct AdmitResult {
    bool accepted = true;
    RejectReason reason = RejectReason::None;
    explicit operator bool() const { return accepted; }
};

struct Match {
    TaskId task_id = 0;
    PilotId pilot_id = 0;
    friend bool operator==(const Match&, const Match&) = default;
};

struct PoolRow {
    PilotId pilot_id = 0;
    std::string site;
    int slots_total = 0;
    int slots_busy = 0;
};

/// Glidein ad carrying IS_GLIDEIN=true, the site name, and DESIRED_SITES={site}.
GlideinAd make_glidein_ad(PilotId id, const std::string& site, int slots);
/// Slot ad for the local HTC cluster (IS_GLIDEIN=false, SITE="local").
GlideinAd make_local_ad(PilotId id, int slots);

/// Central controlling server of the overlay pool: job queue, glidein
/// registry, FIFO negotiation with lowest-id placement, and preemption.
class Matchmaker {
public:
    explicit Matchmaker(AdmissionLimits limits = {}) : limits_(limits) {}

    AdmitResult admit(const JobAd& job) const;
    /// admit() then enqueue on acceptance.
    AdmitResult submit(const JobAd& job);

    void register_glidein(GlideinAd ad);
    /// Tasks currently assigned to the glidein.
    std::vector<TaskId> running_on(PilotId pilot) const;
    /// The glidein must have no assigned tasks left.
    void unregister_glidein(PilotId pilot);
    bool has_glidein(PilotId pilot) const { return glideins_.count(pilot) != 0; }

    /// Scans the queue in (priority, submit_time, task_id) order and assigns
    /// each job to the lowest-id glidein with a free slot whose ad satisfies it.
    /// A high-priority job that finds no free slot evicts the newest-started
    /// normal job on a matching glidein.
    std::vector<Match> negotiate(SimTime now);

    /// Frees the slot, reports the failure to the attached workflow and
    /// requeues the job with its original submit time if it may retry.
    void preempt(TaskId task, SimTime now);
    /// Frees the slot of a job that finished normally.
    void release(TaskId task);

    /// Workflow that receives record_failure on preemption (may be null).
    void attach_workflow(WorkflowDag* dag) { dag_ = dag; }
    /// Called with each evicted task before record_failure, so owners can cancel in-flight work.
    void on_evict(std::function<void(TaskId, PilotId)> cb) { on_evict_ = std::move(cb); }

    std::size_t queued() const { return queue_.size(); }
    std::size_t waiting(SiteClass route, Priority prio = Priority::Normal) const;
    bool is_queued(TaskId task) const { return queued_ads_.count(task) != 0; }
    bool is_running(TaskId task) const { return running_.count(task) != 0; }
    std::optional<PilotId> pilot_of(TaskId task) const;

    const GlideinAd& glidein(PilotId pilot) const { return glideins_.at(pilot).ad; }
    int provisioned_slots(PilotId pilot) const { return glideins_.at(pilot).provisioned; }
    int busy_slots(PilotId pilot) const;
    std::vector<PoolRow> pool_snapshot() const;
    /// assigned + free == provisioned on every glidein.
    bool slots_conserved() const;

    const AdmissionLimits& limits() const { return limits_; }
    std::uint64_t preemptions() const { return preemptions_; }

private:
    struct QueueKey {
        int neg_priority;
        SimTime submit;
        TaskId task;
        friend auto operator<=>(const QueueKey&, const QueueKey&) = default;
    };
    struct Glidein {
        GlideinAd ad;
        int provisioned = 0;
        std::set<TaskId> assigned;
    };
    struct Running {
        PilotId pilot = 0;
        SimTime started{};
        std::uint64_t order = 0;
        JobAd ad;
    };

    static QueueKey key_of(const JobAd& ad) {
        return QueueKey{-static_cast<int>(ad.priority), ad.submit_time, ad.task_id};
    }
    void assign(const JobAd& ad, Glidein& g, SimTime now);
    std::optional<TaskId> newest_normal_on_matching(const JobAd& ad) const;

    struct Queued {
        JobAd ad;
        int req_class = 0;  // jobs with identical requirements share a class
    };

    int requirement_class(const RequirementExpr& expr);

    AdmissionLimits limits_;
    std::map<QueueKey, Queued> queue_;
    std::map<std::string, int> req_classes_;
    std::map<TaskId, QueueKey> queued_ads_;
    std::map<PilotId, Glidein> glideins_;
    std::map<TaskId, Running> running_;
    WorkflowDag* dag_ = nullptr;
    std::function<void(TaskId, PilotId)> on_evict_;
    std::uint64_t start_order_ = 0;
    std::uint64_t preemptions_ = 0;
    std::int64_t free_total_ = 0;
};

}  // namespace glidesim
