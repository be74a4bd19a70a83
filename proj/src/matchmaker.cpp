#include "glidesim/matchmaker.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

namespace glidesim {

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::None: return "none";
        case RejectReason::Memory: return "memory";
        case RejectReason::Walltime: return "walltime";
        case RejectReason::Io: return "io";
    }
    return "?";
}

GlideinAd make_glidein_ad(PilotId id, const std::string& site, int slots) {
    GlideinAd ad;
    ad.pilot_id = id;
    ad.site = site;
    ad.free_slots = slots;
    ad.attributes.set(attr::kIsGlidein, true);
    ad.attributes.set(attr::kSite, site);
    ad.attributes.set(attr::kDesiredSites, StringSet{site});
    return ad;
}

GlideinAd make_local_ad(PilotId id, int slots) {
    GlideinAd ad;
    ad.pilot_id = id;
    ad.site = "local";
    ad.free_slots = slots;
    ad.attributes.set(attr::kIsGlidein, false);
    ad.attributes.set(attr::kSite, std::string("local"));
    return ad;
}

AdmitResult Matchmaker::admit(const JobAd& job) const {
    if (job.route != SiteClass::Osg) return {};
    if (job.memory_demand_bytes > limits_.max_memory_bytes) return {false, RejectReason::Memory};
    if (job.walltime_estimate_s > limits_.max_walltime_s) return {false, RejectReason::Walltime};
    if (job.io_demand_bytes > limits_.max_io_bytes) return {false, RejectReason::Io};
    return {};
}

int Matchmaker::requirement_class(const RequirementExpr& expr) {
    auto [it, inserted] = req_classes_.try_emplace(expr.to_string(), static_cast<int>(req_classes_.size()));
    return it->second;
}

AdmitResult Matchmaker::submit(const JobAd& job) {
    const auto verdict = admit(job);
    if (!verdict) return verdict;
    if (queued_ads_.count(job.task_id) || running_.count(job.task_id)) {
        throw std::logic_error(fmt::format("job {} submitted twice", job.task_id));
    }
    const auto key = key_of(job);
    queue_.emplace(key, Queued{job, requirement_class(job.requirements)});
    queued_ads_.emplace(job.task_id, key);
    return verdict;
}

void Matchmaker::register_glidein(GlideinAd ad) {
    if (ad.free_slots < 0) throw std::invalid_argument("glidein with negative slots");
    const auto id = ad.pilot_id;
    if (glideins_.count(id)) throw std::logic_error(fmt::format("glidein {} registered twice", id));
    Glidein g;
    g.provisioned = ad.free_slots;
    g.ad = std::move(ad);
    free_total_ += g.provisioned;
    glideins_.emplace(id, std::move(g));
}

std::vector<TaskId> Matchmaker::running_on(PilotId pilot) const {
    auto it = glideins_.find(pilot);
    if (it == glideins_.end()) return {};
    return {it->second.assigned.begin(), it->second.assigned.end()};
}

void Matchmaker::unregister_glidein(PilotId pilot) {
    auto it = glideins_.find(pilot);
    if (it == glideins_.end()) return;
    if (!it->second.assigned.empty()) {
        throw std::logic_error(fmt::format("glidein {} unregistered with {} jobs assigned", pilot,
                                           it->second.assigned.size()));
    }
    free_total_ -= it->second.ad.free_slots;
    glideins_.erase(it);
}

void Matchmaker::assign(const JobAd& ad, Glidein& g, SimTime now) {
    --g.ad.free_slots;
    --free_total_;
    g.assigned.insert(ad.task_id);
    running_.emplace(ad.task_id, Running{g.ad.pilot_id, now, start_order_++, ad});
}

std::optional<TaskId> Matchmaker::newest_normal_on_matching(const JobAd& ad) const {
    std::optional<TaskId> best;
    std::uint64_t best_order = 0;
    for (const auto& [task, r] : running_) {
        if (r.ad.priority != Priority::Normal) continue;
        const auto& g = glideins_.at(r.pilot);
        if (!evaluate(ad.requirements, g.ad.attributes)) continue;
        if (!best || r.order > best_order) {
            best = task;
            best_order = r.order;
        }
    }
    return best;
}

std::vector<Match> Matchmaker::negotiate(SimTime now) {
    std::vector<Match> out;
    std::unordered_set<int> unmatched_classes;
    for (auto it = queue_.begin(); it != queue_.end();) {
        const bool high = it->second.ad.priority == Priority::High;
        if (free_total_ <= 0 && !high) break;
        const int cls = it->second.req_class;
        if (!high && unmatched_classes.count(cls)) {
            ++it;
            continue;
        }
        const JobAd ad = it->second.ad;
        Glidein* target = nullptr;
        for (auto& [id, g] : glideins_) {
            if (g.ad.free_slots > 0 && evaluate(ad.requirements, g.ad.attributes)) {
                target = &g;
                break;
            }
        }
        if (!target && high) {
            if (auto victim = newest_normal_on_matching(ad)) {
                const PilotId where = running_.at(*victim).pilot;
                preempt(*victim, now);
                auto& g = glideins_.at(where);
                if (g.ad.free_slots > 0) target = &g;
            }
        }
        if (!target) {
            if (!high) unmatched_classes.insert(cls);
            ++it;
            continue;
        }
        assign(ad, *target, now);
        out.push_back(Match{ad.task_id, target->ad.pilot_id});
        queued_ads_.erase(ad.task_id);
        it = queue_.erase(it);
    }
    return out;
}

void Matchmaker::release(TaskId task) {
    auto it = running_.find(task);
    if (it == running_.end()) throw std::invalid_argument(fmt::format("release of job {} that is not running", task));
    auto& g = glideins_.at(it->second.pilot);
    g.assigned.erase(task);
    ++g.ad.free_slots;
    ++free_total_;
    running_.erase(it);
}

void Matchmaker::preempt(TaskId task, SimTime now) {
    (void)now;
    auto it = running_.find(task);
    if (it == running_.end()) throw std::invalid_argument(fmt::format("preempt of job {} that is not running", task));
    JobAd ad = it->second.ad;
    const PilotId pilot = it->second.pilot;
    release(task);
    ++preemptions_;
    if (on_evict_) on_evict_(task, pilot);

    bool requeue = true;
    if (dag_ && dag_->has_task(task)) {
        requeue = dag_->record_failure(task, FailureReason::Preempted) == FailureOutcome::Retry;
    }
    if (requeue) {
        // Original submit_time keeps the job's FIFO position.
        const auto key = key_of(ad);
        queue_.emplace(key, Queued{ad, requirement_class(ad.requirements)});
        queued_ads_.emplace(task, key);
    }
}

std::size_t Matchmaker::waiting(SiteClass route, Priority prio) const {
    std::size_t n = 0;
    for (const auto& [key, q] : queue_) {
        if (q.ad.route == route && q.ad.priority == prio) ++n;
    }
    return n;
}

std::optional<PilotId> Matchmaker::pilot_of(TaskId task) const {
    auto it = running_.find(task);
    if (it == running_.end()) return std::nullopt;
    return it->second.pilot;
}

int Matchmaker::busy_slots(PilotId pilot) const {
    return static_cast<int>(glideins_.at(pilot).assigned.size());
}

std::vector<PoolRow> Matchmaker::pool_snapshot() const {
    std::vector<PoolRow> rows;
    rows.reserve(glideins_.size());
    for (const auto& [id, g] : glideins_) {
        rows.push_back(PoolRow{id, g.ad.site, g.provisioned, static_cast<int>(g.assigned.size())});
    }
    return rows;
}

bool Matchmaker::slots_conserved() const {
    for (const auto& [id, g] : glideins_) {
        if (g.ad.free_slots < 0) return false;
        if (static_cast<int>(g.assigned.size()) + g.ad.free_slots != g.provisioned) return false;
    }
    return true;
}

}  // namespace glidesim
