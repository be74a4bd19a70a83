#include "glidesim/simulation.hpp"

#include "glidesim/staging.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <fmt/format.h>

namespace glidesim {

namespace {

constexpr PilotId kLocalPool = 0;
constexpr TaskId kExternalBase = 1'000'000'000;
constexpr int kLocalSlots = 100000;
constexpr int kReservationPriority = 1000;

class Simulation {
public:
    Simulation(const Scenario& s, const RunOptions& opt)
        : scn_(s),
          opt_(opt),
          cluster_(engine_, s.cluster, 48 * 3600.0),
          transfers_(engine_, s.staging.aggregate_MBps * 1e6, s.staging.per_stream_cap_MBps * 1e6),
          mds_(s.staging.fs),
          preempt_rng_(s.engine.seed, "faults/preemption") {
        speed_ = effective_speed(s.pilots.depth, s.cluster.cores_per_node, s.pilots.processes_per_node);
        if (s.payload.enabled) bank_ = make_bank(s.payload);
    }

    RunResult run();

private:
    struct TaskRun {
        PilotId pilot = 0;
        int node_slot = -1;  // index into the pilot's node list
        std::uint64_t token = 0;
        std::optional<TransferId> transfer;
        bool computing = false;
        SimTime compute_start{};
    };

    struct PilotRec {
        std::unique_ptr<Pilot> pilot;
        JobId batch_job = -1;
        bool registered = false;
        std::vector<int> node_load;
    };

    // setup
    void start_workflow(SimTime now);
    void launch_pilot(PilotId pid, SimTime now);

    // workflow
    void submit_ready(SimTime now);
    JobAd job_ad_for(const TaskSpec& t, SimTime now) const;
    void request_negotiation(SimTime now);
    void negotiate(SimTime now);
    void start_local(TaskId task, SimTime now);
    void start_osg(TaskId task, PilotId pid, SimTime now);
    void on_staged(TaskId task, std::uint64_t token, SimTime now);
    void on_done(TaskId task, std::uint64_t token, SimTime now);
    void cleanup(TaskId task, SimTime now);
    void fail_task(TaskId task, FailureReason why, SimTime now);

    // pilots
    void on_batch_start(const BatchJob& job, const Placement& p);
    void on_batch_end(const BatchJob& job, const Placement& p, bool killed);
    void serve(PilotId pid, SimTime now);
    void check_drain(PilotId pid, SimTime now);
    void check_all_drains(SimTime now);
    void terminate_pilot(PilotId pid, SimTime now, const std::string& why);
    void log(SimTime now, PilotId pid, const std::string& what);

    // faults
    void schedule_preemption(SimTime now);

    // accounting
    void integrate(SimTime now);
    void set_busy(std::int64_t delta, SimTime now);
    void set_provisioned(std::int64_t delta, SimTime now);
    void note_active_change(SimTime now);
    void sample(SimTime now, bool cadence);
    void sample_tick(SimTime now);
    bool quiescent() const;
    void maybe_stop(SimTime now);
    void check_cluster();

    Scenario scn_;
    RunOptions opt_;
    Engine engine_;
    TorusCluster cluster_;
    Matchmaker mm_;
    WorkflowDag dag_;
    TransferServer transfers_;
    MetadataServer mds_;
    RandomStream preempt_rng_;
    std::unique_ptr<BackgroundLoad> background_;
    double speed_ = 1;
    TemplateBank bank_;

    std::map<PilotId, PilotRec> pilots_;
    std::map<JobId, PilotId> pilot_by_job_;
    std::map<TaskId, TaskRun> runs_;
    std::map<TaskId, JobAd> ads_;
    std::map<int, ScratchVolume> scratch_;
    std::uint64_t next_token_ = 1;
    TaskId next_external_ = kExternalBase;
    bool negotiation_pending_ = false;
    std::int64_t local_in_flight_ = 0;

    // exact integrals
    SimTime last_integrate_{};
    std::int64_t busy_cores_ = 0;
    std::int64_t provisioned_cores_ = 0;
    double busy_ms_ = 0;
    double provisioned_ms_ = 0;
    double expected_busy_s_ = 0;  // sum of runtime / speed over completed tasks
    double accounted_busy_s_ = 0;
    double lost_busy_s_ = 0;       // compute time discarded by evictions and kills
    double reread_bytes_ = 0;
    double write_bytes_ = 0;
    std::int64_t osg_starts_ = 0;
    SimTime last_start_{};
    SimTime last_done_{};
    SimTime last_pilot_end_{};
    int active_pilots_ = 0;
    double single_pilot_from_ = -1;

    // sampling
    std::vector<Sample> samples_;
    std::vector<CumulativePoint> cumulative_;
    std::vector<PoolSample> pool_;
    std::vector<AvailabilityRow> availability_;
    std::vector<PilotLogEntry> pilot_log_;
    SimTime last_cadence_{};
    bool have_cadence_ = false;
    double cadence_read_ = 0, cadence_write_ = 0;
    std::int64_t cadence_mds_ = 0;
    double rate_read_ = 0, rate_write_ = 0, rate_mds_ = 0;

    std::vector<Trigger> triggers_;
    std::uint64_t invariant_checks_ = 0;
    std::uint64_t invariant_violations_ = 0;
    double reservation_started_s_ = -1;
    bool stopped_ = false;
};

// ---------------------------------------------------------------- setup

RunResult Simulation::run() {
    const SimTime end = SimTime::from_seconds(scn_.engine.end_time_s);
    cluster_.on_start([this](const BatchJob& j, const Placement& p) { on_batch_start(j, p); });
    cluster_.on_end([this](const BatchJob& j, const Placement& p, bool killed) { on_batch_end(j, p, killed); });
    mm_.attach_workflow(&dag_);
    mm_.on_evict([this](TaskId task, PilotId) {
        if (task < kExternalBase) cleanup(task, engine_.now());
        request_negotiation(engine_.now());
    });
    mm_.register_glidein(make_local_ad(kLocalPool, kLocalSlots));

    if (scn_.faults.hpc_background_load > 0) {
        BackgroundLoadParams bp;
        bp.target_fraction = scn_.faults.hpc_background_load;
        bp.max_dim = scn_.faults.hpc_max_dim;
        background_ = std::make_unique<BackgroundLoad>(cluster_, bp, scn_.engine.seed);
        background_->prime(SimTime{});
        background_->replenish(SimTime{});
    }
    if (scn_.faults.reservation_at_s >= 0) {
        cluster_.reserve_full_system(SimTime::from_seconds(scn_.faults.reservation_at_s),
                                     SimTime::from_seconds(scn_.faults.reservation_duration_s), SimTime{});
    }
    if (scn_.workflow_enabled) {
        engine_.schedule(SimTime{}, EventKind::Generic, [this](Engine& e) { start_workflow(e.now()); });
        PilotId pid = 1;
        for (const auto& launch : launch_plan(scn_.pilots, SimTime{})) {
            PilotRec rec;
            rec.pilot = std::make_unique<Pilot>(pid, launch.group, launch.nodes, scn_.pilots.processes_per_node, speed_);
            pilots_.emplace(pid, std::move(rec));
            engine_.schedule(launch.submit_at, EventKind::PilotLaunch,
                             [this, pid](Engine& e) { launch_pilot(pid, e.now()); });
            ++pid;
        }
    }
    if (scn_.faults.preemption_rate_per_hour > 0) schedule_preemption(SimTime{});
    engine_.schedule(SimTime{}, EventKind::SampleTick, [this](Engine& e) { sample_tick(e.now()); });

    engine_.run_until(end);
    const SimTime stop_at = engine_.now();
    integrate(stop_at);
    sample(stop_at, false);

    RunResult r;
    r.samples = samples_;
    r.cumulative = cumulative_;
    r.pilot_log = pilot_log_;
    r.pool = pool_;
    r.availability = availability_;
    r.dag_dump = dag_.dump();
    r.top_triggers = top_k(triggers_, 20);

    RunSummary& s = r.summary;
    s = summarize(samples_, scn_.steady_state_threshold, scn_.min_plateau_s);
    const auto counts = dag_.counts();
    s.complete = scn_.workflow_enabled && dag_.complete();
    s.tasks_total = static_cast<std::int64_t>(dag_.size());
    s.tasks_done = counts.done;
    s.tasks_failed = counts.failed;
    s.makespan_s = last_done_.seconds();
    s.last_task_start_s = last_start_.seconds();
    s.last_pilot_end_s = last_pilot_end_.seconds();
    s.single_pilot_from_s = single_pilot_from_;
    s.busy_core_seconds = busy_ms_ / 1000.0;
    s.provisioned_core_seconds = provisioned_ms_ / 1000.0;
    lost_busy_s_ += accounted_busy_s_;
    for (const auto& [task, run] : runs_) {
        if (run.computing) lost_busy_s_ += (stop_at - run.compute_start).seconds();
    }
    s.expected_busy_core_seconds = expected_busy_s_ + lost_busy_s_;
    s.time_avg_utilization = provisioned_ms_ > 0 ? busy_ms_ / provisioned_ms_ : 0.0;
    if (stop_at > SimTime{}) s.opportunistic_core_hours = cluster_.core_hours(SimTime{}, stop_at).available;
    s.mds_ops = mds_.ops();
    transfers_.advance(stop_at);
    s.read_bytes = transfers_.bytes_moved() + reread_bytes_;
    s.write_bytes = write_bytes_;
    s.preemptions = static_cast<std::int64_t>(mm_.preemptions());

    r.invariant_checks = invariant_checks_;
    r.invariant_violations = invariant_violations_;
    r.drain_ahead_respected = cluster_.drain_ahead_respected();
    if (auto d = cluster_.drain_begin()) r.drain_begin_s = d->seconds();
    r.reservation_at_s = scn_.faults.reservation_at_s;
    r.reservation_started_s = reservation_started_s_;
    for (JobId id = 1; cluster_.has_job(id); ++id) {
        const auto& j = cluster_.job(id);
        if (j.priority < kReservationPriority) r.max_batch_walltime_s = std::max(r.max_batch_walltime_s, j.walltime_s);
    }
    r.mds_ops = mds_.ops();
    r.mds_nodes_attached = mds_.nodes_attached();
    r.osg_task_starts = osg_starts_;
    r.peak_transfer_rate_Bps = transfers_.peak_aggregate_rate_Bps();

    if (!scn_.workflow_enabled) {
        r.exit_code = 0;
    } else {
        r.exit_code = s.complete ? 0 : 2;
    }
    return r;
}

void Simulation::start_workflow(SimTime now) {
    dag_ = generate(scn_.workflow, scn_.engine.seed);
    dag_.set_retry_limit(scn_.workflow.retry_limit);
    route_stages(dag_, default_route_policy(), scn_.pilots.site);
    submit_ready(now);
    maybe_stop(now);
}

void Simulation::launch_pilot(PilotId pid, SimTime now) {
    auto& rec = pilots_.at(pid);
    BatchJob job;
    job.kind = JobKind::Pilot;
    job.node_count = rec.pilot->node_count();
    job.walltime_s = static_cast<double>(scn_.pilots.walltime_s);
    job.runtime_s = -1;
    rec.batch_job = cluster_.submit(job, now);
    pilot_by_job_[rec.batch_job] = pid;
    log(now, pid, "submitted");
}

// ---------------------------------------------------------------- workflow

JobAd Simulation::job_ad_for(const TaskSpec& t, SimTime now) const {
    JobAd ad;
    ad.task_id = t.id;
    ad.route = t.route;
    ad.requirements = t.requirements;
    ad.memory_demand_bytes = t.memory_demand_bytes;
    ad.walltime_estimate_s = t.route == SiteClass::Osg ? t.runtime_hi_s : scn_.workflow.local_runtime_s;
    ad.io_demand_bytes = t.io_demand_bytes;
    ad.submit_time = now;
    return ad;
}

void Simulation::submit_ready(SimTime now) {
    bool any = false;
    for (TaskId id : dag_.ready_tasks()) {
        const JobAd ad = job_ad_for(dag_.task(id), now);
        if (!mm_.submit(ad)) {
            dag_.mark_rejected(id);
            continue;
        }
        ads_[id] = ad;
        any = true;
    }
    if (any) request_negotiation(now);
}

void Simulation::request_negotiation(SimTime now) {
    if (negotiation_pending_) return;
    negotiation_pending_ = true;
    engine_.schedule(now, EventKind::Generic, [this](Engine& e) { negotiate(e.now()); });
}

void Simulation::negotiate(SimTime now) {
    negotiation_pending_ = false;
    for (const auto& m : mm_.negotiate(now)) {
        if (m.task_id >= kExternalBase) {
            const TaskId ext = m.task_id;
            const PilotId where = m.pilot_id;
            engine_.schedule(now + SimTime::from_seconds(scn_.faults.preemption_hold_s), EventKind::Generic,
                             [this, ext, where](Engine& e) {
                                 if (mm_.is_running(ext) && mm_.pilot_of(ext) == where) {
                                     mm_.release(ext);
                                     request_negotiation(e.now());
                                     check_drain(where, e.now());
                                 }
                             });
        } else if (m.pilot_id == kLocalPool) {
            start_local(m.task_id, now);
        } else {
            start_osg(m.task_id, m.pilot_id, now);
        }
    }
    if (!mm_.slots_conserved()) ++invariant_violations_;
    ++invariant_checks_;
    check_all_drains(now);
    maybe_stop(now);
}

void Simulation::start_local(TaskId task, SimTime now) {
    dag_.mark_staging(task);
    dag_.mark_running(task);
    ++local_in_flight_;
    engine_.schedule(now + SimTime::from_seconds(scn_.workflow.local_runtime_s), EventKind::TaskDone,
                     [this, task](Engine& e) {
                         --local_in_flight_;
                         mm_.release(task);
                         dag_.mark_done(task);
                         last_done_ = e.now();
                         submit_ready(e.now());
                         request_negotiation(e.now());
                         maybe_stop(e.now());
                     });
}

void Simulation::start_osg(TaskId task, PilotId pid, SimTime now) {
    auto& rec = pilots_.at(pid);
    dag_.mark_staging(task);
    TaskRun run;
    run.pilot = pid;
    const int ppn = scn_.pilots.processes_per_node;
    for (std::size_t i = 0; i < rec.node_load.size(); ++i) {
        if (rec.node_load[i] < ppn) {
            run.node_slot = static_cast<int>(i);
            break;
        }
    }
    if (run.node_slot < 0) throw std::logic_error(fmt::format("pilot {} matched beyond its slots", pid));
    ++rec.node_load[static_cast<std::size_t>(run.node_slot)];
    run.token = next_token_++;
    const auto token = run.token;
    const auto& spec = dag_.task(task);
    // multiple inputs travel as one stream
    FileRef input = spec.inputs.size() == 1 ? spec.inputs.front() : FileRef{"inputs", 0};
    if (spec.inputs.size() > 1) {
        for (const auto& f : spec.inputs) input.size_bytes += f.size_bytes;
    }
    const auto ticket = transfers_.request_transfer(
        input, task, now, [this, task, token](TransferId, SimTime t) { on_staged(task, token, t); });
    run.transfer = ticket.id;
    runs_[task] = run;
}

void Simulation::on_staged(TaskId task, std::uint64_t token, SimTime now) {
    auto it = runs_.find(task);
    if (it == runs_.end() || it->second.token != token) return;
    auto& run = it->second;
    run.transfer.reset();
    const auto& rec = pilots_.at(run.pilot);
    const int node = rec.pilot->nodes().at(static_cast<std::size_t>(run.node_slot));
    auto [vol, inserted] = scratch_.try_emplace(node, scn_.staging.scratch_capacity_bytes);
    if (vol->second.write(task, scn_.staging.scratch_per_task_bytes) == ScratchResult::ScratchFull) {
        fail_task(task, FailureReason::ScratchFull, now);
        return;
    }
    const auto& spec = dag_.task(task);
    dag_.mark_running(task);
    run.computing = true;
    run.compute_start = now;
    double input_bytes = 0;
    for (const auto& f : spec.inputs) input_bytes += static_cast<double>(f.size_bytes);
    reread_bytes_ += input_bytes * spec.reread_count;
    mds_.task_started();
    set_busy(+1, now);
    ++osg_starts_;
    last_start_ = now;
    const double duration = spec.runtime_s / rec.pilot->speed_factor();
    engine_.schedule(now + SimTime::from_seconds(duration), EventKind::TaskDone,
                     [this, task, token](Engine& e) { on_done(task, token, e.now()); });
}

void Simulation::on_done(TaskId task, std::uint64_t token, SimTime now) {
    auto it = runs_.find(task);
    if (it == runs_.end() || it->second.token != token) return;
    const PilotId pid = it->second.pilot;
    expected_busy_s_ += dag_.task(task).runtime_s / pilots_.at(pid).pilot->speed_factor();
    lost_busy_s_ -= (now - it->second.compute_start).seconds();
    cleanup(task, now);
    mm_.release(task);
    dag_.mark_done(task);
    last_done_ = now;
    const auto& spec = dag_.task(task);
    write_bytes_ += static_cast<double>(spec.output_bytes);
    if (scn_.payload.enabled && spec.stage == Stage::Inspiral) {
        auto found = analyze_segment(scn_.payload, bank_, scn_.payload.seed, task);
        triggers_.insert(triggers_.end(), found.begin(), found.end());
    }
    submit_ready(now);
    request_negotiation(now);
    check_drain(pid, now);
    maybe_stop(now);
}

// Undo everything a task holds on its pilot; the slot itself is the matchmaker's.
void Simulation::cleanup(TaskId task, SimTime now) {
    auto it = runs_.find(task);
    if (it == runs_.end()) return;
    auto& run = it->second;
    if (run.transfer) transfers_.cancel(*run.transfer, now);
    if (run.computing) {
        set_busy(-1, now);
        // completed or lost, the core was busy for exactly this long
        accounted_busy_s_ += (now - run.compute_start).seconds();
    }
    auto& rec = pilots_.at(run.pilot);
    if (run.node_slot >= 0) {
        const int node = rec.pilot->nodes().at(static_cast<std::size_t>(run.node_slot));
        if (auto s = scratch_.find(node); s != scratch_.end()) s->second.release(task);
        --rec.node_load[static_cast<std::size_t>(run.node_slot)];
    }
    runs_.erase(it);
}

void Simulation::fail_task(TaskId task, FailureReason why, SimTime now) {
    cleanup(task, now);
    mm_.release(task);
    if (dag_.record_failure(task, why) == FailureOutcome::Retry) {
        mm_.submit(ads_.at(task));
    }
    request_negotiation(now);
}

// ---------------------------------------------------------------- pilots

void Simulation::log(SimTime now, PilotId pid, const std::string& what) {
    pilot_log_.push_back(PilotLogEntry{now, pid, what});
}

void Simulation::check_cluster() {
    if (!opt_.check_invariants_every_event) return;
    ++invariant_checks_;
    if (!cluster_.check_invariants()) ++invariant_violations_;
}

void Simulation::on_batch_start(const BatchJob& job, const Placement& p) {
    check_cluster();
    if (job.priority >= kReservationPriority) reservation_started_s_ = p.start.seconds();
    if (job.kind != JobKind::Pilot) return;
    const SimTime now = p.start;
    const PilotId pid = pilot_by_job_.at(job.id);
    auto& rec = pilots_.at(pid);
    rec.pilot->provision(p.nodes);
    rec.node_load.assign(p.nodes.size(), 0);
    mds_.pilot_attached(static_cast<int>(p.nodes.size()));
    set_provisioned(static_cast<std::int64_t>(p.nodes.size()) * scn_.cluster.cores_per_node, now);
    ++active_pilots_;
    note_active_change(now);
    log(now, pid, fmt::format("provisioned nodes={}", p.nodes.size()));
    sample(now, false);
    engine_.schedule(now + SimTime{scn_.pilots.startup_s * 1000}, EventKind::Generic,
                     [this, pid](Engine& e) { serve(pid, e.now()); });
}

void Simulation::on_batch_end(const BatchJob& job, const Placement& p, bool killed) {
    check_cluster();
    const SimTime now = engine_.now();
    if (job.kind != JobKind::Pilot) {
        if (job.background && background_) background_->replenish(now);
        return;
    }
    (void)p;
    if (!killed) return;  // released by terminate_pilot
    const PilotId pid = pilot_by_job_.at(job.id);
    auto& rec = pilots_.at(pid);
    if (rec.pilot->state() == PilotState::Terminated) return;
    if (rec.registered) {
        for (TaskId task : mm_.running_on(pid)) {
            if (task >= kExternalBase) {
                mm_.release(task);
            } else {
                fail_task(task, FailureReason::WalltimeKilled, now);
            }
        }
        mm_.unregister_glidein(pid);
        rec.registered = false;
    }
    set_provisioned(-static_cast<std::int64_t>(rec.pilot->node_count()) * scn_.cluster.cores_per_node, now);
    rec.pilot->terminate();
    --active_pilots_;
    note_active_change(now);
    last_pilot_end_ = now;
    log(now, pid, "walltime-killed");
    sample(now, false);
    request_negotiation(now);
    maybe_stop(now);
}

void Simulation::serve(PilotId pid, SimTime now) {
    auto& rec = pilots_.at(pid);
    if (rec.pilot->state() != PilotState::Provisioned) return;
    rec.pilot->serve();
    log(now, pid, "serving");
    mm_.register_glidein(make_glidein_ad(pid, scn_.pilots.site, rec.pilot->slots()));
    rec.registered = true;
    if (mm_.waiting(SiteClass::Osg) == 0) {
        terminate_pilot(pid, now, "idle");
        return;
    }
    request_negotiation(now);
}

void Simulation::check_drain(PilotId pid, SimTime now) {
    auto it = pilots_.find(pid);
    if (it == pilots_.end()) return;
    auto& rec = it->second;
    if (rec.pilot->state() != PilotState::Serving || !rec.registered) return;
    if (mm_.waiting(SiteClass::Osg) != 0) return;
    if (mm_.busy_slots(pid) != 0) return;
    terminate_pilot(pid, now, "drained");
}

void Simulation::check_all_drains(SimTime now) {
    if (mm_.waiting(SiteClass::Osg) != 0) return;
    for (auto& [pid, rec] : pilots_) check_drain(pid, now);
}

void Simulation::terminate_pilot(PilotId pid, SimTime now, const std::string& why) {
    auto& rec = pilots_.at(pid);
    rec.pilot->drain();
    if (rec.registered) {
        mm_.unregister_glidein(pid);
        rec.registered = false;
    }
    set_provisioned(-static_cast<std::int64_t>(rec.pilot->node_count()) * scn_.cluster.cores_per_node, now);
    rec.pilot->terminate();
    --active_pilots_;
    note_active_change(now);
    last_pilot_end_ = now;
    log(now, pid, why);
    cluster_.release(rec.batch_job, now);
    sample(now, false);
    maybe_stop(now);
}

// ---------------------------------------------------------------- faults

void Simulation::schedule_preemption(SimTime now) {
    const double gap = preempt_rng_.exponential(3600.0 / scn_.faults.preemption_rate_per_hour);
    engine_.schedule(now + SimTime::from_seconds(gap), EventKind::Preemption, [this](Engine& e) {
        JobAd ad;
        ad.task_id = next_external_++;
        ad.route = SiteClass::Osg;
        ad.priority = Priority::High;
        ad.requirements.require(attr::kIsGlidein, PredicateOp::MetaEqual, true);
        ad.submit_time = e.now();
        mm_.submit(ad);
        request_negotiation(e.now());
        if (!stopped_) schedule_preemption(e.now());
    });
}

// ---------------------------------------------------------------- accounting

void Simulation::integrate(SimTime now) {
    const double dt = static_cast<double>((now - last_integrate_).millis);
    busy_ms_ += dt * static_cast<double>(busy_cores_);
    provisioned_ms_ += dt * static_cast<double>(provisioned_cores_);
    last_integrate_ = now;
}

void Simulation::set_busy(std::int64_t delta, SimTime now) {
    integrate(now);
    busy_cores_ += delta;
}

void Simulation::set_provisioned(std::int64_t delta, SimTime now) {
    integrate(now);
    provisioned_cores_ += delta;
}

void Simulation::note_active_change(SimTime now) {
    if (active_pilots_ >= 2) {
        single_pilot_from_ = -1;
    } else if (active_pilots_ == 1 && single_pilot_from_ < 0) {
        single_pilot_from_ = now.seconds();
    }
}

void Simulation::sample(SimTime now, bool cadence) {
    transfers_.advance(now);
    const double read = transfers_.bytes_moved() + reread_bytes_;
    if (cadence) {
        if (have_cadence_ && now > last_cadence_) {
            const double dt = (now - last_cadence_).seconds();
            rate_read_ = (read - cadence_read_) / dt / 1e6;
            rate_write_ = (write_bytes_ - cadence_write_) / dt / 1e6;
            rate_mds_ = static_cast<double>(mds_.ops() - cadence_mds_) / dt;
        }
        have_cadence_ = true;
        last_cadence_ = now;
        cadence_read_ = read;
        cadence_write_ = write_bytes_;
        cadence_mds_ = mds_.ops();
    }
    Sample s;
    s.t_s = now.seconds();
    s.cores_provisioned = provisioned_cores_;
    s.cores_busy = busy_cores_;
    s.read_MBps = rate_read_;
    s.write_MBps = rate_write_;
    s.pilots_active = active_pilots_;
    if (dag_.size() > 0) {
        const auto c = dag_.counts();
        s.tasks_waiting = c.ready;
        s.tasks_running = c.staging + c.running;
        s.tasks_done = c.done;
        s.tasks_failed = c.failed;
    }
    s.mds_ops_per_s = rate_mds_;
    s.active_transfers = static_cast<std::int64_t>(transfers_.active());
    if (s.cores_busy > s.cores_provisioned) ++invariant_violations_;
    ++invariant_checks_;

    CumulativePoint cp{s.t_s, read, write_bytes_, osg_starts_};
    if (!samples_.empty() && samples_.back().t_s == s.t_s) {
        samples_.back() = s;
        cumulative_.back() = cp;
    } else {
        samples_.push_back(s);
        cumulative_.push_back(cp);
    }
}

void Simulation::sample_tick(SimTime now) {
    sample(now, true);
    for (const auto& row : mm_.pool_snapshot()) {
        if (row.pilot_id == kLocalPool) continue;
        pool_.push_back(PoolSample{now.seconds(), row});
    }
    availability_.push_back(cluster_.availability_at(now));
    if (stopped_) return;
    const SimTime next = now + SimTime::from_seconds(scn_.engine.sample_period_s);
    if (next.seconds() <= scn_.engine.end_time_s) {
        engine_.schedule(next, EventKind::SampleTick, [this](Engine& e) { sample_tick(e.now()); });
    }
}

bool Simulation::quiescent() const {
    if (!scn_.workflow_enabled) return false;
    if (background_ || scn_.faults.reservation_at_s >= 0) return false;
    for (const auto& [pid, rec] : pilots_) {
        if (rec.pilot->state() != PilotState::Terminated) return false;
    }
    return runs_.empty() && local_in_flight_ == 0 && mm_.waiting(SiteClass::Local) == 0;
}

void Simulation::maybe_stop(SimTime now) {
    if (stopped_ || !quiescent()) return;
    stopped_ = true;
    integrate(now);
    sample(now, true);
    engine_.stop();
}

}  // namespace

RunResult simulate(const Scenario& scenario, const RunOptions& options) {
    validate(scenario);
    Simulation sim(scenario, options);
    return sim.run();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
        out << text;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_outputs(const RunResult& r, const Scenario& scenario, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_file(dir / "metrics.csv", metrics_csv(r.samples));
    write_file(dir / "summary.txt", summary_text(r.summary));
    write_file(dir / "io.csv", io_csv(r.samples));

    std::string log;
    for (const auto& e : r.pilot_log) log += fmt::format("{},{},{}\n", e.t.seconds(), e.pilot_id, e.event);
    write_file(dir / "pilots.log", log);

    std::string pool = "t_s,pilot_id,site,slots_total,slots_busy\n";
    for (const auto& p : r.pool) {
        pool += fmt::format("{},{},{},{},{}\n", p.t_s, p.row.pilot_id, p.row.site, p.row.slots_total, p.row.slots_busy);
    }
    write_file(dir / "pool.csv", pool);

    std::string avail = "t_s,free_cores,drained_cores,busy_cores\n";
    for (const auto& a : r.availability) {
        avail += fmt::format("{},{},{},{}\n", a.t.seconds(), a.free_cores, a.drained_cores, a.busy_cores);
    }
    write_file(dir / "availability.csv", avail);
    write_file(dir / "dag.txt", r.dag_dump);
    write_file(dir / "utilization.svg", utilization_svg(r.samples));
    write_file(dir / "io.svg", io_svg(r.samples));
    if (scenario.payload.enabled) write_file(dir / "triggers.csv", triggers_csv(r.top_triggers));
    write_file(dir / "scenario.txt", scenario_text(scenario));
}

int run(const Scenario& scenario, const std::string& out_dir) {
    const auto r = simulate(scenario);
    write_outputs(r, scenario, out_dir);
    return r.exit_code;
}

std::vector<SweepRow> sweep(const Scenario& base, const std::string& key, const std::vector<std::string>& values) {
    const std::string canonical = resolve_key(key);
    std::vector<SweepRow> rows;
    for (const auto& v : values) {
        Scenario s = base;
        set_value(s, canonical, v);
        validate(s);
        const auto r = simulate(s);
        rows.push_back(SweepRow{v, r.exit_code, r.summary});
    }
    return rows;
}

std::string sweep_csv(const std::string& key, const std::vector<SweepRow>& rows) {
    std::string out = fmt::format(
        "{},exit_code,plateau_count,steady_state_s,makespan_s,peak_read_MBps,time_avg_utilization,"
        "opportunistic_core_hours,tasks_done,tasks_failed\n",
        key);
    for (const auto& r : rows) {
        const auto& s = r.summary;
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.value, r.exit_code, s.plateau_count, s.steady_state_s,
                           s.makespan_s, s.peak_read_MBps, s.time_avg_utilization, s.opportunistic_core_hours,
                           s.tasks_done, s.tasks_failed);
    }
    return out;
}

PayloadCheck check_payload_oracle(int instances, std::uint64_t seed, int n, int m, int k) {
    PayloadCheck out;
    out.instances = instances;
    for (int i = 0; i < instances; ++i) {
        RandomStream rng(seed, fmt::format("validate/payload/{}", i));
        DataSegment d;
        d.samples.resize(static_cast<std::size_t>(n));
        for (auto& x : d.samples) x = rng.uniform(-1.0, 1.0);
        TemplateBank bank;
        for (int t = 0; t < k; ++t) {
            std::vector<double> h(static_cast<std::size_t>(m));
            for (auto& x : h) x = rng.uniform(-1.0, 1.0);
            bank.templates.push_back(std::move(h));
        }
        const auto fast = matched_filter(d, bank);
        const auto slow = matched_filter_direct(d, bank);
        for (std::size_t j = 0; j < fast.size(); ++j) {
            out.max_abs_dsnr = std::max(out.max_abs_dsnr, std::abs(fast[j].snr - slow[j].snr));
            if (fast[j].time_index != slow[j].time_index) ++out.argmax_mismatches;
        }
    }
    return out;
}

bool InvarianceCheck::identical() const {
    if (csvs.empty()) return false;
    return std::all_of(csvs.begin(), csvs.end(), [&](const std::string& c) { return c == csvs.front(); });
}

Scenario invariance_scenario() {
    Scenario s = default_scenario();
    s.cluster.g = 4;
    s.pilots.groups = 3;
    s.pilots.nodes_per_group = 2;
    s.pilots.stagger_s = 600;
    s.workflow.data_days = 0.002;
    s.workflow.scale = 1;
    s.workflow.runtime_lo_s = 600;
    s.workflow.runtime_hi_s = 1800;
    s.payload.enabled = true;
    return s;
}

InvarianceCheck check_schedule_invariance(const Scenario& scenario, const std::vector<std::uint64_t>& seeds) {
    InvarianceCheck out;
    out.seeds = seeds;
    for (auto seed : seeds) {
        Scenario s = scenario;
        s.payload.enabled = true;
        s.engine.seed = seed;
        const auto r = simulate(s);
        out.csvs.push_back(triggers_csv(r.top_triggers));
    }
    return out;
}

RunSummary report(const std::string& out_dir, double threshold, double min_plateau_s) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    std::ifstream in(dir / "metrics.csv");
    if (!in) throw std::runtime_error(fmt::format("no metrics.csv in {}", out_dir));
    std::stringstream buf;
    buf << in.rdbuf();
    const auto samples = parse_metrics_csv(buf.str());
    auto s = summarize(samples, threshold, min_plateau_s);
    write_file(dir / "utilization.svg", utilization_svg(samples));
    write_file(dir / "io.svg", io_svg(samples));
    write_file(dir / "report.txt", summary_text(s));
    return s;
}

}  // namespace glidesim
