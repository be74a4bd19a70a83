#include "doctest.h"

#include "glidesim/matchmaker.hpp"

#include <set>
#include <stdexcept>

using namespace glidesim;

namespace {
constexpr std::int64_t GB = 1'000'000'000;

RequirementExpr bw_req() {
    RequirementExpr e;
    e.require(attr::kIsGlidein, PredicateOp::MetaEqual, true);
    e.require(attr::kDesiredSites, PredicateOp::Contains, std::string("BlueWaters"));
    return e;
}

JobAd osg_job(TaskId id, double submit_s = 0) {
    JobAd j;
    j.task_id = id;
    j.route = SiteClass::Osg;
    j.requirements = bw_req();
    j.memory_demand_bytes = GB;
    j.walltime_estimate_s = 4 * 3600.0;
    j.io_demand_bytes = GB;
    j.submit_time = SimTime::from_seconds(submit_s);
    return j;
}
}  // namespace

TEST_CASE("admission limits on grid jobs") {
    Matchmaker mm;
    auto ok = osg_job(1);
    ok.memory_demand_bytes = 1'500'000'000;
    ok.io_demand_bytes = 1'300'000'000;
    CHECK(mm.admit(ok).accepted);

    auto fat = osg_job(2);
    fat.memory_demand_bytes = 3 * GB;
    const auto r = mm.admit(fat);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::Memory);

    auto local = osg_job(3);
    local.route = SiteClass::Local;
    local.walltime_estimate_s = 14 * 3600.0;
    CHECK(mm.admit(local).accepted);

    auto slow = osg_job(4);
    slow.walltime_estimate_s = 13 * 3600.0;
    CHECK(mm.admit(slow).reason == RejectReason::Walltime);
    auto heavy = osg_job(5);
    heavy.io_demand_bytes = 11 * GB;
    CHECK(mm.admit(heavy).reason == RejectReason::Io);
}

TEST_CASE("limits are inclusive at the boundary") {
    Matchmaker mm;
    auto j = osg_job(1);
    j.memory_demand_bytes = 2 * GB;
    j.walltime_estimate_s = 12 * 3600.0;
    j.io_demand_bytes = 10 * GB;
    CHECK(mm.admit(j).accepted);
}

TEST_CASE("capacity limits a negotiation cycle") {
    Matchmaker mm;
    for (TaskId i = 1; i <= 3; ++i) mm.submit(osg_job(i, static_cast<double>(i)));
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 2));
    const auto m = mm.negotiate(SimTime{});
    CHECK(m == std::vector<Match>{{1, 1}, {2, 1}});
    CHECK(mm.is_queued(3));
    CHECK(mm.slots_conserved());
}

TEST_CASE("empty queue gives no matches") {
    Matchmaker mm;
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 4));
    CHECK(mm.negotiate(SimTime{}).empty());
}

TEST_CASE("160 jobs fill a 10 x 16 pilot group in one cycle") {
    Matchmaker mm;
    for (TaskId i = 0; i < 160; ++i) mm.submit(osg_job(i));
    mm.register_glidein(make_glidein_ad(7, "BlueWaters", 10 * 16));
    CHECK(mm.negotiate(SimTime{}).size() == 160);
    CHECK(mm.queued() == 0);
    CHECK(mm.busy_slots(7) == 160);
}

TEST_CASE("lowest pilot id wins and requirements are honoured") {
    Matchmaker mm;
    mm.register_glidein(make_local_ad(0, 100));
    mm.register_glidein(make_glidein_ad(5, "Stampede", 4));
    mm.register_glidein(make_glidein_ad(3, "BlueWaters", 4));
    mm.register_glidein(make_glidein_ad(9, "BlueWaters", 4));
    mm.submit(osg_job(1));
    const auto m = mm.negotiate(SimTime{});
    REQUIRE(m.size() == 1);
    CHECK(m[0].pilot_id == 3);
}

TEST_CASE("unsatisfiable jobs stay queued") {
    Matchmaker mm;
    mm.register_glidein(make_glidein_ad(1, "Stampede", 4));
    mm.submit(osg_job(1));
    for (int i = 0; i < 3; ++i) CHECK(mm.negotiate(SimTime::from_seconds(i)).empty());
    CHECK(mm.is_queued(1));
}

TEST_CASE("negotiation is deterministic") {
    auto build = [] {
        Matchmaker mm;
        for (TaskId i = 0; i < 50; ++i) mm.submit(osg_job(i, static_cast<double>(50 - i)));
        for (PilotId p = 1; p <= 4; ++p) mm.register_glidein(make_glidein_ad(p, "BlueWaters", 7));
        return mm.negotiate(SimTime{});
    };
    CHECK(build() == build());
}

TEST_CASE("preempted job restarts on another pilot") {
    Matchmaker mm;
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 1));
    mm.submit(osg_job(10));
    REQUIRE(mm.negotiate(SimTime{}).size() == 1);
    mm.register_glidein(make_glidein_ad(2, "BlueWaters", 1));
    mm.preempt(10, SimTime::from_seconds(100));
    CHECK(mm.is_queued(10));
    CHECK(mm.slots_conserved());
    mm.unregister_glidein(1);
    const auto m = mm.negotiate(SimTime::from_seconds(101));
    REQUIRE(m.size() == 1);
    CHECK(m[0] == Match{10, 2});
    CHECK(mm.preemptions() == 1);
}

TEST_CASE("preempted job keeps its FIFO position") {
    Matchmaker mm;
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 1));
    mm.submit(osg_job(1, 0));
    mm.negotiate(SimTime{});
    mm.submit(osg_job(2, 50));
    mm.preempt(1, SimTime::from_seconds(100));
    const auto m = mm.negotiate(SimTime::from_seconds(100));
    REQUIRE(m.size() == 1);
    CHECK(m[0].task_id == 1);
}

TEST_CASE("preempt of a job that is not running is an error") {
    Matchmaker mm;
    CHECK_THROWS_AS(mm.preempt(1, SimTime{}), std::invalid_argument);
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 1));
    mm.submit(osg_job(1));
    mm.negotiate(SimTime{});
    mm.release(1);
    CHECK_THROWS_AS(mm.preempt(1, SimTime{}), std::invalid_argument);
}

TEST_CASE("preemption composes with the retry limit") {
    WorkflowDag dag;
    TaskSpec t;
    t.stage = Stage::Inspiral;
    const auto id = dag.add_task(t);
    dag.ready_tasks();
    Matchmaker mm;
    mm.attach_workflow(&dag);
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 1));
    mm.submit(osg_job(id));
    for (int attempt = 0; attempt < dag.retry_limit(); ++attempt) {
        REQUIRE(mm.negotiate(SimTime{}).size() == 1);
        dag.mark_staging(id);
        dag.mark_running(id);
        mm.preempt(id, SimTime{});
    }
    CHECK(dag.task(id).state == TaskState::Failed);
    CHECK(dag.task(id).attempts == 3);
    CHECK_FALSE(mm.is_queued(id));
}

TEST_CASE("a high-priority arrival evicts the newest normal job when full") {
    Matchmaker mm;
    mm.register_glidein(make_glidein_ad(1, "BlueWaters", 2));
    mm.submit(osg_job(1));
    mm.negotiate(SimTime::from_seconds(0));
    mm.submit(osg_job(2, 10));
    mm.negotiate(SimTime::from_seconds(10));
    std::vector<TaskId> evicted;
    mm.on_evict([&](TaskId t, PilotId) { evicted.push_back(t); });
    auto hi = osg_job(3, 20);
    hi.priority = Priority::High;
    mm.submit(hi);
    const auto m = mm.negotiate(SimTime::from_seconds(20));
    CHECK(evicted == std::vector<TaskId>{2});
    REQUIRE_FALSE(m.empty());
    CHECK(m[0].task_id == 3);
    CHECK(mm.is_running(1));
    CHECK(mm.slots_conserved());
}

TEST_CASE("no job is ever on two slots") {
    Matchmaker mm;
    for (PilotId p = 1; p <= 3; ++p) mm.register_glidein(make_glidein_ad(p, "BlueWaters", 5));
    for (TaskId i = 0; i < 30; ++i) mm.submit(osg_job(i, static_cast<double>(i)));
    std::set<TaskId> running;
    for (int round = 0; round < 5; ++round) {
        for (const auto& m : mm.negotiate(SimTime::from_seconds(round))) CHECK(running.insert(m.task_id).second);
        CHECK(mm.slots_conserved());
        // finish two and preempt one per round
        int n = 0;
        for (auto it = running.begin(); it != running.end() && n < 3; ++n) {
            if (n == 2) mm.preempt(*it, SimTime::from_seconds(round));
            else mm.release(*it);
            it = running.erase(it);
        }
    }
    int busy = 0;
    for (const auto& row : mm.pool_snapshot()) busy += row.slots_busy;
    CHECK(busy == static_cast<int>(running.size()));
}
