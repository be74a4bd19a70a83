#include "doctest.h"

#include "glidesim/staging.hpp"

#include <vector>

using namespace glidesim;

namespace {
constexpr double MBps = 1e6;
const FileRef frame{"frame-000000.gwf", 400'000'000};
}  // namespace

TEST_CASE("single 400 MB transfer takes about 5.5 s") {
    Engine e;
    TransferServer s(e, 72.7 * MBps, 72.7 * MBps);
    SimTime done{-1};
    const auto ticket = s.request_transfer(frame, 0, SimTime{}, [&](TransferId, SimTime t) { done = t; });
    e.run_until(SimTime::from_seconds(60));
    CHECK(done.seconds() == doctest::Approx(5.5).epsilon(0.1 / 5.5));
    CHECK(ticket.estimated_completion == done);
    CHECK(s.bytes_delivered() == frame.size_bytes);
}

TEST_CASE("160 simultaneous transfers share the aggregate") {
    Engine e;
    TransferServer s(e, 72.7 * MBps, 72.7 * MBps);
    std::vector<SimTime> done;
    for (int i = 0; i < 160; ++i) {
        s.request_transfer(frame, i, SimTime{}, [&](TransferId, SimTime t) { done.push_back(t); });
    }
    CHECK(s.aggregate_rate_Bps() <= 72.7 * MBps * (1 + 1e-12));
    e.run_until(SimTime::from_hours(1));
    REQUIRE(done.size() == 160);
    CHECK(done.back().seconds() == doctest::Approx(880).epsilon(60.0 / 880));
    CHECK(s.bytes_delivered() == 160LL * frame.size_bytes);
    CHECK(s.bytes_moved() == doctest::Approx(160.0 * 400e6));
    CHECK(s.active() == 0);
}

TEST_CASE("per-stream cap limits a lone stream") {
    Engine e;
    TransferServer s(e, 100 * MBps, 10 * MBps);
    SimTime done{};
    s.request_transfer({"f", 100'000'000}, 0, SimTime{}, [&](TransferId, SimTime t) { done = t; });
    CHECK(s.stream_rate_Bps() == doctest::Approx(10 * MBps));
    e.run_until(SimTime::from_seconds(100));
    CHECK(done.seconds() == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("late arrivals re-rate active streams") {
    Engine e;
    TransferServer s(e, 100 * MBps, 100 * MBps);
    SimTime a{}, b{};
    s.request_transfer({"a", 100'000'000}, 0, SimTime{}, [&](TransferId, SimTime t) { a = t; });
    e.schedule(SimTime::from_seconds(0.5), EventKind::Generic, [&](Engine& eng) {
        s.request_transfer({"b", 100'000'000}, 1, eng.now(), [&](TransferId, SimTime t) { b = t; });
    });
    e.run_until(SimTime::from_seconds(10));
    // a: 50 MB alone, then 50 MB at half rate; b finishes its last 50 MB alone
    CHECK(a.seconds() == doctest::Approx(1.5).epsilon(1e-3));
    CHECK(b.seconds() == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("zero-byte transfers complete at once") {
    Engine e;
    TransferServer s(e, 72.7 * MBps, 72.7 * MBps);
    SimTime done{-1};
    const SimTime now = SimTime::from_seconds(3);
    e.run_until(now);
    s.request_transfer({"empty", 0}, 0, now, [&](TransferId, SimTime t) { done = t; });
    e.run_until(now);
    CHECK(done == now);
}

TEST_CASE("cancel keeps partial progress counted") {
    Engine e;
    TransferServer s(e, 100 * MBps, 100 * MBps);
    bool fired = false;
    const auto t = s.request_transfer({"a", 100'000'000}, 0, SimTime{}, [&](TransferId, SimTime) { fired = true; });
    e.run_until(SimTime::from_seconds(0.25));
    s.cancel(t.id, e.now());
    e.run_until(SimTime::from_seconds(5));
    CHECK_FALSE(fired);
    CHECK(s.bytes_moved() == doctest::Approx(25e6).epsilon(1e-3));
    CHECK(s.bytes_delivered() == 0);
}

TEST_CASE("metadata operations by filesystem mode") {
    FsConfig bare{FsMode::Bare, 50, 1};
    FsConfig image{FsMode::ContainerImage, 50, 1};
    CHECK(mds_ops_for_task(bare) == 50);
    CHECK(mds_ops_for_task(image) == 0);
    image.opens_per_task = 500;
    CHECK(mds_ops_for_task(image) == 0);
    CHECK(mds_ops_for_attach(image, 10) == 10);
    CHECK(mds_ops_for_attach(bare, 10) == 0);
    MetadataServer mds(image);
    mds.pilot_attached(10);
    for (int i = 0; i < 100; ++i) mds.task_started();
    CHECK(mds.ops() == 10);
}

TEST_CASE("scratch capacity under the limit") {
    ScratchVolume v(10'000'000'000);
    for (TaskId t = 0; t < 100; ++t) CHECK(scratch_write(v, t, 50'000'000) == ScratchResult::Ok);
    CHECK(v.used_bytes() == 5'000'000'000);
}

TEST_CASE("a 1 GB scratch fails from the 21st 50 MB task") {
    ScratchVolume v(1'000'000'000);
    int first_failure = -1;
    for (int t = 1; t <= 30; ++t) {
        if (scratch_write(v, t, 50'000'000) == ScratchResult::ScratchFull && first_failure < 0) first_failure = t;
        CHECK(v.used_bytes() <= v.capacity_bytes());
    }
    CHECK(first_failure == 21);
    v.release(1);
    CHECK(scratch_write(v, 31, 50'000'000) == ScratchResult::Ok);
}

TEST_CASE("unlimited scratch never fills") {
    ScratchVolume v(kUnlimitedScratch, "/local/user");
    for (TaskId t = 0; t < 1000; ++t) CHECK(scratch_write(v, t, 1'000'000'000) == ScratchResult::Ok);
}
