#include "doctest.h"

#include "glidesim/pilot.hpp"

#include <stdexcept>

using namespace glidesim;

TEST_CASE("effective speed from core binding depth") {
    CHECK(effective_speed(1, 16, 16) == doctest::Approx(1.0 / 16));
    CHECK(effective_speed(32, 32, 16) == 1.0);
    CHECK(effective_speed(16, 16, 16) == 1.0);
    CHECK(effective_speed(32, 16, 16) == 1.0);
    CHECK(effective_speed(4, 16, 16) == doctest::Approx(0.25));
    CHECK_THROWS_AS(effective_speed(0, 16, 16), std::invalid_argument);
}

TEST_CASE("uniform stagger launch plan") {
    PilotPlan plan;
    plan.groups = 5;
    plan.nodes_per_group = 10;
    plan.stagger_s = 1800;
    const auto l = launch_plan(plan, SimTime{});
    REQUIRE(l.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(l[static_cast<std::size_t>(k)].submit_at == SimTime::from_seconds(1800.0 * k));
        CHECK(l[static_cast<std::size_t>(k)].nodes == 10);
    }
}

TEST_CASE("zero stagger submits every group at t0") {
    PilotPlan plan;
    plan.stagger_s = 0;
    const SimTime t0 = SimTime::from_seconds(42);
    for (const auto& l : launch_plan(plan, t0)) CHECK(l.submit_at == t0);
}

TEST_CASE("explicit offsets override the stagger") {
    PilotPlan plan;
    plan.nodes_per_group = 5;
    plan.offsets_s = {0, 0, 0, 1200, 3000};
    const auto l = launch_plan(plan, SimTime{});
    REQUIRE(l.size() == 5);
    const std::vector<double> want{0, 0, 0, 1200, 3000};
    for (std::size_t k = 0; k < 5; ++k) CHECK(l[k].submit_at == SimTime::from_seconds(want[k]));
}

TEST_CASE("plan validation") {
    PilotPlan plan;
    CHECK_NOTHROW(validate(plan));
    plan.depth = 0;
    CHECK_THROWS_AS(validate(plan), std::invalid_argument);
    plan = PilotPlan{};
    plan.walltime_s = 49 * 3600;
    CHECK_THROWS_AS(validate(plan), std::invalid_argument);
    plan = PilotPlan{};
    plan.stagger_s = -1;
    CHECK_THROWS_AS(validate(plan), std::invalid_argument);
    plan = PilotPlan{};
    plan.groups = 0;
    CHECK_THROWS_AS(validate(plan), std::invalid_argument);
}

TEST_CASE("pilot lifecycle is monotone") {
    Pilot p(1, 0, 10, 16, 1.0);
    CHECK(p.slots() == 160);
    CHECK(p.state() == PilotState::Queued);
    p.provision({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(p.holds_nodes());
    p.serve();
    CHECK(p.active());
    p.drain();
    CHECK_THROWS_AS(p.serve(), std::logic_error);
    p.terminate();
    CHECK(p.state() == PilotState::Terminated);
    CHECK_FALSE(p.holds_nodes());
}

TEST_CASE("a killed pilot may skip straight to terminated") {
    Pilot p(2, 0, 1, 16, 0.5);
    p.provision({3});
    p.serve();
    p.terminate();
    CHECK(p.state() == PilotState::Terminated);
    CHECK_FALSE(p.holds_nodes());
}

TEST_CASE("speed factor must be in (0, 1]") {
    CHECK_THROWS_AS(Pilot(1, 0, 1, 16, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Pilot(1, 0, 1, 16, 1.5), std::invalid_argument);
}
