#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

namespace glidesim {

/// Simulation time in integer milliseconds since start.
struct SimTime {
    std::int64_t millis = 0;

    static constexpr SimTime from_seconds(double s) {
        return SimTime{static_cast<std::int64_t>(s * 1000.0 + (s >= 0 ? 0.5 : -0.5))};
    }
    static constexpr SimTime from_hours(double h) { return from_seconds(h * 3600.0); }

    constexpr double seconds() const { return static_cast<double>(millis) / 1000.0; }
    constexpr double hours() const { return seconds() / 3600.0; }

    friend constexpr auto operator<=>(SimTime, SimTime) = default;
    friend constexpr SimTime operator+(SimTime a, SimTime b) { return {a.millis + b.millis}; }
    friend constexpr SimTime operator-(SimTime a, SimTime b) { return {a.millis - b.millis}; }
};

enum class EventKind : std::uint8_t {
    PilotLaunch,
    TransferDone,
    TaskStart,
    TaskDone,
    SchedulerTick,
    SampleTick,
    WalltimeKill,
    Preemption,
    Generic,
};

std::string_view to_string(EventKind kind);

class Engine;

struct Event {
    SimTime at;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::Generic;
    std::function<void(Engine&)> fire;
};

/// Single-threaded discrete-event core. Events fire in (at, seq) order.
class Engine {
public:
    Engine() = default;
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    SimTime now() const { return now_; }

    /// Throws std::logic_error if `at` lies before the current clock.
    std::uint64_t schedule(SimTime at, EventKind kind, std::function<void(Engine&)> fire);
    std::uint64_t schedule_in(SimTime delay, EventKind kind, std::function<void(Engine&)> fire) {
        return schedule(now_ + delay, kind, std::move(fire));
    }

    /// Processes every event with at <= end; the clock never passes `end`.
    SimTime run_until(SimTime end);

    /// Stop after the current handler returns.
    void stop() { stopped_ = true; }

    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }
    std::uint64_t fired() const { return fired_; }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.at != b.at) return a.at > b.at;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    SimTime now_{};
    std::uint64_t next_seq_ = 0;
    std::uint64_t fired_ = 0;
    bool stopped_ = false;
};

/// Reproducible named random stream. Identical (root_seed, entity_key) pairs
/// produce identical sequences on every platform.
class RandomStream {
public:
    RandomStream(std::uint64_t root_seed, std::string_view entity_key);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of precision.
    double next_unit();
    /// Uniform in [lo, hi); returns lo when lo == hi. Throws std::invalid_argument if lo > hi.
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Exponential with the given mean.
    double exponential(double mean);

    std::uint64_t root_seed() const { return root_seed_; }
    const std::string& key() const { return key_; }

private:
    std::uint64_t root_seed_;
    std::string key_;
    std::uint64_t state_;
};

double draw_uniform(RandomStream& stream, double lo, double hi);

}  // namespace glidesim
