#include "glidesim/engine.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::PilotLaunch: return "pilot-launch";
        case EventKind::TransferDone: return "transfer-done";
        case EventKind::TaskStart: return "task-start";
        case EventKind::TaskDone: return "task-done";
        case EventKind::SchedulerTick: return "scheduler-tick";
        case EventKind::SampleTick: return "sample-tick";
        case EventKind::WalltimeKill: return "walltime-kill";
        case EventKind::Preemption: return "preemption";
        case EventKind::Generic: return "generic";
    }
    return "unknown";
}

std::uint64_t Engine::schedule(SimTime at, EventKind kind, std::function<void(Engine&)> fire) {
    if (at < now_) {
        throw std::logic_error(fmt::format("event '{}' scheduled at {} ms, before clock {} ms",
                                           to_string(kind), at.millis, now_.millis));
    }
    const auto seq = next_seq_++;
    queue_.push(Event{at, seq, kind, std::move(fire)});
    return seq;
}

SimTime Engine::run_until(SimTime end) {
    stopped_ = false;
    while (!queue_.empty() && !stopped_) {
        if (queue_.top().at > end) break;
        // priority_queue::top is const; the handler is moved out before pop.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.at;
        ++fired_;
        if (ev.fire) ev.fire(*this);
    }
    if (!stopped_ && now_ < end) now_ = end;
    return now_;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t root_seed, std::string_view entity_key)
    : root_seed_(root_seed), key_(entity_key) {
    std::uint64_t mix = root_seed ^ 0x5851f42d4c957f2dULL;
    const std::uint64_t a = splitmix64(mix);
    std::uint64_t k = fnv1a(entity_key);
    state_ = a ^ splitmix64(k);
}

std::uint64_t RandomStream::next_u64() { return splitmix64(state_); }

double RandomStream::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
    if (lo > hi) {
        throw std::invalid_argument(fmt::format("uniform draw with lo {} > hi {}", lo, hi));
    }
    if (lo == hi) return lo;
    const double v = lo + (hi - lo) * next_unit();
    return v < hi ? v : lo;
}

std::int64_t RandomStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) {
        throw std::invalid_argument(fmt::format("uniform_int with lo {} > hi {}", lo, hi));
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

double RandomStream::exponential(double mean) {
    double u = next_unit();
    return -mean * std::log1p(-u);
}

double draw_uniform(RandomStream& stream, double lo, double hi) { return stream.uniform(lo, hi); }

}  // namespace glidesim
