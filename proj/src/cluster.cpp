#include "glidesim/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

namespace {

constexpr double kMillisPerHour = 3.6e6;

SimTime walltime_span(double seconds) { return SimTime::from_seconds(seconds); }

}  // namespace

std::string_view to_string(BatchState s) {
    switch (s) {
        case BatchState::Queued: return "Queued";
        case BatchState::Running: return "Running";
        case BatchState::Done: return "Done";
        case BatchState::Killed: return "Killed";
    }
    return "?";
}

int TorusSpec::router_index(int x, int y, int z) const {
    auto wrap = [this](int v) { return ((v % g) + g) % g; };
    return (wrap(x) * g + wrap(y)) * g + wrap(z);
}

std::array<int, 3> TorusSpec::router_coords(int router) const {
    return {router / (g * g), (router / g) % g, router % g};
}

TorusCluster::TorusCluster(Engine& engine, TorusSpec spec, double max_walltime_s)
    : engine_(engine), spec_(spec), max_walltime_s_(max_walltime_s) {
    if (spec_.g < 1 || spec_.nodes_per_router < 1 || spec_.cores_per_node < 1) {
        throw std::invalid_argument("torus dimensions must be positive");
    }
    owner_.assign(static_cast<std::size_t>(spec_.nodes()), -1);
    free_nodes_ = spec_.nodes();
    reserved_mask_.assign(static_cast<std::size_t>(spec_.nodes()), 0);
    record_segment(engine_.now());
}

const Placement* TorusCluster::placement(JobId id) const {
    auto it = placements_.find(id);
    return it == placements_.end() ? nullptr : &it->second;
}

std::vector<JobId> TorusCluster::running_jobs() const {
    std::vector<JobId> out;
    for (const auto& [id, p] : placements_) out.push_back(id);
    return out;
}

std::int64_t TorusCluster::background_demand_cores() const {
    std::int64_t total = 0;
    for (const auto& [id, j] : jobs_) {
        if (!j.background) continue;
        if (j.state != BatchState::Queued && j.state != BatchState::Running) continue;
        total += static_cast<std::int64_t>(j.dims.volume()) * spec_.nodes_per_router * spec_.cores_per_node;
    }
    return total;
}

JobId TorusCluster::enqueue(BatchJob job) {
    if (job.walltime_s > max_walltime_s_ + 1e-9) {
        throw std::invalid_argument(
            fmt::format("walltime {} s exceeds the {} s limit", job.walltime_s, max_walltime_s_));
    }
    if (job.walltime_s <= 0) throw std::invalid_argument("walltime must be positive");
    if (job.kind == JobKind::Hpc) {
        const auto& d = job.dims;
        if (d.dx < 1 || d.dy < 1 || d.dz < 1 || d.dx > spec_.g || d.dy > spec_.g || d.dz > spec_.g) {
            throw std::invalid_argument(
                fmt::format("prism {}x{}x{} does not fit a torus of side {}", d.dx, d.dy, d.dz, spec_.g));
        }
    } else {
        if (job.node_count < 1 || job.node_count > spec_.nodes()) {
            throw std::invalid_argument(
                fmt::format("pilot asks for {} nodes of {}", job.node_count, spec_.nodes()));
        }
    }
    job.id = next_id_++;
    job.state = BatchState::Queued;
    const auto id = job.id;
    jobs_.emplace(id, job);
    auto pos = std::find_if(queue_.begin(), queue_.end(), [&](JobId other) {
        const auto& o = jobs_.at(other);
        return o.priority < job.priority;
    });
    queue_.insert(pos, id);
    return id;
}

JobId TorusCluster::submit(BatchJob job, SimTime now) {
    const auto id = enqueue(std::move(job));
    request_tick(now);
    return id;
}

std::optional<Placement> TorusCluster::place_hpc(BatchJob job, SimTime now) {
    if (job.kind != JobKind::Hpc) throw std::invalid_argument("place_hpc with a pilot job");
    const auto id = enqueue(std::move(job));
    backfill_tick(now);
    if (const auto* p = placement(id)) return *p;
    return std::nullopt;
}

std::optional<Placement> TorusCluster::place_pilot(BatchJob job, SimTime now) {
    if (job.kind != JobKind::Pilot) throw std::invalid_argument("place_pilot with an HPC job");
    const auto id = enqueue(std::move(job));
    backfill_tick(now);
    if (const auto* p = placement(id)) return *p;
    return std::nullopt;
}

void TorusCluster::request_tick(SimTime now) {
    if (tick_pending_) return;
    tick_pending_ = true;
    engine_.schedule(now, EventKind::SchedulerTick, [this](Engine& e) { backfill_tick(e.now()); });
}

bool TorusCluster::reserved_node(int node) const {
    return reservation_ && reserved_mask_[static_cast<std::size_t>(node)];
}

std::vector<int> TorusCluster::prism_routers(const std::array<int, 3>& o, const PrismDims& d) const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(d.volume()));
    for (int i = 0; i < d.dx; ++i)
        for (int j = 0; j < d.dy; ++j)
            for (int k = 0; k < d.dz; ++k) out.push_back(spec_.router_index(o[0] + i, o[1] + j, o[2] + k));
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<std::array<int, 3>> TorusCluster::find_prism(const PrismDims& d, const std::vector<char>& node_free,
                                                           const std::vector<char>* forbidden) const {
    const int g = spec_.g;
    const int npr = spec_.nodes_per_router;
    std::vector<char> blocked(static_cast<std::size_t>(spec_.routers()), 0);
    int free_routers = 0;
    for (int r = 0; r < spec_.routers(); ++r) {
        bool ok = true;
        for (int k = 0; k < npr && ok; ++k) {
            const auto n = static_cast<std::size_t>(r * npr + k);
            if (!node_free[n] || (forbidden && (*forbidden)[n])) ok = false;
        }
        blocked[static_cast<std::size_t>(r)] = ok ? 0 : 1;
        free_routers += ok ? 1 : 0;
    }
    if (free_routers < d.volume()) return std::nullopt;

    // Summed-area table over the periodic extension [0, 2g)^3.
    const int s = 2 * g + 1;
    std::vector<std::int32_t> sat(static_cast<std::size_t>(s) * s * s, 0);
    auto at = [s](int x, int y, int z) -> std::size_t {
        return (static_cast<std::size_t>(x) * s + static_cast<std::size_t>(y)) * s + static_cast<std::size_t>(z);
    };
    for (int x = 1; x < s; ++x)
        for (int y = 1; y < s; ++y)
            for (int z = 1; z < s; ++z) {
                const int v = blocked[static_cast<std::size_t>(((x - 1) % g * g + (y - 1) % g) * g + (z - 1) % g)];
                sat[at(x, y, z)] = v + sat[at(x - 1, y, z)] + sat[at(x, y - 1, z)] + sat[at(x, y, z - 1)] -
                                   sat[at(x - 1, y - 1, z)] - sat[at(x - 1, y, z - 1)] - sat[at(x, y - 1, z - 1)] +
                                   sat[at(x - 1, y - 1, z - 1)];
            }
    auto box = [&](int x0, int y0, int z0, int x1, int y1, int z1) {
        return sat[at(x1, y1, z1)] - sat[at(x0, y1, z1)] - sat[at(x1, y0, z1)] - sat[at(x1, y1, z0)] +
               sat[at(x0, y0, z1)] + sat[at(x0, y1, z0)] + sat[at(x1, y0, z0)] - sat[at(x0, y0, z0)];
    };
    for (int x = 0; x < g; ++x)
        for (int y = 0; y < g; ++y)
            for (int z = 0; z < g; ++z) {
                if (box(x, y, z, x + d.dx, y + d.dy, z + d.dz) == 0) return std::array<int, 3>{x, y, z};
            }
    return std::nullopt;
}

std::optional<std::vector<int>> TorusCluster::find_nodes(int count, const std::vector<char>& node_free,
                                                         const std::vector<char>* forbidden) const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < spec_.nodes() && static_cast<int>(out.size()) < count; ++n) {
        if (node_free[static_cast<std::size_t>(n)] && !(forbidden && (*forbidden)[static_cast<std::size_t>(n)])) {
            out.push_back(n);
        }
    }
    if (static_cast<int>(out.size()) < count) return std::nullopt;
    return out;
}

std::optional<Placement> TorusCluster::try_start(BatchJob& job, SimTime now, const Shadow* shadow) {
    std::vector<char> node_free(owner_.size());
    for (std::size_t n = 0; n < owner_.size(); ++n) node_free[n] = owner_[n] < 0 ? 1 : 0;

    const SimTime end = now + walltime_span(job.walltime_s);
    std::vector<char> forbidden;
    bool use_forbidden = false;
    if (shadow && !shadow->nodes.empty() && end > shadow->at) {
        forbidden = shadow->nodes;
        use_forbidden = true;
    }
    if (reservation_ && !reservation_started_ && end > reservation_->start_at) {
        if (!use_forbidden) forbidden.assign(owner_.size(), 0);
        for (std::size_t n = 0; n < owner_.size(); ++n) forbidden[n] |= reserved_mask_[n];
        use_forbidden = true;
    }
    const std::vector<char>* mask = use_forbidden ? &forbidden : nullptr;

    if (job.kind == JobKind::Hpc) {
        auto origin = find_prism(job.dims, node_free, mask);
        if (!origin) return std::nullopt;
        auto routers = prism_routers(*origin, job.dims);
        std::vector<int> nodes;
        for (int r : routers)
            for (int k = 0; k < spec_.nodes_per_router; ++k) nodes.push_back(r * spec_.nodes_per_router + k);
        return start(job, std::move(routers), std::move(nodes), *origin, now);
    }
    auto nodes = find_nodes(job.node_count, node_free, mask);
    if (!nodes) return std::nullopt;
    std::vector<int> routers;
    for (int n : *nodes) {
        const int r = spec_.router_of_node(n);
        if (routers.empty() || routers.back() != r) routers.push_back(r);
    }
    return start(job, std::move(routers), std::move(*nodes), {0, 0, 0}, now);
}

Placement TorusCluster::start(BatchJob& job, std::vector<int> routers, std::vector<int> nodes,
                              std::array<int, 3> origin, SimTime now) {
    Placement p;
    p.job_id = job.id;
    p.origin = origin;
    p.routers = std::move(routers);
    p.nodes = std::move(nodes);
    p.start = now;
    p.kill_at = now + walltime_span(job.walltime_s);
    for (int n : p.nodes) {
        auto& o = owner_[static_cast<std::size_t>(n)];
        if (o >= 0) throw std::logic_error(fmt::format("node {} double-booked by jobs {} and {}", n, o, job.id));
        o = job.id;
    }
    free_nodes_ -= static_cast<int>(p.nodes.size());
    if (reservation_ && !reservation_started_ && job.id != reservation_->job_id && p.kill_at > reservation_->start_at &&
        std::any_of(p.nodes.begin(), p.nodes.end(), [this](int n) { return reserved_node(n); })) {
        ++drain_violations_;
    }
    job.state = BatchState::Running;
    const auto gen = ++generation_[job.id];
    const auto id = job.id;
    if (job.runtime_s >= 0 && job.runtime_s < job.walltime_s) {
        engine_.schedule(now + SimTime::from_seconds(job.runtime_s), EventKind::TaskDone, [this, id, gen](Engine& e) {
            if (generation_[id] == gen && jobs_.at(id).state == BatchState::Running) finish(id, e.now(), false);
        });
    } else {
        engine_.schedule(p.kill_at, EventKind::WalltimeKill, [this, id, gen](Engine& e) {
            if (generation_[id] == gen) walltime_kill(id, e.now());
        });
    }
    placements_[id] = p;
    record_segment(now);
    if (on_start_) on_start_(job, p);
    return p;
}

void TorusCluster::finish(JobId id, SimTime now, bool killed) {
    auto it = placements_.find(id);
    if (it == placements_.end()) return;
    Placement p = std::move(it->second);
    placements_.erase(it);
    for (int n : p.nodes) owner_[static_cast<std::size_t>(n)] = -1;
    free_nodes_ += static_cast<int>(p.nodes.size());
    auto& job = jobs_.at(id);
    job.state = killed ? BatchState::Killed : BatchState::Done;
    if (reservation_ && id == reservation_->job_id) {
        reservation_.reset();
        std::fill(reserved_mask_.begin(), reserved_mask_.end(), 0);
        reservation_started_ = false;
    }
    record_segment(now);
    if (on_end_) on_end_(job, p, killed);
    try_start_reservation(now);
    request_tick(now);
}

void TorusCluster::release(JobId id, SimTime now) {
    auto it = jobs_.find(id);
    if (it == jobs_.end() || it->second.state != BatchState::Running) {
        throw std::invalid_argument(fmt::format("release of job {} that is not running", id));
    }
    finish(id, now, false);
}

void TorusCluster::walltime_kill(JobId id, SimTime now) {
    auto it = placements_.find(id);
    if (it == placements_.end()) return;
    if (now < it->second.kill_at) return;
    finish(id, now, true);
}

std::optional<TorusCluster::Shadow> TorusCluster::compute_shadow(const BatchJob& head, SimTime now) const {
    std::vector<std::pair<SimTime, JobId>> releases;
    for (const auto& [id, p] : placements_) {
        if (reservation_ && id == reservation_->job_id) continue;
        releases.emplace_back(p.kill_at, id);
    }
    std::sort(releases.begin(), releases.end());

    auto free_after = [&](std::size_t k) {
        std::vector<char> node_free(owner_.size());
        for (std::size_t n = 0; n < owner_.size(); ++n) node_free[n] = owner_[n] < 0 ? 1 : 0;
        for (std::size_t i = 0; i < k; ++i) {
            for (int n : placements_.at(releases[i].second).nodes) node_free[static_cast<std::size_t>(n)] = 1;
        }
        if (reservation_ && reservation_started_) {
            for (std::size_t n = 0; n < owner_.size(); ++n)
                if (reserved_mask_[n]) node_free[n] = 1;
        }
        return node_free;
    };
    auto nodes_for = [&](const std::vector<char>& node_free) -> std::optional<std::vector<int>> {
        if (head.kind == JobKind::Pilot) return find_nodes(head.node_count, node_free, nullptr);
        auto o = find_prism(head.dims, node_free, nullptr);
        if (!o) return std::nullopt;
        std::vector<int> nodes;
        for (int r : prism_routers(*o, head.dims))
            for (int k = 0; k < spec_.nodes_per_router; ++k) nodes.push_back(r * spec_.nodes_per_router + k);
        return nodes;
    };

    // Fit is monotone in the number of releases; binary search the first k that fits.
    std::size_t lo = 0, hi = releases.size();
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (nodes_for(free_after(mid))) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    SimTime at = lo == 0 ? now : releases[lo - 1].first;
    auto chosen = nodes_for(free_after(lo));
    if (reservation_) {
        const SimTime res_end = (reservation_started_ ? placements_.at(reservation_->job_id).start : reservation_->start_at) +
                                reservation_->duration;
        if (at < res_end && at + walltime_span(head.walltime_s) > reservation_->start_at) {
            at = std::max(at, res_end);
            chosen = nodes_for(std::vector<char>(owner_.size(), 1));
        }
    }
    if (!chosen) return std::nullopt;
    Shadow s;
    s.at = std::max(at, now);
    s.nodes.assign(owner_.size(), 0);
    for (int n : *chosen) s.nodes[static_cast<std::size_t>(n)] = 1;
    return s;
}

std::vector<Placement> TorusCluster::backfill_tick(SimTime now) {
    tick_pending_ = false;
    std::vector<Placement> started;
    while (!queue_.empty()) {
        auto& head = jobs_.at(queue_.front());
        auto p = try_start(head, now, nullptr);
        if (!p) break;
        queue_.erase(queue_.begin());
        started.push_back(std::move(*p));
    }
    if (queue_.size() > 1) {
        const auto shadow = compute_shadow(jobs_.at(queue_.front()), now);
        for (std::size_t i = 1; i < queue_.size();) {
            auto& job = jobs_.at(queue_[i]);
            std::optional<Placement> p;
            if (shadow) p = try_start(job, now, &*shadow);
            if (p) {
                queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(i));
                started.push_back(std::move(*p));
            } else {
                ++i;
            }
        }
    }
    return started;
}

JobId TorusCluster::reserve_full_system(SimTime start_at, SimTime duration, SimTime now) {
    if (reservation_) throw std::logic_error("a system reservation is already active");
    if (start_at < now) throw std::invalid_argument("reservation in the past");
    BatchJob job;
    job.kind = JobKind::Hpc;
    job.dims = PrismDims{spec_.g, spec_.g, spec_.g};
    job.walltime_s = duration.seconds();
    job.runtime_s = duration.seconds();
    job.priority = 1000;
    job.id = next_id_++;
    job.state = BatchState::Queued;
    jobs_.emplace(job.id, job);

    Reservation r;
    r.job_id = job.id;
    r.start_at = start_at;
    r.duration = duration;
    r.created_at = now;
    r.node_set.resize(static_cast<std::size_t>(spec_.nodes()));
    std::iota(r.node_set.begin(), r.node_set.end(), 0);
    reservation_ = std::move(r);
    std::fill(reserved_mask_.begin(), reserved_mask_.end(), 1);
    reservation_started_ = false;

    const SimTime w = walltime_span(max_walltime_s_);
    const SimTime from = start_at - w < now ? now : start_at - w;
    drain_windows_.push_back(DrainWindow{from, start_at});
    record_segment(now);
    engine_.schedule(start_at, EventKind::SchedulerTick, [this](Engine& e) { try_start_reservation(e.now()); });
    return job.id;
}

void TorusCluster::try_start_reservation(SimTime now) {
    if (!reservation_ || reservation_started_ || now < reservation_->start_at) return;
    for (int n : reservation_->node_set) {
        if (owner_[static_cast<std::size_t>(n)] >= 0) return;
    }
    auto& job = jobs_.at(reservation_->job_id);
    std::vector<int> routers(static_cast<std::size_t>(spec_.routers()));
    std::iota(routers.begin(), routers.end(), 0);
    reservation_started_ = true;
    drain_windows_.back().until = now;
    start(job, std::move(routers), reservation_->node_set, {0, 0, 0}, now);
}

std::optional<SimTime> TorusCluster::drain_begin() const {
    if (drain_windows_.empty()) return std::nullopt;
    return drain_windows_.front().from;
}

std::int64_t TorusCluster::free_reserved_cores() const {
    if (!reservation_ || reservation_started_) return 0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < owner_.size(); ++i) {
        if (reserved_mask_[i] && owner_[i] < 0) ++n;
    }
    return n * spec_.cores_per_node;
}

void TorusCluster::record_segment(SimTime now) {
    Segment s;
    s.t = now;
    s.free_reserved = free_reserved_cores();
    s.free_other = static_cast<std::int64_t>(free_nodes_) * spec_.cores_per_node - s.free_reserved;
    s.busy = busy_cores();
    if (!history_.empty() && history_.back().t == now) {
        history_.back() = s;
    } else {
        history_.push_back(s);
    }
    ++events_checked_;
}

CoreHours TorusCluster::core_hours(SimTime a, SimTime b) const {
    if (!(b > a)) throw std::invalid_argument("availability window must have end > start");
    CoreHours out;
    for (std::size_t i = 0; i < history_.size(); ++i) {
        const SimTime s = std::max(history_[i].t, a);
        const SimTime e = std::min(i + 1 < history_.size() ? history_[i + 1].t : b, b);
        if (!(e > s)) continue;
        const double len = static_cast<double>((e - s).millis);
        double drained_len = 0;
        for (const auto& w : drain_windows_) {
            const SimTime ws = std::max(w.from, s);
            const SimTime we = std::min(w.until, e);
            if (we > ws) drained_len += static_cast<double>((we - ws).millis);
        }
        const auto& seg = history_[i];
        out.busy += static_cast<double>(seg.busy) * len;
        out.drained += static_cast<double>(seg.free_reserved) * drained_len;
        out.available += static_cast<double>(seg.free_other) * len +
                         static_cast<double>(seg.free_reserved) * (len - drained_len);
    }
    // Before the first recorded segment the machine was idle.
    if (!history_.empty() && a < history_.front().t) {
        const SimTime e = std::min(history_.front().t, b);
        out.available += static_cast<double>(spec_.cores()) * static_cast<double>((e - a).millis);
    }
    out.available /= kMillisPerHour;
    out.drained /= kMillisPerHour;
    out.busy /= kMillisPerHour;
    return out;
}

double TorusCluster::available_core_hours(SimTime a, SimTime b) const { return core_hours(a, b).available; }

AvailabilityRow TorusCluster::availability_at(SimTime t) const {
    AvailabilityRow row;
    row.t = t;
    auto it = std::upper_bound(history_.begin(), history_.end(), t,
                               [](SimTime v, const Segment& s) { return v < s.t; });
    if (it == history_.begin()) {
        row.free_cores = spec_.cores();
        return row;
    }
    const auto& seg = *std::prev(it);
    bool in_drain = false;
    for (const auto& w : drain_windows_) {
        if (t >= w.from && t < w.until) in_drain = true;
    }
    row.busy_cores = seg.busy;
    row.drained_cores = in_drain ? seg.free_reserved : 0;
    row.free_cores = seg.free_other + (in_drain ? 0 : seg.free_reserved);
    return row;
}

bool TorusCluster::check_invariants() const {
    std::vector<JobId> seen(owner_.size(), -1);
    int occupied = 0;
    for (const auto& [id, p] : placements_) {
        for (int n : p.nodes) {
            auto& s = seen[static_cast<std::size_t>(n)];
            if (s >= 0) return false;
            s = id;
            ++occupied;
        }
    }
    if (seen != owner_) return false;
    if (occupied + free_nodes_ != spec_.nodes()) return false;
    return drain_violations_ == 0;
}

BackgroundLoad::BackgroundLoad(TorusCluster& cluster, BackgroundLoadParams params, std::uint64_t seed)
    : cluster_(cluster), params_(params), rng_(seed, "cluster/background") {
    if (params_.max_dim <= 0) params_.max_dim = std::max(1, cluster_.spec().g / 2);
    params_.max_dim = std::min(params_.max_dim, cluster_.spec().g);
    params_.walltime_max_s = std::min(params_.walltime_max_s, cluster_.max_walltime_s());
}

BatchJob BackgroundLoad::draw_job(bool residual) {
    BatchJob job;
    job.kind = JobKind::Hpc;
    job.background = true;
    job.dims.dx = static_cast<int>(rng_.uniform_int(1, params_.max_dim));
    job.dims.dy = static_cast<int>(rng_.uniform_int(1, params_.max_dim));
    job.dims.dz = static_cast<int>(rng_.uniform_int(1, params_.max_dim));
    const auto lo_h = static_cast<std::int64_t>(std::ceil(params_.walltime_min_s / 3600.0));
    const auto hi_h = static_cast<std::int64_t>(std::floor(params_.walltime_max_s / 3600.0));
    job.walltime_s = 3600.0 * static_cast<double>(rng_.uniform_int(lo_h, std::max(lo_h, hi_h)));
    job.runtime_s = job.walltime_s * rng_.uniform(params_.runtime_min_fraction, 1.0);
    if (residual) {
        const double slack = job.walltime_s - job.runtime_s;
        job.runtime_s = std::max(60.0, job.runtime_s * rng_.next_unit());
        job.walltime_s = std::min(job.walltime_s, std::ceil(job.runtime_s + slack));
    }
    ++generated_;
    return job;
}

void BackgroundLoad::prime(SimTime now) {
    if (params_.target_fraction <= 0) return;
    const double target = params_.target_fraction * static_cast<double>(cluster_.spec().cores());
    while (static_cast<double>(cluster_.background_demand_cores()) < target) {
        if (!cluster_.place_hpc(draw_job(true), now)) break;
    }
}

void BackgroundLoad::replenish(SimTime now) {
    if (params_.target_fraction <= 0) return;
    const double target = params_.target_fraction * static_cast<double>(cluster_.spec().cores());
    while (static_cast<double>(cluster_.background_demand_cores()) < target) {
        cluster_.submit(draw_job(false), now);
    }
}

}  // namespace glidesim
