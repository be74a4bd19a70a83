#include "glidesim/staging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

TransferServer::TransferServer(Engine& engine, double aggregate_Bps, double per_stream_cap_Bps)
    : engine_(engine), aggregate_Bps_(aggregate_Bps), per_stream_cap_Bps_(per_stream_cap_Bps),
      last_update_(engine.now()) {
    if (!(aggregate_Bps > 0) || !(per_stream_cap_Bps > 0)) {
        throw std::invalid_argument("transfer bandwidths must be positive");
    }
}

double TransferServer::stream_rate_Bps() const {
    if (active_.empty()) return 0;
    return std::min(per_stream_cap_Bps_, aggregate_Bps_ / static_cast<double>(active_.size()));
}

void TransferServer::advance(SimTime now) {
    if (now < last_update_) throw std::logic_error("transfer server advanced backwards");
    const double dt = static_cast<double>((now - last_update_).millis) / 1000.0;
    if (dt > 0 && !active_.empty()) {
        const double rate = stream_rate_Bps();
        for (auto& [id, a] : active_) {
            const double size = static_cast<double>(a.req.file.size_bytes);
            const double step = std::min(rate * dt, size - a.req.bytes_done);
            a.req.bytes_done += step;
            bytes_moved_ += step;
        }
    }
    last_update_ = now;
}

TransferTicket TransferServer::request_transfer(const FileRef& file, std::int64_t dest, SimTime now, DoneFn on_done) {
    advance(now);
    const TransferId id = next_id_++;
    if (file.size_bytes <= 0) {
        ++completed_;
        engine_.schedule(now, EventKind::TransferDone, [cb = std::move(on_done), id](Engine& e) {
            if (cb) cb(id, e.now());
        });
        return {id, now};
    }
    Active a;
    a.req = TransferRequest{id, file, dest, now, 0.0};
    a.on_done = std::move(on_done);
    active_.emplace(id, std::move(a));
    reschedule(now);
    const double rate = stream_rate_Bps();
    const double secs = static_cast<double>(file.size_bytes) / rate;
    return {id, now + SimTime{static_cast<std::int64_t>(std::ceil(secs * 1000.0))}};
}

void TransferServer::cancel(TransferId id, SimTime now) {
    advance(now);
    if (active_.erase(id) == 0) return;
    reschedule(now);
}

void TransferServer::reschedule(SimTime now) {
    const auto gen = ++generation_;
    if (active_.empty()) return;
    const double rate = stream_rate_Bps();
    peak_rate_ = std::max(peak_rate_, rate * static_cast<double>(active_.size()));
    double min_remaining = std::numeric_limits<double>::infinity();
    for (const auto& [id, a] : active_) {
        min_remaining = std::min(min_remaining, static_cast<double>(a.req.file.size_bytes) - a.req.bytes_done);
    }
    const auto delay_ms = static_cast<std::int64_t>(std::ceil(std::max(0.0, min_remaining) / rate * 1000.0));
    engine_.schedule(now + SimTime{delay_ms}, EventKind::TransferDone,
                     [this, gen](Engine& e) { on_tick(e.now(), gen); });
}

void TransferServer::on_tick(SimTime now, std::uint64_t gen) {
    if (gen != generation_) return;
    advance(now);
    const double rate = stream_rate_Bps();
    // Anything with less than a millisecond of work left is complete.
    const double slack = rate * 0.001 + 1e-6;
    std::vector<std::pair<TransferId, DoneFn>> done;
    for (auto it = active_.begin(); it != active_.end();) {
        const double size = static_cast<double>(it->second.req.file.size_bytes);
        if (size - it->second.req.bytes_done <= slack) {
            bytes_moved_ += size - it->second.req.bytes_done;
            bytes_delivered_ += it->second.req.file.size_bytes;
            ++completed_;
            done.emplace_back(it->first, std::move(it->second.on_done));
            it = active_.erase(it);
        } else {
            ++it;
        }
    }
    reschedule(now);
    for (auto& [id, cb] : done) {
        if (cb) cb(id, now);
    }
}

std::string_view to_string(FsMode m) { return m == FsMode::Bare ? "bare" : "container"; }

std::int64_t mds_ops_for_task(const FsConfig& fs) {
    return fs.mode == FsMode::Bare ? fs.opens_per_task : 0;
}

std::int64_t mds_ops_for_attach(const FsConfig& fs, int nodes) {
    return fs.mode == FsMode::ContainerImage ? nodes : 0;
}

ScratchResult ScratchVolume::write(TaskId task, std::int64_t bytes) {
    if (bytes < 0) throw std::invalid_argument("negative scratch write");
    if (bytes > capacity_ - used_) return ScratchResult::ScratchFull;
    used_ += bytes;
    held_[task] += bytes;
    return ScratchResult::Ok;
}

void ScratchVolume::release(TaskId task) {
    auto it = held_.find(task);
    if (it == held_.end()) return;
    used_ -= it->second;
    held_.erase(it);
}

ScratchResult scratch_write(ScratchVolume& volume, TaskId task, std::int64_t bytes) {
    return volume.write(task, bytes);
}

}  // namespace glidesim
