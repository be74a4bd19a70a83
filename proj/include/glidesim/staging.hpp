#pragma once

#include "glidesim/engine.hpp"
#include "glidesim/workflow.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>

namespace glidesim {

using TransferId = std::int64_t;

struct TransferRequest {
    TransferId id = 0;
    FileRef file;
    std::int64_t dest = 0;  // opaque destination tag (pilot slot, task)
    SimTime started{};
    double bytes_done = 0;
};

struct TransferTicket {
    TransferId id = 0;
    SimTime estimated_completion{};
};

/// Shared origin file server. Active streams progress at
/// min(per_stream_cap, aggregate / active) and are re-rated on every
/// membership change.
class TransferServer {
public:
    using DoneFn = std::function<void(TransferId, SimTime)>;

    TransferServer(Engine& engine, double aggregate_Bps, double per_stream_cap_Bps);

    TransferTicket request_transfer(const FileRef& file, std::int64_t dest, SimTime now, DoneFn on_done);
    /// Aborts an in-flight transfer; bytes already moved stay counted as moved.
    void cancel(TransferId id, SimTime now);

    /// Accounts progress up to `now` without changing membership.
    void advance(SimTime now);

    std::size_t active() const { return active_.size(); }
    double stream_rate_Bps() const;
    double aggregate_rate_Bps() const { return stream_rate_Bps() * static_cast<double>(active_.size()); }
    double aggregate_bandwidth_Bps() const { return aggregate_Bps_; }
    double per_stream_cap_Bps() const { return per_stream_cap_Bps_; }

    /// Bytes moved so far, including partial progress of active streams.
    double bytes_moved() const { return bytes_moved_; }
    /// Sum of file sizes of completed transfers.
    std::int64_t bytes_delivered() const { return bytes_delivered_; }
    std::uint64_t completed() const { return completed_; }
    /// Largest aggregate rate observed at any membership change.
    double peak_aggregate_rate_Bps() const { return peak_rate_; }

private:
    struct Active {
        TransferRequest req;
        DoneFn on_done;
    };

    void reschedule(SimTime now);
    void on_tick(SimTime now, std::uint64_t gen);

    Engine& engine_;
    double aggregate_Bps_;
    double per_stream_cap_Bps_;
    std::map<TransferId, Active> active_;
    TransferId next_id_ = 1;
    SimTime last_update_{};
    std::uint64_t generation_ = 0;
    double bytes_moved_ = 0;
    std::int64_t bytes_delivered_ = 0;
    std::uint64_t completed_ = 0;
    double peak_rate_ = 0;
};

enum class FsMode : std::uint8_t { Bare, ContainerImage };
std::string_view to_string(FsMode m);

struct FsConfig {
    FsMode mode = FsMode::ContainerImage;
    int opens_per_task = 50;
    int mds_service_time_ms = 1;
};

/// Metadata-server operations charged when one task runs.
std::int64_t mds_ops_for_task(const FsConfig& fs);
/// Operations charged when a pilot attaches the filesystem on `nodes` nodes.
std::int64_t mds_ops_for_attach(const FsConfig& fs, int nodes);

/// Counts operations reaching the single cluster-wide metadata server.
class MetadataServer {
public:
    explicit MetadataServer(FsConfig fs) : fs_(fs) {}
    void task_started() { ops_ += mds_ops_for_task(fs_); ++tasks_; }
    void pilot_attached(int nodes) {
        ops_ += mds_ops_for_attach(fs_, nodes);
        nodes_attached_ += nodes;
    }
    std::int64_t ops() const { return ops_; }
    std::int64_t tasks() const { return tasks_; }
    std::int64_t nodes_attached() const { return nodes_attached_; }
    const FsConfig& config() const { return fs_; }

private:
    FsConfig fs_;
    std::int64_t ops_ = 0;
    std::int64_t tasks_ = 0;
    std::int64_t nodes_attached_ = 0;
};

inline constexpr std::int64_t kUnlimitedScratch = std::numeric_limits<std::int64_t>::max();

enum class ScratchResult : std::uint8_t { Ok, ScratchFull };

/// Worker scratch directory. used_bytes never exceeds capacity_bytes.
class ScratchVolume {
public:
    explicit ScratchVolume(std::int64_t capacity_bytes = kUnlimitedScratch, std::string path_label = "/tmp")
        : capacity_(capacity_bytes), label_(std::move(path_label)) {}

    ScratchResult write(TaskId task, std::int64_t bytes);
    /// Frees everything the task wrote.
    void release(TaskId task);

    std::int64_t capacity_bytes() const { return capacity_; }
    std::int64_t used_bytes() const { return used_; }
    const std::string& path_label() const { return label_; }

private:
    std::int64_t capacity_;
    std::int64_t used_ = 0;
    std::string label_;
    std::map<TaskId, std::int64_t> held_;
};

ScratchResult scratch_write(ScratchVolume& volume, TaskId task, std::int64_t bytes);

}  // namespace glidesim
