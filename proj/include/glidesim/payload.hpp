#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glidesim {

struct DataSegment {
    std::vector<double> samples;  // length must be a power of two
    double sample_interval_s = 1.0 / 4096;
};

struct TemplateBank {
    std::vector<std::vector<double>> templates;  // id = index
    std::size_t size() const { return templates.size(); }
};

struct Trigger {
    std::int64_t template_id = 0;
    std::int64_t time_index = 0;
    double snr = 0;
    friend bool operator==(const Trigger&, const Trigger&) = default;
};

bool is_power_of_two(std::size_t n);

/// Throws std::invalid_argument on a bad segment length, an empty or
/// zero-norm template, or a template longer than the data.
void check_inputs(const DataSegment& data, const TemplateBank& bank);

/// Time-domain reference: O(N * M) per template.
std::vector<Trigger> matched_filter_direct(const DataSegment& data, const TemplateBank& bank);

/// One trigger per template: the circular lag maximizing the normalized
/// correlation |<d_t, h>| / (|d_t| |h|). Lags whose window has no energy
/// score 0; ties go to the smallest lag.
std::vector<Trigger> matched_filter(const DataSegment& data, const TemplateBank& bank);

/// Sorted by (snr desc, template_id asc, time_index asc), truncated to k.
std::vector<Trigger> top_k(std::vector<Trigger> triggers, std::size_t k = 20);

/// `rank,template_id,time_index,snr` with round-trip precision.
std::string triggers_csv(const std::vector<Trigger>& ranked);

struct PayloadParams {
    bool enabled = false;
    int n_samples = 1024;
    int template_len = 64;
    int n_templates = 8;
    std::uint64_t seed = 2017;  // independent of the engine seed
};

/// Deterministic chirp-like templates, Hann tapered.
TemplateBank make_bank(const PayloadParams& params);

/// Noise plus one injected template for the given segment (one per task).
DataSegment make_segment(const PayloadParams& params, const TemplateBank& bank, std::uint64_t seed,
                         std::int64_t segment_index);

/// Runs the filter on a segment and offsets time_index by segment_index * N.
std::vector<Trigger> analyze_segment(const PayloadParams& params, const TemplateBank& bank, std::uint64_t seed,
                                     std::int64_t segment_index);

}  // namespace glidesim
