#include "glidesim/payload.hpp"

#include "glidesim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>
#include <fmt/format.h>

namespace glidesim {

namespace {

// Owns the FFTW buffers and plans for one transform length.
class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        real_ = fftw_alloc_real(n);
        spec_ = fftw_alloc_complex(n / 2 + 1);
        forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
        fftw_free(real_);
        fftw_free(spec_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::vector<std::complex<double>> forward(const std::vector<double>& x) {
        std::fill(real_, real_ + n_, 0.0);
        std::copy(x.begin(), x.end(), real_);
        fftw_execute(forward_);
        std::vector<std::complex<double>> out(n_ / 2 + 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {spec_[i][0], spec_[i][1]};
        return out;
    }

    // Unnormalized inverse; the caller divides by n.
    std::vector<double> inverse(const std::vector<std::complex<double>>& X) {
        for (std::size_t i = 0; i < X.size(); ++i) {
            spec_[i][0] = X[i].real();
            spec_[i][1] = X[i].imag();
        }
        fftw_execute(inverse_);
        return std::vector<double>(real_, real_ + n_);
    }

private:
    std::size_t n_;
    double* real_;
    fftw_complex* spec_;
    fftw_plan forward_;
    fftw_plan inverse_;
};

double norm2(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void check_inputs(const DataSegment& data, const TemplateBank& bank) {
    const std::size_t n = data.samples.size();
    if (!is_power_of_two(n)) throw std::invalid_argument(fmt::format("segment length {} is not a power of two", n));
    for (double x : data.samples) {
        if (!std::isfinite(x)) throw std::invalid_argument("segment contains non-finite samples");
    }
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const auto& h = bank.templates[k];
        if (h.empty() || h.size() > n) {
            throw std::invalid_argument(fmt::format("template {} length {} not in [1, {}]", k, h.size(), n));
        }
        if (!(norm2(h) > 0)) throw std::invalid_argument(fmt::format("template {} has zero norm", k));
    }
}

std::vector<Trigger> matched_filter(const DataSegment& data, const TemplateBank& bank) {
    check_inputs(data, bank);
    const std::size_t n = data.samples.size();
    const auto& d = data.samples;

    // prefix[i] = sum of squares of the first i samples of d repeated twice
    std::vector<double> prefix(2 * n + 1, 0.0);
    double total = 0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const double x = d[i % n];
        prefix[i + 1] = prefix[i] + x * x;
        if (i < n) total += x * x;
    }
    // Window energies below this are rounding residue of an all-zero window.
    const double energy_floor = total * 1e-12;

    RealFft fft(n);
    const auto D = fft.forward(d);
    std::vector<Trigger> out;
    out.reserve(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const auto& h = bank.templates[k];
        const std::size_t m = h.size();
        const double hnorm = std::sqrt(norm2(h));
        auto H = fft.forward(h);
        for (std::size_t i = 0; i < H.size(); ++i) H[i] = D[i] * std::conj(H[i]);
        const auto corr = fft.inverse(H);

        Trigger best{static_cast<std::int64_t>(k), 0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double energy = prefix[t + m] - prefix[t];
            double snr = 0;
            if (energy > energy_floor) {
                snr = std::abs(corr[t] / static_cast<double>(n)) / (std::sqrt(energy) * hnorm);
                snr = std::min(snr, 1.0);
            }
            if (snr > best.snr) {
                best.snr = snr;
                best.time_index = static_cast<std::int64_t>(t);
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<Trigger> matched_filter_direct(const DataSegment& data, const TemplateBank& bank) {
    check_inputs(data, bank);
    const std::size_t n = data.samples.size();
    const auto& d = data.samples;
    const double energy_floor = norm2(d) * 1e-12;
    std::vector<Trigger> out;
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const auto& h = bank.templates[k];
        const double hnorm = std::sqrt(norm2(h));
        Trigger best{static_cast<std::int64_t>(k), 0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            double dot = 0, energy = 0;
            for (std::size_t j = 0; j < h.size(); ++j) {
                const double x = d[(t + j) % n];
                dot += x * h[j];
                energy += x * x;
            }
            const double snr = energy > energy_floor ? std::min(1.0, std::abs(dot) / (std::sqrt(energy) * hnorm)) : 0.0;
            if (snr > best.snr) {
                best.snr = snr;
                best.time_index = static_cast<std::int64_t>(t);
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<Trigger> top_k(std::vector<Trigger> triggers, std::size_t k) {
    if (k < 1) throw std::invalid_argument("top_k needs k >= 1");
    std::sort(triggers.begin(), triggers.end(), [](const Trigger& a, const Trigger& b) {
        if (a.snr != b.snr) return a.snr > b.snr;
        if (a.template_id != b.template_id) return a.template_id < b.template_id;
        return a.time_index < b.time_index;
    });
    if (triggers.size() > k) triggers.resize(k);
    return triggers;
}

std::string triggers_csv(const std::vector<Trigger>& ranked) {
    std::string out = "rank,template_id,time_index,snr\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out += fmt::format("{},{},{},{:.17g}\n", i + 1, ranked[i].template_id, ranked[i].time_index, ranked[i].snr);
    }
    return out;
}

TemplateBank make_bank(const PayloadParams& params) {
    TemplateBank bank;
    const int m = params.template_len;
    for (int k = 0; k < params.n_templates; ++k) {
        std::vector<double> h(static_cast<std::size_t>(m));
        const double f0 = 2.0 + k;
        for (int j = 0; j < m; ++j) {
            const double x = static_cast<double>(j) / m;
            const double taper = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * (j + 0.5) / m);
            h[static_cast<std::size_t>(j)] = taper * std::sin(2 * std::numbers::pi * f0 * x * (1.0 + x));
        }
        bank.templates.push_back(std::move(h));
    }
    return bank;
}

DataSegment make_segment(const PayloadParams& params, const TemplateBank& bank, std::uint64_t seed,
                         std::int64_t segment_index) {
    RandomStream rng(seed, fmt::format("payload/segment/{}", segment_index));
    const auto n = static_cast<std::size_t>(params.n_samples);
    DataSegment seg;
    seg.samples.resize(n);
    for (std::size_t i = 0; i < n; i += 2) {
        // Box-Muller pair
        const double u1 = 1.0 - rng.next_unit();
        const double u2 = rng.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        seg.samples[i] = r * std::cos(2 * std::numbers::pi * u2);
        if (i + 1 < n) seg.samples[i + 1] = r * std::sin(2 * std::numbers::pi * u2);
    }
    if (bank.size() > 0) {
        const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(bank.size()) - 1));
        const auto at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        const double amp = rng.uniform(2.0, 6.0);
        const auto& h = bank.templates[k];
        for (std::size_t j = 0; j < h.size(); ++j) seg.samples[(at + j) % n] += amp * h[j];
    }
    return seg;
}

std::vector<Trigger> analyze_segment(const PayloadParams& params, const TemplateBank& bank, std::uint64_t seed,
                                     std::int64_t segment_index) {
    auto triggers = matched_filter(make_segment(params, bank, seed, segment_index), bank);
    for (auto& t : triggers) t.time_index += segment_index * params.n_samples;
    return triggers;
}

}  // namespace glidesim
