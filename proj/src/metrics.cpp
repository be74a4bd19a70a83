#include "glidesim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace glidesim {

int detect_plateaus(const std::vector<Sample>& series, double min_plateau_s) {
    if (series.empty()) throw std::invalid_argument("detect_plateaus needs a non-empty series");
    std::int64_t peak = 0;
    for (const auto& s : series) peak = std::max(peak, s.cores_provisioned);

    int count = 0;
    std::int64_t last_counted = 0;
    std::size_t i = 0;
    while (i < series.size()) {
        const std::int64_t v = series[i].cores_provisioned;
        std::size_t j = i;
        while (j + 1 < series.size() && series[j + 1].cores_provisioned == v) ++j;
        const double end = j + 1 < series.size() ? series[j + 1].t_s : series[j].t_s;
        const double length = end - series[i].t_s;
        if (v > 0 && length > min_plateau_s && v > last_counted) {
            ++count;
            last_counted = v;
        }
        if (v == peak) break;
        i = j + 1;
    }
    return count;
}

double steady_state_time(const std::vector<Sample>& series, double threshold) {
    std::int64_t peak = 0;
    for (const auto& s : series) peak = std::max(peak, s.cores_provisioned);
    if (peak == 0) return -1;
    const double bar = threshold * static_cast<double>(peak);
    for (const auto& s : series) {
        if (static_cast<double>(s.cores_busy) >= bar) return s.t_s;
    }
    return -1;
}

RunSummary summarize(const std::vector<Sample>& series, double threshold, double min_plateau_s) {
    RunSummary r;
    r.steady_state_threshold = threshold;
    if (series.empty()) return r;
    r.plateau_count = detect_plateaus(series, min_plateau_s);
    r.steady_state_s = steady_state_time(series, threshold);
    for (const auto& s : series) r.peak_read_MBps = std::max(r.peak_read_MBps, s.read_MBps);
    return r;
}

int count_read_spikes(const std::vector<Sample>& series, double frac) {
    double peak = 0;
    for (const auto& s : series) peak = std::max(peak, s.read_MBps);
    if (peak <= 0) return 0;
    int spikes = 0;
    bool inside = false;
    for (const auto& s : series) {
        const bool high = s.read_MBps >= frac * peak;
        if (high && !inside) ++spikes;
        inside = high;
    }
    return spikes;
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_r2 needs two equal series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (syy == 0) return 1.0;
    if (sxx == 0) return 0.0;
    return (sxy * sxy) / (sxx * syy);
}

std::string metrics_csv(const std::vector<Sample>& series) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& s : series) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", s.t_s, s.cores_provisioned, s.cores_busy, s.read_MBps,
                           s.write_MBps, s.pilots_active, s.tasks_waiting, s.tasks_running, s.tasks_done,
                           s.tasks_failed, s.mds_ops_per_s);
    }
    return out;
}

std::vector<Sample> parse_metrics_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw std::runtime_error("metrics.csv: unexpected header");
    std::vector<Sample> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 11) throw std::runtime_error(fmt::format("metrics.csv line {}: expected 11 fields", lineno));
        Sample s;
        try {
            s.t_s = std::stod(f[0]);
            s.cores_provisioned = std::stoll(f[1]);
            s.cores_busy = std::stoll(f[2]);
            s.read_MBps = std::stod(f[3]);
            s.write_MBps = std::stod(f[4]);
            s.pilots_active = std::stoll(f[5]);
            s.tasks_waiting = std::stoll(f[6]);
            s.tasks_running = std::stoll(f[7]);
            s.tasks_done = std::stoll(f[8]);
            s.tasks_failed = std::stoll(f[9]);
            s.mds_ops_per_s = std::stod(f[10]);
        } catch (const std::logic_error&) {
            throw std::runtime_error(fmt::format("metrics.csv line {}: bad number", lineno));
        }
        out.push_back(s);
    }
    return out;
}

std::string io_csv(const std::vector<Sample>& series) {
    std::string out = "t_s,read_MBps,write_MBps,mds_ops_per_s,active_transfers\n";
    for (const auto& s : series) {
        out += fmt::format("{},{},{},{},{}\n", s.t_s, s.read_MBps, s.write_MBps, s.mds_ops_per_s, s.active_transfers);
    }
    return out;
}

std::string summary_text(const RunSummary& s) {
    std::string out;
    out += fmt::format("plateau_count={}\n", s.plateau_count);
    out += fmt::format("steady_state_s={}\n", s.steady_state_s);
    out += fmt::format("makespan_s={}\n", s.makespan_s);
    out += fmt::format("peak_read_MBps={}\n", s.peak_read_MBps);
    out += fmt::format("time_avg_utilization={}\n", s.time_avg_utilization);
    out += fmt::format("opportunistic_core_hours={}\n", s.opportunistic_core_hours);
    out += fmt::format("steady_state_threshold={}\n", s.steady_state_threshold);
    out += fmt::format("complete={}\n", s.complete ? 1 : 0);
    out += fmt::format("tasks_total={}\n", s.tasks_total);
    out += fmt::format("tasks_done={}\n", s.tasks_done);
    out += fmt::format("tasks_failed={}\n", s.tasks_failed);
    out += fmt::format("last_task_start_s={}\n", s.last_task_start_s);
    out += fmt::format("last_pilot_end_s={}\n", s.last_pilot_end_s);
    out += fmt::format("single_pilot_from_s={}\n", s.single_pilot_from_s);
    out += fmt::format("busy_core_seconds={}\n", s.busy_core_seconds);
    out += fmt::format("provisioned_core_seconds={}\n", s.provisioned_core_seconds);
    out += fmt::format("expected_busy_core_seconds={}\n", s.expected_busy_core_seconds);
    out += fmt::format("mds_ops={}\n", s.mds_ops);
    out += fmt::format("read_bytes={}\n", s.read_bytes);
    out += fmt::format("write_bytes={}\n", s.write_bytes);
    out += fmt::format("preemptions={}\n", s.preemptions);
    return out;
}

namespace {

struct Line {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;  // (hours, value)
};

std::string line_chart(const std::string& title, const std::string& y_label, const std::vector<Line>& lines) {
    const double w = 800, h = 400, left = 70, right = 20, top = 40, bottom = 50;
    double xmax = 0, ymax = 0;
    for (const auto& l : lines) {
        for (auto [x, y] : l.points) {
            xmax = std::max(xmax, x);
            ymax = std::max(ymax, y);
        }
    }
    if (xmax <= 0) xmax = 1;
    if (ymax <= 0) ymax = 1;
    ymax *= 1.05;
    auto px = [&](double x) { return left + x / xmax * (w - left - right); };
    auto py = [&](double y) { return h - bottom - y / ymax * (h - top - bottom); };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n",
        w, h);
    svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", w, h);
    svg += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", w / 2, title);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left, h - bottom,
                       w - right);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top, h - bottom);
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmax * i / 5, yv = ymax * i / 5;
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.1f}</text>\n", px(xv),
                           h - bottom + 16, xv);
        svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.0f}</text>\n", left - 6, py(yv) + 4, yv);
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">time (hours)</text>\n", (left + w - right) / 2,
                       h - 12);
    svg += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                       (top + h - bottom) / 2, y_label);
    double legend_y = top + 10;
    for (const auto& l : lines) {
        std::string pts;
        for (auto [x, y] : l.points) pts += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", l.color, pts);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", w - right - 150, legend_y, l.color,
                           l.label);
        legend_y += 16;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::string utilization_svg(const std::vector<Sample>& series) {
    Line prov{"cores provisioned", "#1f77b4", {}};
    Line busy{"cores busy", "#d62728", {}};
    for (const auto& s : series) {
        prov.points.emplace_back(s.t_s / 3600.0, static_cast<double>(s.cores_provisioned));
        busy.points.emplace_back(s.t_s / 3600.0, static_cast<double>(s.cores_busy));
    }
    return line_chart("Core utilization", "cores", {prov, busy});
}

std::string io_svg(const std::vector<Sample>& series) {
    Line rd{"read MB/s", "#2ca02c", {}};
    Line wr{"write MB/s", "#9467bd", {}};
    for (const auto& s : series) {
        rd.points.emplace_back(s.t_s / 3600.0, s.read_MBps);
        wr.points.emplace_back(s.t_s / 3600.0, s.write_MBps);
    }
    return line_chart("Aggregate I/O", "MB/s", {rd, wr});
}

}  // namespace glidesim
