#include "glidesim/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace glidesim {

ScenarioError::ScenarioError(int line, const std::string& what)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

namespace {

// Thrown by value converters; rethrown with the line number attached.
struct ValueError {
    std::string what;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::int64_t to_int(const std::string& v, std::int64_t lo, std::int64_t hi) {
    std::int64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) {
        // accept integral values written as reals, e.g. 4e8
        char* e = nullptr;
        const double d = std::strtod(v.c_str(), &e);
        if (v.empty() || *e != '\0' || d != std::floor(d) || std::abs(d) > 9e18) {
            throw ValueError{fmt::format("'{}' is not an integer", v)};
        }
        out = static_cast<std::int64_t>(d);
    }
    if (out < lo || out > hi) throw ValueError{fmt::format("{} out of range [{}, {}]", out, lo, hi)};
    return out;
}

double to_real(const std::string& v, double lo, double hi) {
    char* e = nullptr;
    const double d = std::strtod(v.c_str(), &e);
    if (v.empty() || *e != '\0' || !std::isfinite(d)) throw ValueError{fmt::format("'{}' is not a number", v)};
    if (d < lo || d > hi) throw ValueError{fmt::format("{} out of range [{}, {}]", d, lo, hi)};
    return d;
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
        throw ValueError{fmt::format("'{}' is not an unsigned integer", v)};
    }
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValueError{fmt::format("'{}' is not a boolean", v)};
}

std::string real_str(double d) { return fmt::format("{}", d); }

struct Field {
    std::string section;
    std::string key;
    std::string range;
    std::string doc;
    std::function<void(Scenario&, const std::string&)> set;
    std::function<std::string(const Scenario&)> get;

    std::string name() const { return section + "." + key; }
};

template <typename Member>
Field int_field(std::string sec, std::string key, std::int64_t lo, std::int64_t hi, std::string doc, Member m) {
    return Field{sec, key, fmt::format("[{}, {}]", lo, hi), std::move(doc),
                 [=](Scenario& s, const std::string& v) {
                     m(s) = static_cast<std::remove_reference_t<decltype(m(s))>>(to_int(v, lo, hi));
                 },
                 [=](const Scenario& s) { return fmt::format("{}", m(const_cast<Scenario&>(s))); }};
}

template <typename Member>
Field real_field(std::string sec, std::string key, double lo, double hi, std::string doc, Member m) {
    const std::string hi_s = hi == std::numeric_limits<double>::max() ? "inf" : real_str(hi);
    return Field{sec, key, fmt::format("[{}, {}]", real_str(lo), hi_s), std::move(doc),
                 [=](Scenario& s, const std::string& v) { m(s) = to_real(v, lo, hi); },
                 [=](const Scenario& s) { return real_str(m(const_cast<Scenario&>(s))); }};
}

template <typename Member>
Field bool_field(std::string sec, std::string key, std::string doc, Member m) {
    return Field{sec, key, "true|false", std::move(doc), [=](Scenario& s, const std::string& v) { m(s) = to_bool(v); },
                 [=](const Scenario& s) { return std::string(m(const_cast<Scenario&>(s)) ? "true" : "false"); }};
}

constexpr double kInf = std::numeric_limits<double>::max();

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        // cluster
        f.push_back(int_field("cluster", "g", 1, 64, "torus edge length in routers",
                              [](Scenario& s) -> int& { return s.cluster.g; }));
        f.push_back(int_field("cluster", "nodes_per_router", 1, 16, "compute nodes per router",
                              [](Scenario& s) -> int& { return s.cluster.nodes_per_router; }));
        f.push_back(int_field("cluster", "cores_per_node", 1, 1024, "cores per compute node",
                              [](Scenario& s) -> int& { return s.cluster.cores_per_node; }));
        // pilots
        f.push_back(int_field("pilots", "groups", 1, 10000, "number of pilot jobs",
                              [](Scenario& s) -> int& { return s.pilots.groups; }));
        f.push_back(int_field("pilots", "nodes_per_group", 1, 100000, "nodes per pilot job",
                              [](Scenario& s) -> int& { return s.pilots.nodes_per_group; }));
        f.push_back(int_field("pilots", "stagger_s", 0, 7 * 86400, "delay between consecutive pilot submissions",
                              [](Scenario& s) -> std::int64_t& { return s.pilots.stagger_s; }));
        f.push_back(Field{"pilots", "offsets_s", "comma list of seconds >= 0",
                          "explicit per-pilot submit offsets; overrides groups and stagger_s when set",
                          [](Scenario& s, const std::string& v) {
                              s.pilots.offsets_s.clear();
                              std::stringstream ss(v);
                              std::string item;
                              while (std::getline(ss, item, ',')) {
                                  s.pilots.offsets_s.push_back(to_int(trim(item), 0, 7 * 86400));
                              }
                          },
                          [](const Scenario& s) { return fmt::format("{}", fmt::join(s.pilots.offsets_s, ", ")); }});
        f.push_back(int_field("pilots", "depth", 1, 1024, "cores bound per launched process group",
                              [](Scenario& s) -> int& { return s.pilots.depth; }));
        f.push_back(int_field("pilots", "processes_per_node", 1, 1024, "task slots per node",
                              [](Scenario& s) -> int& { return s.pilots.processes_per_node; }));
        f.push_back(int_field("pilots", "walltime_s", 1, 48 * 3600, "pilot batch walltime",
                              [](Scenario& s) -> std::int64_t& { return s.pilots.walltime_s; }));
        f.push_back(int_field("pilots", "startup_s", 0, 86400, "delay from node allocation to first match",
                              [](Scenario& s) -> std::int64_t& { return s.pilots.startup_s; }));
        // workflow
        f.push_back(bool_field("workflow", "enabled", "submit the workflow and its pilots",
                               [](Scenario& s) -> bool& { return s.workflow_enabled; }));
        f.push_back(real_field("workflow", "data_days", 1e-6, 3650, "days of detector data analysed",
                               [](Scenario& s) -> double& { return s.workflow.data_days; }));
        f.push_back(real_field("workflow", "scale", 1e-6, 1, "multiplier on the inspiral task count",
                               [](Scenario& s) -> double& { return s.workflow.scale; }));
        f.push_back(int_field("workflow", "reread_count", 0, 100, "times each task rereads its input while computing",
                              [](Scenario& s) -> int& { return s.workflow.reread_count; }));
        f.push_back(int_field("workflow", "retry_limit", 1, 100, "attempts before a task fails permanently",
                              [](Scenario& s) -> int& { return s.workflow.retry_limit; }));
        f.push_back(real_field("workflow", "runtime_lo_s", 1, 1e7, "inspiral runtime lower bound",
                               [](Scenario& s) -> double& { return s.workflow.runtime_lo_s; }));
        f.push_back(real_field("workflow", "runtime_hi_s", 1, 1e7, "inspiral runtime upper bound",
                               [](Scenario& s) -> double& { return s.workflow.runtime_hi_s; }));
        f.push_back(real_field("workflow", "local_runtime_s", 0, 1e6, "runtime of local pre/post tasks",
                               [](Scenario& s) -> double& { return s.workflow.local_runtime_s; }));
        // staging
        f.push_back(real_field("staging", "aggregate_MBps", 1e-6, 1e9, "origin server aggregate bandwidth (1 MB = 1e6 B)",
                               [](Scenario& s) -> double& { return s.staging.aggregate_MBps; }));
        f.push_back(real_field("staging", "per_stream_cap_MBps", 1e-6, 1e9, "bandwidth cap per transfer",
                               [](Scenario& s) -> double& { return s.staging.per_stream_cap_MBps; }));
        f.push_back(Field{"staging", "fs_mode", "bare|container", "metadata path: bare opens or container image",
                          [](Scenario& s, const std::string& v) {
                              if (v == "bare") s.staging.fs.mode = FsMode::Bare;
                              else if (v == "container") s.staging.fs.mode = FsMode::ContainerImage;
                              else throw ValueError{fmt::format("'{}' is not bare|container", v)};
                          },
                          [](const Scenario& s) { return std::string(to_string(s.staging.fs.mode)); }});
        f.push_back(int_field("staging", "opens_per_task", 1, 1000000, "file opens per task in bare mode",
                              [](Scenario& s) -> int& { return s.staging.fs.opens_per_task; }));
        f.push_back(Field{"staging", "scratch_capacity_bytes", "bytes >= 0 or unlimited", "worker scratch volume per node",
                          [](Scenario& s, const std::string& v) {
                              s.staging.scratch_capacity_bytes =
                                  v == "unlimited" ? kUnlimitedScratch : to_int(v, 0, kUnlimitedScratch);
                          },
                          [](const Scenario& s) {
                              return s.staging.scratch_capacity_bytes == kUnlimitedScratch
                                         ? std::string("unlimited")
                                         : fmt::format("{}", s.staging.scratch_capacity_bytes);
                          }});
        f.push_back(int_field("staging", "scratch_per_task_bytes", 0, std::numeric_limits<std::int64_t>::max(),
                              "scratch written by each running task",
                              [](Scenario& s) -> std::int64_t& { return s.staging.scratch_per_task_bytes; }));
        // payload
        f.push_back(bool_field("payload", "enabled", "run the matched filter for each inspiral task",
                               [](Scenario& s) -> bool& { return s.payload.enabled; }));
        f.push_back(int_field("payload", "n_samples", 2, 1 << 20, "samples per segment (power of two)",
                              [](Scenario& s) -> int& { return s.payload.n_samples; }));
        f.push_back(int_field("payload", "template_len", 1, 1 << 20, "samples per template",
                              [](Scenario& s) -> int& { return s.payload.template_len; }));
        f.push_back(int_field("payload", "n_templates", 1, 100000, "templates in the bank",
                              [](Scenario& s) -> int& { return s.payload.n_templates; }));
        f.push_back(Field{"payload", "seed", "[0, 2^64)", "seed of the synthetic data and injections",
                          [](Scenario& s, const std::string& v) { s.payload.seed = to_u64(v); },
                          [](const Scenario& s) { return fmt::format("{}", s.payload.seed); }});
        // engine
        f.push_back(Field{"engine", "seed", "[0, 2^64)", "root seed of every random stream",
                          [](Scenario& s, const std::string& v) { s.engine.seed = to_u64(v); },
                          [](const Scenario& s) { return fmt::format("{}", s.engine.seed); }});
        f.push_back(real_field("engine", "end_time_s", 1, 1e9, "hard stop for the simulation clock",
                               [](Scenario& s) -> double& { return s.engine.end_time_s; }));
        f.push_back(real_field("engine", "sample_period_s", 1, 86400, "metrics sampling cadence",
                               [](Scenario& s) -> double& { return s.engine.sample_period_s; }));
        // faults
        f.push_back(real_field("faults", "preemption_rate_per_hour", 0, 1e6,
                               "arrival rate of high-priority jobs that evict pool tasks",
                               [](Scenario& s) -> double& { return s.faults.preemption_rate_per_hour; }));
        f.push_back(real_field("faults", "preemption_hold_s", 1, 1e7, "how long an evicting job holds its slot",
                               [](Scenario& s) -> double& { return s.faults.preemption_hold_s; }));
        f.push_back(real_field("faults", "hpc_background_load", 0, 10, "HPC core demand (running + queued) relative to machine size",
                               [](Scenario& s) -> double& { return s.faults.hpc_background_load; }));
        f.push_back(int_field("faults", "hpc_max_dim", 0, 64, "largest background prism edge in routers (0: g/2)",
                              [](Scenario& s) -> int& { return s.faults.hpc_max_dim; }));
        f.push_back(real_field("faults", "reservation_at_s", -1, 1e9, "full-system reservation start (-1: none)",
                               [](Scenario& s) -> double& { return s.faults.reservation_at_s; }));
        f.push_back(real_field("faults", "reservation_duration_s", 1, 1e7, "full-system reservation length",
                               [](Scenario& s) -> double& { return s.faults.reservation_duration_s; }));
        // metrics
        f.push_back(real_field("metrics", "steady_state_threshold", 0.01, 1, "busy/provisioned fraction defining steady state",
                               [](Scenario& s) -> double& { return s.steady_state_threshold; }));
        f.push_back(real_field("metrics", "min_plateau_s", 0, kInf, "shortest provisioning plateau counted",
                               [](Scenario& s) -> double& { return s.min_plateau_s; }));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

const Field& lookup(const std::string& key) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
        if (const auto* f = find_field(key.substr(0, dot), key.substr(dot + 1))) return *f;
        throw ScenarioError(0, fmt::format("unknown key '{}'", key));
    }
    const Field* hit = nullptr;
    for (const auto& f : fields()) {
        if (f.key != key) continue;
        if (hit) throw ScenarioError(0, fmt::format("key '{}' is ambiguous; use section.key", key));
        hit = &f;
    }
    if (!hit) throw ScenarioError(0, fmt::format("unknown key '{}'", key));
    return *hit;
}

}  // namespace

Scenario default_scenario() {
    Scenario s;
    // 0.083 days at scale 0.33 gives 2743 inspiral tasks; 800 slots keep
    // starting new tasks until about 13 h, the last one ends near 17.8 h.
    s.workflow.data_days = 0.083;
    s.workflow.scale = 0.33;
    return s;
}

void validate(const Scenario& s) {
    try {
        validate(s.pilots);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(0, e.what());
    }
    if (s.workflow.runtime_lo_s > s.workflow.runtime_hi_s) {
        throw ScenarioError(0, "workflow.runtime_lo_s exceeds workflow.runtime_hi_s");
    }
    if (!is_power_of_two(static_cast<std::size_t>(s.payload.n_samples))) {
        throw ScenarioError(0, "payload.n_samples must be a power of two");
    }
    if (s.payload.template_len > s.payload.n_samples) {
        throw ScenarioError(0, "payload.template_len exceeds payload.n_samples");
    }
    if (s.staging.per_stream_cap_MBps > s.staging.aggregate_MBps * 1e6) {
        throw ScenarioError(0, "staging.per_stream_cap_MBps is implausibly large");
    }
}

Scenario parse_scenario(std::string_view text) {
    Scenario s = default_scenario();
    std::set<std::string> seen;
    std::set<std::string> known_sections;
    for (const auto& f : fields()) known_sections.insert(f.section);

    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ScenarioError(lineno, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_sections.count(section)) throw ScenarioError(lineno, fmt::format("unknown section '{}'", section));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ScenarioError(lineno, "expected 'key = value'");
        if (section.empty()) throw ScenarioError(lineno, "key outside of any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* f = find_field(section, key);
        if (!f) throw ScenarioError(lineno, fmt::format("unknown key '{}' in [{}]", key, section));
        if (!seen.insert(f->name()).second) throw ScenarioError(lineno, fmt::format("duplicate key '{}'", f->name()));
        try {
            f->set(s, value);
        } catch (const ValueError& e) {
            throw ScenarioError(lineno, fmt::format("{}: {}", f->name(), e.what));
        }
    }
    validate(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(0, fmt::format("cannot read scenario '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::string resolve_key(const std::string& key) { return lookup(key).name(); }

void set_value(Scenario& s, const std::string& key, const std::string& value) {
    const Field& f = lookup(key);
    try {
        f.set(s, value);
    } catch (const ValueError& e) {
        throw ScenarioError(0, fmt::format("{}: {}", f.name(), e.what));
    }
}

std::string get_value(const Scenario& s, const std::string& key) { return lookup(key).get(s); }

std::string scenario_text(const Scenario& s, bool documented) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += '\n';
            section = f.section;
            out += fmt::format("[{}]\n", section);
        }
        if (documented) out += fmt::format("# {} {}\n", f.doc, f.range);
        out += fmt::format("{} = {}\n", f.key, f.get(s));
    }
    return out;
}

}  // namespace glidesim
