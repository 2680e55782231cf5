#include "specshape/tools/experiment.hpp"

#include "scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace specshape::tools {

using nlohmann::json;

namespace {

const char* type_label(const json& j) {
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

bool same_type(const json& def, const json& user) {
    if (def.is_number_integer()) return user.is_number_integer();
    if (def.is_number()) return user.is_number();
    if (def.is_string()) return user.is_string();
    if (def.is_boolean()) return user.is_boolean();
    if (def.is_array()) return user.is_array();
    if (def.is_object()) return user.is_object();
    return true;
}

// Overlays `user` onto `defaults`; keys and value types must exist in the
// defaults. A null default accepts any value; an empty-object default
// accepts any object.
json merge(const json& defaults, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(path, "expected object");
    json out = defaults;
    for (const auto& [key, value] : user.items()) {
        const std::string where = path + "." + key;
        if (!defaults.contains(key)) throw ConfigError(where, "unknown field");
        const auto& def = defaults.at(key);
        if (def.is_null() || (def.is_object() && def.empty())) {
            if (!def.is_null() && !value.is_object()) throw ConfigError(where, "expected object");
            out[key] = value;
        } else if (def.is_object()) {
            out[key] = merge(def, value, where);
        } else if (!same_type(def, value)) {
            throw ConfigError(where, std::string("expected ") + type_label(def) + ", got " + type_label(value));
        } else {
            out[key] = value;
        }
    }
    return out;
}

void check_minimums(const detail::ScenarioDef& def, const json& params, const std::string& path) {
    for (const auto& [key, lo] : def.minimums) {
        const double v = params.at(key).get<double>();
        if (!(v >= lo)) {
            std::ostringstream os;
            os << "must be >= " << lo;
            throw ConfigError(path + "." + key, os.str());
        }
    }
}

json verify_all_defaults() {
    json d = json::object();
    for (const auto& def : detail::scenario_defs()) d[def.name] = def.defaults;
    return d;
}

json merged_params(const std::string& scenario, const json& user) {
    if (scenario == "verify-all") {
        const json merged = merge(verify_all_defaults(), user, "params");
        for (const auto& def : detail::scenario_defs()) check_minimums(def, merged.at(def.name), "params." + def.name);
        return merged;
    }
    const auto& def = detail::find_scenario(scenario);
    const json merged = merge(def.defaults, user, "params");
    check_minimums(def, merged, "params");
    return merged;
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string status_of(const SeedRun& run) {
    if (!run.ok) return "error";
    return run.passed() ? "pass" : "fail";
}

void append_unique(std::vector<std::string>& dst, const std::vector<std::string>& src) {
    for (const auto& s : src)
        if (std::find(dst.begin(), dst.end(), s) == dst.end()) dst.push_back(s);
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& def : detail::scenario_defs()) n.push_back(def.name);
        n.emplace_back("verify-all");
        return n;
    }();
    return names;
}

json default_params(const std::string& scenario) {
    if (scenario == "verify-all") return verify_all_defaults();
    return detail::find_scenario(scenario).defaults;
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("$", "expected object");
    for (const auto& [key, value] : j.items())
        if (key != "scenario" && key != "seeds" && key != "params") throw ConfigError(key, "unknown field");

    ExperimentConfig cfg;
    if (!j.contains("scenario") || !j.at("scenario").is_string())
        throw ConfigError("scenario", "expected one of the scenario names");
    cfg.scenario = j.at("scenario").get<std::string>();
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), cfg.scenario) == names.end())
        throw ConfigError("scenario", "unknown scenario '" + cfg.scenario + "'");

    if (!j.contains("seeds")) throw ConfigError("seeds", "must be a nonempty list");
    const auto& seeds = j.at("seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("seeds", "must be a nonempty list");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!seeds[i].is_number_integer() || seeds[i].get<std::int64_t>() < 0)
            throw ConfigError("seeds[" + std::to_string(i) + "]", "expected non-negative integer");
        cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
    cfg.params = merged_params(cfg.scenario, j.value("params", json::object()));
    return cfg;
}

bool SeedRun::passed() const {
    return ok && std::all_of(flags.begin(), flags.end(), [](const auto& f) { return f.second; });
}

bool SeedRun::operator==(const SeedRun& other) const {
    if (scenario != other.scenario || seed != other.seed || ok != other.ok || error != other.error ||
        flags != other.flags || details != other.details || metrics.size() != other.metrics.size())
        return false;
    for (const auto& [name, value] : metrics) {
        const auto it = other.metrics.find(name);
        if (it == other.metrics.end() || !same_double(value, it->second)) return false;
    }
    return true;
}

bool ReportBundle::passed() const {
    return !runs.empty() && std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.passed(); });
}

bool ReportBundle::operator==(const ReportBundle& other) const {
    return schema_version == other.schema_version && scenario == other.scenario &&
           config_hash == other.config_hash && config == other.config && metric_columns == other.metric_columns &&
           flag_columns == other.flag_columns && runs == other.runs;
}

std::string config_hash(const json& config) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

unsigned thread_cap(unsigned fallback) {
    const char* env = std::getenv("SPECSHAPE_THREADS");
    if (env == nullptr) return fallback;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return fallback;
    return static_cast<unsigned>(v);
}

SeedRun run_scenario(const std::string& scenario, const json& params, std::uint64_t seed) {
    SeedRun run;
    run.scenario = scenario;
    run.seed = seed;
    try {
        detail::find_scenario(scenario).body(params, seed, run);
    } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
        run.metrics.clear();
        run.flags.clear();
        run.details = json::object();
    }
    return run;
}

ReportBundle run_config(const ExperimentConfig& cfg, unsigned threads) {
    ReportBundle bundle;
    bundle.scenario = cfg.scenario;
    bundle.config = {{"scenario", cfg.scenario}, {"seeds", cfg.seeds}, {"params", cfg.params}};
    bundle.config_hash = config_hash(bundle.config);

    struct Task {
        std::string scenario;
        const json* params;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    if (cfg.scenario == "verify-all") {
        for (const auto& def : detail::scenario_defs()) {
            append_unique(bundle.metric_columns, def.metric_columns);
            append_unique(bundle.flag_columns, def.flag_columns);
            for (auto seed : cfg.seeds) tasks.push_back({def.name, &cfg.params.at(def.name), seed});
        }
    } else {
        const auto& def = detail::find_scenario(cfg.scenario);
        bundle.metric_columns = def.metric_columns;
        bundle.flag_columns = def.flag_columns;
        for (auto seed : cfg.seeds) tasks.push_back({def.name, &cfg.params, seed});
    }

    if (threads == 0) threads = thread_cap(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min<unsigned>(threads, static_cast<unsigned>(tasks.size()));
    bundle.runs.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
            bundle.runs[i] = run_scenario(tasks[i].scenario, *tasks[i].params, tasks[i].seed);
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return bundle;
}

json to_json(const ReportBundle& bundle) {
    json runs = json::array();
    for (const auto& r : bundle.runs) {
        json metrics = json::object();
        for (const auto& [name, value] : r.metrics) metrics[name] = std::isfinite(value) ? json(value) : json(nullptr);
        json run = {{"scenario", r.scenario}, {"seed", r.seed},  {"ok", r.ok},
                    {"metrics", metrics},     {"flags", r.flags}, {"details", r.details}};
        if (!r.ok) run["error"] = r.error;
        runs.push_back(std::move(run));
    }
    return {{"schema_version", bundle.schema_version},
            {"scenario", bundle.scenario},
            {"config_hash", bundle.config_hash},
            {"config", bundle.config},
            {"metric_columns", bundle.metric_columns},
            {"flag_columns", bundle.flag_columns},
            {"passed", bundle.passed()},
            {"runs", runs}};
}

ReportBundle bundle_from_json(const json& j) {
    ReportBundle b;
    b.schema_version = j.at("schema_version").get<int>();
    if (b.schema_version != kSchemaVersion)
        throw std::runtime_error("report: unsupported schema_version " + std::to_string(b.schema_version));
    b.scenario = j.at("scenario").get<std::string>();
    b.config_hash = j.at("config_hash").get<std::string>();
    b.config = j.at("config");
    b.metric_columns = j.at("metric_columns").get<std::vector<std::string>>();
    b.flag_columns = j.at("flag_columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("runs")) {
        SeedRun run;
        run.scenario = r.at("scenario").get<std::string>();
        run.seed = r.at("seed").get<std::uint64_t>();
        run.ok = r.at("ok").get<bool>();
        run.error = r.value("error", std::string());
        for (const auto& [name, value] : r.at("metrics").items())
            run.metrics[name] = value.is_null() ? std::numeric_limits<double>::quiet_NaN() : value.get<double>();
        run.flags = r.at("flags").get<std::map<std::string, bool>>();
        run.details = r.at("details");
        b.runs.push_back(std::move(run));
    }
    return b;
}

std::string to_csv(const ReportBundle& bundle) {
    std::ostringstream os;
    os << "scenario,seed";
    for (const auto& c : bundle.metric_columns) os << ',' << c;
    for (const auto& c : bundle.flag_columns) os << ',' << c;
    os << ",status\n";
    for (const auto& r : bundle.runs) {
        os << csv_field(r.scenario) << ',' << r.seed;
        for (const auto& c : bundle.metric_columns) {
            os << ',';
            if (const auto it = r.metrics.find(c); it != r.metrics.end()) os << format_double(it->second);
        }
        for (const auto& c : bundle.flag_columns) {
            os << ',';
            if (const auto it = r.flags.find(c); it != r.flags.end()) os << (it->second ? '1' : '0');
        }
        os << ',' << status_of(r) << '\n';
    }
    return os.str();
}

void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("emit_report: cannot create " + dir.string() + ": " + ec.message());
    auto write = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("emit_report: cannot open " + path.string());
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());
    };
    write(dir / "report.json", to_json(bundle).dump(2) + "\n");
    write(dir / "report.csv", to_csv(bundle));
}

}  // namespace specshape::tools
