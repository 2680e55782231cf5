#include "specshape/tools/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace {

int run(const std::string& scenario, const std::string& config_path, const std::string& out_dir,
        const std::vector<std::uint64_t>& seeds) {
    using specshape::tools::ConfigError;
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config " << config_path << "\n";
        return 2;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        std::cerr << "error: " << config_path << ": " << e.what() << "\n";
        return 2;
    }
    if (!j.is_object()) {
        std::cerr << "error: " << config_path << ": expected a JSON object\n";
        return 2;
    }
    if (!j.contains("scenario")) j["scenario"] = scenario;
    if (!seeds.empty()) j["seeds"] = seeds;

    specshape::tools::ExperimentConfig cfg;
    try {
        if (j.at("scenario") != scenario) throw ConfigError("scenario", "config names a different scenario");
        cfg = specshape::tools::parse_config(j);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    cfg.out = out_dir;

    const auto bundle = specshape::tools::run_config(cfg);
    try {
        specshape::tools::emit_report(bundle, cfg.out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    for (const auto& r : bundle.runs) {
        std::cout << r.scenario << " seed " << r.seed << ": " << (r.passed() ? "pass" : "FAIL");
        if (!r.ok) std::cout << " (" << r.error << ")";
        for (const auto& [name, value] : r.flags)
            if (!value) std::cout << " " << name << "=false";
        std::cout << "\n";
    }
    std::cout << "report: " << (cfg.out / "report.json").string() << "\n";
    return bundle.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral clipping, ensemble orthogonalization and unlearning experiments"};
    std::string scenario;
    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    app.add_option("scenario", scenario, "Scenario to run")
        ->required()
        ->check(CLI::IsMember(specshape::tools::scenario_names()));
    app.add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory for report.json and report.csv")->required();
    app.add_option("--seeds", seeds, "Comma-separated seeds; overrides the config")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    return run(scenario, config_path, out_dir, seeds);
}
