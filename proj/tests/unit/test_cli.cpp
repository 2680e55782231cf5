#include "specshape/tools/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace specshape::tools;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("specshape_cli_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string config_error_path(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<accepted>";
}

json small_amun() {
    return {{"scenario", "amun"},
            {"seeds", {3}},
            {"params",
             {{"train_per_class", 10},
              {"test_per_class", 20},
              {"hidden", 8},
              {"train_steps", 200},
              {"finetune_steps", 20},
              {"attack", {{"steps", 10}}}}}};
}

}  // namespace

TEST_CASE("circulant verification passes on 50 instances") {
    const auto cfg = parse_config({{"scenario", "circulant-verify"}, {"seeds", {1}}, {"params", {{"instances", 50}}}});
    const auto bundle = run_config(cfg, 1);
    REQUIRE(bundle.runs.size() == 1);
    CHECK(bundle.runs[0].ok);
    CHECK(!bundle.runs[0].flags.empty());
    CHECK(bundle.passed());
}

TEST_CASE("config errors name the offending field") {
    CHECK(config_error_path({{"scenario", "bogus"}, {"seeds", {1}}}) == "scenario");
    CHECK(config_error_path({{"seeds", {1}}}) == "scenario");
    CHECK(config_error_path({{"scenario", "clip"}, {"seeds", json::array()}}) == "seeds");
    CHECK(config_error_path({{"scenario", "clip"}, {"seeds", {1, -2}}}) == "seeds[1]");
    CHECK(config_error_path({{"scenario", "clip"}, {"seeds", {1}}, {"extra", 1}}) == "extra");
    CHECK(config_error_path({{"scenario", "clip"}, {"seeds", {1}}, {"params", {{"bogus", 1}}}}) == "params.bogus");
    CHECK(config_error_path({{"scenario", "clip"}, {"seeds", {1}}, {"params", {{"instances", "many"}}}}) ==
          "params.instances");
    CHECK(config_error_path({{"scenario", "fastclip"}, {"seeds", {1}}, {"params", {{"steps", -1}}}}) ==
          "params.steps");
    CHECK(config_error_path({{"scenario", "amun"}, {"seeds", {1}}, {"params", {{"attack", {{"kind", 3}}}}}}) ==
          "params.attack.kind");
    CHECK(config_error_path({{"scenario", "verify-all"}, {"seeds", {1}}, {"params", {{"trw", {{"beta", "x"}}}}}}) ==
          "params.trw.beta");
}

TEST_CASE("config error messages carry the path") {
    try {
        parse_config({{"scenario", "bogus"}, {"seeds", {1}}});
        FAIL("accepted an unknown scenario");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("scenario: ", 0) == 0);
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
}

TEST_CASE("missing params take their defaults") {
    const auto cfg = parse_config({{"scenario", "trw"}, {"seeds", {4, 5}}, {"params", {{"beta", 2.5}}}});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(cfg.params.at("beta") == 2.5);
    auto expected = default_params("trw");
    expected["beta"] = 2.5;
    CHECK(cfg.params == expected);
    for (const auto& name : scenario_names()) CHECK(default_params(name).is_object());
}

TEST_CASE("an empty bundle has a header-only csv") {
    ReportBundle bundle;
    bundle.scenario = "clip";
    CHECK(to_csv(bundle) == "scenario,seed,status\n");
    bundle.metric_columns = {"a", "b"};
    bundle.flag_columns = {"f"};
    CHECK(to_csv(bundle) == "scenario,seed,a,b,f,status\n");
    CHECK_FALSE(bundle.passed());
}

TEST_CASE("csv rows print 12 significant digits and flags as bits") {
    ReportBundle bundle;
    bundle.scenario = "clip";
    bundle.metric_columns = {"x", "missing"};
    bundle.flag_columns = {"ok"};
    SeedRun run;
    run.scenario = "clip";
    run.seed = 7;
    run.metrics["x"] = 1.0 / 3.0;
    run.flags["ok"] = true;
    bundle.runs.push_back(run);
    const auto csv = to_csv(bundle);
    CHECK(csv.find("\nclip,7,0.333333333333,,1,") != std::string::npos);
}

TEST_CASE("an amun run fills the auc columns") {
    const auto bundle = run_config(parse_config(small_amun()), 1);
    REQUIRE(bundle.runs.size() == 1);
    CHECK(bundle.runs[0].ok);
    std::istringstream csv(to_csv(bundle));
    std::string header;
    std::string row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header.rfind("scenario,seed,auc_before,auc_after,test_acc_before,test_acc_after", 0) == 0);
    CHECK(row.rfind("amun,3,", 0) == 0);
    CHECK(row.find(",,") == std::string::npos);
}

TEST_CASE("json reports round-trip to an equal bundle") {
    auto bundle = run_config(parse_config(small_amun()), 1);
    SeedRun odd;
    odd.scenario = "amun";
    odd.seed = 99;
    odd.ok = false;
    odd.error = "diverged";
    odd.metrics["auc_before"] = std::numeric_limits<double>::quiet_NaN();
    bundle.runs.push_back(odd);
    const auto j = to_json(bundle);
    CHECK(j.at("schema_version") == kSchemaVersion);
    CHECK(j.at("config_hash") == bundle.config_hash);
    const auto back = bundle_from_json(json::parse(j.dump()));
    CHECK(back == bundle);
}

TEST_CASE("config hashes are canonical") {
    const json a = {{"scenario", "clip"}, {"seeds", {1}}};
    const json b = json::parse(R"({"seeds":[1],"scenario":"clip"})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash({{"scenario", "clip"}, {"seeds", {2}}}));
}

TEST_CASE("identical configs write byte-identical reports") {
    auto cfg = parse_config({{"scenario", "circulant-verify"}, {"seeds", {1, 2, 3}}, {"params", {{"instances", 10}}}});
    const auto first = scratch_dir("first");
    const auto second = scratch_dir("second");
    emit_report(run_config(cfg, 1), first);
    emit_report(run_config(cfg, 3), second);
    CHECK(read_file(first / "report.json") == read_file(second / "report.json"));
    CHECK(read_file(first / "report.csv") == read_file(second / "report.csv"));
    CHECK(!read_file(first / "report.csv").empty());
    fs::remove_all(first);
    fs::remove_all(second);
}

TEST_CASE("seed failures are recorded and the run continues") {
    auto cfg = parse_config({{"scenario", "clip"},
                             {"seeds", {1, 2}},
                             {"params", {{"job", {{"operator", {{"kind", "nonsense"}}}, {"target", 1.0}}}}}});
    const auto bundle = run_config(cfg, 1);
    REQUIRE(bundle.runs.size() == 2);
    for (const auto& r : bundle.runs) {
        CHECK_FALSE(r.ok);
        CHECK(!r.error.empty());
    }
    CHECK_FALSE(bundle.passed());
    CHECK(to_csv(bundle).find(",error") != std::string::npos);
}

TEST_CASE("clip settings accept known keys and reject others") {
    auto base = json{{"scenario", "clip"},
                     {"seeds", {1}},
                     {"params", {{"instances", 1}, {"kind", "conv1d"}, {"config", {{"inner_iters", 3}}}}}};
    CHECK(run_config(parse_config(base), 1).runs.at(0).ok);

    base["params"]["config"] = {{"inner_iter", 3}};
    const auto bundle = run_config(parse_config(base), 1);
    REQUIRE_FALSE(bundle.runs.at(0).ok);
    CHECK(bundle.runs.at(0).error.find("inner_iter") != std::string::npos);
}

TEST_CASE("report i/o errors surface") {
    const auto dir = scratch_dir("blocked");
    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    ReportBundle bundle;
    CHECK_THROWS_AS(emit_report(bundle, dir / "file" / "sub"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("the thread cap reads the environment") {
    ::setenv("SPECSHAPE_THREADS", "3", 1);
    CHECK(thread_cap(8) == 3);
    ::setenv("SPECSHAPE_THREADS", "zero", 1);
    CHECK(thread_cap(8) == 8);
    ::setenv("SPECSHAPE_THREADS", "0", 1);
    CHECK(thread_cap(8) == 8);
    ::unsetenv("SPECSHAPE_THREADS");
    CHECK(thread_cap(5) == 5);
}
