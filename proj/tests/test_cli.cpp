#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "gci/cli.hpp"
#include "gci/error.hpp"
#include "gci/scm.hpp"

namespace fs = std::filesystem;
using namespace gci::cli;

namespace {

const fs::path kScratchRoot = fs::temp_directory_path() / ("gci-cli-" + std::to_string(::getpid()));

struct ScratchCleanup {
    ~ScratchCleanup() { fs::remove_all(kScratchRoot); }
} cleanup;

fs::path scratch(const std::string& name) {
    const fs::path p = kScratchRoot / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "gci");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

int shell(const std::string& args) {
    const int status = std::system((std::string(GCI_TOOL) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config json") {
    RunConfig c;
    c.seed = 42;
    c.estimator = EstimatorChoice::Ipw;
    c.adjustment = AdjustmentChoice::Full;
    c.thresholds.theta_r = 0.2;
    c.adjust = std::vector<std::string>{"X1", "X3"};
    const auto j = to_json(c);
    const auto back = apply_config_json(RunConfig{}, j);
    CHECK(to_json(back) == j);
    CHECK(back.seed == 42);
    CHECK(back.thresholds.theta_r == 0.2);
    CHECK_THROWS_AS(apply_config_json(RunConfig{}, nlohmann::json{{"sede", 1}}), gci::ContractError);
    CHECK(apply_config_json(c, nlohmann::json::object()).seed == 42);
}

TEST_CASE("enum names") {
    for (auto e : {EstimatorChoice::RegAdj, EstimatorChoice::Ipw, EstimatorChoice::Both})
        CHECK(estimator_from_string(to_string(e)) == e);
    for (auto a : {AdjustmentChoice::Discovered, AdjustmentChoice::Oracle, AdjustmentChoice::Full})
        CHECK(adjustment_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(estimator_from_string("ols"), gci::ContractError);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("scenario") {
    const auto sc = load_scenario(default_fixture_path());
    CHECK(sc.oracle_key_confounders == gci::graph::NameSet{"X3"});
    CHECK(sc.post_treatment == gci::graph::NameSet{"X9", "X10", "X11", "X12", "X13"});
}

TEST_CASE("generate is reproducible and manifested") {
    // The output directory is part of the recorded config, so both runs share it.
    const auto a = scratch("gen-a"), b = scratch("gen-b");
    REQUIRE(invoke({"generate", "--seed", "7", "--n", "200", "--out", a.string()}).code == kExitOk);
    fs::copy(a, b);
    fs::remove_all(a);
    REQUIRE(invoke({"generate", "--seed", "7", "--n", "200", "--out", a.string()}).code == kExitOk);
    for (const auto* f : {"data.csv", "spec.json", "noise.csv", "manifest.json"}) CHECK(slurp(a / f) == slurp(b / f));
    CHECK(check_manifest(a.string()).empty());

    const auto data = gci::read_csv_file((a / "data.csv").string());
    CHECK(data.rows() == 200);
    CHECK(data.cols() == 15);
    const auto spec = gci::scm::scm_from_json(nlohmann::json::parse(slurp(a / "spec.json")));
    const auto noise = gci::read_csv_file((a / "noise.csv").string());
    CHECK(gci::scm::evaluate(spec, noise, std::nullopt) == data);

    std::ofstream(a / "data.csv", std::ios::app) << "tampered\n";
    CHECK(check_manifest(a.string()) == std::vector<std::string>{"data.csv"});

    const auto c = scratch("gen-c");
    REQUIRE(invoke({"generate", "--seed", "8", "--n", "200", "--no-noise", "--out", c.string()}).code == kExitOk);
    CHECK_FALSE(fs::exists(c / "noise.csv"));
    CHECK(slurp(c / "data.csv") != slurp(b / "data.csv"));
}

TEST_CASE("seed from the environment, overridden by the flag") {
    const auto a = scratch("env-a"), b = scratch("env-b"), c = scratch("env-c");
    ::setenv("GCI_SEED", "11", 1);
    REQUIRE(invoke({"generate", "--n", "150", "--out", a.string()}).code == kExitOk);
    REQUIRE(invoke({"generate", "--n", "150", "--seed", "12", "--out", c.string()}).code == kExitOk);
    ::unsetenv("GCI_SEED");
    REQUIRE(invoke({"generate", "--n", "150", "--seed", "11", "--out", b.string()}).code == kExitOk);
    CHECK(slurp(a / "data.csv") == slurp(b / "data.csv"));
    CHECK(slurp(c / "data.csv") != slurp(b / "data.csv"));
}

TEST_CASE("config file sits below flags") {
    const auto dir = scratch("cfg");
    fs::create_directories(dir);
    std::ofstream(dir / "run.json") << R"({"seed": 5, "n": 120})";
    const auto a = dir / "a", b = dir / "b";
    REQUIRE(invoke({"generate", "--config", (dir / "run.json").string(), "--out", a.string()}).code == kExitOk);
    REQUIRE(invoke({"generate", "--config", (dir / "run.json").string(), "--n", "130", "--out", b.string()}).code ==
            kExitOk);
    CHECK(gci::read_csv_file((a / "data.csv").string()).rows() == 120);
    CHECK(gci::read_csv_file((b / "data.csv").string()).rows() == 130);
}

TEST_CASE("exit codes") {
    const auto dir = scratch("codes");
    CHECK(invoke({"discover", "--data", "/nonexistent/data.csv"}).code == kExitIo);
    CHECK(invoke({"generate", "--bogus"}).code == kExitContract);
    CHECK(invoke({"generate", "--estimator", "ols"}).code == kExitContract);
    CHECK(invoke({"generate", "--theta-r", "2"}).code == kExitContract);
    CHECK(invoke({}).code == kExitContract);
    CHECK(invoke({"generate", "--help"}).code == kExitOk);

    fs::create_directories(dir);
    {
        std::ofstream csv(dir / "small.csv");
        csv << "a,b\n";
        for (int i = 0; i < 150; ++i) csv << i << "," << (i * 7) % 13 << "\n";
    }
    const auto missing = invoke({"discover", "--data", (dir / "small.csv").string(), "--treatment", "t",
                                 "--outcome", "y", "--out", (dir / "o").string()});
    CHECK(missing.code == kExitContract);
    CHECK(missing.err.find("'t'") != std::string::npos);

    CHECK(shell("verify --graphs 3 --out " + (dir / "v").string()) == kExitOk);
    CHECK(shell("discover --data /nonexistent.csv") == kExitIo);
    CHECK(shell("nonsense") == kExitContract);
}

TEST_CASE("oracle discovery on the fixture") {
    const auto dir = scratch("disc");
    REQUIRE(invoke({"generate", "--seed", "3", "--n", "300", "--out", (dir / "g").string()}).code == kExitOk);
    const auto r = invoke({"discover", "--oracle", "--data", (dir / "g" / "data.csv").string(), "--out",
                           (dir / "d").string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("key confounders: {X3}") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "d" / "ancestors.json"));
    CHECK(j.at("key_confounders") == nlohmann::json{"X3"});
    CHECK(check_manifest((dir / "d").string()).empty());
}

TEST_CASE("estimate with the true curve") {
    const auto dir = scratch("est");
    const auto g = dir / "g";
    REQUIRE(invoke({"generate", "--seed", "4", "--n", "400", "--out", g.string()}).code == kExitOk);
    const auto r = invoke({"estimate", "--data", (g / "data.csv").string(), "--adjustment", "oracle", "--spec",
                           (g / "spec.json").string(), "--noise", (g / "noise.csv").string(), "--out",
                           (dir / "e").string()});
    CHECK(r.code == kExitOk);
    const auto j = nlohmann::json::parse(slurp(dir / "e" / "estimate.json"));
    CHECK(j.dump().find("eps") != std::string::npos);
    const auto curves = slurp(dir / "e" / "curves.csv");
    CHECK(curves.rfind("curve,t,mean_outcome,mtef\n", 0) == 0);
    CHECK(curves.find("truth,") != std::string::npos);
}

TEST_CASE("verify a single discrete SCM") {
    const auto dir = scratch("ver");
    fs::create_directories(dir);
    // Root R confounds through A; the key confounder set {R} is not enough.
    gci::scm::DiscreteScm d(gci::graph::GraphSpec({"R", "A", "t", "y"}, {{"R", "A"}, {"A", "t"}, {"A", "y"}, {"t", "y"}},
                                                  "t", "y"),
                            {{"R", {{0.5, 0.5}}},
                             {"A", {{0.9, 0.1}, {0.1, 0.9}}},
                             {"t", {{0.8, 0.2}, {0.2, 0.8}}},
                             {"y", {{0.9, 0.1}, {0.3, 0.7}, {0.6, 0.4}, {0.1, 0.9}}}});
    std::ofstream(dir / "scm.json") << gci::scm::to_json(d).dump();
    const auto r = invoke({"verify", "--scm", (dir / "scm.json").string(), "--out", (dir / "o").string()});
    CHECK(r.code == kExitWarnings);
    CHECK(r.out.find("graphs over tolerance: 1 / 1") != std::string::npos);
}

TEST_CASE("small benchmark") {
    const auto dir = scratch("bench");
    const auto r = invoke({"benchmark", "--replicates", "2", "--n", "300", "--adjustment", "oracle", "--seed", "1",
                           "--out", dir.string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("| Method |") != std::string::npos);
    for (const auto* f : {"results.csv", "discovery.csv", "summary.json", "report.md", "manifest.json"})
        CHECK(fs::exists(dir / f));
    CHECK(check_manifest(dir.string()).empty());
    const auto results = slurp(dir / "results.csv");
    std::size_t lines = 0;
    for (char ch : results) lines += ch == '\n';
    CHECK(lines == 1 + 2 * 8);

    RunConfig cfg;
    cfg.replicates = 2;
    cfg.n = 300;
    cfg.adjustment = AdjustmentChoice::Oracle;
    cfg.seed = 1;
    std::ostringstream log;
    const auto report = run_benchmark(cfg, log);
    CHECK(report.failures == 0);
    CHECK(report.hits == 2);
    CHECK(report.contaminated == 0);
    CHECK(report.at("regadj", "gcif", "test").count == 2);
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(summary.dump().find(nlohmann::json(report.at("ipw", "full", "train").mean).dump()) != std::string::npos);
}

TEST_CASE("test dump") {
    const auto dir = scratch("dump");
    REQUIRE(invoke({"generate", "--seed", "2", "--n", "150", "--out", dir.string()}).code == kExitOk);
    Eigen::MatrixXd m = gci::read_csv_file((dir / "data.csv").string()).columns({"X1", "X5", "t"});
    gci::write_csv_file((dir / "three.csv").string(), gci::Dataset({"X1", "X5", "t"}, m));
    const auto r = invoke({"test-dump", "--data", (dir / "three.csv").string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind("a,b,cond,method,statistic,p_value\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : r.out) lines += ch == '\n';
    CHECK(lines == 1 + 3 * 3);  // per pair: hsic, gcm | {}, gcm | the third column
}
