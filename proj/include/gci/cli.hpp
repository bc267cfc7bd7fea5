#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gci/discovery.hpp"
#include "gci/scm.hpp"
#include "json.hpp"

namespace gci::cli {

enum class EstimatorChoice { RegAdj, Ipw, Both };
enum class AdjustmentChoice { Discovered, Oracle, Full };

std::string to_string(EstimatorChoice e);
std::string to_string(AdjustmentChoice a);
EstimatorChoice estimator_from_string(const std::string& s);
AdjustmentChoice adjustment_from_string(const std::string& s);

/// Exit statuses shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitWarnings = 3;

std::string default_fixture_path();

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t n = 1000;
    discovery::Thresholds thresholds;
    std::string fixture = default_fixture_path();
    std::size_t grid_points = 10;
    EstimatorChoice estimator = EstimatorChoice::Both;
    AdjustmentChoice adjustment = AdjustmentChoice::Discovered;
    std::size_t workers = 1;
    std::string out = "gci-out";

    std::size_t replicates = 20;       // benchmark
    double test_quantile = 0.8;        // benchmark split
    std::size_t max_rounds = discovery::kDefaultMaxRounds;
    bool oracle = false;               // discover: read the fixture graph instead of testing
    bool write_noise = true;           // generate: persist the noise panel
    std::size_t graphs = 500;          // verify
    std::size_t max_nodes = 8;         // verify
    std::string data;                  // discover / estimate / test-dump input CSV
    std::string scm;                   // verify a single discrete SCM JSON instead of random ones
    std::string spec;                  // estimate: continuous SCM JSON for the true curve
    std::string noise;                 // estimate: noise panel matching `data`
    std::optional<std::vector<std::string>> adjust;  // estimate: explicit adjustment set
    std::optional<std::string> treatment;
    std::optional<std::string> outcome;
    std::size_t dump_max_cond = 1;     // test-dump
};

nlohmann::json to_json(const RunConfig& cfg);

/// Overlay the keys present in j onto base. Unknown keys are a contract error.
RunConfig apply_config_json(RunConfig base, const nlohmann::json& j);

/// Benchmark template, weights drawn per seed, and the key confounders of its graph.
struct Scenario {
    scm::ScmTemplate tmpl;
    graph::NameSet oracle_key_confounders;
    graph::NameSet post_treatment;  // nodes whose declared role starts with "post-treatment"
};
Scenario load_scenario(const std::string& fixture_path);

// ---------------------------------------------------------------------------
// Manifests

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

/// Writes manifest.json into dir listing every file with its hash.
void write_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files, nlohmann::json extra = nlohmann::json::object());

/// Re-hashes every file listed in dir/manifest.json; returns the names that differ.
std::vector<std::string> check_manifest(const std::string& dir);

// ---------------------------------------------------------------------------
// Benchmark

struct CurveError {
    std::string estimator;   // "regadj" or "ipw"
    std::string adjustment;  // "full" or "gcif"
    std::string split;       // "train" or "test"
    double eps_mtef = 0.0;
};

struct ReplicateResult {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    graph::NameSet key_confounders;
    bool hit = false;           // every oracle key confounder was discovered
    bool contaminated = false;  // a post-treatment node entered the set
    std::vector<CurveError> errors;
    std::vector<std::string> warnings;
};

struct Aggregate {
    std::string estimator, adjustment, split;
    std::size_t count = 0;
    double mean = 0.0;
    double standard_error = 0.0;
};

struct BenchmarkReport {
    std::vector<ReplicateResult> replicates;
    std::vector<Aggregate> aggregates;
    std::size_t failures = 0;
    std::size_t hits = 0;
    std::size_t contaminated = 0;

    const Aggregate& at(const std::string& estimator, const std::string& adjustment, const std::string& split) const;
};

ReplicateResult run_replicate(const Scenario& sc, const RunConfig& cfg, std::size_t replicate);

/// Mean and standard error per (estimator, adjustment, split) over successful replicates.
std::vector<Aggregate> aggregate(const std::vector<ReplicateResult>& reps);

BenchmarkReport run_benchmark(const RunConfig& cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// Subcommands. Each returns kExitOk or kExitWarnings and throws gci::Error
// on failure.

int cmd_generate(const RunConfig& cfg, std::ostream& out);
int cmd_discover(const RunConfig& cfg, std::ostream& out);
int cmd_estimate(const RunConfig& cfg, std::ostream& out);
int cmd_benchmark(const RunConfig& cfg, std::ostream& out);
int cmd_verify(const RunConfig& cfg, std::ostream& out);
int cmd_test_dump(const RunConfig& cfg, std::ostream& out);

/// Full command-line entry point: parses argv, maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gci::cli
