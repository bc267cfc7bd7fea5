#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/dataset.hpp"
#include "gci/effect_curve.hpp"
#include "gci/graph.hpp"
#include "json.hpp"

namespace gci::scm {

using graph::Edge;
using graph::GraphSpec;
using graph::Name;
using graph::NameSet;

enum class Link { Sigmoid, Linear };

Link link_from_string(const std::string& s);
std::string to_string(Link link);

/// Additive-noise mechanism of one node:
///   V = sum_p f(w_p * p) + eps,  eps ~ N(0, noise_sd^2).
/// Roots have no parents and are pure noise.
struct Mechanism {
    std::vector<Name> parents;  // sorted, equal to the graph parents
    std::vector<double> weights;
    Link link = Link::Sigmoid;
    double noise_sd = 1.0;
};

/// Per-node law of a structural template, before weights are drawn.
struct NodeLaw {
    Link link = Link::Sigmoid;
    double noise_sd = 1.0;
};

/// A continuous SCM: graph plus one mechanism per node.
class ScmSpec {
public:
    ScmSpec(GraphSpec graph, std::map<Name, Mechanism> mechanisms);

    const GraphSpec& graph() const noexcept { return graph_; }
    const Mechanism& mechanism(const Name& v) const;
    const std::map<Name, Mechanism>& mechanisms() const noexcept { return mechanisms_; }
    const std::vector<Name>& order() const noexcept { return order_; }

private:
    GraphSpec graph_;
    std::map<Name, Mechanism> mechanisms_;
    std::vector<Name> order_;
};

/// Graph plus per-node laws and declared roles; weights come from draw_weights.
struct ScmTemplate {
    GraphSpec graph;
    std::map<Name, NodeLaw> laws;
    std::map<Name, std::string> roles;
    std::string version;
};

using WeightMap = std::map<Edge, double>;

/// Every edge weight i.i.d. Uniform[0.5, 2].
WeightMap draw_weights(const GraphSpec& g, std::uint64_t seed);

ScmSpec instantiate(const ScmTemplate& tmpl, const WeightMap& weights);

/// A sampled dataset together with the exogenous noise that produced it.
/// Both share the column order of the graph's node list.
struct Sample {
    Dataset data;
    Dataset noise;
};

Sample sample(const ScmSpec& spec, std::size_t n, std::uint64_t seed);

/// Re-evaluate every node from stored noise with the treatment clamped to
/// do_t. Passing the factual noise with no clamp reproduces the sample.
Dataset evaluate(const ScmSpec& spec, const Dataset& noise, std::optional<double> do_t);

/// Outcome column of evaluate(spec, noise, do_t).
Eigen::VectorXd counterfactual_outcomes(const ScmSpec& spec, const Dataset& noise, double do_t);

/// MTEF from counterfactual means over a shared noise panel.
EffectCurve true_mtef(const ScmSpec& spec, const Dataset& noise, const std::vector<double>& t_grid);
EffectCurve true_mtef(const ScmSpec& spec, const std::vector<double>& t_grid, std::size_t n, std::uint64_t seed);

/// Grid of `points` values at the equally spaced interior quantiles
/// k / (points + 1) of the given sample.
std::vector<double> quantile_grid(std::span<const double> values, std::size_t points);

nlohmann::json to_json(const ScmSpec& spec);
ScmSpec scm_from_json(const nlohmann::json& j);
ScmTemplate template_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Discrete (binary) SCMs

/// All variables binary. tables[v][row] = {P(v=0 | row), P(v=1 | row)} where
/// bit k of `row` is the value of the k-th parent in sorted name order.
class DiscreteScm {
public:
    DiscreteScm(GraphSpec graph, std::map<Name, std::vector<std::array<double, 2>>> tables);

    const GraphSpec& graph() const noexcept { return graph_; }
    const std::vector<std::array<double, 2>>& table(const Name& v) const;
    const std::map<Name, std::vector<std::array<double, 2>>>& tables() const noexcept { return tables_; }

private:
    GraphSpec graph_;
    std::map<Name, std::vector<std::array<double, 2>>> tables_;
};

inline constexpr std::size_t kMaxEnumerableNodes = 20;

/// Full observational joint, indexed by a bitmask over graph().nodes() order.
std::vector<double> joint_distribution(const DiscreteScm& d);

/// P(y | do(t = do_t)) by enumerating the truncated factorization.
std::array<double, 2> exact_interventional(const DiscreteScm& d, int do_t);

/// sum_z P(z) P(y | t, z) from the observational joint. Cells with
/// P(t, z) = 0 are skipped and counted.
struct BackdoorResult {
    std::array<double, 2> p_y{};
    std::size_t skipped_cells = 0;
};
BackdoorResult backdoor_adjusted(const DiscreteScm& d, int do_t, const NameSet& adjustment);

struct AdjustmentReport {
    NameSet key_confounders;
    double max_discrepancy = 0.0;          // backdoor over key confounders vs truncated factorization
    double parents_discrepancy = 0.0;      // backdoor over Pa(t), always a valid adjustment set
    std::size_t skipped_cells = 0;
};
AdjustmentReport verify_adjustment_equivalence(const DiscreteScm& d);

/// Random DAG on 3..max_nodes binary nodes with the treatment preceding the
/// outcome in topological order; rows Dirichlet(1,1), clipped to [0.05, 0.95].
DiscreteScm random_discrete_scm(std::uint64_t seed, std::size_t max_nodes = 8);

Dataset sample_discrete(const DiscreteScm& d, std::size_t n, std::uint64_t seed);

nlohmann::json to_json(const DiscreteScm& d);
DiscreteScm discrete_from_json(const nlohmann::json& j);

}  // namespace gci::scm
