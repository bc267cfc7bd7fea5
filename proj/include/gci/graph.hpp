#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gci::graph {

using Name = std::string;
using NameSet = std::set<Name>;
using Edge = std::pair<Name, Name>;

/// Named DAG with a designated treatment and outcome. Validated on
/// construction: unique node names, known edge endpoints, no self-loops,
/// no duplicate edges, acyclic, treatment != outcome.
class GraphSpec {
public:
    GraphSpec(std::vector<Name> nodes, std::vector<Edge> edges, Name treatment, Name outcome);

    const std::vector<Name>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Name& treatment() const noexcept { return treatment_; }
    const Name& outcome() const noexcept { return outcome_; }

    bool contains(const Name& v) const { return parents_.count(v) != 0; }
    const NameSet& parents(const Name& v) const;
    const NameSet& children(const Name& v) const;
    std::size_t in_degree(const Name& v) const { return parents(v).size(); }

    /// Nodes other than treatment and outcome.
    std::vector<Name> covariates() const;

    bool operator==(const GraphSpec& other) const;

private:
    std::vector<Name> nodes_;
    std::vector<Edge> edges_;
    Name treatment_;
    Name outcome_;
    std::map<Name, NameSet> parents_;
    std::map<Name, NameSet> children_;
};

/// Roles of the covariates relative to the outcome under topological unfolding.
struct NodeClassification {
    NameSet root_ancestors;
    NameSet nonroot_ancestors;
    NameSet non_ancestors;
    NameSet t_only_roots;  // subset of root_ancestors
};

/// Kahn's algorithm with a lexicographic ready-queue.
std::vector<Name> topological_order(const GraphSpec& g);

/// All u with a directed path u -> ... -> v, excluding v.
NameSet ancestors(const GraphSpec& g, const Name& v);

/// All u with a directed path v -> ... -> u, excluding v.
NameSet descendants(const GraphSpec& g, const Name& v);

/// Ancestors of `v` in the graph with node `removed` (and its edges) deleted.
NameSet ancestors_without(const GraphSpec& g, const Name& v, const Name& removed);

NodeClassification classify_nodes(const GraphSpec& g);

/// Common root ancestors of treatment and outcome, excluding roots whose
/// every directed path to the outcome passes through the treatment.
NameSet key_confounders_oracle(const GraphSpec& g);

nlohmann::json to_json(const GraphSpec& g);
GraphSpec graph_from_json(const nlohmann::json& j);

}  // namespace gci::graph
