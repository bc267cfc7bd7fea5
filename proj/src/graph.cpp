#include "gci/graph.hpp"

#include <algorithm>
#include <deque>
#include <queue>

#include "gci/error.hpp"

namespace gci::graph {

GraphSpec::GraphSpec(std::vector<Name> nodes, std::vector<Edge> edges, Name treatment, Name outcome)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), treatment_(std::move(treatment)),
      outcome_(std::move(outcome)) {
    for (const auto& v : nodes_) {
        if (v.empty()) throw ContractError("graph: empty node name");
        if (!parents_.emplace(v, NameSet{}).second)
            throw ContractError("graph: duplicate node '" + v + "'");
        children_.emplace(v, NameSet{});
    }
    for (const auto& [u, v] : edges_) {
        if (!contains(u)) throw LookupError("graph: edge source '" + u + "' is not a node");
        if (!contains(v)) throw LookupError("graph: edge target '" + v + "' is not a node");
        if (u == v) throw ContractError("graph: self-loop on '" + u + "'");
        if (!parents_[v].insert(u).second)
            throw ContractError("graph: duplicate edge " + u + " -> " + v);
        children_[u].insert(v);
    }
    if (!contains(treatment_)) throw LookupError("graph: treatment '" + treatment_ + "' is not a node");
    if (!contains(outcome_)) throw LookupError("graph: outcome '" + outcome_ + "' is not a node");
    if (treatment_ == outcome_) throw ContractError("graph: treatment and outcome must differ");
    (void)topological_order(*this);  // throws CycleError
}

const NameSet& GraphSpec::parents(const Name& v) const {
    auto it = parents_.find(v);
    if (it == parents_.end()) throw LookupError("graph: unknown node '" + v + "'");
    return it->second;
}

const NameSet& GraphSpec::children(const Name& v) const {
    auto it = children_.find(v);
    if (it == children_.end()) throw LookupError("graph: unknown node '" + v + "'");
    return it->second;
}

std::vector<Name> GraphSpec::covariates() const {
    std::vector<Name> out;
    for (const auto& v : nodes_)
        if (v != treatment_ && v != outcome_) out.push_back(v);
    return out;
}

bool GraphSpec::operator==(const GraphSpec& other) const {
    return nodes_ == other.nodes_ && edges_ == other.edges_ && treatment_ == other.treatment_ &&
           outcome_ == other.outcome_;
}

std::vector<Name> topological_order(const GraphSpec& g) {
    std::map<Name, std::size_t> indeg;
    std::priority_queue<Name, std::vector<Name>, std::greater<>> ready;
    for (const auto& v : g.nodes()) {
        indeg[v] = g.in_degree(v);
        if (indeg[v] == 0) ready.push(v);
    }
    std::vector<Name> order;
    order.reserve(g.nodes().size());
    while (!ready.empty()) {
        Name v = ready.top();
        ready.pop();
        order.push_back(v);
        for (const auto& c : g.children(v))
            if (--indeg[c] == 0) ready.push(c);
    }
    if (order.size() != g.nodes().size()) throw CycleError("graph: cycle detected");
    return order;
}

namespace {

// Reverse BFS from v, never entering `blocked`.
NameSet reach_up(const GraphSpec& g, const Name& v, const Name* blocked) {
    NameSet seen;
    std::deque<Name> queue{v};
    while (!queue.empty()) {
        Name cur = queue.front();
        queue.pop_front();
        for (const auto& p : g.parents(cur)) {
            if (blocked && p == *blocked) continue;
            if (seen.insert(p).second) queue.push_back(p);
        }
    }
    seen.erase(v);
    return seen;
}

}  // namespace

NameSet ancestors(const GraphSpec& g, const Name& v) {
    if (!g.contains(v)) throw LookupError("graph: unknown node '" + v + "'");
    return reach_up(g, v, nullptr);
}

NameSet descendants(const GraphSpec& g, const Name& v) {
    if (!g.contains(v)) throw LookupError("graph: unknown node '" + v + "'");
    NameSet seen;
    std::deque<Name> queue{v};
    while (!queue.empty()) {
        Name cur = queue.front();
        queue.pop_front();
        for (const auto& c : g.children(cur))
            if (seen.insert(c).second) queue.push_back(c);
    }
    return seen;
}

NameSet ancestors_without(const GraphSpec& g, const Name& v, const Name& removed) {
    if (!g.contains(v)) throw LookupError("graph: unknown node '" + v + "'");
    if (v == removed) return {};
    return reach_up(g, v, &removed);
}

NodeClassification classify_nodes(const GraphSpec& g) {
    const NameSet an_y = ancestors(g, g.outcome());
    const NameSet an_y_without_t = ancestors_without(g, g.outcome(), g.treatment());
    NodeClassification out;
    for (const auto& v : g.covariates()) {
        if (!an_y.count(v)) {
            out.non_ancestors.insert(v);
        } else if (g.in_degree(v) == 0) {
            out.root_ancestors.insert(v);
            if (!an_y_without_t.count(v)) out.t_only_roots.insert(v);
        } else {
            out.nonroot_ancestors.insert(v);
        }
    }
    return out;
}

NameSet key_confounders_oracle(const GraphSpec& g) {
    const NodeClassification cls = classify_nodes(g);
    const NameSet an_t = ancestors(g, g.treatment());
    NameSet out;
    for (const auto& r : cls.root_ancestors)
        if (an_t.count(r) && !cls.t_only_roots.count(r)) out.insert(r);
    return out;
}

nlohmann::json to_json(const GraphSpec& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    return {{"nodes", g.nodes()}, {"edges", edges}, {"treatment", g.treatment()}, {"outcome", g.outcome()}};
}

GraphSpec graph_from_json(const nlohmann::json& j) {
    try {
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw ContractError("graph json: edge must be a [u, v] pair");
            edges.emplace_back(e[0].get<Name>(), e[1].get<Name>());
        }
        return GraphSpec(j.at("nodes").get<std::vector<Name>>(), std::move(edges),
                         j.at("treatment").get<Name>(), j.at("outcome").get<Name>());
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("graph json: ") + e.what());
    }
}

}  // namespace gci::graph
