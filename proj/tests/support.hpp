#pragma once

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gci/graph.hpp"
#include "gci/scm.hpp"
#include "json.hpp"

namespace testing {

inline std::string fixture_path() { return std::string(GCI_FIXTURE_DIR) + "/benchmark_dag.json"; }

inline nlohmann::json load_fixture() {
    std::ifstream in(fixture_path());
    return nlohmann::json::parse(in);
}

inline gci::scm::ScmTemplate benchmark_template() { return gci::scm::template_from_json(load_fixture()); }

inline gci::graph::GraphSpec graph_of(std::vector<std::string> nodes, std::vector<gci::graph::Edge> edges,
                                      std::string t = "t", std::string y = "y") {
    return gci::graph::GraphSpec(std::move(nodes), std::move(edges), std::move(t), std::move(y));
}

/// Random DAG over nodes N0..N{n-1} (edges only from lower to higher index)
/// with treatment and outcome picked among them, t before y.
inline gci::graph::GraphSpec random_dag(std::mt19937_64& rng, std::size_t n, double p = 0.35) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("N" + std::to_string(i));
    std::bernoulli_distribution coin(p);
    std::vector<gci::graph::Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (coin(rng)) edges.emplace_back(names[i], names[j]);
    const auto t = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
    const auto y = std::uniform_int_distribution<std::size_t>(t + 1, n - 1)(rng);
    return gci::graph::GraphSpec(names, edges, names[t], names[y]);
}

/// reach[i][j]: directed path i -> ... -> j, by repeated edge relaxation.
inline std::vector<std::vector<bool>> closure(const gci::graph::GraphSpec& g, const std::string& removed = "") {
    const auto& nodes = g.nodes();
    const std::size_t n = nodes.size();
    auto idx = [&](const std::string& v) {
        for (std::size_t i = 0; i < n; ++i)
            if (nodes[i] == v) return i;
        return n;
    };
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (const auto& [u, v] : g.edges())
        if (u != removed && v != removed) reach[idx(u)][idx(v)] = true;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (reach[i][j])
                    for (std::size_t k = 0; k < n; ++k)
                        if (reach[j][k] && !reach[i][k]) reach[i][k] = changed = true;
    }
    return reach;
}

}  // namespace testing
