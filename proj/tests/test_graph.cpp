#include "doctest.h"

#include <algorithm>
#include <random>

#include "gci/error.hpp"
#include "gci/graph.hpp"
#include "support.hpp"

using namespace gci::graph;
using testing::graph_of;

namespace {

std::size_t position(const std::vector<Name>& order, const Name& v) {
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), v) - order.begin());
}

}  // namespace

TEST_CASE("construction rejects malformed graphs") {
    CHECK_THROWS_AS(graph_of({"t", "y", "t"}, {}), gci::ContractError);
    CHECK_THROWS_AS(graph_of({"t", "y"}, {{"t", "t"}}), gci::ContractError);
    CHECK_THROWS_AS(graph_of({"t", "y"}, {{"t", "y"}, {"t", "y"}}), gci::ContractError);
    CHECK_THROWS_AS(graph_of({"t", "y"}, {{"t", "z"}}), gci::LookupError);
    CHECK_THROWS_AS(graph_of({"t", "y"}, {}, "t", "t"), gci::ContractError);
    CHECK_THROWS_AS(graph_of({"t", "y"}, {}, "t", "q"), gci::LookupError);
    CHECK_THROWS_AS(graph_of({"a", "t", "y"}, {{"a", "t"}, {"t", "y"}, {"y", "a"}}), gci::CycleError);
}

TEST_CASE("topological order") {
    SUBCASE("chain") {
        const auto g = graph_of({"c", "b", "a", "t", "y"}, {{"a", "b"}, {"b", "c"}});
        const auto order = topological_order(g);
        CHECK(position(order, "a") < position(order, "b"));
        CHECK(position(order, "b") < position(order, "c"));
    }
    SUBCASE("edgeless graph is sorted by name") {
        const auto g = graph_of({"y", "b", "t", "a"}, {});
        CHECK(topological_order(g) == std::vector<Name>{"a", "b", "t", "y"});
    }
    SUBCASE("benchmark fixture") {
        const auto g = testing::benchmark_template().graph;
        const auto order = topological_order(g);
        REQUIRE(order.size() == g.nodes().size());
        for (const auto& [u, v] : g.edges()) CHECK(position(order, u) < position(order, v));
        CHECK(NameSet(order.begin(), order.begin() + 3) == NameSet{"X1", "X2", "X3"});
    }
}

TEST_CASE("ancestors and descendants") {
    const auto g = graph_of({"a", "b", "c", "t", "y"}, {{"a", "b"}, {"b", "c"}});
    CHECK(ancestors(g, "c") == NameSet{"a", "b"});
    CHECK(ancestors(g, "a").empty());
    CHECK(descendants(g, "a") == NameSet{"b", "c"});
    CHECK_THROWS_AS(ancestors(g, "zz"), gci::LookupError);
}

TEST_CASE("reachability matches a transitive-closure oracle on random DAGs") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const auto g = testing::random_dag(rng, 3 + rep % 6);
        const auto reach = testing::closure(g);
        const auto& nodes = g.nodes();
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            NameSet an, de;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (reach[i][j]) an.insert(nodes[i]);
                if (reach[j][i]) de.insert(nodes[i]);
            }
            CHECK(ancestors(g, nodes[j]) == an);
            CHECK(descendants(g, nodes[j]) == de);
        }
    }
}

TEST_CASE("classify_nodes") {
    SUBCASE("instrument-like root") {
        const auto c = classify_nodes(graph_of({"X2", "t", "y"}, {{"X2", "t"}, {"t", "y"}}));
        CHECK(c.t_only_roots == NameSet{"X2"});
        CHECK(c.root_ancestors == NameSet{"X2"});
    }
    SUBCASE("classic confounder") {
        const auto c = classify_nodes(graph_of({"X", "t", "y"}, {{"X", "t"}, {"X", "y"}, {"t", "y"}}));
        CHECK(c.root_ancestors == NameSet{"X"});
        CHECK(c.t_only_roots.empty());
    }
    SUBCASE("benchmark fixture matches its declared roles") {
        const auto tmpl = testing::benchmark_template();
        const auto& g = tmpl.graph;
        const auto c = classify_nodes(g);
        CHECK(c.root_ancestors == NameSet{"X1", "X2", "X3"});
        CHECK(c.t_only_roots == NameSet{"X2"});
        CHECK(c.nonroot_ancestors == NameSet{"X4", "X5", "X6", "X7", "X8", "X9"});
        CHECK(c.non_ancestors == NameSet{"X10", "X11", "X12", "X13"});
        for (const auto& v : c.non_ancestors) CHECK(tmpl.roles.at(v).rfind("post-treatment", 0) == 0);
    }
}

TEST_CASE("classification partitions the covariates on random DAGs") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const auto g = testing::random_dag(rng, 3 + rep % 6);
        const auto c = classify_nodes(g);
        CHECK(c.root_ancestors.size() + c.nonroot_ancestors.size() + c.non_ancestors.size() == g.covariates().size());
        for (const auto& v : c.t_only_roots) CHECK(c.root_ancestors.count(v) == 1);
        for (const auto& v : c.root_ancestors) CHECK(g.in_degree(v) == 0);
    }
}

TEST_CASE("key confounders from the graph") {
    CHECK(key_confounders_oracle(graph_of({"X", "t", "y"}, {{"X", "t"}, {"X", "y"}, {"t", "y"}})) == NameSet{"X"});
    CHECK(key_confounders_oracle(graph_of({"X2", "t", "y"}, {{"X2", "t"}, {"t", "y"}})).empty());
    CHECK(key_confounders_oracle(testing::benchmark_template().graph) == NameSet{"X3"});
}

TEST_CASE("key confounder properties on random DAGs") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 300; ++rep) {
        const auto g = testing::random_dag(rng, 3 + rep % 6);
        const auto kc = key_confounders_oracle(g);
        const auto an_t = ancestors(g, g.treatment());
        const auto an_y = ancestors(g, g.outcome());
        const auto reach_without_t = testing::closure(g, g.treatment());
        const auto& nodes = g.nodes();
        const auto yi = static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), g.outcome()) - nodes.begin());
        for (const auto& v : kc) {
            CHECK(an_t.count(v) == 1);
            CHECK(an_y.count(v) == 1);
            CHECK(g.in_degree(v) == 0);
            const auto vi = static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), v) - nodes.begin());
            CHECK(reach_without_t[vi][yi]);
        }

        // A fresh root pointing into a non-ancestor of y changes nothing.
        const auto non_an = classify_nodes(g).non_ancestors;
        if (non_an.empty()) continue;
        auto nodes2 = g.nodes();
        auto edges2 = g.edges();
        nodes2.push_back("fresh");
        edges2.emplace_back("fresh", *non_an.begin());
        const GraphSpec g2(nodes2, edges2, g.treatment(), g.outcome());
        CHECK(key_confounders_oracle(g2) == kc);
    }
}

TEST_CASE("json round trip is exact") {
    const auto g = testing::benchmark_template().graph;
    const auto j = to_json(g);
    CHECK(graph_from_json(j) == g);
    CHECK(to_json(graph_from_json(nlohmann::json::parse(j.dump()))).dump() == j.dump());
    CHECK_THROWS_AS(graph_from_json(nlohmann::json{{"nodes", {"a"}}}), gci::ContractError);
}
