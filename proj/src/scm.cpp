#include "gci/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gci/error.hpp"
#include "gci/seed.hpp"

namespace gci::scm {

Link link_from_string(const std::string& s) {
    if (s == "sigmoid") return Link::Sigmoid;
    if (s == "linear") return Link::Linear;
    throw ContractError("scm: unknown link '" + s + "'");
}

std::string to_string(Link link) { return link == Link::Sigmoid ? "sigmoid" : "linear"; }

ScmSpec::ScmSpec(GraphSpec graph, std::map<Name, Mechanism> mechanisms)
    : graph_(std::move(graph)), mechanisms_(std::move(mechanisms)), order_(graph::topological_order(graph_)) {
    for (const auto& v : graph_.nodes()) {
        auto it = mechanisms_.find(v);
        if (it == mechanisms_.end()) throw ContractError("scm: node '" + v + "' has no mechanism");
        const auto& m = it->second;
        const auto& pa = graph_.parents(v);
        if (std::vector<Name>(pa.begin(), pa.end()) != m.parents)
            throw ContractError("scm: mechanism parents of '" + v + "' do not match the graph");
        if (m.weights.size() != m.parents.size())
            throw ContractError("scm: mechanism of '" + v + "' needs one weight per parent");
        for (double w : m.weights)
            if (!std::isfinite(w)) throw ContractError("scm: non-finite weight in '" + v + "'");
        if (!(m.noise_sd > 0.0) || !std::isfinite(m.noise_sd))
            throw ContractError("scm: noise_sd of '" + v + "' must be positive");
    }
    if (mechanisms_.size() != graph_.nodes().size()) throw ContractError("scm: mechanism for unknown node");
}

const Mechanism& ScmSpec::mechanism(const Name& v) const {
    auto it = mechanisms_.find(v);
    if (it == mechanisms_.end()) throw LookupError("scm: unknown node '" + v + "'");
    return it->second;
}

WeightMap draw_weights(const GraphSpec& g, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "weights"));
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    WeightMap out;
    for (const auto& e : g.edges()) out[e] = unif(rng);
    return out;
}

ScmSpec instantiate(const ScmTemplate& tmpl, const WeightMap& weights) {
    std::map<Name, Mechanism> mech;
    for (const auto& v : tmpl.graph.nodes()) {
        Mechanism m;
        const auto& pa = tmpl.graph.parents(v);
        m.parents.assign(pa.begin(), pa.end());
        for (const auto& p : m.parents) {
            auto it = weights.find({p, v});
            if (it == weights.end()) throw ContractError("scm: no weight for edge " + p + " -> " + v);
            m.weights.push_back(it->second);
        }
        if (auto it = tmpl.laws.find(v); it != tmpl.laws.end()) {
            m.link = it->second.link;
            m.noise_sd = it->second.noise_sd;
        }
        mech.emplace(v, std::move(m));
    }
    return ScmSpec(tmpl.graph, std::move(mech));
}

Sample sample(const ScmSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ContractError("scm: sample size must be >= 1");
    const auto& nodes = spec.graph().nodes();
    Eigen::MatrixXd noise(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        std::mt19937_64 rng(derive_seed(seed, "noise/" + nodes[j]));
        std::normal_distribution<double> eps(0.0, spec.mechanism(nodes[j]).noise_sd);
        for (std::size_t i = 0; i < n; ++i)
            noise(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eps(rng);
    }
    Dataset noise_ds(nodes, std::move(noise));
    Dataset data = evaluate(spec, noise_ds, std::nullopt);
    return {std::move(data), std::move(noise_ds)};
}

namespace {

inline double apply_link(Link link, double x) {
    return link == Link::Sigmoid ? 1.0 / (1.0 + std::exp(-x)) : x;
}

}  // namespace

Dataset evaluate(const ScmSpec& spec, const Dataset& noise, std::optional<double> do_t) {
    const auto& nodes = spec.graph().nodes();
    if (noise.names() != nodes) throw ContractError("scm: noise panel columns do not match the SCM nodes");
    const Eigen::Index n = noise.values().rows();
    Eigen::MatrixXd values(n, static_cast<Eigen::Index>(nodes.size()));
    const auto& t = spec.graph().treatment();
    for (const auto& v : spec.order()) {
        const auto j = static_cast<Eigen::Index>(noise.index(v));
        if (do_t && v == t) {
            values.col(j).setConstant(*do_t);
            continue;
        }
        const auto& m = spec.mechanism(v);
        std::vector<Eigen::Index> pcols;
        for (const auto& p : m.parents) pcols.push_back(static_cast<Eigen::Index>(noise.index(p)));
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < pcols.size(); ++k) acc += apply_link(m.link, m.weights[k] * values(i, pcols[k]));
            values(i, j) = acc + noise.values()(i, j);
        }
    }
    return Dataset(nodes, std::move(values));
}

Eigen::VectorXd counterfactual_outcomes(const ScmSpec& spec, const Dataset& noise, double do_t) {
    return evaluate(spec, noise, do_t).column_vector(spec.graph().outcome());
}

EffectCurve true_mtef(const ScmSpec& spec, const Dataset& noise, const std::vector<double>& t_grid) {
    require_ascending_grid(t_grid);
    std::vector<double> mu;
    mu.reserve(t_grid.size());
    for (double t : t_grid) mu.push_back(counterfactual_outcomes(spec, noise, t).mean());
    return EffectCurve(t_grid, std::move(mu));
}

EffectCurve true_mtef(const ScmSpec& spec, const std::vector<double>& t_grid, std::size_t n, std::uint64_t seed) {
    require_ascending_grid(t_grid);
    return true_mtef(spec, sample(spec, n, seed).noise, t_grid);
}

std::vector<double> quantile_grid(std::span<const double> values, std::size_t points) {
    if (values.empty()) throw ContractError("quantile grid: empty sample");
    if (points < 2) throw ContractError("quantile grid: need at least two points");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> grid;
    for (std::size_t k = 1; k <= points; ++k) {
        const double pos = static_cast<double>(k) / static_cast<double>(points + 1) * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        grid.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
    }
    require_ascending_grid(grid);
    return grid;
}

nlohmann::json to_json(const ScmSpec& spec) {
    nlohmann::json mech = nlohmann::json::object();
    for (const auto& [v, m] : spec.mechanisms()) {
        nlohmann::json w = nlohmann::json::object();
        for (std::size_t k = 0; k < m.parents.size(); ++k) w[m.parents[k]] = m.weights[k];
        mech[v] = {{"link", to_string(m.link)}, {"noise_sd", m.noise_sd}, {"weights", w}};
    }
    return {{"kind", "continuous"}, {"graph", graph::to_json(spec.graph())}, {"mechanisms", mech}};
}

ScmSpec scm_from_json(const nlohmann::json& j) {
    try {
        auto g = graph::graph_from_json(j.at("graph"));
        std::map<Name, Mechanism> mech;
        for (const auto& [v, mj] : j.at("mechanisms").items()) {
            Mechanism m;
            const auto& pa = g.parents(v);
            m.parents.assign(pa.begin(), pa.end());
            const auto& w = mj.at("weights");
            if (w.size() != m.parents.size())
                throw ContractError("scm json: weights of '" + v + "' do not match its parents");
            for (const auto& p : m.parents) m.weights.push_back(w.at(p).get<double>());
            m.link = link_from_string(mj.value("link", "sigmoid"));
            m.noise_sd = mj.value("noise_sd", 1.0);
            mech.emplace(v, std::move(m));
        }
        return ScmSpec(std::move(g), std::move(mech));
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("scm json: ") + e.what());
    }
}

ScmTemplate template_from_json(const nlohmann::json& j) {
    try {
        ScmTemplate t{graph::graph_from_json(j.at("graph")), {}, {}, j.value("version", "")};
        if (j.contains("laws")) {
            for (const auto& [v, lj] : j.at("laws").items()) {
                if (!t.graph.contains(v)) throw LookupError("scm template: law for unknown node '" + v + "'");
                t.laws[v] = NodeLaw{link_from_string(lj.value("link", "sigmoid")), lj.value("noise_sd", 1.0)};
            }
        }
        if (j.contains("roles"))
            for (const auto& [v, r] : j.at("roles").items()) t.roles[v] = r.get<std::string>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("scm template json: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

DiscreteScm::DiscreteScm(GraphSpec graph, std::map<Name, std::vector<std::array<double, 2>>> tables)
    : graph_(std::move(graph)), tables_(std::move(tables)) {
    for (const auto& v : graph_.nodes()) {
        auto it = tables_.find(v);
        if (it == tables_.end()) throw ContractError("discrete scm: node '" + v + "' has no table");
        const std::size_t rows = std::size_t{1} << graph_.in_degree(v);
        if (it->second.size() != rows)
            throw ContractError("discrete scm: table of '" + v + "' needs " + std::to_string(rows) + " rows");
        for (const auto& row : it->second) {
            for (double p : row)
                if (!(p >= 0.0 && p <= 1.0)) throw ContractError("discrete scm: probability outside [0,1] in '" + v + "'");
            if (std::abs(row[0] + row[1] - 1.0) > 1e-12)
                throw ContractError("discrete scm: row of '" + v + "' does not sum to 1");
        }
    }
    if (tables_.size() != graph_.nodes().size()) throw ContractError("discrete scm: table for unknown node");
}

const std::vector<std::array<double, 2>>& DiscreteScm::table(const Name& v) const {
    auto it = tables_.find(v);
    if (it == tables_.end()) throw LookupError("discrete scm: unknown node '" + v + "'");
    return it->second;
}

namespace {

// Node-indexed view of a DiscreteScm for fast enumeration.
struct Compiled {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> parents;  // sorted-name order
    std::vector<const std::vector<std::array<double, 2>>*> tables;
    std::size_t t = 0;
    std::size_t y = 0;
    std::map<Name, std::size_t> index;

    explicit Compiled(const DiscreteScm& d) {
        const auto& nodes = d.graph().nodes();
        n = nodes.size();
        if (n > kMaxEnumerableNodes)
            throw CapacityError("discrete scm: " + std::to_string(n) + " nodes exceed the enumeration limit of " +
                                std::to_string(kMaxEnumerableNodes));
        for (std::size_t i = 0; i < n; ++i) index[nodes[i]] = i;
        for (const auto& v : nodes) {
            std::vector<std::size_t> pa;
            for (const auto& p : d.graph().parents(v)) pa.push_back(index.at(p));
            parents.push_back(std::move(pa));
            tables.push_back(&d.table(v));
        }
        t = index.at(d.graph().treatment());
        y = index.at(d.graph().outcome());
    }

    double factor(std::size_t v, std::uint32_t state) const {
        std::size_t row = 0;
        for (std::size_t k = 0; k < parents[v].size(); ++k)
            if (state >> parents[v][k] & 1u) row |= std::size_t{1} << k;
        return (*tables[v])[row][state >> v & 1u];
    }
};

}  // namespace

std::vector<double> joint_distribution(const DiscreteScm& d) {
    const Compiled c(d);
    std::vector<double> joint(std::size_t{1} << c.n);
    for (std::uint32_t s = 0; s < joint.size(); ++s) {
        double p = 1.0;
        for (std::size_t v = 0; v < c.n; ++v) p *= c.factor(v, s);
        joint[s] = p;
    }
    return joint;
}

std::array<double, 2> exact_interventional(const DiscreteScm& d, int do_t) {
    if (do_t != 0 && do_t != 1) throw ContractError("discrete scm: intervention value must be 0 or 1");
    const Compiled c(d);
    std::array<double, 2> out{0.0, 0.0};
    for (std::uint32_t s = 0; s < (std::uint32_t{1} << c.n); ++s) {
        if ((s >> c.t & 1u) != static_cast<std::uint32_t>(do_t)) continue;
        double p = 1.0;
        for (std::size_t v = 0; v < c.n; ++v)
            if (v != c.t) p *= c.factor(v, s);
        out[s >> c.y & 1u] += p;
    }
    return out;
}

BackdoorResult backdoor_adjusted(const DiscreteScm& d, int do_t, const NameSet& adjustment) {
    if (do_t != 0 && do_t != 1) throw ContractError("discrete scm: intervention value must be 0 or 1");
    const Compiled c(d);
    std::vector<std::size_t> z;
    for (const auto& v : adjustment) {
        auto it = c.index.find(v);
        if (it == c.index.end()) throw LookupError("discrete scm: unknown adjustment variable '" + v + "'");
        if (it->second == c.t || it->second == c.y)
            throw ContractError("discrete scm: adjustment set must exclude treatment and outcome");
        z.push_back(it->second);
    }
    const auto joint = joint_distribution(d);
    const std::size_t zc = std::size_t{1} << z.size();
    // Marginals P(z), P(t, z), P(t, z, y) over the adjustment configurations.
    std::vector<double> pz(zc, 0.0), ptz(zc, 0.0), ptzy1(zc, 0.0);
    for (std::uint32_t s = 0; s < joint.size(); ++s) {
        std::size_t zi = 0;
        for (std::size_t k = 0; k < z.size(); ++k)
            if (s >> z[k] & 1u) zi |= std::size_t{1} << k;
        pz[zi] += joint[s];
        if ((s >> c.t & 1u) == static_cast<std::uint32_t>(do_t)) {
            ptz[zi] += joint[s];
            if (s >> c.y & 1u) ptzy1[zi] += joint[s];
        }
    }
    BackdoorResult r;
    for (std::size_t zi = 0; zi < zc; ++zi) {
        if (ptz[zi] <= 0.0) {
            ++r.skipped_cells;
            continue;
        }
        const double py1 = ptzy1[zi] / ptz[zi];
        r.p_y[1] += pz[zi] * py1;
        r.p_y[0] += pz[zi] * (1.0 - py1);
    }
    return r;
}

AdjustmentReport verify_adjustment_equivalence(const DiscreteScm& d) {
    AdjustmentReport rep;
    rep.key_confounders = graph::key_confounders_oracle(d.graph());
    const auto& pa_t = d.graph().parents(d.graph().treatment());
    for (int t = 0; t <= 1; ++t) {
        const auto exact = exact_interventional(d, t);
        const auto key = backdoor_adjusted(d, t, rep.key_confounders);
        const auto pa = backdoor_adjusted(d, t, pa_t);
        rep.skipped_cells += key.skipped_cells;
        for (int y = 0; y <= 1; ++y) {
            rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(exact[y] - key.p_y[y]));
            rep.parents_discrepancy = std::max(rep.parents_discrepancy, std::abs(exact[y] - pa.p_y[y]));
        }
    }
    return rep;
}

DiscreteScm random_discrete_scm(std::uint64_t seed, std::size_t max_nodes) {
    if (max_nodes < 3 || max_nodes > kMaxEnumerableNodes)
        throw ContractError("random discrete scm: max_nodes must be in [3, 20]");
    std::mt19937_64 rng(derive_seed(seed, "discrete-scm"));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, max_nodes)(rng);
    // Position k in the causal order is node "V<k>".
    std::vector<Name> names;
    for (std::size_t k = 0; k < n; ++k) names.push_back("V" + std::to_string(k));
    std::bernoulli_distribution edge(0.4);
    std::vector<graph::Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) edges.emplace_back(names[i], names[j]);
    std::size_t ti = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
    std::size_t yi = std::uniform_int_distribution<std::size_t>(ti + 1, n - 1)(rng);
    GraphSpec g(names, edges, names[ti], names[yi]);

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::map<Name, std::vector<std::array<double, 2>>> tables;
    for (const auto& v : names) {
        const std::size_t rows = std::size_t{1} << g.in_degree(v);
        std::vector<std::array<double, 2>> table;
        for (std::size_t r = 0; r < rows; ++r) {
            // Dirichlet(1,1) on two outcomes is Uniform(0,1) on P(v=1).
            const double p1 = std::clamp(unif(rng), 0.05, 0.95);
            table.push_back({1.0 - p1, p1});
        }
        tables.emplace(v, std::move(table));
    }
    return DiscreteScm(std::move(g), std::move(tables));
}

Dataset sample_discrete(const DiscreteScm& d, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ContractError("discrete scm: sample size must be >= 1");
    const Compiled c(d);
    const auto order = graph::topological_order(d.graph());
    std::vector<std::size_t> idx;
    for (const auto& v : order) idx.push_back(c.index.at(v));
    std::mt19937_64 rng(derive_seed(seed, "discrete-sample"));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c.n));
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t state = 0;
        for (std::size_t v : idx) {
            const double p1 = c.factor(v, state | (std::uint32_t{1} << v));
            if (unif(rng) < p1) state |= std::uint32_t{1} << v;
        }
        for (std::size_t v = 0; v < c.n; ++v)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = static_cast<double>(state >> v & 1u);
    }
    return Dataset(d.graph().nodes(), std::move(m));
}

nlohmann::json to_json(const DiscreteScm& d) {
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& [v, rows] : d.tables()) {
        nlohmann::json jr = nlohmann::json::array();
        for (const auto& r : rows) jr.push_back({r[0], r[1]});
        tables[v] = jr;
    }
    return {{"kind", "discrete"}, {"graph", graph::to_json(d.graph())}, {"tables", tables}};
}

DiscreteScm discrete_from_json(const nlohmann::json& j) {
    try {
        auto g = graph::graph_from_json(j.at("graph"));
        std::map<Name, std::vector<std::array<double, 2>>> tables;
        for (const auto& [v, rows] : j.at("tables").items()) {
            std::vector<std::array<double, 2>> t;
            for (const auto& r : rows) t.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
            tables.emplace(v, std::move(t));
        }
        return DiscreteScm(std::move(g), std::move(tables));
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("discrete scm json: ") + e.what());
    }
}

}  // namespace gci::scm
