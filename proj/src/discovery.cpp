#include "gci/discovery.hpp"

#include <algorithm>
#include <deque>

#include "gci/error.hpp"

namespace gci::discovery {

void Thresholds::validate() const {
    auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!open_unit(theta_r) || !open_unit(theta_i) || !open_unit(theta_d))
        throw ContractError("thresholds must lie in (0, 1)");
    if (max_cond_size < 1) throw ContractError("max_cond_size must be >= 1");
}

namespace {

// Calls f(subset) for every size-k subset of `pool` in lexicographic order;
// stops early when f returns true.
template <class F>
bool for_each_combination(const std::vector<Name>& pool, std::size_t k, F&& f) {
    if (k > pool.size()) return false;
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    std::vector<Name> subset(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) subset[i] = pool[idx[i]];
        if (f(subset)) return true;
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == pool.size() - k + i - 1) --i;
        if (i == 0) return false;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace

PcResult pc_identify(stats::CiTester& tester, const Name& target, const NameSet& search, const stats::CorMatrix& cm,
                     const Thresholds& th, const NameSet& ex, CandidateOrder order) {
    th.validate();
    if (ex.count(target)) throw ContractError("pc_identify: target '" + target + "' is in the exclusion set");
    PcResult out;
    std::vector<std::pair<double, Name>> ranked;
    for (const auto& v : search) {
        if (v == target || ex.count(v)) continue;
        const double c = cm.at(v, target);
        if (c >= th.theta_r) ranked.emplace_back(c, v);
    }
    if (order == CandidateOrder::AscendingCorrelation)
        std::sort(ranked.begin(), ranked.end());
    else
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });

    NameSet adj;
    for (const auto& [c, v] : ranked) adj.insert(v);
    out.candidates = adj;

    for (const auto& [c, cand] : ranked) {
        std::vector<Name> rest;
        for (const auto& v : adj)
            if (v != cand) rest.push_back(v);
        const std::size_t top = std::min(th.max_cond_size, rest.size());
        bool separated = false;
        for (std::size_t size = 1; size <= top && !separated; ++size) {
            separated = for_each_combination(rest, size, [&](const std::vector<Name>& cond) {
                return tester.gcm(target, cand, cond).p_value >= th.theta_i;
            });
        }
        if (separated) adj.erase(cand);
    }

    for (const auto& v : adj) {
        const auto anm = tester.anm(target, v);
        const bool fwd_ok = anm.p_forward >= th.theta_d;
        const bool back_ok = anm.p_backward >= th.theta_d;
        if (fwd_ok && anm.p_backward <= th.theta_d)
            out.children.insert(v);
        else if (anm.p_forward <= th.theta_d && back_ok)
            out.parents.insert(v);
        else
            out.ambiguous.insert(v);
    }
    return out;
}

StatisticalIdentifier::StatisticalIdentifier(const Dataset& data, Thresholds th, std::uint64_t seed,
                                             CandidateOrder order)
    : th_(th), order_(order), tester_(data, seed), cm_(stats::cor_matrix(data)) {
    th_.validate();
}

PcResult StatisticalIdentifier::identify(const Name& target, const NameSet& search, const NameSet& ex) {
    return pc_identify(tester_, target, search, cm_, th_, ex, order_);
}

PcResult GraphOracleIdentifier::identify(const Name& target, const NameSet& search, const NameSet& ex) {
    PcResult out;
    auto admissible = [&](const Name& v) { return search.count(v) && !ex.count(v) && v != target; };
    for (const auto& p : g_.parents(target))
        if (admissible(p)) out.parents.insert(p);
    for (const auto& c : g_.children(target))
        if (admissible(c)) out.children.insert(c);
    out.candidates = out.parents;
    out.candidates.insert(out.children.begin(), out.children.end());
    return out;
}

NameSet AncestorDict::ancestors() const {
    NameSet out;
    for (const auto& [t, ps] : parents) out.insert(ps.begin(), ps.end());
    return out;
}

AncestorDict ans_identify(ParentChildIdentifier& pci, const std::vector<Name>& columns, const Name& treatment,
                          const Name& outcome, std::size_t max_rounds) {
    if (std::find(columns.begin(), columns.end(), outcome) == columns.end())
        throw LookupError("ans_identify: outcome '" + outcome + "' is not a column");
    if (std::find(columns.begin(), columns.end(), treatment) == columns.end())
        throw LookupError("ans_identify: treatment '" + treatment + "' is not a column");
    NameSet search(columns.begin(), columns.end());
    search.erase(outcome);

    AncestorDict ad;
    NameSet visited{outcome};
    std::vector<Name> frontier{outcome};
    std::size_t round = 0;
    while (!frontier.empty()) {
        if (round == max_rounds) {
            ad.truncated = true;
            break;
        }
        ++round;
        Round rec;
        rec.frontier = frontier;
        rec.excluded_before = ad.excluded;
        NameSet found_parents, found_children;
        for (const auto& target : frontier) {
            NameSet ex = ad.excluded;
            ex.erase(target);
            PcResult r = pci.identify(target, search, ex);
            found_parents.insert(r.parents.begin(), r.parents.end());
            found_children.insert(r.children.begin(), r.children.end());
            ad.parents[target] = r.parents;
            rec.parents[target] = std::move(r.parents);
            rec.children[target] = std::move(r.children);
            rec.ambiguous[target] = std::move(r.ambiguous);
            rec.candidates[target] = std::move(r.candidates);
        }
        ad.rounds.push_back(std::move(rec));
        if (found_parents.empty()) break;
        ad.excluded.insert(found_children.begin(), found_children.end());
        std::vector<Name> next;
        for (const auto& p : found_parents)
            if (visited.insert(p).second) next.push_back(p);
        frontier = std::move(next);
    }
    return ad;
}

AncestorDict ans_identify(const Dataset& d, const Name& treatment, const Name& outcome, const Thresholds& th,
                          std::uint64_t seed, std::size_t max_rounds) {
    StatisticalIdentifier pci(d, th, seed);
    return ans_identify(pci, d.names(), treatment, outcome, max_rounds);
}

namespace {

NameSet reach_up(const std::map<Name, NameSet>& parents, const Name& v, const Name* blocked) {
    NameSet seen;
    std::deque<Name> queue{v};
    while (!queue.empty()) {
        const Name cur = queue.front();
        queue.pop_front();
        auto it = parents.find(cur);
        if (it == parents.end()) continue;
        for (const auto& p : it->second) {
            if (blocked && p == *blocked) continue;
            if (seen.insert(p).second) queue.push_back(p);
        }
    }
    seen.erase(v);
    return seen;
}

}  // namespace

KeyConfounders extract_key_confounders(const AncestorDict& ad, const Name& treatment, const Name& outcome) {
    if (!ad.parents.count(outcome))
        throw ContractError("extract_key_confounders: outcome '" + outcome + "' is not in the ancestor dictionary");
    KeyConfounders out;
    NameSet nodes;
    for (const auto& [t, ps] : ad.parents) {
        nodes.insert(t);
        nodes.insert(ps.begin(), ps.end());
    }
    if (!nodes.count(treatment)) {
        out.warnings.push_back("treatment '" + treatment + "' was not recovered as an ancestor of '" + outcome + "'");
        return out;
    }
    const NameSet an_t = reach_up(ad.parents, treatment, nullptr);
    const NameSet an_y_without_t = reach_up(ad.parents, outcome, &treatment);
    for (const auto& v : an_t) {
        auto it = ad.parents.find(v);
        const bool root = it == ad.parents.end() || it->second.empty();
        if (root && an_y_without_t.count(v)) out.names.insert(v);
    }
    return out;
}

nlohmann::json to_json(const AncestorDict& ad) {
    nlohmann::json parents = nlohmann::json::object();
    for (const auto& [t, ps] : ad.parents) parents[t] = ps;
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : ad.rounds) {
        nlohmann::json jr;
        jr["frontier"] = r.frontier;
        jr["excluded_before"] = r.excluded_before;
        nlohmann::json per = nlohmann::json::object();
        for (const auto& t : r.frontier) {
            per[t] = {{"candidates", r.candidates.at(t)},
                      {"parents", r.parents.at(t)},
                      {"children", r.children.at(t)},
                      {"ambiguous", r.ambiguous.at(t)}};
        }
        jr["targets"] = per;
        rounds.push_back(jr);
    }
    return {{"parents", parents}, {"excluded", ad.excluded}, {"rounds", rounds}, {"truncated", ad.truncated}};
}

AncestorDict ancestor_dict_from_json(const nlohmann::json& j) {
    try {
        AncestorDict ad;
        for (const auto& [t, ps] : j.at("parents").items()) ad.parents[t] = ps.get<NameSet>();
        ad.excluded = j.at("excluded").get<NameSet>();
        ad.truncated = j.value("truncated", false);
        for (const auto& jr : j.value("rounds", nlohmann::json::array())) {
            Round r;
            r.frontier = jr.at("frontier").get<std::vector<Name>>();
            r.excluded_before = jr.value("excluded_before", NameSet{});
            for (const auto& [t, per] : jr.at("targets").items()) {
                r.candidates[t] = per.at("candidates").get<NameSet>();
                r.parents[t] = per.at("parents").get<NameSet>();
                r.children[t] = per.at("children").get<NameSet>();
                r.ambiguous[t] = per.at("ambiguous").get<NameSet>();
            }
            ad.rounds.push_back(std::move(r));
        }
        return ad;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("ancestor dict json: ") + e.what());
    }
}

}  // namespace gci::discovery
