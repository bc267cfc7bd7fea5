#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gci/dataset.hpp"
#include "gci/graph.hpp"
#include "gci/stats.hpp"
#include "json.hpp"

namespace gci::discovery {

using graph::Name;
using graph::NameSet;

struct Thresholds {
    double theta_r = 0.1;  // relevance: |cor| needed to become a candidate
    double theta_i = 0.05; // independence: GCM p-value at or above this removes a candidate
    double theta_d = 0.05; // directionality: ANM level
    std::size_t max_cond_size = 3;

    void validate() const;
};

enum class CandidateOrder { AscendingCorrelation, DescendingCorrelation };

/// Parents, children and direction-undecided neighbours of one target.
struct PcResult {
    NameSet parents;
    NameSet children;
    NameSet ambiguous;
    NameSet candidates;  // relevance-screened set before independence pruning
};

/// Local parent/child identification around `target`: correlation screen,
/// GCM pruning over conditioning sets of size 1..max_cond_size, then ANM
/// orientation of the survivors.
PcResult pc_identify(stats::CiTester& tester, const Name& target, const NameSet& search, const stats::CorMatrix& cm,
                     const Thresholds& th, const NameSet& ex,
                     CandidateOrder order = CandidateOrder::AscendingCorrelation);

/// Strategy interface so that the ancestor search can run against a known
/// graph as well as against data.
class ParentChildIdentifier {
public:
    virtual ~ParentChildIdentifier() = default;
    virtual PcResult identify(const Name& target, const NameSet& search, const NameSet& ex) = 0;
};

class StatisticalIdentifier final : public ParentChildIdentifier {
public:
    StatisticalIdentifier(const Dataset& data, Thresholds th, std::uint64_t seed,
                          CandidateOrder order = CandidateOrder::AscendingCorrelation);
    PcResult identify(const Name& target, const NameSet& search, const NameSet& ex) override;

    stats::CiTester& tester() noexcept { return tester_; }

private:
    Thresholds th_;
    CandidateOrder order_;
    stats::CiTester tester_;
    stats::CorMatrix cm_;
};

/// Perfect identifier: reads parents and children off a graph.
class GraphOracleIdentifier final : public ParentChildIdentifier {
public:
    explicit GraphOracleIdentifier(graph::GraphSpec g) : g_(std::move(g)) {}
    PcResult identify(const Name& target, const NameSet& search, const NameSet& ex) override;

private:
    graph::GraphSpec g_;
};

struct Round {
    std::vector<Name> frontier;
    std::map<Name, NameSet> parents;     // per frontier target
    std::map<Name, NameSet> children;    // per frontier target
    std::map<Name, NameSet> ambiguous;   // per frontier target
    std::map<Name, NameSet> candidates;  // per frontier target
    NameSet excluded_before;             // exclusion set in force during this round
};

/// Identified parent sets keyed by target, the set of excluded children, and
/// the per-round trace.
struct AncestorDict {
    std::map<Name, NameSet> parents;
    NameSet excluded;
    std::vector<Round> rounds;
    bool truncated = false;

    /// Union of all identified parents (the recovered ancestor set of the outcome).
    NameSet ancestors() const;
};

inline constexpr std::size_t kDefaultMaxRounds = 20;

AncestorDict ans_identify(ParentChildIdentifier& pci, const std::vector<Name>& columns, const Name& treatment,
                          const Name& outcome, std::size_t max_rounds = kDefaultMaxRounds);

AncestorDict ans_identify(const Dataset& d, const Name& treatment, const Name& outcome, const Thresholds& th = {},
                          std::uint64_t seed = 0, std::size_t max_rounds = kDefaultMaxRounds);

struct KeyConfounders {
    NameSet names;
    std::vector<std::string> warnings;
};

/// Identified roots that are ancestors of both treatment and outcome in the
/// identified parent graph, minus roots whose every identified path to the
/// outcome passes through the treatment.
KeyConfounders extract_key_confounders(const AncestorDict& ad, const Name& treatment, const Name& outcome);

nlohmann::json to_json(const AncestorDict& ad);
AncestorDict ancestor_dict_from_json(const nlohmann::json& j);

}  // namespace gci::discovery
