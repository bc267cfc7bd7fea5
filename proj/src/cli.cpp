#include "gci/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gci/error.hpp"
#include "gci/estimate.hpp"
#include "gci/seed.hpp"

#ifndef GCI_FIXTURE_DIR
#define GCI_FIXTURE_DIR "fixtures"
#endif

namespace fs = std::filesystem;

namespace gci::cli {

using graph::Name;
using graph::NameSet;
using json = nlohmann::json;

std::string to_string(EstimatorChoice e) {
    switch (e) {
        case EstimatorChoice::RegAdj: return "regadj";
        case EstimatorChoice::Ipw: return "ipw";
        case EstimatorChoice::Both: return "both";
    }
    return "?";
}

std::string to_string(AdjustmentChoice a) {
    switch (a) {
        case AdjustmentChoice::Discovered: return "discovered";
        case AdjustmentChoice::Oracle: return "oracle";
        case AdjustmentChoice::Full: return "full";
    }
    return "?";
}

EstimatorChoice estimator_from_string(const std::string& s) {
    if (s == "regadj") return EstimatorChoice::RegAdj;
    if (s == "ipw") return EstimatorChoice::Ipw;
    if (s == "both") return EstimatorChoice::Both;
    throw ContractError("unknown estimator '" + s + "' (expected regadj, ipw or both)");
}

AdjustmentChoice adjustment_from_string(const std::string& s) {
    if (s == "discovered") return AdjustmentChoice::Discovered;
    if (s == "oracle") return AdjustmentChoice::Oracle;
    if (s == "full") return AdjustmentChoice::Full;
    throw ContractError("unknown adjustment '" + s + "' (expected discovered, oracle or full)");
}

std::string default_fixture_path() { return std::string(GCI_FIXTURE_DIR) + "/benchmark_dag.json"; }

namespace {

std::string num(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string join(const auto& names, const std::string& sep = " ") {
    std::string out;
    for (const auto& n : names) {
        if (!out.empty()) out += sep;
        out += n;
    }
    return out;
}

std::string braces(const NameSet& s) { return "{" + join(s, ", ") + "}"; }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ContractError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

fs::path prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    return fs::path(dir);
}

std::string csv_text(const Dataset& d) {
    std::ostringstream ss;
    write_csv(ss, d);
    return ss.str();
}

void require_file(const std::string& path, const std::string& what) {
    if (!path.empty() && !fs::is_regular_file(path)) throw IoError(what + " '" + path + "' does not exist");
}

// Treatment/outcome from flags, then a manifest next to the data, then the fixture.
std::pair<Name, Name> roles_for(const RunConfig& cfg) {
    std::optional<Name> t = cfg.treatment, y = cfg.outcome;
    if ((!t || !y) && !cfg.data.empty()) {
        const fs::path m = fs::path(cfg.data).parent_path() / "manifest.json";
        if (fs::is_regular_file(m)) {
            const json j = read_json(m.string());
            if (!t && j.contains("treatment")) t = j.at("treatment").get<std::string>();
            if (!y && j.contains("outcome")) y = j.at("outcome").get<std::string>();
        }
    }
    if (!t || !y) {
        const auto g = graph::graph_from_json(read_json(cfg.fixture).at("graph"));
        if (!t) t = g.treatment();
        if (!y) y = g.outcome();
    }
    return {*t, *y};
}

void require_columns(const Dataset& d, const Name& t, const Name& y) {
    if (!d.has(t)) throw LookupError("treatment column '" + t + "' not found in dataset");
    if (!d.has(y)) throw LookupError("outcome column '" + y + "' not found in dataset");
}

void require_discovery_rows(std::size_t n) {
    if (n < 100) throw ContractError("discovery needs n >= 100 (got " + std::to_string(n) + ")");
}

std::vector<Name> other_columns(const Dataset& d, const Name& t, const Name& y) {
    std::vector<Name> out;
    for (const auto& v : d.names())
        if (v != t && v != y) out.push_back(v);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

json to_json(const RunConfig& c) {
    json j = {{"seed", c.seed},
              {"n", c.n},
              {"theta_r", c.thresholds.theta_r},
              {"theta_i", c.thresholds.theta_i},
              {"theta_d", c.thresholds.theta_d},
              {"max_cond_size", c.thresholds.max_cond_size},
              {"fixture", c.fixture},
              {"grid_points", c.grid_points},
              {"estimator", to_string(c.estimator)},
              {"adjustment", to_string(c.adjustment)},
              {"workers", c.workers},
              {"out", c.out},
              {"replicates", c.replicates},
              {"test_quantile", c.test_quantile},
              {"max_rounds", c.max_rounds},
              {"oracle", c.oracle},
              {"write_noise", c.write_noise},
              {"graphs", c.graphs},
              {"max_nodes", c.max_nodes},
              {"data", c.data},
              {"scm", c.scm},
              {"spec", c.spec},
              {"noise", c.noise},
              {"dump_max_cond", c.dump_max_cond}};
    j["adjust"] = c.adjust ? json(*c.adjust) : json(nullptr);
    j["treatment"] = c.treatment ? json(*c.treatment) : json(nullptr);
    j["outcome"] = c.outcome ? json(*c.outcome) : json(nullptr);
    return j;
}

RunConfig apply_config_json(RunConfig c, const json& j) {
    if (!j.is_object()) throw ContractError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "n") c.n = v.get<std::size_t>();
            else if (key == "theta_r") c.thresholds.theta_r = v.get<double>();
            else if (key == "theta_i") c.thresholds.theta_i = v.get<double>();
            else if (key == "theta_d") c.thresholds.theta_d = v.get<double>();
            else if (key == "max_cond_size") c.thresholds.max_cond_size = v.get<std::size_t>();
            else if (key == "fixture") c.fixture = v.get<std::string>();
            else if (key == "grid_points") c.grid_points = v.get<std::size_t>();
            else if (key == "estimator") c.estimator = estimator_from_string(v.get<std::string>());
            else if (key == "adjustment") c.adjustment = adjustment_from_string(v.get<std::string>());
            else if (key == "workers") c.workers = v.get<std::size_t>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "replicates") c.replicates = v.get<std::size_t>();
            else if (key == "test_quantile") c.test_quantile = v.get<double>();
            else if (key == "max_rounds") c.max_rounds = v.get<std::size_t>();
            else if (key == "oracle") c.oracle = v.get<bool>();
            else if (key == "write_noise") c.write_noise = v.get<bool>();
            else if (key == "graphs") c.graphs = v.get<std::size_t>();
            else if (key == "max_nodes") c.max_nodes = v.get<std::size_t>();
            else if (key == "data") c.data = v.get<std::string>();
            else if (key == "scm") c.scm = v.get<std::string>();
            else if (key == "spec") c.spec = v.get<std::string>();
            else if (key == "noise") c.noise = v.get<std::string>();
            else if (key == "dump_max_cond") c.dump_max_cond = v.get<std::size_t>();
            else if (key == "adjust") {
                if (v.is_null()) c.adjust.reset();
                else c.adjust = v.get<std::vector<std::string>>();
            } else if (key == "treatment") {
                if (v.is_null()) c.treatment.reset();
                else c.treatment = v.get<std::string>();
            } else if (key == "outcome") {
                if (v.is_null()) c.outcome.reset();
                else c.outcome = v.get<std::string>();
            } else
                throw ContractError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ContractError(std::string("config: ") + e.what());
    }
    return c;
}

namespace {

void validate(const RunConfig& c) {
    c.thresholds.validate();
    if (c.n < 1) throw ContractError("n must be positive");
    if (c.grid_points < 2) throw ContractError("grid_points must be >= 2");
    if (c.workers < 1) throw ContractError("workers must be >= 1");
    if (c.replicates < 1) throw ContractError("replicates must be >= 1");
    if (c.graphs < 1) throw ContractError("graphs must be >= 1");
    if (c.max_nodes < 3) throw ContractError("max_nodes must be >= 3");
    if (!(c.test_quantile > 0.0 && c.test_quantile < 1.0)) throw ContractError("test_quantile must lie in (0, 1)");
    if (c.out.empty()) throw ContractError("output directory must not be empty");
    require_file(c.fixture, "fixture");
    require_file(c.data, "dataset");
    require_file(c.scm, "discrete SCM");
    require_file(c.spec, "SCM spec");
    require_file(c.noise, "noise panel");
}

}  // namespace

Scenario load_scenario(const std::string& fixture_path) {
    Scenario sc{scm::template_from_json(read_json(fixture_path)), {}, {}};
    sc.oracle_key_confounders = graph::key_confounders_oracle(sc.tmpl.graph);
    for (const auto& [v, role] : sc.tmpl.roles)
        if (role.rfind("post-treatment", 0) == 0) sc.post_treatment.insert(v);
    return sc;
}

// ---------------------------------------------------------------------------
// Manifests

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return ss.str();
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_text(path)); }

void write_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files, json extra) {
    json listed = json::array();
    for (const auto& f : files) {
        const std::string text = read_text((fs::path(dir) / f).string());
        listed.push_back({{"path", f}, {"bytes", text.size()}, {"sha256", sha256_hex(text)}});
    }
    json m = {{"command", command}, {"seed", cfg.seed}, {"config", to_json(cfg)}, {"files", listed}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_text(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::string> check_manifest(const std::string& dir) {
    const json m = read_json((fs::path(dir) / "manifest.json").string());
    std::vector<std::string> bad;
    for (const auto& f : m.at("files")) {
        const auto name = f.at("path").get<std::string>();
        const fs::path p = fs::path(dir) / name;
        if (!fs::is_regular_file(p) || sha256_file(p.string()) != f.at("sha256").get<std::string>())
            bad.push_back(name);
    }
    return bad;
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
    validate(cfg);
    const Scenario sc = load_scenario(cfg.fixture);
    const auto spec = scm::instantiate(sc.tmpl, scm::draw_weights(sc.tmpl.graph, derive_seed(cfg.seed, "weights")));
    const auto s = scm::sample(spec, cfg.n, derive_seed(cfg.seed, "sample"));

    const fs::path dir = prepare_out_dir(cfg.out);
    const std::string spec_text = scm::to_json(spec).dump(2) + "\n";
    write_text(dir / "data.csv", csv_text(s.data));
    write_text(dir / "spec.json", spec_text);
    std::vector<std::string> files{"data.csv", "spec.json"};
    if (cfg.write_noise) {
        write_text(dir / "noise.csv", csv_text(s.noise));
        files.push_back("noise.csv");
    }
    write_manifest(cfg.out, "generate", cfg, files,
                   {{"spec_sha256", sha256_hex(spec_text)},
                    {"fixture_version", sc.tmpl.version},
                    {"columns", s.data.names()},
                    {"rows", s.data.rows()},
                    {"treatment", sc.tmpl.graph.treatment()},
                    {"outcome", sc.tmpl.graph.outcome()}});
    out << "wrote " << s.data.rows() << " rows x " << s.data.cols() << " columns to " << (dir / "data.csv").string()
        << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// discover

namespace {

struct DiscoveryRun {
    discovery::AncestorDict ad;
    discovery::KeyConfounders kc;
};

DiscoveryRun discover(const Dataset& d, const Name& t, const Name& y, const RunConfig& cfg, std::uint64_t seed,
                      const std::optional<graph::GraphSpec>& oracle) {
    DiscoveryRun r;
    if (oracle) {
        discovery::GraphOracleIdentifier pci(*oracle);
        r.ad = discovery::ans_identify(pci, d.names(), t, y, cfg.max_rounds);
    } else {
        discovery::StatisticalIdentifier pci(d, cfg.thresholds, seed);
        r.ad = discovery::ans_identify(pci, d.names(), t, y, cfg.max_rounds);
    }
    r.kc = discovery::extract_key_confounders(r.ad, t, y);
    if (r.ad.truncated)
        r.kc.warnings.push_back("round cap of " + std::to_string(cfg.max_rounds) + " reached; search truncated");
    return r;
}

void print_rounds(std::ostream& out, const discovery::AncestorDict& ad) {
    std::vector<std::array<std::string, 4>> rows{{"round", "frontier", "parents found", "excluded children"}};
    for (std::size_t i = 0; i < ad.rounds.size(); ++i) {
        const auto& r = ad.rounds[i];
        NameSet parents, children;
        for (const auto& [t, ps] : r.parents) parents.insert(ps.begin(), ps.end());
        for (const auto& [t, cs] : r.children) children.insert(cs.begin(), cs.end());
        rows.push_back({std::to_string(i + 1), join(r.frontier), parents.empty() ? "-" : join(parents),
                        children.empty() ? "-" : join(children)});
    }
    std::array<std::size_t, 4> width{};
    for (const auto& row : rows)
        for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < 4; ++c) {
            line += row[c];
            if (c + 1 < 4) line += std::string(width[c] - row[c].size() + 2, ' ');
        }
        out << line << "\n";
    }
}

}  // namespace

int cmd_discover(const RunConfig& cfg, std::ostream& out) {
    validate(cfg);
    if (cfg.data.empty()) throw ContractError("discover needs a dataset (--data)");
    const Dataset d = read_csv_file(cfg.data);
    require_discovery_rows(d.rows());
    const auto [t, y] = roles_for(cfg);
    require_columns(d, t, y);

    std::optional<graph::GraphSpec> oracle;
    if (cfg.oracle) oracle = graph::graph_from_json(read_json(cfg.fixture).at("graph"));
    const auto run = discover(d, t, y, cfg, derive_seed(cfg.seed, "discover"), oracle);

    json j = discovery::to_json(run.ad);
    j["treatment"] = t;
    j["outcome"] = y;
    j["key_confounders"] = run.kc.names;
    j["warnings"] = run.kc.warnings;
    j["mode"] = cfg.oracle ? "oracle" : "statistical";

    const fs::path dir = prepare_out_dir(cfg.out);
    write_text(dir / "ancestors.json", j.dump(2) + "\n");
    write_manifest(cfg.out, "discover", cfg, {"ancestors.json"},
                   {{"dataset_sha256", sha256_file(cfg.data)}, {"treatment", t}, {"outcome", y}});

    print_rounds(out, run.ad);
    for (const auto& w : run.kc.warnings) out << "warning: " << w << "\n";
    out << "key confounders: " << braces(run.kc.names) << "\n";
    return run.kc.warnings.empty() ? kExitOk : kExitWarnings;
}

// ---------------------------------------------------------------------------
// estimate

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
    validate(cfg);
    if (cfg.data.empty()) throw ContractError("estimate needs a dataset (--data)");
    if (cfg.spec.empty() != cfg.noise.empty()) throw ContractError("--spec and --noise must be given together");
    const Dataset d = read_csv_file(cfg.data);
    const auto [t, y] = roles_for(cfg);
    require_columns(d, t, y);

    std::vector<std::string> warnings;
    estimate::AdjustmentSet adj;
    if (cfg.adjust) {
        adj = {*cfg.adjust, estimate::Provenance::Oracle};
    } else {
        switch (cfg.adjustment) {
            case AdjustmentChoice::Full:
                adj = {other_columns(d, t, y), estimate::Provenance::FullCovariates};
                break;
            case AdjustmentChoice::Oracle: {
                const auto g = graph::graph_from_json(read_json(cfg.fixture).at("graph"));
                const auto kc = graph::key_confounders_oracle(g);
                adj = {{kc.begin(), kc.end()}, estimate::Provenance::Oracle};
                break;
            }
            case AdjustmentChoice::Discovered: {
                require_discovery_rows(d.rows());
                const auto run = discover(d, t, y, cfg, derive_seed(cfg.seed, "discover"), std::nullopt);
                warnings.insert(warnings.end(), run.kc.warnings.begin(), run.kc.warnings.end());
                adj = {{run.kc.names.begin(), run.kc.names.end()}, estimate::Provenance::Discovered};
                break;
            }
        }
    }
    const estimate::Design design{t, y};
    estimate::validate_adjustment(d, design, adj);
    const auto grid = scm::quantile_grid(d.column(t), cfg.grid_points);

    std::vector<std::pair<std::string, EffectCurve>> curves;
    if (cfg.estimator != EstimatorChoice::Ipw)
        curves.emplace_back("regadj", estimate::regression_adjust(d, design, adj, grid,
                                                                 {derive_seed(cfg.seed, "regadj"), false}));
    if (cfg.estimator != EstimatorChoice::RegAdj) {
        auto r = estimate::ipw_curve(d, design, adj, grid, {derive_seed(cfg.seed, "ipw"), false});
        warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
        curves.emplace_back("ipw", std::move(r.curve));
    }
    std::optional<EffectCurve> truth;
    if (!cfg.spec.empty()) {
        const auto spec = scm::scm_from_json(read_json(cfg.spec));
        truth = scm::true_mtef(spec, read_csv_file(cfg.noise), grid);
    }

    std::string csv = "curve,t,mean_outcome,mtef\n";
    auto emit = [&](const std::string& name, const EffectCurve& c) {
        for (std::size_t k = 0; k < c.t_grid().size(); ++k)
            csv += name + "," + num(c.t_grid()[k]) + "," + num(c.mean_outcome()[k]) + "," +
                   (k < c.mtef().size() ? num(c.mtef()[k]) : "") + "\n";
    };
    if (truth) emit("truth", *truth);
    for (const auto& [name, c] : curves) emit(name, c);

    json summary = {{"treatment", t}, {"outcome", y}, {"adjustment", adj.names},
                    {"provenance", estimate::to_string(adj.provenance)}, {"warnings", warnings}};
    out << "adjustment set: {" << join(adj.names, ", ") << "} (" << estimate::to_string(adj.provenance) << ")\n";
    for (const auto& [name, c] : curves) {
        out << name << " mtef:";
        for (double m : c.mtef()) out << " " << fixed(m);
        out << "\n";
        if (truth) {
            const double e = estimate::mtef_rmse(*truth, c);
            summary["eps_mtef"][name] = e;
            out << name << " eps_mtef: " << fixed(e) << "\n";
        }
    }
    for (const auto& w : warnings) out << "warning: " << w << "\n";

    const fs::path dir = prepare_out_dir(cfg.out);
    write_text(dir / "curves.csv", csv);
    write_text(dir / "estimate.json", summary.dump(2) + "\n");
    write_manifest(cfg.out, "estimate", cfg, {"curves.csv", "estimate.json"},
                   {{"dataset_sha256", sha256_file(cfg.data)}});
    return warnings.empty() ? kExitOk : kExitWarnings;
}

// ---------------------------------------------------------------------------
// benchmark

const Aggregate& BenchmarkReport::at(const std::string& e, const std::string& a, const std::string& s) const {
    for (const auto& g : aggregates)
        if (g.estimator == e && g.adjustment == a && g.split == s) return g;
    throw LookupError("benchmark report has no aggregate for " + e + "/" + a + "/" + s);
}

ReplicateResult run_replicate(const Scenario& sc, const RunConfig& cfg, std::size_t replicate) {
    ReplicateResult res;
    res.replicate = replicate;
    res.seed = derive_seed(cfg.seed, "replicate/" + std::to_string(replicate));
    try {
        const auto& g = sc.tmpl.graph;
        const Name t = g.treatment(), y = g.outcome();
        const auto spec = scm::instantiate(sc.tmpl, scm::draw_weights(g, derive_seed(res.seed, "weights")));
        const auto s = scm::sample(spec, cfg.n, derive_seed(res.seed, "sample"));

        NameSet gcif;
        switch (cfg.adjustment) {
            case AdjustmentChoice::Discovered: {
                const auto run = discover(s.data, t, y, cfg, derive_seed(res.seed, "discover"), std::nullopt);
                gcif = run.kc.names;
                res.warnings.insert(res.warnings.end(), run.kc.warnings.begin(), run.kc.warnings.end());
                break;
            }
            case AdjustmentChoice::Oracle: gcif = sc.oracle_key_confounders; break;
            case AdjustmentChoice::Full: {
                const auto cov = g.covariates();
                gcif.insert(cov.begin(), cov.end());
                break;
            }
        }
        res.key_confounders = gcif;
        res.hit = std::includes(gcif.begin(), gcif.end(), sc.oracle_key_confounders.begin(),
                                sc.oracle_key_confounders.end());
        res.contaminated = std::any_of(gcif.begin(), gcif.end(), [&](const Name& v) { return sc.post_treatment.count(v); });

        const auto split = estimate::quantile_split(s.data, t, cfg.test_quantile);
        const Dataset train = s.data.select_rows(split.train);
        const Dataset test = s.data.select_rows(split.test);
        const std::array<std::pair<std::string, const Dataset*>, 2> parts{{{"train", &train}, {"test", &test}}};
        std::map<std::string, std::vector<double>> grids;
        std::map<std::string, EffectCurve> truths;
        for (const auto& [name, part] : parts) {
            grids.emplace(name, scm::quantile_grid(part->column(t), cfg.grid_points));
            truths.emplace(name, scm::true_mtef(spec, s.noise, grids.at(name)));
        }

        const estimate::Design design{t, y};
        const estimate::AdjustmentSet full{g.covariates(), estimate::Provenance::FullCovariates};
        const estimate::AdjustmentSet found{{gcif.begin(), gcif.end()},
                                            cfg.adjustment == AdjustmentChoice::Oracle
                                                ? estimate::Provenance::Oracle
                                                : estimate::Provenance::Discovered};
        const std::array<std::pair<std::string, const estimate::AdjustmentSet*>, 2> adjs{
            {{"full", &full}, {"gcif", &found}}};

        if (cfg.estimator != EstimatorChoice::Ipw) {
            for (const auto& [aname, adj] : adjs) {
                const estimate::OutcomeModel model(train, design, *adj, derive_seed(res.seed, "regadj/" + aname));
                for (const auto& [sname, part] : parts)
                    res.errors.push_back({"regadj", aname, sname,
                                          estimate::mtef_rmse(truths.at(sname), model.curve(s.data, grids.at(sname)))});
            }
        }
        if (cfg.estimator != EstimatorChoice::RegAdj) {
            for (const auto& [aname, adj] : adjs) {
                for (const auto& [sname, part] : parts) {
                    const auto r = estimate::ipw_curve(train, design, *adj, grids.at(sname),
                                                       {derive_seed(res.seed, "ipw/" + aname), true});
                    for (const auto& w : r.warnings) res.warnings.push_back(aname + "/" + sname + ": " + w);
                    res.errors.push_back({"ipw", aname, sname, estimate::mtef_rmse(truths.at(sname), r.curve)});
                }
            }
        }
    } catch (const std::exception& e) {
        res.failed = true;
        res.failure = e.what();
        res.errors.clear();
    }
    return res;
}

std::vector<Aggregate> aggregate(const std::vector<ReplicateResult>& reps) {
    std::vector<Aggregate> out;
    for (const std::string e : {"regadj", "ipw"})
        for (const std::string a : {"full", "gcif"})
            for (const std::string s : {"train", "test"}) {
                std::vector<double> xs;
                for (const auto& r : reps) {
                    if (r.failed) continue;
                    for (const auto& ce : r.errors)
                        if (ce.estimator == e && ce.adjustment == a && ce.split == s) xs.push_back(ce.eps_mtef);
                }
                if (xs.empty()) continue;
                Aggregate g{e, a, s, xs.size(), 0.0, 0.0};
                for (double x : xs) g.mean += x;
                g.mean /= static_cast<double>(xs.size());
                if (xs.size() > 1) {
                    double ss = 0.0;
                    for (double x : xs) ss += (x - g.mean) * (x - g.mean);
                    g.standard_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
                }
                out.push_back(g);
            }
    return out;
}

BenchmarkReport run_benchmark(const RunConfig& cfg, std::ostream& log) {
    validate(cfg);
    require_discovery_rows(cfg.n);
    const Scenario sc = load_scenario(cfg.fixture);

    BenchmarkReport rep;
    rep.replicates.resize(cfg.replicates);
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.replicates; i = next++) {
            rep.replicates[i] = run_replicate(sc, cfg, i);
            std::lock_guard lock(log_mu);
            const auto& r = rep.replicates[i];
            log << "replicate " << i << (r.failed ? " failed: " + r.failure : " key confounders " + braces(r.key_confounders))
                << "\n";
        }
    };
    const std::size_t n_threads = std::min(cfg.workers, cfg.replicates);
    std::vector<std::jthread> threads;
    for (std::size_t k = 1; k < n_threads; ++k) threads.emplace_back(worker);
    worker();
    threads.clear();

    for (const auto& r : rep.replicates) {
        if (r.failed) {
            ++rep.failures;
            continue;
        }
        rep.hits += r.hit;
        rep.contaminated += r.contaminated;
    }
    rep.aggregates = aggregate(rep.replicates);
    return rep;
}

namespace {

std::string results_csv(const BenchmarkReport& rep) {
    std::string csv = "replicate,seed,estimator,adjustment,split,eps_mtef\n";
    for (const auto& r : rep.replicates)
        for (const auto& e : r.errors)
            csv += std::to_string(r.replicate) + "," + std::to_string(r.seed) + "," + e.estimator + "," + e.adjustment +
                   "," + e.split + "," + num(e.eps_mtef) + "\n";
    return csv;
}

// Rebuild per-seed rows from the CSV text and recompute the aggregates.
std::vector<Aggregate> aggregates_from_csv(const std::string& csv, std::size_t replicates) {
    std::vector<ReplicateResult> reps(replicates);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw Error("benchmark: malformed results row '" + line + "'");
        double v = 0.0;
        std::from_chars(f[5].data(), f[5].data() + f[5].size(), v);
        reps.at(std::stoul(f[0])).errors.push_back({f[2], f[3], f[4], v});
    }
    return aggregate(reps);
}

std::string mean_se(const BenchmarkReport& rep, const std::string& e, const std::string& a, const std::string& s) {
    for (const auto& g : rep.aggregates)
        if (g.estimator == e && g.adjustment == a && g.split == s)
            return fixed(g.mean) + " ± " + fixed(g.standard_error);
    return "n/a";
}

std::string markdown_report(const BenchmarkReport& rep, const RunConfig& cfg, const Scenario& sc) {
    std::ostringstream md;
    const std::size_t ok = rep.replicates.size() - rep.failures;
    md << "# Benchmark report\n\n";
    md << "Fixture " << sc.tmpl.version << ", n = " << cfg.n << ", root seed " << cfg.seed << ", "
       << rep.replicates.size() << " replicates (" << rep.failures << " failed).\n";
    md << "Test split: rows with treatment above its " << fixed(cfg.test_quantile * 100, 0)
       << "th percentile. MTEF grid: " << cfg.grid_points << " quantile points per split.\n";
    md << "GCIF columns adjust for the " << to_string(cfg.adjustment)
       << " key confounders; the other columns adjust for all " << sc.tmpl.graph.covariates().size()
       << " covariates.\n";
    md << "Hyperparameters are fixed defaults (no grid search): kernel ridge with RBF median-heuristic bandwidth and "
          "ridge 1e-3 per row; IPW weights clipped to [0.02, 50]; thresholds theta_R = "
       << num(cfg.thresholds.theta_r) << ", theta_I = " << num(cfg.thresholds.theta_i)
       << ", theta_D = " << num(cfg.thresholds.theta_d) << ".\n\n";

    md << "## MTEF error (mean ± standard error)\n\n";
    md << "| Method | Training | With GCIF | Test | With GCIF |\n|---|---|---|---|---|\n";
    for (const std::string e : {"regadj", "ipw"}) {
        if ((e == "regadj" && cfg.estimator == EstimatorChoice::Ipw) ||
            (e == "ipw" && cfg.estimator == EstimatorChoice::RegAdj))
            continue;
        md << "| " << (e == "regadj" ? "Regression adjustment" : "IPW") << " | " << mean_se(rep, e, "full", "train")
           << " | " << mean_se(rep, e, "gcif", "train") << " | " << mean_se(rep, e, "full", "test") << " | "
           << mean_se(rep, e, "gcif", "test") << " |\n";
    }

    md << "\n## Discovery\n\n";
    md << "Oracle key confounders " << braces(sc.oracle_key_confounders) << " recovered in " << rep.hits << " / " << ok
       << " replicates. Post-treatment contamination in " << rep.contaminated << " / " << ok << ".\n\n";
    md << "| Replicate | Seed | Key confounders | Hit | Contaminated | Warnings |\n|---|---|---|---|---|---|\n";
    for (const auto& r : rep.replicates) {
        if (r.failed) continue;
        md << "| " << r.replicate << " | " << r.seed << " | " << braces(r.key_confounders) << " | "
           << (r.hit ? "yes" : "no") << " | " << (r.contaminated ? "yes" : "no") << " | " << r.warnings.size()
           << " |\n";
    }
    if (rep.failures) {
        md << "\n## Failures\n\n";
        for (const auto& r : rep.replicates)
            if (r.failed) md << "- replicate " << r.replicate << " (seed " << r.seed << "): " << r.failure << "\n";
    }
    return md.str();
}

}  // namespace

int cmd_benchmark(const RunConfig& cfg, std::ostream& out) {
    const BenchmarkReport rep = run_benchmark(cfg, std::cerr);
    const Scenario sc = load_scenario(cfg.fixture);

    const std::string csv = results_csv(rep);
    const auto recomputed = aggregates_from_csv(csv, rep.replicates.size());
    bool same = recomputed.size() == rep.aggregates.size();
    for (std::size_t i = 0; same && i < recomputed.size(); ++i)
        same = recomputed[i].count == rep.aggregates[i].count && recomputed[i].mean == rep.aggregates[i].mean &&
               recomputed[i].standard_error == rep.aggregates[i].standard_error;
    if (!same) throw Error("benchmark: aggregates do not match the per-seed rows");

    std::string disc = "replicate,seed,status,key_confounders,hit,contaminated,warnings\n";
    for (const auto& r : rep.replicates)
        disc += std::to_string(r.replicate) + "," + std::to_string(r.seed) + "," + (r.failed ? "failed" : "ok") + "," +
                join(r.key_confounders) + "," + (r.hit ? "1" : "0") + "," + (r.contaminated ? "1" : "0") + "," +
                std::to_string(r.warnings.size()) + "\n";

    json summary = json::array();
    for (const auto& g : rep.aggregates)
        summary.push_back({{"estimator", g.estimator},
                           {"adjustment", g.adjustment},
                           {"split", g.split},
                           {"count", g.count},
                           {"mean", g.mean},
                           {"standard_error", g.standard_error}});
    json failures = json::array();
    for (const auto& r : rep.replicates)
        if (r.failed) failures.push_back({{"replicate", r.replicate}, {"seed", r.seed}, {"error", r.failure}});
    const json sj = {{"aggregates", summary},
                     {"replicates", rep.replicates.size()},
                     {"failures", failures},
                     {"hits", rep.hits},
                     {"contaminated", rep.contaminated},
                     {"oracle_key_confounders", sc.oracle_key_confounders}};

    const std::string md = markdown_report(rep, cfg, sc);
    const fs::path dir = prepare_out_dir(cfg.out);
    write_text(dir / "results.csv", csv);
    write_text(dir / "discovery.csv", disc);
    write_text(dir / "summary.json", sj.dump(2) + "\n");
    write_text(dir / "report.md", md);
    write_manifest(cfg.out, "benchmark", cfg, {"results.csv", "discovery.csv", "summary.json", "report.md"});
    out << md;
    return rep.failures ? kExitWarnings : kExitOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
    validate(cfg);
    constexpr double kTolerance = 1e-8;
    struct Item {
        std::string label;
        std::optional<scm::DiscreteScm> scm;
        std::string error;
    };
    std::vector<Item> items;
    if (!cfg.scm.empty()) {
        items.push_back({cfg.scm, scm::discrete_from_json(read_json(cfg.scm)), {}});
    } else {
        for (std::size_t i = 0; i < cfg.graphs; ++i) {
            Item it{std::to_string(i), std::nullopt, {}};
            try {
                it.scm = scm::random_discrete_scm(derive_seed(cfg.seed, "verify/" + std::to_string(i)), cfg.max_nodes);
            } catch (const Error& e) {
                it.error = e.what();
            }
            items.push_back(std::move(it));
        }
    }

    std::string csv = "graph,nodes,edges,treatment,outcome,key_confounders,discrepancy,parents_discrepancy,"
                      "skipped_cells,status\n";
    double worst = 0.0, worst_parents = 0.0;
    std::size_t over = 0, skipped = 0, checked = 0;
    for (auto& it : items) {
        if (it.scm) {
            try {
                const auto rep = scm::verify_adjustment_equivalence(*it.scm);
                const auto& g = it.scm->graph();
                ++checked;
                worst = std::max(worst, rep.max_discrepancy);
                worst_parents = std::max(worst_parents, rep.parents_discrepancy);
                const bool bad = !(rep.max_discrepancy < kTolerance);
                over += bad;
                csv += it.label + "," + std::to_string(g.nodes().size()) + "," + std::to_string(g.edges().size()) +
                       "," + g.treatment() + "," + g.outcome() + "," + join(rep.key_confounders) + "," +
                       num(rep.max_discrepancy) + "," + num(rep.parents_discrepancy) + "," +
                       std::to_string(rep.skipped_cells) + "," + (bad ? "mismatch" : "ok") + "\n";
                out << "graph " << it.label << ": " << g.nodes().size() << " nodes, t=" << g.treatment()
                    << " y=" << g.outcome() << ", key confounders " << braces(rep.key_confounders)
                    << ", discrepancy " << sci(rep.max_discrepancy) << " (parents of t: "
                    << sci(rep.parents_discrepancy) << ")" << (bad ? "  MISMATCH" : "") << "\n";
                continue;
            } catch (const CapacityError& e) {
                it.error = e.what();
            }
        }
        ++skipped;
        csv += it.label + ",,,,,,,,,skipped\n";
        out << "graph " << it.label << ": skipped (" << it.error << ")\n";
    }

    std::ostringstream md;
    md << "# Adjustment equivalence audit\n\n";
    md << "Graphs checked: " << checked << " (" << skipped << " skipped). Tolerance " << sci(kTolerance) << ".\n\n";
    md << "| Adjustment set | Max discrepancy | Graphs over tolerance |\n|---|---|---|\n";
    md << "| Key confounders | " << sci(worst) << " | " << over << " |\n";
    md << "| Parents of treatment | " << sci(worst_parents) << " | - |\n";

    const fs::path dir = prepare_out_dir(cfg.out);
    write_text(dir / "verify.csv", csv);
    write_text(dir / "verify.md", md.str());
    write_manifest(cfg.out, "verify", cfg, {"verify.csv", "verify.md"},
                   {{"max_discrepancy", worst}, {"graphs_over_tolerance", over}, {"skipped", skipped}});

    out << "max discrepancy: " << sci(worst) << " (parents of treatment: " << sci(worst_parents) << ")\n";
    out << "graphs over tolerance: " << over << " / " << checked << "\n";
    return over || skipped ? kExitWarnings : kExitOk;
}

// ---------------------------------------------------------------------------
// test-dump

int cmd_test_dump(const RunConfig& cfg, std::ostream& out) {
    validate(cfg);
    if (cfg.data.empty()) throw ContractError("test-dump needs a dataset (--data)");
    const Dataset d = read_csv_file(cfg.data);
    stats::CiTester tester(d, derive_seed(cfg.seed, "test-dump"));
    const auto& names = d.names();
    out << "a,b,cond,method,statistic,p_value\n";
    auto row = [&](const Name& a, const Name& b, const std::vector<Name>& cond, const stats::TestResult& r) {
        out << a << "," << b << "," << join(cond) << "," << stats::to_string(r.method) << "," << num(r.statistic) << ","
            << num(r.p_value) << "\n";
    };
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            const auto& a = names[i];
            const auto& b = names[j];
            stats::HsicOptions ho;
            ho.seed = derive_seed(cfg.seed, "test-dump/hsic/" + a + "/" + b);
            row(a, b, {}, stats::hsic_test(d.column(a), d.column(b), ho));
            row(a, b, {}, tester.gcm(a, b, {}));
            if (cfg.dump_max_cond >= 1)
                for (const auto& c : names)
                    if (c != a && c != b) row(a, b, {c}, tester.gcm(a, b, {c}));
        }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

namespace {

struct Flags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n, workers, replicates, grid_points, max_rounds, graphs, max_nodes, max_cond,
        dump_max_cond;
    std::optional<double> theta_r, theta_i, theta_d, test_quantile;
    std::optional<std::string> fixture, estimator, adjustment, out, data, scm, spec, noise, adjust, treatment, outcome;
    bool oracle = false;
    bool no_noise = false;
};

void add_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", f.seed, "root seed");
    app->add_option("--n", f.n, "sample size");
    app->add_option("--theta-r", f.theta_r, "correlation screen threshold");
    app->add_option("--theta-i", f.theta_i, "independence test level");
    app->add_option("--theta-d", f.theta_d, "direction test level");
    app->add_option("--max-cond", f.max_cond, "largest conditioning set");
    app->add_option("--fixture", f.fixture, "benchmark template JSON");
    app->add_option("--grid-points", f.grid_points, "MTEF grid size");
    app->add_option("--estimator", f.estimator, "regadj, ipw or both")->check(CLI::IsMember({"regadj", "ipw", "both"}));
    app->add_option("--adjustment", f.adjustment, "discovered, oracle or full")
        ->check(CLI::IsMember({"discovered", "oracle", "full"}));
    app->add_option("--workers", f.workers, "parallel benchmark replicates");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--replicates", f.replicates, "benchmark seeds");
    app->add_option("--test-quantile", f.test_quantile, "treatment quantile above which rows are test rows");
    app->add_option("--rounds", f.max_rounds, "discovery round cap");
    app->add_option("--graphs", f.graphs, "random discrete SCMs to audit");
    app->add_option("--max-nodes", f.max_nodes, "largest audited graph");
    app->add_option("--data", f.data, "input dataset CSV");
    app->add_option("--scm", f.scm, "audit this discrete SCM JSON only");
    app->add_option("--spec", f.spec, "continuous SCM JSON for the true curve");
    app->add_option("--noise", f.noise, "noise panel CSV matching --data");
    app->add_option("--adjust", f.adjust, "comma-separated adjustment set");
    app->add_option("--treatment", f.treatment, "treatment column");
    app->add_option("--outcome", f.outcome, "outcome column");
    app->add_option("--dump-max-cond", f.dump_max_cond, "largest conditioning set in test-dump (0 or 1)");
    app->add_flag("--oracle", f.oracle, "read parents from the fixture graph instead of testing");
    app->add_flag("--no-noise", f.no_noise, "do not write the noise panel");
}

std::uint64_t parse_seed(const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ContractError("GCI_SEED '" + s + "' is not a seed");
    return v;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (f.config) c = apply_config_json(c, read_json(*f.config));
    if (const char* env = std::getenv("GCI_SEED"); env && *env) c.seed = parse_seed(env);
    if (f.seed) c.seed = *f.seed;
    if (f.n) c.n = *f.n;
    if (f.theta_r) c.thresholds.theta_r = *f.theta_r;
    if (f.theta_i) c.thresholds.theta_i = *f.theta_i;
    if (f.theta_d) c.thresholds.theta_d = *f.theta_d;
    if (f.max_cond) c.thresholds.max_cond_size = *f.max_cond;
    if (f.fixture) c.fixture = *f.fixture;
    if (f.grid_points) c.grid_points = *f.grid_points;
    if (f.estimator) c.estimator = estimator_from_string(*f.estimator);
    if (f.adjustment) c.adjustment = adjustment_from_string(*f.adjustment);
    if (f.workers) c.workers = *f.workers;
    if (f.out) c.out = *f.out;
    if (f.replicates) c.replicates = *f.replicates;
    if (f.test_quantile) c.test_quantile = *f.test_quantile;
    if (f.max_rounds) c.max_rounds = *f.max_rounds;
    if (f.graphs) c.graphs = *f.graphs;
    if (f.max_nodes) c.max_nodes = *f.max_nodes;
    if (f.data) c.data = *f.data;
    if (f.scm) c.scm = *f.scm;
    if (f.spec) c.spec = *f.spec;
    if (f.noise) c.noise = *f.noise;
    if (f.adjust) c.adjust = split_list(*f.adjust);
    if (f.treatment) c.treatment = *f.treatment;
    if (f.outcome) c.outcome = *f.outcome;
    if (f.dump_max_cond) c.dump_max_cond = *f.dump_max_cond;
    if (f.oracle) c.oracle = true;
    if (f.no_noise) c.write_noise = false;
    return c;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ancestor-set discovery and de-confounded treatment-effect estimation"};
    app.require_subcommand(1);
    Flags flags;
    using Command = int (*)(const RunConfig&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"generate", "sample the benchmark SCM to CSV", cmd_generate},
        {"discover", "identify the outcome's ancestors and key confounders", cmd_discover},
        {"estimate", "estimate treatment-effect curves on a dataset", cmd_estimate},
        {"benchmark", "run the seeded benchmark and write the report", cmd_benchmark},
        {"verify", "audit backdoor adjustment on random discrete SCMs", cmd_verify},
        {"test-dump", "dump independence test results as CSV", cmd_test_dump}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help, fn] : commands) subs.push_back(app.add_subcommand(name, help));
    for (auto* s : subs) add_flags(s, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitContract;
    }

    try {
        const RunConfig cfg = resolve(flags);
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) return std::get<2>(commands[i])(cfg, out);
        return kExitContract;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitContract;
    }
}

}  // namespace gci::cli
