#include "gci/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "gci/error.hpp"

namespace gci::estimate {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Oracle: return "oracle";
        case Provenance::Discovered: return "discovered";
        case Provenance::FullCovariates: return "full";
    }
    return "?";
}

void validate_adjustment(const Dataset& d, const Design& design, const AdjustmentSet& adj) {
    if (!d.has(design.treatment)) throw LookupError("estimate: treatment column '" + design.treatment + "' missing");
    if (!d.has(design.outcome)) throw LookupError("estimate: outcome column '" + design.outcome + "' missing");
    std::set<Name> seen;
    for (const auto& v : adj.names) {
        if (!d.has(v)) throw LookupError("estimate: adjustment column '" + v + "' missing");
        if (v == design.treatment || v == design.outcome)
            throw ContractError("estimate: adjustment set must exclude treatment and outcome");
        if (!seen.insert(v).second) throw ContractError("estimate: duplicate adjustment variable '" + v + "'");
    }
}

void require_grid_in_range(const Dataset& d, const Name& treatment, const std::vector<double>& t_grid) {
    const auto t = d.column(treatment);
    const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
    for (double g : t_grid)
        if (g < *lo || g > *hi)
            throw PositivityError("estimate: grid point " + std::to_string(g) + " lies outside the observed treatment range [" +
                                  std::to_string(*lo) + ", " + std::to_string(*hi) + "]");
}

namespace {

std::vector<Name> with_treatment(const Design& design, const AdjustmentSet& adj) {
    std::vector<Name> cols{design.treatment};
    cols.insert(cols.end(), adj.names.begin(), adj.names.end());
    return cols;
}

}  // namespace

OutcomeModel::OutcomeModel(const Dataset& train, const Design& design, const AdjustmentSet& adj, std::uint64_t seed)
    : design_(design), adj_((validate_adjustment(train, design, adj), adj)),
      ridge_(train.columns(with_treatment(design, adj)), stats::RegressionOptions{1000, 1e-3, seed}),
      model_(ridge_.train(train.column_vector(design.outcome))) {}

Eigen::MatrixXd OutcomeModel::features(const Dataset& population, double do_t) const {
    Eigen::MatrixXd x = population.columns(with_treatment(design_, adj_));
    x.col(0).setConstant(do_t);
    return x;
}

double OutcomeModel::mean_outcome(const Dataset& population, double do_t) const {
    return ridge_.predict(model_, features(population, do_t)).mean();
}

EffectCurve OutcomeModel::curve(const Dataset& population, const std::vector<double>& t_grid) const {
    require_ascending_grid(t_grid);
    std::vector<double> mu;
    for (double g : t_grid) mu.push_back(mean_outcome(population, g));
    return EffectCurve(t_grid, std::move(mu));
}

EffectCurve regression_adjust(const Dataset& d, const Design& design, const AdjustmentSet& adj,
                              const std::vector<double>& t_grid, const EstimatorOptions& opts) {
    require_ascending_grid(t_grid);
    validate_adjustment(d, design, adj);
    if (!opts.allow_extrapolation) require_grid_in_range(d, design.treatment, t_grid);
    return OutcomeModel(d, design, adj, opts.seed).curve(d, t_grid);
}

namespace {

double normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

IpwWeights ipw_weights(const Dataset& d, const Name& treatment, const AdjustmentSet& adj, std::uint64_t seed) {
    const Eigen::VectorXd t = d.column_vector(treatment);
    const double mean = t.mean();
    const double sd = std::sqrt((t.array() - mean).square().mean());
    if (!(sd > 0.0)) throw DensityError("ipw: treatment has zero variance");

    const stats::KernelRidge ridge(d.columns(adj.names), stats::RegressionOptions{1000, 1e-3, seed});
    const auto fit = ridge.fit(t);
    const double cond_sd = std::sqrt(fit.residuals.array().square().mean());
    if (!(cond_sd > 0.0)) throw DensityError("ipw: conditional treatment variance is not positive");

    IpwWeights out;
    out.weights.resize(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double num = normal_pdf(t(i), mean, sd);
        const double den = normal_pdf(t(i), fit.fitted(i), cond_sd);
        double w = den > 0.0 ? num / den : kMaxWeight;
        if (w < kMinWeight || w > kMaxWeight) {
            ++out.clipped;
            w = std::clamp(w, kMinWeight, kMaxWeight);
        }
        out.weights(i) = w;
    }
    out.effective_sample_size = out.weights.sum() * out.weights.sum() / out.weights.squaredNorm();
    return out;
}

std::vector<double> local_linear(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                 const std::vector<double>& t_grid) {
    if (t.size() != y.size() || t.size() != w.size()) throw ContractError("local linear: length mismatch");
    if (t.size() < 3) throw InsufficientDataError("local linear: need at least 3 rows");
    const double n = static_cast<double>(t.size());
    const double sd = std::sqrt((t.array() - t.mean()).square().mean());
    if (!(sd > 0.0)) throw DegenerateError("local linear: treatment has zero variance");
    const double h_rule = 1.06 * sd * std::pow(n, -0.2);
    const auto k = static_cast<std::size_t>(std::ceil(kNeighbourShare * n));
    std::vector<double> dist(static_cast<std::size_t>(t.size()));
    std::vector<double> out;
    for (double g : t_grid) {
        for (Eigen::Index i = 0; i < t.size(); ++i) dist[static_cast<std::size_t>(i)] = std::abs(t(i) - g);
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        const double h = std::max(h_rule, dist[k - 1]);
        double s0 = 0, s1 = 0, s2 = 0, r0 = 0, r1 = 0;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double u = (t(i) - g) / h;
            const double k = w(i) * std::exp(-0.5 * u * u);
            const double dx = t(i) - g;
            s0 += k;
            s1 += k * dx;
            s2 += k * dx * dx;
            r0 += k * y(i);
            r1 += k * dx * y(i);
        }
        const double det = s0 * s2 - s1 * s1;
        if (!(s0 > 0.0) || !(std::abs(det) > 1e-300))
            throw DegenerateError("local linear: no kernel mass near grid point " + std::to_string(g));
        out.push_back((s2 * r0 - s1 * r1) / det);
    }
    return out;
}

IpwResult ipw_curve(const Dataset& d, const Design& design, const AdjustmentSet& adj, const std::vector<double>& t_grid,
                    const EstimatorOptions& opts) {
    require_ascending_grid(t_grid);
    validate_adjustment(d, design, adj);
    if (!opts.allow_extrapolation) require_grid_in_range(d, design.treatment, t_grid);
    IpwWeights w = ipw_weights(d, design.treatment, adj, opts.seed);
    auto mu = local_linear(d.column_vector(design.treatment), d.column_vector(design.outcome), w.weights, t_grid);
    std::vector<std::string> warnings;
    if (w.effective_sample_size < kMinEffectiveSampleSize)
        warnings.push_back("ipw: effective sample size " + std::to_string(w.effective_sample_size) + " below " +
                           std::to_string(kMinEffectiveSampleSize));
    return {EffectCurve(t_grid, std::move(mu)), std::move(w), std::move(warnings)};
}

double mtef_rmse(const EffectCurve& truth, const EffectCurve& est) {
    if (truth.t_grid() != est.t_grid()) throw ContractError("mtef_rmse: curves are on different grids");
    double acc = 0.0;
    for (std::size_t k = 0; k < truth.mtef().size(); ++k) {
        const double e = truth.mtef()[k] - est.mtef()[k];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(truth.mtef().size()));
}

double ate_binary(const Dataset& d, const Design& design, const AdjustmentSet& adj, std::uint64_t seed) {
    validate_adjustment(d, design, adj);
    const auto t = d.column(design.treatment);
    bool any0 = false, any1 = false;
    for (double v : t) {
        if (v == 0.0)
            any0 = true;
        else if (v == 1.0)
            any1 = true;
        else
            throw ContractError("ate_binary: treatment column must be 0/1");
    }
    if (!any0 || !any1) throw PositivityError("ate_binary: every row has the same treatment");
    const OutcomeModel model(d, design, adj, seed);
    return model.mean_outcome(d, 1.0) - model.mean_outcome(d, 0.0);
}

Split quantile_split(const Dataset& d, const Name& treatment, double quantile) {
    if (!(quantile > 0.0 && quantile < 1.0)) throw ContractError("split: quantile must lie in (0, 1)");
    const auto t = d.column(treatment);
    std::vector<double> sorted(t.begin(), t.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = quantile * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    Split s;
    s.threshold = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    for (std::size_t i = 0; i < t.size(); ++i) (t[i] > s.threshold ? s.test : s.train).push_back(i);
    return s;
}

}  // namespace gci::estimate
