#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/dataset.hpp"
#include "gci/effect_curve.hpp"
#include "gci/stats.hpp"

namespace gci::estimate {

using Name = std::string;

enum class Provenance { Oracle, Discovered, FullCovariates };
std::string to_string(Provenance p);

struct AdjustmentSet {
    std::vector<Name> names;
    Provenance provenance = Provenance::Discovered;
};

/// Column roles of an estimation problem.
struct Design {
    Name treatment;
    Name outcome;
};

/// Throws unless every name is a column of d and none is treatment or outcome.
void validate_adjustment(const Dataset& d, const Design& design, const AdjustmentSet& adj);

struct EstimatorOptions {
    std::uint64_t seed = 0;
    bool allow_extrapolation = false;  // skip the grid-within-observed-range check
};

/// Throws PositivityError naming the first grid point outside [min t, max t].
void require_grid_in_range(const Dataset& d, const Name& treatment, const std::vector<double>& t_grid);

/// Outcome model E[y | t, adj] fitted by kernel ridge; curves average its
/// predictions over a population with t clamped to each grid point.
class OutcomeModel {
public:
    OutcomeModel(const Dataset& train, const Design& design, const AdjustmentSet& adj, std::uint64_t seed = 0);

    /// Mean prediction over the rows of `population` with t set to do_t.
    double mean_outcome(const Dataset& population, double do_t) const;
    EffectCurve curve(const Dataset& population, const std::vector<double>& t_grid) const;

private:
    Eigen::MatrixXd features(const Dataset& population, double do_t) const;

    Design design_;
    AdjustmentSet adj_;
    stats::KernelRidge ridge_;
    stats::KernelRidge::Model model_;
};

EffectCurve regression_adjust(const Dataset& d, const Design& design, const AdjustmentSet& adj,
                              const std::vector<double>& t_grid, const EstimatorOptions& opts = {});

inline constexpr double kMinWeight = 0.02;
inline constexpr double kMaxWeight = 50.0;
inline constexpr double kMinEffectiveSampleSize = 30.0;

struct IpwWeights {
    Eigen::VectorXd weights;
    double effective_sample_size = 0.0;
    std::size_t clipped = 0;
};

/// Stabilized weights p(t) / p(t | adj) under Gaussian densities (marginal
/// moments for the numerator, kernel-ridge mean with homoscedastic residual
/// variance for the denominator), clipped to [kMinWeight, kMaxWeight].
IpwWeights ipw_weights(const Dataset& d, const Name& treatment, const AdjustmentSet& adj, std::uint64_t seed = 0);

struct IpwResult {
    EffectCurve curve;
    IpwWeights weights;
    std::vector<std::string> warnings;
};

IpwResult ipw_curve(const Dataset& d, const Design& design, const AdjustmentSet& adj, const std::vector<double>& t_grid,
                    const EstimatorOptions& opts = {});

/// Share of rows that must lie within one bandwidth of a grid point.
inline constexpr double kNeighbourShare = 0.05;

/// Weighted local-linear regression of y on t evaluated at each grid point.
/// Gaussian kernel; the bandwidth is Silverman's rule, widened at a grid point
/// to the distance of its ceil(kNeighbourShare * n)-th nearest observation.
std::vector<double> local_linear(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                 const std::vector<double>& t_grid);

/// Root mean squared difference of the two MTEF curves. Grids must match.
double mtef_rmse(const EffectCurve& truth, const EffectCurve& est);

/// Backdoor ATE for a binary treatment column.
double ate_binary(const Dataset& d, const Design& design, const AdjustmentSet& adj, std::uint64_t seed = 0);

/// Rows with t above its `quantile` form the test split, the rest training.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    double threshold = 0.0;
};
Split quantile_split(const Dataset& d, const Name& treatment, double quantile = 0.8);

}  // namespace gci::estimate
