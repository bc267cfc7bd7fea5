#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/dataset.hpp"

namespace gci::stats {

using Name = std::string;

/// Absolute Pearson correlations.
struct CorMatrix {
    std::vector<Name> names;
    Eigen::MatrixXd values;

    double at(const Name& a, const Name& b) const;
};

/// Throws DegenerateError naming any zero-variance column.
CorMatrix cor_matrix(const Dataset& d);

// ---------------------------------------------------------------------------
// Kernel ridge regression

struct RegressionOptions {
    std::size_t max_rows = 1000;  // Gram size cap; larger inputs are subsampled
    double ridge_per_row = 1e-3;  // penalty = ridge_per_row * rows used
    std::uint64_t seed = 0;       // subsampling stream
};

inline constexpr std::size_t kMinRegressionRows = 20;

struct RegressionFit {
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double bandwidth = 0.0;
    double ridge = 0.0;
    double residual_mean = 0.0;
};

/// RBF kernel ridge regression on z-scored features. The bandwidth is the
/// median pairwise distance of the training rows. The factorization depends
/// only on the features, so one instance serves any number of targets.
class KernelRidge {
public:
    KernelRidge(const Eigen::MatrixXd& features, const RegressionOptions& opts = {});

    /// Fitted values and residuals for every input row.
    RegressionFit fit(const Eigen::VectorXd& target) const;

    /// Dual solution for a target, usable for out-of-sample prediction.
    struct Model {
        Eigen::VectorXd alpha;
        double offset = 0.0;
    };
    Model train(const Eigen::VectorXd& target) const;
    Eigen::VectorXd predict(const Model& model, const Eigen::MatrixXd& features) const;

    double bandwidth() const noexcept { return bandwidth_; }
    double ridge() const noexcept { return ridge_; }
    std::size_t rows() const noexcept { return rows_; }

private:
    Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& zx) const;

    std::size_t rows_ = 0;
    std::vector<std::size_t> train_rows_;
    Eigen::RowVectorXd mean_;
    Eigen::RowVectorXd scale_;
    Eigen::MatrixXd train_z_;  // standardized training features
    Eigen::MatrixXd gram_;     // kernel on training rows, without ridge
    Eigen::MatrixXd all_z_;    // standardized inputs when subsampled
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double bandwidth_ = 1.0;
    double ridge_ = 0.0;
    bool full_ = true;  // every input row is a training row
};

RegressionFit regress(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                      const RegressionOptions& opts = {});

/// Median of pairwise Euclidean distances between rows (0 for < 2 rows).
double median_pairwise_distance(const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// Tests

enum class Method { Gcm, Hsic, AnmForward, AnmBackward };
std::string to_string(Method m);

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    Method method = Method::Gcm;
};

/// GCM statistic from two residual vectors: sqrt(N) mean(R) / sd(R), R = r_a * r_b,
/// with a two-sided standard normal p-value.
TestResult gcm_from_residuals(const Eigen::VectorXd& ra, const Eigen::VectorXd& rb);

struct HsicOptions {
    std::size_t max_rows = 500;
    bool permutation = false;  // permutation null instead of the gamma approximation
    std::size_t permutations = 500;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinHsicRows = 20;

/// Biased HSIC with RBF kernels (median heuristic); gamma-approximated null.
TestResult hsic_test(std::span<const double> u, std::span<const double> v, const HsicOptions& opts = {});

struct AnmResult {
    double p_forward = 1.0;   // high supports t_var -> c_var
    double p_backward = 1.0;  // high supports c_var -> t_var
};

/// Shared engine for one dataset: caches kernel factorizations per
/// conditioning set, residuals per (variable, conditioning set) and GCM
/// results per canonical query. Thread-safe; all results are pure functions
/// of (dataset, root seed) so cache hits never change an answer.
class CiTester {
public:
    explicit CiTester(const Dataset& data, std::uint64_t root_seed = 0, HsicOptions hsic = {});

    const Dataset& data() const noexcept { return data_; }

    Eigen::VectorXd residual(const Name& var, const std::vector<Name>& cond);
    TestResult gcm(const Name& a, const Name& b, const std::vector<Name>& cond);
    AnmResult anm(const Name& t_var, const Name& c_var);

    std::size_t gcm_queries() const;
    std::size_t gcm_cache_hits() const;

private:
    std::shared_ptr<const KernelRidge> ridge_for(const std::vector<Name>& sorted_cond);

    const Dataset& data_;
    std::uint64_t root_seed_;
    HsicOptions hsic_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const KernelRidge>> ridges_;
    std::map<std::string, Eigen::VectorXd> residuals_;
    std::map<std::string, TestResult> gcm_memo_;
    std::size_t gcm_queries_ = 0;
    std::size_t gcm_hits_ = 0;
};

/// Conditional independence test of a and b given cond (GCM).
TestResult gcm_test(const Dataset& d, const Name& a, const Name& b, const std::vector<Name>& cond,
                    std::uint64_t seed = 0);

AnmResult anm_direction(const Dataset& d, const Name& t_var, const Name& c_var, std::uint64_t seed = 0);

}  // namespace gci::stats
