#include "gci/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

#include "gci/error.hpp"
#include "gci/seed.hpp"

namespace gci::stats {

double CorMatrix::at(const Name& a, const Name& b) const {
    auto find = [&](const Name& v) {
        auto it = std::find(names.begin(), names.end(), v);
        if (it == names.end()) throw LookupError("cor matrix: unknown variable '" + v + "'");
        return static_cast<Eigen::Index>(it - names.begin());
    };
    return values(find(a), find(b));
}

CorMatrix cor_matrix(const Dataset& d) {
    if (d.rows() < 3) throw InsufficientDataError("cor matrix: need at least 3 rows");
    const Eigen::Index p = static_cast<Eigen::Index>(d.cols());
    Eigen::MatrixXd centered = d.values().rowwise() - d.values().colwise().mean();
    Eigen::VectorXd norms = centered.colwise().norm();
    for (Eigen::Index j = 0; j < p; ++j) {
        const double scale = std::max(1.0, d.values().col(j).cwiseAbs().maxCoeff());
        if (!(norms(j) / std::sqrt(static_cast<double>(d.rows())) > 1e-12 * scale))
            throw DegenerateError("cor matrix: column '" + d.names()[static_cast<std::size_t>(j)] +
                                  "' has zero variance");
        centered.col(j) /= norms(j);
    }
    Eigen::MatrixXd c = (centered.transpose() * centered).cwiseAbs();
    for (Eigen::Index i = 0; i < p; ++i) {
        c(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double v = std::min(1.0, 0.5 * (c(i, j) + c(j, i)));
            c(i, j) = c(j, i) = v;
        }
    }
    return {d.names(), std::move(c)};
}

// ---------------------------------------------------------------------------

double median_pairwise_distance(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    if (n < 2) return 0.0;
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
    return med;
}

namespace {

std::vector<std::size_t> pick_rows(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (n <= cap) return rows;
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(cap);
    std::sort(rows.begin(), rows.end());
    return rows;
}

// exp(-|a_i - b_j|^2 / (2 bw^2)) for rows of a and b.
Eigen::MatrixXd rbf(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bw) {
    const Eigen::VectorXd an = a.rowwise().squaredNorm();
    const Eigen::VectorXd bn = b.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = -2.0 * a * b.transpose();
    d2.colwise() += an;
    d2.rowwise() += bn.transpose();
    const double g = -0.5 / (bw * bw);
    return (d2.cwiseMax(0.0) * g).array().exp().matrix();
}

}  // namespace

KernelRidge::KernelRidge(const Eigen::MatrixXd& features, const RegressionOptions& opts)
    : rows_(static_cast<std::size_t>(features.rows())) {
    if (rows_ < kMinRegressionRows)
        throw InsufficientDataError("regression: need at least " + std::to_string(kMinRegressionRows) +
                                    " rows, got " + std::to_string(rows_));
    if (!features.allFinite()) throw ContractError("regression: non-finite feature");
    const Eigen::Index p = features.cols();
    mean_ = p ? Eigen::RowVectorXd(features.colwise().mean()) : Eigen::RowVectorXd();
    scale_ = Eigen::RowVectorXd::Ones(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sd = std::sqrt((features.col(j).array() - mean_(j)).square().mean());
        if (sd > 0.0) scale_(j) = sd;
    }
    train_rows_ = pick_rows(rows_, opts.max_rows, opts.seed);
    full_ = train_rows_.size() == rows_;
    if (p == 0) return;

    Eigen::MatrixXd train(static_cast<Eigen::Index>(train_rows_.size()), p);
    for (std::size_t i = 0; i < train_rows_.size(); ++i)
        train.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(train_rows_[i]));
    train_z_ = standardize(train);
    const double med = median_pairwise_distance(train_z_);
    bandwidth_ = med > 0.0 ? med : 1.0;
    ridge_ = opts.ridge_per_row * static_cast<double>(train_rows_.size());
    gram_ = rbf(train_z_, train_z_, bandwidth_);
    Eigen::MatrixXd reg = gram_;
    reg.diagonal().array() += ridge_;
    llt_.compute(reg);
    if (llt_.info() != Eigen::Success) throw DegenerateError("regression: kernel factorization failed");
    if (!full_) {
        // Keep the full standardized inputs for out-of-sample fitted values.
        all_z_ = standardize(features);
        gram_.resize(0, 0);
    }
}

Eigen::MatrixXd KernelRidge::standardize(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
}

Eigen::MatrixXd KernelRidge::cross_kernel(const Eigen::MatrixXd& zx) const { return rbf(zx, train_z_, bandwidth_); }

KernelRidge::Model KernelRidge::train(const Eigen::VectorXd& target) const {
    if (static_cast<std::size_t>(target.size()) != rows_) throw ContractError("regression: target length mismatch");
    if (!target.allFinite()) throw ContractError("regression: non-finite target");
    Model m;
    Eigen::VectorXd y(static_cast<Eigen::Index>(train_rows_.size()));
    for (std::size_t i = 0; i < train_rows_.size(); ++i) y(static_cast<Eigen::Index>(i)) = target(static_cast<Eigen::Index>(train_rows_[i]));
    m.offset = y.mean();
    if (mean_.size() == 0) return m;
    m.alpha = llt_.solve((y.array() - m.offset).matrix());
    return m;
}

Eigen::VectorXd KernelRidge::predict(const Model& model, const Eigen::MatrixXd& features) const {
    if (features.cols() != mean_.size()) throw ContractError("regression: feature width mismatch");
    if (mean_.size() == 0) return Eigen::VectorXd::Constant(features.rows(), model.offset);
    Eigen::VectorXd out(features.rows());
    constexpr Eigen::Index block = 2048;
    for (Eigen::Index s = 0; s < features.rows(); s += block) {
        const Eigen::Index len = std::min(block, features.rows() - s);
        out.segment(s, len) = cross_kernel(standardize(features.middleRows(s, len))) * model.alpha;
    }
    return out.array() + model.offset;
}

RegressionFit KernelRidge::fit(const Eigen::VectorXd& target) const {
    const Model m = train(target);
    RegressionFit f;
    if (mean_.size() == 0) {
        f.fitted = Eigen::VectorXd::Constant(target.size(), m.offset);
    } else if (full_) {
        f.fitted = (gram_ * m.alpha).array() + m.offset;
    } else {
        f.fitted.resize(target.size());
        constexpr Eigen::Index block = 2048;
        for (Eigen::Index s = 0; s < all_z_.rows(); s += block) {
            const Eigen::Index len = std::min(block, all_z_.rows() - s);
            f.fitted.segment(s, len) = (cross_kernel(all_z_.middleRows(s, len)) * m.alpha).array() + m.offset;
        }
    }
    f.residuals = target - f.fitted;
    f.bandwidth = bandwidth_;
    f.ridge = ridge_;
    f.residual_mean = f.residuals.mean();
    return f;
}

RegressionFit regress(const Eigen::MatrixXd& features, const Eigen::VectorXd& target, const RegressionOptions& opts) {
    if (features.rows() != target.size()) throw ContractError("regression: rows of features and target differ");
    return KernelRidge(features, opts).fit(target);
}

// ---------------------------------------------------------------------------

std::string to_string(Method m) {
    switch (m) {
        case Method::Gcm: return "GCM";
        case Method::Hsic: return "HSIC";
        case Method::AnmForward: return "ANM-forward";
        case Method::AnmBackward: return "ANM-backward";
    }
    return "?";
}

TestResult gcm_from_residuals(const Eigen::VectorXd& ra, const Eigen::VectorXd& rb) {
    if (ra.size() != rb.size() || ra.size() < 2) throw ContractError("gcm: residual vectors must align");
    const Eigen::ArrayXd r = ra.array() * rb.array();
    const double n = static_cast<double>(r.size());
    const double mean = r.mean();
    const double sd = std::sqrt(std::max(0.0, (r - mean).square().mean()));
    if (!(sd >= 1e-12)) throw DegenerateError("gcm: degenerate residual product");
    TestResult out;
    out.method = Method::Gcm;
    out.statistic = std::sqrt(n) * mean / sd;
    out.p_value = std::clamp(std::erfc(std::abs(out.statistic) / std::sqrt(2.0)), 0.0, 1.0);
    return out;
}

namespace {

// Gram matrix of a scalar sample with the median-heuristic RBF width.
Eigen::MatrixXd scalar_gram(const Eigen::VectorXd& x) {
    Eigen::MatrixXd col = x;
    double bw = median_pairwise_distance(col);
    if (!(bw > 0.0)) {
        // Heavily tied sample: fall back to the standard deviation.
        bw = std::sqrt((x.array() - x.mean()).square().mean());
    }
    return rbf(col, col, bw);
}

Eigen::MatrixXd center(const Eigen::MatrixXd& k) {
    const Eigen::VectorXd rm = k.rowwise().mean();
    const Eigen::RowVectorXd cm = k.colwise().mean();
    const double gm = k.mean();
    Eigen::MatrixXd out = k;
    out.colwise() -= rm;
    out.rowwise() -= cm;
    return out.array() + gm;
}

bool is_constant(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
}

}  // namespace

TestResult hsic_test(std::span<const double> u, std::span<const double> v, const HsicOptions& opts) {
    if (u.size() != v.size()) throw ContractError("hsic: samples differ in length");
    if (u.size() < kMinHsicRows)
        throw InsufficientDataError("hsic: need at least " + std::to_string(kMinHsicRows) + " rows");
    if (is_constant(u) || is_constant(v)) throw DegenerateError("hsic: constant sample");
    for (std::size_t i = 0; i < u.size(); ++i)
        if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw ContractError("hsic: non-finite value");

    const auto rows = pick_rows(u.size(), opts.max_rows, opts.seed);
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd x(m), y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        x(i) = u[rows[static_cast<std::size_t>(i)]];
        y(i) = v[rows[static_cast<std::size_t>(i)]];
    }
    if (x.maxCoeff() == x.minCoeff() || y.maxCoeff() == y.minCoeff())
        throw DegenerateError("hsic: constant subsample");
    Eigen::MatrixXd k = scalar_gram(x);
    Eigen::MatrixXd l = scalar_gram(y);
    const Eigen::MatrixXd kc = center(k);
    const Eigen::MatrixXd lc = center(l);
    const double dm = static_cast<double>(m);

    TestResult out;
    out.method = Method::Hsic;
    out.statistic = (kc.array() * lc.array()).sum() / dm;

    if (opts.permutation) {
        std::mt19937_64 rng(derive_seed(opts.seed, "hsic-permutation"));
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        std::size_t exceed = 0;
        for (std::size_t b = 0; b < opts.permutations; ++b) {
            std::shuffle(perm.begin(), perm.end(), rng);
            double s = 0.0;
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < m; ++j)
                    s += kc(i, j) * lc(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
            if (s / dm >= out.statistic) ++exceed;
        }
        out.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(opts.permutations));
        return out;
    }

    // Gamma approximation of the null: match the first two moments.
    Eigen::ArrayXXd var_terms = (kc.array() * lc.array() / 6.0).square();
    double var_hsic = (var_terms.sum() - var_terms.matrix().diagonal().sum()) / dm / (dm - 1.0);
    var_hsic *= 72.0 * (dm - 4.0) * (dm - 5.0) / dm / (dm - 1.0) / (dm - 2.0) / (dm - 3.0);
    k.diagonal().setZero();
    l.diagonal().setZero();
    const double mu_x = k.sum() / dm / (dm - 1.0);
    const double mu_y = l.sum() / dm / (dm - 1.0);
    const double mean_hsic = (1.0 + mu_x * mu_y - mu_x - mu_y) / dm;
    if (!(var_hsic > 0.0) || !(mean_hsic > 0.0)) throw DegenerateError("hsic: degenerate null moments");
    const double shape = mean_hsic * mean_hsic / var_hsic;
    const double scale = var_hsic * dm / mean_hsic;
    out.p_value = out.statistic <= 0.0 ? 1.0 : std::clamp(boost::math::gamma_q(shape, out.statistic / scale), 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string join(const std::vector<Name>& names) {
    std::string s;
    for (const auto& n : names) {
        s += n;
        s += '\x1f';
    }
    return s;
}

std::vector<Name> sorted_unique(std::vector<Name> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

CiTester::CiTester(const Dataset& data, std::uint64_t root_seed, HsicOptions hsic)
    : data_(data), root_seed_(root_seed), hsic_(hsic) {}

std::shared_ptr<const KernelRidge> CiTester::ridge_for(const std::vector<Name>& cond) {
    const std::string key = join(cond);
    {
        std::lock_guard lock(mu_);
        if (auto it = ridges_.find(key); it != ridges_.end()) return it->second;
    }
    RegressionOptions opts;
    opts.seed = derive_seed(root_seed_, "krr/" + key);
    auto ridge = std::make_shared<const KernelRidge>(data_.columns(cond), opts);
    std::lock_guard lock(mu_);
    return ridges_.emplace(key, std::move(ridge)).first->second;
}

Eigen::VectorXd CiTester::residual(const Name& var, const std::vector<Name>& cond_in) {
    const auto cond = sorted_unique(cond_in);
    if (std::find(cond.begin(), cond.end(), var) != cond.end())
        throw ContractError("residual: '" + var + "' is in its own conditioning set");
    const std::string key = var + '\x1e' + join(cond);
    {
        std::lock_guard lock(mu_);
        if (auto it = residuals_.find(key); it != residuals_.end()) return it->second;
    }
    Eigen::VectorXd target = data_.column_vector(var);
    Eigen::VectorXd r;
    if (cond.empty()) {
        r = target.array() - target.mean();
    } else {
        r = ridge_for(cond)->fit(target).residuals;
    }
    std::lock_guard lock(mu_);
    return residuals_.emplace(key, std::move(r)).first->second;
}

TestResult CiTester::gcm(const Name& a_in, const Name& b_in, const std::vector<Name>& cond_in) {
    if (a_in == b_in) throw ContractError("gcm: the two variables must differ");
    const auto cond = sorted_unique(cond_in);
    for (const auto& c : cond)
        if (c == a_in || c == b_in) throw ContractError("gcm: '" + c + "' is both tested and conditioned on");
    const Name& a = std::min(a_in, b_in);
    const Name& b = std::max(a_in, b_in);
    const std::string key = a + '\x1e' + b + '\x1e' + join(cond);
    {
        std::lock_guard lock(mu_);
        ++gcm_queries_;
        if (auto it = gcm_memo_.find(key); it != gcm_memo_.end()) {
            ++gcm_hits_;
            return it->second;
        }
    }
    const TestResult r = gcm_from_residuals(residual(a, cond), residual(b, cond));
    std::lock_guard lock(mu_);
    return gcm_memo_.emplace(key, r).first->second;
}

AnmResult CiTester::anm(const Name& t_var, const Name& c_var) {
    if (t_var == c_var) throw ContractError("anm: the two variables must differ");
    const auto t = data_.column(t_var);
    const auto c = data_.column(c_var);
    const Eigen::VectorXd rc = residual(c_var, {t_var});
    const Eigen::VectorXd rt = residual(t_var, {c_var});
    HsicOptions fw = hsic_, bw = hsic_;
    fw.seed = derive_seed(root_seed_, "hsic/" + t_var + '\x1e' + c_var);
    bw.seed = derive_seed(root_seed_, "hsic/" + c_var + '\x1e' + t_var);
    AnmResult out;
    out.p_forward = hsic_test({rc.data(), static_cast<std::size_t>(rc.size())}, t, fw).p_value;
    out.p_backward = hsic_test({rt.data(), static_cast<std::size_t>(rt.size())}, c, bw).p_value;
    return out;
}

std::size_t CiTester::gcm_queries() const {
    std::lock_guard lock(mu_);
    return gcm_queries_;
}

std::size_t CiTester::gcm_cache_hits() const {
    std::lock_guard lock(mu_);
    return gcm_hits_;
}

TestResult gcm_test(const Dataset& d, const Name& a, const Name& b, const std::vector<Name>& cond, std::uint64_t seed) {
    CiTester tester(d, seed);
    return tester.gcm(a, b, cond);
}

AnmResult anm_direction(const Dataset& d, const Name& t_var, const Name& c_var, std::uint64_t seed) {
    CiTester tester(d, seed);
    return tester.anm(t_var, c_var);
}

}  // namespace gci::stats
