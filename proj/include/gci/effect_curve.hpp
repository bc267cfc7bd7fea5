#pragma once

#include <vector>

namespace gci {

/// Mean potential outcome on an ascending treatment grid, with the marginal
/// treatment effect on each grid interval:
///   mtef[k] = (mu[k+1] - mu[k]) / (t[k+1] - t[k]).
class EffectCurve {
public:
    EffectCurve(std::vector<double> t_grid, std::vector<double> mean_outcome);

    const std::vector<double>& t_grid() const noexcept { return t_grid_; }
    const std::vector<double>& mean_outcome() const noexcept { return mu_; }
    const std::vector<double>& mtef() const noexcept { return mtef_; }

private:
    std::vector<double> t_grid_;
    std::vector<double> mu_;
    std::vector<double> mtef_;
};

/// Throws ContractError unless the grid has >= 2 strictly ascending finite points.
void require_ascending_grid(const std::vector<double>& t_grid);

}  // namespace gci
