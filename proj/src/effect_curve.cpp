#include "gci/effect_curve.hpp"

#include <cmath>

#include "gci/error.hpp"

namespace gci {

void require_ascending_grid(const std::vector<double>& t_grid) {
    if (t_grid.size() < 2) throw ContractError("effect curve: grid needs at least two points");
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        if (!std::isfinite(t_grid[k])) throw ContractError("effect curve: non-finite grid point");
        if (k > 0 && !(t_grid[k] > t_grid[k - 1]))
            throw ContractError("effect curve: grid is not strictly ascending");
    }
}

EffectCurve::EffectCurve(std::vector<double> t_grid, std::vector<double> mean_outcome)
    : t_grid_(std::move(t_grid)), mu_(std::move(mean_outcome)) {
    require_ascending_grid(t_grid_);
    if (mu_.size() != t_grid_.size()) throw ContractError("effect curve: means do not match grid");
    for (double m : mu_)
        if (!std::isfinite(m)) throw ContractError("effect curve: non-finite mean outcome");
    mtef_.reserve(t_grid_.size() - 1);
    for (std::size_t k = 1; k < t_grid_.size(); ++k)
        mtef_.push_back((mu_[k] - mu_[k - 1]) / (t_grid_[k] - t_grid_[k - 1]));
}

}  // namespace gci
