#pragma once

#include "rectedit/tensor.hpp"

#include <span>
#include <vector>

namespace rectedit {

/// Discrete forward-process tables. All math in double precision.
///
/// alpha_bars[t] is the cumulative product of alphas up to and including t,
/// so it is strictly decreasing whenever every beta is positive.
class NoiseSchedule {
public:
    /// Builds from an explicit beta vector; every beta must lie in (0, 1).
    explicit NoiseSchedule(std::vector<double> betas);

    int num_timesteps() const noexcept { return static_cast<int>(betas_.size()); }
    std::span<const double> betas() const noexcept { return betas_; }
    std::span<const double> alphas() const noexcept { return alphas_; }
    std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }

    /// alpha_bar at t, with t == -1 denoting the clean endpoint (alpha_bar = 1).
    double alpha_bar_or_one(int t) const;

    friend bool operator==(const NoiseSchedule &, const NoiseSchedule &) = default;

private:
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

/// Betas linearly interpolated from beta_start to beta_end inclusive.
NoiseSchedule build_linear_schedule(int num_timesteps, double beta_start, double beta_end);

/// x_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps.
Tensor add_noise(const Tensor &x, const Tensor &epsilon, int t, const NoiseSchedule &schedule);

/// Same evaluation with abar supplied directly; used for limit cases.
Tensor add_noise_with_alpha_bar(const Tensor &x, const Tensor &epsilon, double alpha_bar);

/// Clean-sample estimate implied by a noise prediction at timestep t.
Tensor predict_x0(const Tensor &x_t, const Tensor &eps_hat, int t, const NoiseSchedule &schedule);

/// Deterministic (eta = 0) DDIM update from t to t_prev.
///
/// t_prev may be -1, meaning the final jump to the clean endpoint.
Tensor ddim_step(const Tensor &x_t, const Tensor &eps_hat, int t, int t_prev, const NoiseSchedule &schedule);

/// Descending sampler timesteps, evenly spaced over [0, T-1], first = T-1, last = 0.
std::vector<int> ddim_timesteps(int num_timesteps, int num_steps);

}  // namespace rectedit
