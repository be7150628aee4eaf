#include "rectedit/noise_schedule.hpp"

#include "rectedit/error.hpp"

#include <cmath>
#include <string>

namespace rectedit {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    require(!betas_.empty(), ErrorCode::invalid_range, "noise schedule needs at least one timestep");
    alphas_.reserve(betas_.size());
    alpha_bars_.reserve(betas_.size());
    double running = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        const double beta = betas_[i];
        require(beta > 0.0 && beta < 1.0, ErrorCode::invalid_range,
                "beta[" + std::to_string(i) + "] = " + std::to_string(beta) + " outside (0, 1)");
        alphas_.push_back(1.0 - beta);
        running *= 1.0 - beta;
        alpha_bars_.push_back(running);
    }
}

double NoiseSchedule::alpha_bar_or_one(int t) const {
    if (t == -1) {
        return 1.0;
    }
    require(t >= 0 && t < num_timesteps(), ErrorCode::timestep_out_of_range,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(num_timesteps()) + ")");
    return alpha_bars_[static_cast<std::size_t>(t)];
}

NoiseSchedule build_linear_schedule(int num_timesteps, double beta_start, double beta_end) {
    require(num_timesteps >= 1, ErrorCode::invalid_range, "num_timesteps must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorCode::invalid_range,
            "need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(num_timesteps));
    if (num_timesteps == 1) {
        betas[0] = beta_start;
    } else {
        const double span = beta_end - beta_start;
        for (int i = 0; i < num_timesteps; ++i) {
            betas[static_cast<std::size_t>(i)] = beta_start + span * i / (num_timesteps - 1);
        }
        betas.back() = beta_end;
    }
    return NoiseSchedule(std::move(betas));
}

Tensor add_noise_with_alpha_bar(const Tensor &x, const Tensor &epsilon, double alpha_bar) {
    require_same_shape(x, epsilon, "add_noise");
    const double signal = std::sqrt(alpha_bar);
    const double noise = std::sqrt(1.0 - alpha_bar);
    Tensor out = zeros_like(x);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = signal * x.data[i] + noise * epsilon.data[i];
    }
    return out;
}

Tensor add_noise(const Tensor &x, const Tensor &epsilon, int t, const NoiseSchedule &schedule) {
    require(t >= 0 && t < schedule.num_timesteps(), ErrorCode::timestep_out_of_range,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.num_timesteps()) + ")");
    return add_noise_with_alpha_bar(x, epsilon, schedule.alpha_bars()[static_cast<std::size_t>(t)]);
}

Tensor predict_x0(const Tensor &x_t, const Tensor &eps_hat, int t, const NoiseSchedule &schedule) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    const double abar = schedule.alpha_bar_or_one(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Tensor x0 = zeros_like(x_t);
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        x0.data[i] = (x_t.data[i] - noise * eps_hat.data[i]) / signal;
    }
    return x0;
}

Tensor ddim_step(const Tensor &x_t, const Tensor &eps_hat, int t, int t_prev, const NoiseSchedule &schedule) {
    require_same_shape(x_t, eps_hat, "ddim_step");
    require(t_prev <= t, ErrorCode::ordering,
            "ddim_step requires t_prev <= t (got t=" + std::to_string(t) + ", t_prev=" + std::to_string(t_prev) + ")");
    if (t_prev == t) {
        // Guards t itself even on the identity path.
        schedule.alpha_bar_or_one(t);
        return x_t;
    }
    const double abar_prev = schedule.alpha_bar_or_one(t_prev);
    const Tensor x0 = predict_x0(x_t, eps_hat, t, schedule);
    const double signal = std::sqrt(abar_prev);
    const double noise = std::sqrt(1.0 - abar_prev);
    Tensor out = zeros_like(x_t);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = signal * x0.data[i] + noise * eps_hat.data[i];
    }
    return out;
}

std::vector<int> ddim_timesteps(int num_timesteps, int num_steps) {
    require(num_steps >= 1, ErrorCode::invalid_range, "num_steps must be >= 1");
    require(num_timesteps >= 1, ErrorCode::invalid_range, "num_timesteps must be >= 1");
    std::vector<int> steps(static_cast<std::size_t>(num_steps));
    if (num_steps == 1) {
        steps[0] = num_timesteps - 1;
        return steps;
    }
    for (int i = 0; i < num_steps; ++i) {
        const double frac = static_cast<double>(num_steps - 1 - i) / (num_steps - 1);
        steps[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(frac * (num_timesteps - 1)));
    }
    return steps;
}

}  // namespace rectedit
