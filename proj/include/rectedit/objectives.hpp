#pragma once

#include "rectedit/tensor.hpp"

#include <cstdint>
#include <span>

namespace rectedit {

struct TripletConfig {
    double margin = 5e-3;
    double weight = 1.0;
    std::int64_t activation_step = 2000;

    /// Throws ErrorCode::invalid_range on a negative margin, weight or step.
    void validate() const;
};

/// Mean of squared elementwise differences.
double pairwise_distance(const Tensor &a, const Tensor &b);

/// d(eps_true, eps_hat).
double diffusion_loss(const Tensor &eps_hat, const Tensor &eps_true);
/// Mean of per-sample diffusion losses.
double diffusion_loss(std::span<const Tensor> eps_hat, std::span<const Tensor> eps_true);

struct TripletTerms {
    double d_pos = 0.0;
    double d_neg = 0.0;
    double loss = 0.0;
    /// Hinge strictly positive; the subgradient is zero otherwise.
    bool active = false;
};

TripletTerms triplet_terms(const Tensor &eps_true, const Tensor &eps_pos, const Tensor &eps_neg,
                           const TripletConfig &cfg);

/// max{d(eps_true, eps_pos) - d(eps_true, eps_neg) + m, 0}.
double triplet_loss(const Tensor &eps_true, const Tensor &eps_pos, const Tensor &eps_neg, const TripletConfig &cfg);

bool triplet_gate_open(const TripletConfig &cfg, std::int64_t step);

/// l_train + lambda * l_triplet once step >= activation_step, else l_train.
double total_loss(double l_train, double l_triplet, const TripletConfig &cfg, std::int64_t step);

/// d/d(b) of pairwise_distance(a, b), scaled by `scale` and accumulated into `out`.
void accumulate_distance_grad(const Tensor &a, const Tensor &b, double scale, Tensor &out);

}  // namespace rectedit
