#include "rectedit/objectives.hpp"

#include "rectedit/error.hpp"

#include <algorithm>

namespace rectedit {

void TripletConfig::validate() const {
    require(margin >= 0.0, ErrorCode::invalid_range, "triplet margin must be >= 0");
    require(weight >= 0.0, ErrorCode::invalid_range, "triplet weight must be >= 0");
    require(activation_step >= 0, ErrorCode::invalid_range, "triplet activation_step must be >= 0");
}

double pairwise_distance(const Tensor &a, const Tensor &b) {
    require_same_shape(a, b, "pairwise_distance");
    if (a.data.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double diff = a.data[i] - b.data[i];
        sum += diff * diff;
    }
    return sum / static_cast<double>(a.data.size());
}

double diffusion_loss(const Tensor &eps_hat, const Tensor &eps_true) { return pairwise_distance(eps_true, eps_hat); }

double diffusion_loss(std::span<const Tensor> eps_hat, std::span<const Tensor> eps_true) {
    require(eps_hat.size() == eps_true.size(), ErrorCode::shape_mismatch, "diffusion_loss batch sizes differ");
    require(!eps_hat.empty(), ErrorCode::empty_list, "diffusion_loss on an empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
        sum += diffusion_loss(eps_hat[i], eps_true[i]);
    }
    return sum / static_cast<double>(eps_hat.size());
}

TripletTerms triplet_terms(const Tensor &eps_true, const Tensor &eps_pos, const Tensor &eps_neg,
                           const TripletConfig &cfg) {
    require_same_shape(eps_true, eps_pos, "triplet_loss positive branch");
    require_same_shape(eps_true, eps_neg, "triplet_loss negative branch");
    TripletTerms terms;
    terms.d_pos = pairwise_distance(eps_true, eps_pos);
    terms.d_neg = pairwise_distance(eps_true, eps_neg);
    const double hinge = terms.d_pos - terms.d_neg + cfg.margin;
    terms.active = hinge > 0.0;
    terms.loss = std::max(hinge, 0.0);
    return terms;
}

double triplet_loss(const Tensor &eps_true, const Tensor &eps_pos, const Tensor &eps_neg, const TripletConfig &cfg) {
    return triplet_terms(eps_true, eps_pos, eps_neg, cfg).loss;
}

bool triplet_gate_open(const TripletConfig &cfg, std::int64_t step) { return step >= cfg.activation_step; }

double total_loss(double l_train, double l_triplet, const TripletConfig &cfg, std::int64_t step) {
    return triplet_gate_open(cfg, step) ? l_train + cfg.weight * l_triplet : l_train;
}

void accumulate_distance_grad(const Tensor &a, const Tensor &b, double scale, Tensor &out) {
    require_same_shape(a, b, "distance gradient");
    require_same_shape(a, out, "distance gradient output");
    const double k = 2.0 * scale / static_cast<double>(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        out.data[i] += k * (b.data[i] - a.data[i]);
    }
}

}  // namespace rectedit
