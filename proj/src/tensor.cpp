#include "rectedit/tensor.hpp"

#include "rectedit/error.hpp"

namespace rectedit {

std::string Tensor::shape_string() const {
    return "(" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + ")";
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *what) {
    if (!a.same_shape(b)) {
        fail(ErrorCode::shape_mismatch,
             std::string(what) + ": shape " + a.shape_string() + " does not match " + b.shape_string());
    }
}

Tensor zeros_like(const Tensor &t) { return Tensor(t.channels, t.height, t.width, 0.0); }

Tensor axpy(const Tensor &a, double scale, const Tensor &b) {
    require_same_shape(a, b, "axpy");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += scale * b.data[i];
    }
    return out;
}

}  // namespace rectedit
