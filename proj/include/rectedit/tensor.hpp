#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rectedit {

/// Dense channel-major (C, H, W) tensor in double precision.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    int pixels() const noexcept { return height * width; }

    double &at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    bool same_shape(const Tensor &other) const noexcept {
        return channels == other.channels && height == other.height && width == other.width;
    }

    std::string shape_string() const;

    std::span<double> values() noexcept { return data; }
    std::span<const double> values() const noexcept { return data; }

    friend bool operator==(const Tensor &, const Tensor &) = default;
};

/// Throws ErrorCode::shape_mismatch naming `what` when shapes differ.
void require_same_shape(const Tensor &a, const Tensor &b, const char *what);

Tensor zeros_like(const Tensor &t);

/// a + scale * b, elementwise.
Tensor axpy(const Tensor &a, double scale, const Tensor &b);

}  // namespace rectedit
