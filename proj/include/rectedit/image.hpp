#pragma once

#include "rectedit/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rectedit {

/// 8-bit interleaved RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t *pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t *pixel(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }

    bool empty() const noexcept { return width <= 0 || height <= 0; }

    friend bool operator==(const Image &, const Image &) = default;
};

std::vector<std::uint8_t> encode_png(const Image &image);
/// Throws ErrorCode::decode on anything libpng rejects.
Image decode_png(std::span<const std::uint8_t> bytes);

Image load_png(const std::string &path);
void save_png(const Image &image, const std::string &path);

/// Pixel values mapped from [0, 255] to [-1, 1].
Tensor image_to_tensor(const Image &image);
/// Inverse of image_to_tensor with clamping and round-half-up quantization.
Image tensor_to_image(const Tensor &tensor);

/// Working size after an aspect-preserving resize of the shorter side.
std::pair<int, int> shorter_side_size(int width, int height, int shorter_side);

Tensor resize_bilinear(const Tensor &input, int height, int width);
Image resize_bilinear(const Image &input, int width, int height);

/// Images side by side, separated by a one pixel gutter.
Image contact_sheet(std::span<const Image> images, std::uint8_t gutter = 255);

}  // namespace rectedit
