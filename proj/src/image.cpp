#include "rectedit/image.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rectedit {

std::vector<std::uint8_t> encode_png(const Image &image) {
    require(!image.empty(), ErrorCode::degenerate_size, "cannot encode an empty image");
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width);
    desc.height = static_cast<png_uint_32>(image.height);
    desc.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
        fail(ErrorCode::decode, std::string("png encode failed: ") + desc.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
        fail(ErrorCode::decode, std::string("png encode failed: ") + desc.message);
    }
    out.resize(size);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    if (bytes.empty() || !png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
        fail(ErrorCode::decode, std::string("png decode failed: ") + (bytes.empty() ? "empty buffer" : desc.message));
    }
    desc.format = PNG_FORMAT_RGB;
    Image image(static_cast<int>(desc.width), static_cast<int>(desc.height));
    if (!png_image_finish_read(&desc, nullptr, image.rgb.data(), 0, nullptr)) {
        std::string message = desc.message;
        png_image_free(&desc);
        fail(ErrorCode::decode, "png decode failed: " + message);
    }
    return image;
}

Image load_png(const std::string &path) {
    const auto bytes = read_file_bytes(path);
    return decode_png(bytes);
}

void save_png(const Image &image, const std::string &path) { write_file_bytes(path, encode_png(image)); }

Tensor image_to_tensor(const Image &image) {
    Tensor t(3, image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const auto *p = image.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                t.at(c, y, x) = p[c] / 127.5 - 1.0;
            }
        }
    }
    return t;
}

Image tensor_to_image(const Tensor &tensor) {
    require(tensor.channels == 3, ErrorCode::shape_mismatch, "tensor_to_image expects 3 channels");
    Image image(tensor.width, tensor.height);
    for (int y = 0; y < tensor.height; ++y) {
        for (int x = 0; x < tensor.width; ++x) {
            auto *p = image.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp((tensor.at(c, y, x) + 1.0) * 127.5, 0.0, 255.0);
                p[c] = static_cast<std::uint8_t>(std::floor(v + 0.5));
            }
        }
    }
    return image;
}

std::pair<int, int> shorter_side_size(int width, int height, int shorter_side) {
    require(width > 0 && height > 0 && shorter_side > 0, ErrorCode::degenerate_size, "resize of an empty image");
    if (width <= height) {
        const auto h = static_cast<int>(std::lround(static_cast<double>(height) * shorter_side / width));
        return {shorter_side, h};
    }
    const auto w = static_cast<int>(std::lround(static_cast<double>(width) * shorter_side / height));
    return {w, shorter_side};
}

namespace {

// Half-pixel-centre sampling with edge clamping.
template <typename Sample>
void bilinear_grid(int in_h, int in_w, int out_h, int out_w, Sample &&sample) {
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - x0;
            sample(y, x, y0, y1, wy, x0, x1, wx);
        }
    }
}

}  // namespace

Tensor resize_bilinear(const Tensor &input, int height, int width) {
    require(height > 0 && width > 0 && input.height > 0 && input.width > 0, ErrorCode::degenerate_size,
            "bilinear resize with an empty extent");
    if (input.height == height && input.width == width) {
        return input;
    }
    Tensor out(input.channels, height, width);
    bilinear_grid(input.height, input.width, height, width,
                  [&](int y, int x, int y0, int y1, double wy, int x0, int x1, double wx) {
                      for (int c = 0; c < input.channels; ++c) {
                          const double top = input.at(c, y0, x0) * (1 - wx) + input.at(c, y0, x1) * wx;
                          const double bottom = input.at(c, y1, x0) * (1 - wx) + input.at(c, y1, x1) * wx;
                          out.at(c, y, x) = top * (1 - wy) + bottom * wy;
                      }
                  });
    return out;
}

Image resize_bilinear(const Image &input, int width, int height) {
    require(height > 0 && width > 0 && !input.empty(), ErrorCode::degenerate_size,
            "bilinear resize with an empty extent");
    if (input.height == height && input.width == width) {
        return input;
    }
    Image out(width, height);
    bilinear_grid(input.height, input.width, height, width,
                  [&](int y, int x, int y0, int y1, double wy, int x0, int x1, double wx) {
                      for (int c = 0; c < 3; ++c) {
                          const double top = input.pixel(x0, y0)[c] * (1 - wx) + input.pixel(x1, y0)[c] * wx;
                          const double bottom = input.pixel(x0, y1)[c] * (1 - wx) + input.pixel(x1, y1)[c] * wx;
                          const double v = top * (1 - wy) + bottom * wy;
                          out.pixel(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
                      }
                  });
    return out;
}

Image contact_sheet(std::span<const Image> images, std::uint8_t gutter) {
    int width = 0;
    int height = 0;
    for (const auto &im : images) {
        width += im.width;
        height = std::max(height, im.height);
    }
    if (images.empty()) {
        return {};
    }
    width += static_cast<int>(images.size()) - 1;
    Image sheet(width, height, gutter);
    int offset = 0;
    for (const auto &im : images) {
        for (int y = 0; y < im.height; ++y) {
            std::memcpy(sheet.pixel(offset, y), im.pixel(0, y), static_cast<std::size_t>(im.width) * 3);
        }
        offset += im.width + 1;
    }
    return sheet;
}

}  // namespace rectedit
