#include "rectedit/inference.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

namespace rectedit {

void GuidanceConfig::validate() const {
    require(num_steps >= 1, ErrorCode::config, "num_steps must be >= 1");
    require(std::isfinite(text_scale) && std::isfinite(image_scale), ErrorCode::config, "guidance scales must be finite");
    require(resize_shorter_side >= kMinImageSide, ErrorCode::config,
            "resize_shorter_side must be >= " + std::to_string(kMinImageSide));
}

Tensor guided_noise(const Denoiser &model, const Tensor &x_t, const Tensor &image_cond, const TextEmbedding &text,
                    int t, const GuidanceConfig &config) {
    require_same_shape(x_t, image_cond, "guided_noise image condition");
    const TextEmbedding null_text = model.null_embedding();
    const Tensor e_uncond = model.forward(x_t, zeros_like(image_cond), null_text, t, nullptr);
    const Tensor e_image = model.forward(x_t, image_cond, null_text, t, nullptr);
    const Tensor e_full = model.forward(x_t, image_cond, text, t, nullptr);
    const double a = config.text_scale;
    const double b = config.image_scale - config.text_scale;
    const double c = 1.0 - config.image_scale;
    Tensor out = zeros_like(x_t);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = a * e_full.data[i] + b * e_image.data[i] + c * e_uncond.data[i];
    }
    return out;
}

Tensor ddim_step_clipped(const Tensor &x_t, const Tensor &eps_hat, int t, int t_prev, const NoiseSchedule &schedule) {
    Tensor x0 = predict_x0(x_t, eps_hat, t, schedule);
    for (auto &v : x0.data) v = std::clamp(v, -1.0, 1.0);
    // Re-derive the noise that is consistent with the clamped estimate.
    const double abar = schedule.alpha_bar_or_one(t);
    Tensor eps = zeros_like(x_t);
    const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
    for (std::size_t i = 0; i < eps.size(); ++i) eps.data[i] = (x_t.data[i] - sa * x0.data[i]) / sb;
    return ddim_step(x_t, eps, t, t_prev, schedule);
}

StepWindow parse_window(const std::string &text) {
    const auto colon = text.find(':');
    StepWindow w;
    auto parse = [&](std::string_view part, int &out) {
        const auto r = std::from_chars(part.data(), part.data() + part.size(), out);
        return r.ec == std::errc{} && r.ptr == part.data() + part.size() && !part.empty();
    };
    const std::string_view view(text);
    if (colon == std::string::npos || !parse(view.substr(0, colon), w.lo) || !parse(view.substr(colon + 1), w.hi)) {
        fail(ErrorCode::config, "window must look like a:b, got '" + text + "'");
    }
    return w;
}

EditResult staged_sample(const Denoiser &model, const NoiseSchedule &schedule, const Image &original,
                         const std::string &instruction, StepWindow window, const GuidanceConfig &config,
                         std::uint64_t seed) {
    config.validate();
    require(window.lo >= 0 && window.lo <= window.hi && window.hi <= config.num_steps, ErrorCode::window_out_of_range,
            "window [" + std::to_string(window.lo) + ", " + std::to_string(window.hi) + ") is outside 0.." +
                std::to_string(config.num_steps));
    require(!original.empty(), ErrorCode::decode, "input image is empty");
    require(std::min(original.width, original.height) >= kMinImageSide, ErrorCode::degenerate_size,
            "image " + std::to_string(original.width) + "x" + std::to_string(original.height) +
                " is smaller than the minimum side " + std::to_string(kMinImageSide));

    const auto [w, h] = shorter_side_size(original.width, original.height, config.resize_shorter_side);
    const Image working = (w == original.width && h == original.height) ? original : resize_bilinear(original, w, h);
    const Tensor cond = image_to_tensor(working);

    const TextEmbedding text = model.tokenize_and_embed(instruction);
    const TextEmbedding null_text = model.null_embedding();

    std::mt19937_64 rng(derive_seed(seed, "edit.noise"));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor x = zeros_like(cond);
    for (auto &v : x.data) v = normal(rng);

    const auto before = model.evaluation_count();
    const auto steps = ddim_timesteps(schedule.num_timesteps(), config.num_steps);
    EditResult result;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const int index = static_cast<int>(i);
        const bool active = index >= window.lo && index < window.hi;
        const Tensor eps = guided_noise(model, x, cond, active ? text : null_text, steps[i], config);
        const int t_prev = i + 1 < steps.size() ? steps[i + 1] : -1;
        x = config.clip_x0 ? ddim_step_clipped(x, eps, steps[i], t_prev, schedule)
                           : ddim_step(x, eps, steps[i], t_prev, schedule);
        ++result.ddim_steps;
    }
    result.image = tensor_to_image(x);
    result.evaluations = model.evaluation_count() - before;
    result.instruction_truncated = text.truncated;
    return result;
}

EditResult edit_image(const Denoiser &model, const NoiseSchedule &schedule, const Image &original,
                      const std::string &instruction, const GuidanceConfig &config, std::uint64_t seed) {
    return staged_sample(model, schedule, original, instruction, {0, config.num_steps}, config, seed);
}

double masked_change(const Image &a, const Image &b, const std::vector<std::uint8_t> &mask) {
    require(a.width == b.width && a.height == b.height, ErrorCode::size_mismatch, "masked_change needs equal sizes");
    require(mask.size() == static_cast<std::size_t>(a.width) * a.height, ErrorCode::size_mismatch,
            "mask does not match the image");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (int c = 0; c < 3; ++c) {
            sum += std::abs(static_cast<int>(a.rgb[p * 3 + c]) - static_cast<int>(b.rgb[p * 3 + c])) / 255.0;
        }
        count += 3;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace rectedit
