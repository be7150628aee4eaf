#pragma once

#include "rectedit/denoiser.hpp"
#include "rectedit/image.hpp"
#include "rectedit/noise_schedule.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rectedit {

struct GuidanceConfig {
    double text_scale = 10.0;
    double image_scale = 1.5;
    int num_steps = 50;
    int resize_shorter_side = 512;
    /// Clamp the predicted clean image to [-1, 1] before each DDIM update.
    bool clip_x0 = true;

    void validate() const;
};

/// Sampler preset for prior probes.
inline constexpr int kProbeSteps = 30;
/// Smallest input side accepted by edit_image.
inline constexpr int kMinImageSide = 4;

/// eps(0,0) + s_I (eps(I,0) - eps(0,0)) + s_T (eps(I,T) - eps(I,0)), evaluated in a
/// rearranged form that is exact when a scale is 0 or 1. Three model evaluations.
Tensor guided_noise(const Denoiser &model, const Tensor &x_t, const Tensor &image_cond, const TextEmbedding &text,
                    int t, const GuidanceConfig &config);

/// DDIM update using the clamped clean-image estimate.
Tensor ddim_step_clipped(const Tensor &x_t, const Tensor &eps_hat, int t, int t_prev, const NoiseSchedule &schedule);

/// Sampler-step window [lo, hi) in which the real instruction is used.
struct StepWindow {
    int lo = 0;
    int hi = 0;
};

/// Parses "a:b".
StepWindow parse_window(const std::string &text);

struct EditResult {
    Image image;
    int ddim_steps = 0;
    std::uint64_t evaluations = 0;
    bool instruction_truncated = false;
};

/// Resizes the shorter side to config.resize_shorter_side, then runs DDIM from pure noise.
EditResult edit_image(const Denoiser &model, const NoiseSchedule &schedule, const Image &original,
                      const std::string &instruction, const GuidanceConfig &config, std::uint64_t seed);

/// Like edit_image, but the instruction only conditions sampler steps in the window;
/// other steps see the null text. Step 0 is the noisiest.
EditResult staged_sample(const Denoiser &model, const NoiseSchedule &schedule, const Image &original,
                         const std::string &instruction, StepWindow window, const GuidanceConfig &config,
                         std::uint64_t seed);

/// Mean absolute per-channel difference in [0, 1] over pixels where mask != 0.
double masked_change(const Image &a, const Image &b, const std::vector<std::uint8_t> &mask);

}  // namespace rectedit
