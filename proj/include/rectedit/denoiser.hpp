#pragma once

#include "rectedit/tensor.hpp"
#include "rectedit/text_encoder.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rectedit {

struct DenoiserConfig {
    int latent_channels = 3;
    int base_width = 24;
    /// Number of FiLM-modulated hidden stages (>= 1).
    int depth = 2;
    int embed_dim = 16;
    std::uint64_t seed = 0;
    int vocab_size = 1024;
    int time_dim = 16;
    int cond_hidden = 32;
    /// Channels consumed by the first layer; 0 means 2 * latent_channels.
    int input_channels = 0;

    friend bool operator==(const DenoiserConfig &, const DenoiserConfig &) = default;
};

struct ConditionBundle {
    Tensor image_cond;
    TextEmbedding text_cond;
    bool image_dropped = false;
    bool text_dropped = false;
};

struct DropoutMask {
    bool image = false;
    bool text = false;
};

/// Independent per-condition Bernoulli(p) draws, image first. When
/// joint_p > 0 a preceding joint draw drops both conditions together.
DropoutMask draw_dropout_mask(double p, std::mt19937_64 &rng, double joint_p = 0.0);

/// Marks conditions as dropped; the bundle's payload is left intact and the
/// model substitutes zeros / the null embedding at evaluation time.
ConditionBundle apply_condition_dropout(ConditionBundle bundle, double p, std::mt19937_64 &rng);

/// Named view into the flat parameter vector.
struct ParamSlice {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

/// Conditional noise predictor eps(concat(x_t, C_I), t, C_T).
///
/// Pixel-space, fully convolutional: a 3x3 input convolution over the
/// channel-concatenated pair plus a normalized-coordinate encoding, FiLM
/// modulated 1x1 hidden stages driven by the pooled text embedding and a
/// sinusoidal timestep embedding, and a 3x3 output convolution.
class Denoiser {
public:
    /// Cached activations for one forward pass.
    struct Tape;

    explicit Denoiser(const DenoiserConfig &config);
    Denoiser(const Denoiser &other);
    Denoiser &operator=(const Denoiser &other);
    ~Denoiser();

    const DenoiserConfig &config() const noexcept { return config_; }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    const std::vector<ParamSlice> &slices() const noexcept { return slices_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// Replaces an external encoder; the built-in hashing encoder is used when null.
    void set_text_encoder(std::shared_ptr<const TextEncoder> encoder);

    TextEmbedding tokenize_and_embed(std::string_view instruction) const;
    TextEmbedding null_embedding() const;

    /// Evaluation-mode prediction honoring the bundle's dropped flags.
    Tensor predict_noise(const Tensor &x_t, const ConditionBundle &bundle, int t) const;

    /// Raw forward with explicit effective conditions. `tape` may be null.
    Tensor forward(const Tensor &x_t, const Tensor &image_cond, const TextEmbedding &text, int t,
                   Tape *tape) const;

    /// Accumulates d(loss)/d(params) into grad_params given d(loss)/d(output).
    /// When grad_x_t is non-null it receives d(loss)/d(x_t).
    void backward(const Tape &tape, const Tensor &grad_out, std::span<double> grad_params,
                  Tensor *grad_x_t = nullptr) const;

    /// Number of forward evaluations since construction or the last reset.
    std::uint64_t evaluation_count() const noexcept { return evaluations_.load(); }
    void reset_evaluation_count() noexcept { evaluations_.store(0); }

private:
    void layout();
    void initialize();
    const ParamSlice &slice(const std::string &name) const;
    TextEmbedding embed_internal(std::string_view instruction) const;

    DenoiserConfig config_;
    std::vector<double> params_;
    std::vector<ParamSlice> slices_;
    std::shared_ptr<const TextEncoder> encoder_;
    mutable std::atomic<std::uint64_t> evaluations_{0};
};

/// Per-call activations. Opaque to callers; reusable across calls.
struct Denoiser::Tape {
    int height = 0;
    int width = 0;
    int t = 0;
    TextEmbedding text;
    bool text_external = false;
    std::vector<double> pooled;
    std::vector<double> cond_in;
    std::vector<double> cond_pre;
    std::vector<double> cond;
    std::vector<double> film;
    std::vector<double> stacked;
    std::vector<double> cols_in;
    std::vector<double> pos_features;
    std::vector<std::vector<double>> pre_film;
    std::vector<std::vector<double>> modulated;
    std::vector<std::vector<double>> activations;
    std::vector<double> cols_out;
};

std::vector<double> sinusoidal_time_embedding(int t, int dim);

/// Channels of the normalized-coordinate encoding added at the input layer.
inline constexpr int kPositionFeatures = 8;
std::vector<double> position_features(int height, int width);

/// im2col for a 3x3, stride 1, zero padded convolution: [(9*C) x (H*W)].
void im2col3x3(std::span<const double> input, int channels, int height, int width, std::span<double> cols);
/// Adjoint of im2col3x3, accumulating into `output`.
void col2im3x3(std::span<const double> cols, int channels, int height, int width, std::span<double> output);

}  // namespace rectedit
