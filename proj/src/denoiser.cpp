#include "rectedit/denoiser.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rectedit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void silu_inplace(std::span<const double> pre, std::span<double> out) {
    for (std::size_t i = 0; i < pre.size(); ++i) {
        out[i] = pre[i] * sigmoid(pre[i]);
    }
}

double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

std::string hidden_name(const char *prefix, int layer) { return std::string(prefix) + std::to_string(layer); }

}  // namespace

DropoutMask draw_dropout_mask(double p, std::mt19937_64 &rng, double joint_p) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_range, "dropout probability outside [0, 1]");
    require(joint_p >= 0.0 && joint_p <= 1.0, ErrorCode::invalid_range, "joint dropout probability outside [0, 1]");
    DropoutMask mask;
    if (joint_p > 0.0 && std::bernoulli_distribution(joint_p)(rng)) {
        mask.image = true;
        mask.text = true;
        return mask;
    }
    mask.image = std::bernoulli_distribution(p)(rng);
    mask.text = std::bernoulli_distribution(p)(rng);
    return mask;
}

ConditionBundle apply_condition_dropout(ConditionBundle bundle, double p, std::mt19937_64 &rng) {
    const auto mask = draw_dropout_mask(p, rng);
    bundle.image_dropped = mask.image;
    bundle.text_dropped = mask.text;
    return bundle;
}

std::vector<double> sinusoidal_time_embedding(int t, int dim) {
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
        out[static_cast<std::size_t>(k)] = std::sin(t * freq);
        out[static_cast<std::size_t>(k + half)] = std::cos(t * freq);
    }
    return out;
}

std::vector<double> position_features(int height, int width) {
    const std::size_t pixels = static_cast<std::size_t>(height) * width;
    std::vector<double> out(kPositionFeatures * pixels);
    constexpr double pi = std::numbers::pi;
    for (int y = 0; y < height; ++y) {
        const double v = (y + 0.5) / height;
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5) / width;
            const std::size_t p = static_cast<std::size_t>(y) * width + x;
            const double feats[kPositionFeatures] = {
                std::sin(pi * u), std::cos(pi * u), std::sin(2 * pi * u), std::cos(2 * pi * u),
                std::sin(pi * v), std::cos(pi * v), std::sin(2 * pi * v), std::cos(2 * pi * v),
            };
            for (int f = 0; f < kPositionFeatures; ++f) {
                out[static_cast<std::size_t>(f) * pixels + p] = feats[f];
            }
        }
    }
    return out;
}

void im2col3x3(std::span<const double> input, int channels, int height, int width, std::span<double> cols) {
    const std::size_t pixels = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < channels; ++c) {
        const double *plane = input.data() + static_cast<std::size_t>(c) * pixels;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double *row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * pixels;
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - 1;
                    double *dst = row + static_cast<std::size_t>(y) * width;
                    if (sy < 0 || sy >= height) {
                        std::fill(dst, dst + width, 0.0);
                        continue;
                    }
                    const double *src = plane + static_cast<std::size_t>(sy) * width;
                    for (int x = 0; x < width; ++x) {
                        const int sx = x + kx - 1;
                        dst[x] = (sx < 0 || sx >= width) ? 0.0 : src[sx];
                    }
                }
            }
        }
    }
}

void col2im3x3(std::span<const double> cols, int channels, int height, int width, std::span<double> output) {
    const std::size_t pixels = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < channels; ++c) {
        double *plane = output.data() + static_cast<std::size_t>(c) * pixels;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double *row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * pixels;
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) {
                        continue;
                    }
                    const double *src = row + static_cast<std::size_t>(y) * width;
                    double *dst = plane + static_cast<std::size_t>(sy) * width;
                    for (int x = 0; x < width; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < width) {
                            dst[sx] += src[x];
                        }
                    }
                }
            }
        }
    }
}

Denoiser::Denoiser(const DenoiserConfig &config) : config_(config) {
    require(config_.latent_channels >= 1, ErrorCode::config, "latent_channels must be >= 1");
    require(config_.base_width >= 1 && config_.depth >= 1 && config_.embed_dim >= 1, ErrorCode::config,
            "base_width, depth and embed_dim must be >= 1");
    require(config_.vocab_size >= 1 && config_.time_dim >= 2 && config_.cond_hidden >= 1, ErrorCode::config,
            "vocab_size, time_dim and cond_hidden must be positive");
    if (config_.input_channels == 0) {
        config_.input_channels = 2 * config_.latent_channels;
    }
    require(config_.input_channels == 2 * config_.latent_channels, ErrorCode::config,
            "first layer must consume 2 x latent_channels = " + std::to_string(2 * config_.latent_channels) +
                " channels, configured " + std::to_string(config_.input_channels));
    layout();
    initialize();
}

Denoiser::Denoiser(const Denoiser &other)
    : config_(other.config_), params_(other.params_), slices_(other.slices_), encoder_(other.encoder_) {}

Denoiser &Denoiser::operator=(const Denoiser &other) {
    if (this != &other) {
        config_ = other.config_;
        params_ = other.params_;
        slices_ = other.slices_;
        encoder_ = other.encoder_;
        evaluations_.store(0);
    }
    return *this;
}

Denoiser::~Denoiser() = default;

void Denoiser::layout() {
    const int c = config_.latent_channels;
    const int w = config_.base_width;
    const int d = config_.embed_dim;
    const int h = config_.cond_hidden;
    std::size_t offset = 0;
    auto add = [&](std::string name, int rows, int cols) {
        slices_.push_back({std::move(name), offset, rows, cols});
        offset += static_cast<std::size_t>(rows) * cols;
    };
    add("tok_embed", config_.vocab_size, d);
    add("tok_pos", kMaxTextTokens, d);
    add("cond_w", h, d + config_.time_dim);
    add("cond_b", h, 1);
    // FiLM (gamma, beta) per stage, per-channel skip gains for x_t and C_I, and a
    // conditioned offset to the positional projection.
    const int film_rows = 2 * w * config_.depth + 2 * c + w * kPositionFeatures;
    add("film_w", film_rows, h);
    add("film_b", film_rows, 1);
    add("in_w", w, 9 * config_.input_channels);
    add("in_b", w, 1);
    add("pos_w", w, kPositionFeatures);
    for (int l = 1; l < config_.depth; ++l) {
        add(hidden_name("hid_w", l), w, w);
        add(hidden_name("hid_b", l), w, 1);
    }
    add("out_w", c, 9 * w);
    add("out_b", c, 1);
    params_.assign(offset, 0.0);
}

void Denoiser::initialize() {
    std::mt19937_64 rng(derive_seed(config_.seed, "denoiser.init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto &s : slices_) {
        double scale = 0.0;
        if (s.name == "tok_embed") {
            scale = 1.0;
        } else if (s.name == "tok_pos") {
            scale = 0.1;
        } else if (s.name.ends_with("_b")) {
            scale = 0.0;
        } else if (s.name == "film_w") {
            scale = 0.5 / std::sqrt(static_cast<double>(s.cols));
        } else if (s.name == "out_w") {
            scale = 0.5 / std::sqrt(static_cast<double>(s.cols));
        } else {
            scale = 1.0 / std::sqrt(static_cast<double>(s.cols));
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double v = normal(rng);
            params_[s.offset + i] = scale * v;
        }
    }
}

const ParamSlice &Denoiser::slice(const std::string &name) const {
    for (const auto &s : slices_) {
        if (s.name == name) {
            return s;
        }
    }
    fail(ErrorCode::invariant, "unknown parameter slice " + name);
}

void Denoiser::set_text_encoder(std::shared_ptr<const TextEncoder> encoder) {
    if (encoder) {
        require(encoder->embed_dim() == config_.embed_dim, ErrorCode::config,
                "text encoder embed_dim does not match the denoiser");
    }
    encoder_ = std::move(encoder);
}

TextEmbedding Denoiser::embed_internal(std::string_view instruction) const {
    const auto tokenized = hash_tokenize(instruction, config_.vocab_size);
    const auto &table = slice("tok_embed");
    const int d = config_.embed_dim;
    TextEmbedding emb;
    emb.embed_dim = d;
    emb.tokens = tokenized.ids;
    emb.truncated = tokenized.truncated;
    emb.vectors.resize(emb.tokens.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < emb.tokens.size(); ++i) {
        const double *row = params_.data() + table.offset + static_cast<std::size_t>(emb.tokens[i]) * d;
        std::copy(row, row + d, emb.vectors.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return emb;
}

TextEmbedding Denoiser::tokenize_and_embed(std::string_view instruction) const {
    if (!encoder_) {
        return embed_internal(instruction);
    }
    TextEmbedding emb = encoder_->encode(instruction);
    if (emb.seq_len() > kMaxTextTokens) {
        emb.tokens.resize(kMaxTextTokens);
        emb.vectors.resize(static_cast<std::size_t>(kMaxTextTokens) * emb.embed_dim);
        emb.truncated = true;
    }
    return emb;
}

TextEmbedding Denoiser::null_embedding() const { return tokenize_and_embed(""); }

Tensor Denoiser::predict_noise(const Tensor &x_t, const ConditionBundle &bundle, int t) const {
    require_same_shape(x_t, bundle.image_cond, "predict_noise image condition");
    if (bundle.image_dropped) {
        const Tensor zeros = zeros_like(bundle.image_cond);
        return forward(x_t, zeros, bundle.text_dropped ? null_embedding() : bundle.text_cond, t, nullptr);
    }
    return forward(x_t, bundle.image_cond, bundle.text_dropped ? null_embedding() : bundle.text_cond, t, nullptr);
}

Tensor Denoiser::forward(const Tensor &x_t, const Tensor &image_cond, const TextEmbedding &text, int t,
                         Tape *tape) const {
    const int c = config_.latent_channels;
    require(x_t.channels == c, ErrorCode::shape_mismatch,
            "x_t has " + std::to_string(x_t.channels) + " channels, model expects " + std::to_string(c));
    require_same_shape(x_t, image_cond, "denoiser image condition");
    require(x_t.height >= 1 && x_t.width >= 1, ErrorCode::degenerate_size, "empty input to denoiser");
    require(t >= 0, ErrorCode::timestep_out_of_range, "negative timestep");
    require(text.seq_len() <= kMaxTextTokens, ErrorCode::invariant, "text embedding exceeds the token cap");
    require(text.is_null() || text.embed_dim == config_.embed_dim, ErrorCode::shape_mismatch,
            "text embedding width does not match the denoiser");
    evaluations_.fetch_add(1, std::memory_order_relaxed);

    Tape local;
    Tape &tp = tape ? *tape : local;
    const int height = x_t.height;
    const int width = x_t.width;
    const int pixels = height * width;
    const int w = config_.base_width;
    const int d = config_.embed_dim;
    const int depth = config_.depth;
    tp.height = height;
    tp.width = width;
    tp.t = t;
    tp.text = text;
    tp.text_external = static_cast<bool>(encoder_);

    // Text pooling with learned per-position modulation.
    const auto &pos_slice = slice("tok_pos");
    tp.pooled.assign(static_cast<std::size_t>(d), 0.0);
    const int n = text.seq_len();
    for (int i = 0; i < n; ++i) {
        const double *v = text.vectors.data() + static_cast<std::size_t>(i) * d;
        const double *pm = params_.data() + pos_slice.offset + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k) {
            tp.pooled[static_cast<std::size_t>(k)] += v[k] * (1.0 + pm[k]);
        }
    }
    if (n > 0) {
        for (auto &v : tp.pooled) {
            v /= n;
        }
    }

    const auto temb = sinusoidal_time_embedding(t, config_.time_dim);
    tp.cond_in = tp.pooled;
    tp.cond_in.insert(tp.cond_in.end(), temb.begin(), temb.end());

    const auto &cw = slice("cond_w");
    const auto &cb = slice("cond_b");
    tp.cond_pre.assign(static_cast<std::size_t>(cw.rows), 0.0);
    VecMap(tp.cond_pre.data(), cw.rows) =
        ConstMatMap(params_.data() + cw.offset, cw.rows, cw.cols) * ConstVecMap(tp.cond_in.data(), cw.cols) +
        ConstVecMap(params_.data() + cb.offset, cb.rows);
    tp.cond.resize(tp.cond_pre.size());
    silu_inplace(tp.cond_pre, tp.cond);

    const auto &fw = slice("film_w");
    const auto &fb = slice("film_b");
    tp.film.assign(static_cast<std::size_t>(fw.rows), 0.0);
    VecMap(tp.film.data(), fw.rows) =
        ConstMatMap(params_.data() + fw.offset, fw.rows, fw.cols) * ConstVecMap(tp.cond.data(), fw.cols) +
        ConstVecMap(params_.data() + fb.offset, fb.rows);

    // Input convolution over concat(x_t, C_I).
    const int cin = config_.input_channels;
    std::vector<double> stacked(static_cast<std::size_t>(cin) * pixels);
    std::copy(x_t.data.begin(), x_t.data.end(), stacked.begin());
    std::copy(image_cond.data.begin(), image_cond.data.end(), stacked.begin() + static_cast<std::ptrdiff_t>(x_t.size()));
    tp.cols_in.resize(static_cast<std::size_t>(9) * cin * pixels);
    im2col3x3(stacked, cin, height, width, tp.cols_in);
    tp.stacked = std::move(stacked);
    tp.pos_features = position_features(height, width);

    tp.pre_film.assign(static_cast<std::size_t>(depth), {});
    tp.modulated.assign(static_cast<std::size_t>(depth), {});
    tp.activations.assign(static_cast<std::size_t>(depth), {});
    for (int l = 0; l < depth; ++l) {
        auto &h = tp.pre_film[static_cast<std::size_t>(l)];
        h.resize(static_cast<std::size_t>(w) * pixels);
        MatMap hm(h.data(), w, pixels);
        if (l == 0) {
            const auto &iw = slice("in_w");
            const auto &ib = slice("in_b");
            const auto &pw = slice("pos_w");
            hm.noalias() = ConstMatMap(params_.data() + iw.offset, iw.rows, iw.cols) *
                           ConstMatMap(tp.cols_in.data(), iw.cols, pixels);
            const Eigen::MatrixXd pos_eff =
                ConstMatMap(params_.data() + pw.offset, pw.rows, pw.cols) +
                ConstMatMap(tp.film.data() + 2 * w * depth + 2 * c, w, kPositionFeatures);
            hm.noalias() += pos_eff * ConstMatMap(tp.pos_features.data(), kPositionFeatures, pixels);
            hm.colwise() += ConstVecMap(params_.data() + ib.offset, ib.rows);
        } else {
            const auto &hw = slice(hidden_name("hid_w", l));
            const auto &hb = slice(hidden_name("hid_b", l));
            hm.noalias() = ConstMatMap(params_.data() + hw.offset, hw.rows, hw.cols) *
                           ConstMatMap(tp.activations[static_cast<std::size_t>(l - 1)].data(), w, pixels);
            hm.colwise() += ConstVecMap(params_.data() + hb.offset, hb.rows);
        }
        auto &u = tp.modulated[static_cast<std::size_t>(l)];
        u.resize(h.size());
        const double *gamma = tp.film.data() + static_cast<std::size_t>(2 * w * l);
        const double *beta = gamma + w;
        for (int ch = 0; ch < w; ++ch) {
            const double scale = 1.0 + gamma[ch];
            const double shift = beta[ch];
            const std::size_t base = static_cast<std::size_t>(ch) * pixels;
            for (int p = 0; p < pixels; ++p) {
                u[base + p] = h[base + p] * scale + shift;
            }
        }
        auto &a = tp.activations[static_cast<std::size_t>(l)];
        a.resize(u.size());
        silu_inplace(u, a);
    }

    const auto &ow = slice("out_w");
    const auto &ob = slice("out_b");
    tp.cols_out.resize(static_cast<std::size_t>(9) * w * pixels);
    im2col3x3(tp.activations.back(), w, height, width, tp.cols_out);
    Tensor out(c, height, width);
    MatMap om(out.data.data(), c, pixels);
    om.noalias() = ConstMatMap(params_.data() + ow.offset, ow.rows, ow.cols) *
                   ConstMatMap(tp.cols_out.data(), ow.cols, pixels);
    om.colwise() += ConstVecMap(params_.data() + ob.offset, ob.rows);
    const double *skip = tp.film.data() + static_cast<std::size_t>(2 * w * depth);
    for (int ch = 0; ch < c; ++ch) {
        const double *xs = tp.stacked.data() + static_cast<std::size_t>(ch) * pixels;
        const double *is = tp.stacked.data() + static_cast<std::size_t>(c + ch) * pixels;
        double *o = out.data.data() + static_cast<std::size_t>(ch) * pixels;
        for (int p = 0; p < pixels; ++p) {
            o[p] += skip[ch] * xs[p] + skip[c + ch] * is[p];
        }
    }
    return out;
}

void Denoiser::backward(const Tape &tp, const Tensor &grad_out, std::span<double> grad_params,
                        Tensor *grad_x_t) const {
    require(grad_params.size() == params_.size(), ErrorCode::shape_mismatch, "gradient buffer size mismatch");
    const int c = config_.latent_channels;
    const int w = config_.base_width;
    const int d = config_.embed_dim;
    const int depth = config_.depth;
    const int height = tp.height;
    const int width = tp.width;
    const int pixels = height * width;
    require(grad_out.channels == c && grad_out.height == height && grad_out.width == width,
            ErrorCode::shape_mismatch, "grad_out shape does not match the taped forward pass");

    auto grad_map = [&](const ParamSlice &s) { return MatMap(grad_params.data() + s.offset, s.rows, s.cols); };
    auto grad_vec = [&](const ParamSlice &s) { return VecMap(grad_params.data() + s.offset, s.rows); };
    auto param_map = [&](const ParamSlice &s) { return ConstMatMap(params_.data() + s.offset, s.rows, s.cols); };

    ConstMatMap g(grad_out.data.data(), c, pixels);

    // Output convolution.
    const auto &ow = slice("out_w");
    const auto &ob = slice("out_b");
    ConstMatMap cols_out(tp.cols_out.data(), ow.cols, pixels);
    grad_map(ow).noalias() += g * cols_out.transpose();
    grad_vec(ob) += g.rowwise().sum();
    std::vector<double> dcols(static_cast<std::size_t>(ow.cols) * pixels);
    MatMap(dcols.data(), ow.cols, pixels).noalias() = param_map(ow).transpose() * g;
    std::vector<double> da(static_cast<std::size_t>(w) * pixels, 0.0);
    col2im3x3(dcols, w, height, width, da);

    std::vector<double> dfilm(tp.film.size(), 0.0);
    const double *skip = tp.film.data() + static_cast<std::size_t>(2 * w * depth);
    double *dskip = dfilm.data() + static_cast<std::size_t>(2 * w * depth);
    for (int ch = 0; ch < c; ++ch) {
        const double *go = grad_out.data.data() + static_cast<std::size_t>(ch) * pixels;
        const double *xs = tp.stacked.data() + static_cast<std::size_t>(ch) * pixels;
        const double *is = tp.stacked.data() + static_cast<std::size_t>(c + ch) * pixels;
        for (int p = 0; p < pixels; ++p) {
            dskip[ch] += go[p] * xs[p];
            dskip[c + ch] += go[p] * is[p];
        }
    }
    std::vector<double> dh(da.size());
    for (int l = depth - 1; l >= 0; --l) {
        const auto &h = tp.pre_film[static_cast<std::size_t>(l)];
        const auto &u = tp.modulated[static_cast<std::size_t>(l)];
        const double *gamma = tp.film.data() + static_cast<std::size_t>(2 * w * l);
        double *dgamma = dfilm.data() + static_cast<std::size_t>(2 * w * l);
        double *dbeta = dgamma + w;
        for (int ch = 0; ch < w; ++ch) {
            const double scale = 1.0 + gamma[ch];
            const std::size_t base = static_cast<std::size_t>(ch) * pixels;
            double sg = 0.0;
            double sb = 0.0;
            for (int p = 0; p < pixels; ++p) {
                const double du = da[base + p] * silu_grad(u[base + p]);
                sg += du * h[base + p];
                sb += du;
                dh[base + p] = du * scale;
            }
            dgamma[ch] += sg;
            dbeta[ch] += sb;
        }
        ConstMatMap dhm(dh.data(), w, pixels);
        if (l > 0) {
            const auto &hw = slice(hidden_name("hid_w", l));
            const auto &hb = slice(hidden_name("hid_b", l));
            ConstMatMap prev(tp.activations[static_cast<std::size_t>(l - 1)].data(), w, pixels);
            grad_map(hw).noalias() += dhm * prev.transpose();
            grad_vec(hb) += dhm.rowwise().sum();
            MatMap(da.data(), w, pixels).noalias() = param_map(hw).transpose() * dhm;
        } else {
            const auto &iw = slice("in_w");
            const auto &ib = slice("in_b");
            const auto &pw = slice("pos_w");
            grad_map(iw).noalias() += dhm * ConstMatMap(tp.cols_in.data(), iw.cols, pixels).transpose();
            const Eigen::MatrixXd dpos = dhm * ConstMatMap(tp.pos_features.data(), kPositionFeatures, pixels).transpose();
            grad_map(pw) += dpos;
            MatMap(dfilm.data() + 2 * w * depth + 2 * c, w, kPositionFeatures) += dpos;
            grad_vec(ib) += dhm.rowwise().sum();
            if (grad_x_t) {
                std::vector<double> dcols_in(static_cast<std::size_t>(iw.cols) * pixels);
                MatMap(dcols_in.data(), iw.cols, pixels).noalias() = param_map(iw).transpose() * dhm;
                std::vector<double> dstacked(static_cast<std::size_t>(config_.input_channels) * pixels, 0.0);
                col2im3x3(dcols_in, config_.input_channels, height, width, dstacked);
                *grad_x_t = Tensor(c, height, width);
                std::copy(dstacked.begin(), dstacked.begin() + static_cast<std::ptrdiff_t>(grad_x_t->size()),
                          grad_x_t->data.begin());
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t base = static_cast<std::size_t>(ch) * pixels;
                    for (int p = 0; p < pixels; ++p) {
                        grad_x_t->data[base + p] += skip[ch] * grad_out.data[base + p];
                    }
                }
            }
        }
    }

    // Conditioning MLP.
    const auto &fw = slice("film_w");
    const auto &fb = slice("film_b");
    ConstVecMap dfilm_v(dfilm.data(), fw.rows);
    grad_map(fw).noalias() += dfilm_v * ConstVecMap(tp.cond.data(), fw.cols).transpose();
    grad_vec(fb) += dfilm_v;
    Eigen::VectorXd dcond = param_map(fw).transpose() * dfilm_v;
    for (Eigen::Index i = 0; i < dcond.size(); ++i) {
        dcond[i] *= silu_grad(tp.cond_pre[static_cast<std::size_t>(i)]);
    }
    const auto &cw = slice("cond_w");
    const auto &cb = slice("cond_b");
    grad_map(cw).noalias() += dcond * ConstVecMap(tp.cond_in.data(), cw.cols).transpose();
    grad_vec(cb) += dcond;
    const Eigen::VectorXd dcond_in = param_map(cw).transpose() * dcond;

    // Text pooling.
    const int n = tp.text.seq_len();
    if (n == 0) {
        return;
    }
    const auto &pos_slice = slice("tok_pos");
    const auto &table = slice("tok_embed");
    for (int i = 0; i < n; ++i) {
        const double *v = tp.text.vectors.data() + static_cast<std::size_t>(i) * d;
        const double *pm = params_.data() + pos_slice.offset + static_cast<std::size_t>(i) * d;
        double *dpm = grad_params.data() + pos_slice.offset + static_cast<std::size_t>(i) * d;
        double *dv = tp.text_external
                         ? nullptr
                         : grad_params.data() + table.offset + static_cast<std::size_t>(tp.text.tokens[static_cast<std::size_t>(i)]) * d;
        for (int k = 0; k < d; ++k) {
            const double dp = dcond_in[k] / n;
            dpm[k] += dp * v[k];
            if (dv) {
                dv[k] += dp * (1.0 + pm[k]);
            }
        }
    }
}

}  // namespace rectedit
