#include "doctest.h"
#include "oracles.hpp"

#include "rectedit/denoiser.hpp"
#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"
#include "rectedit/objectives.hpp"

#include <random>
#include <string>

using namespace rectedit;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.base_width = 6;
    cfg.depth = 2;
    cfg.embed_dim = 5;
    cfg.cond_hidden = 7;
    cfg.vocab_size = 64;
    cfg.time_dim = 4;
    cfg.seed = 42;
    return cfg;
}

Tensor random_tensor(std::mt19937_64 &rng, int c, int h, int w, double scale = 1.0) {
    Tensor t(c, h, w);
    t.data = oracle::random_vector(rng, t.size(), scale);
    return t;
}

}  // namespace

TEST_CASE("tokenize_and_embed") {
    const Denoiser model(tiny_config());
    const auto empty = model.tokenize_and_embed("");
    CHECK(empty.is_null());
    CHECK_FALSE(empty.truncated);
    CHECK(empty == model.null_embedding());

    std::string long_text;
    for (int i = 0; i < 200; ++i) {
        long_text += "word" + std::to_string(i) + " ";
    }
    const auto capped = model.tokenize_and_embed(long_text);
    CHECK(capped.seq_len() == kMaxTextTokens);
    CHECK(capped.truncated);
    CHECK(capped.vectors.size() == static_cast<std::size_t>(kMaxTextTokens * 5));

    const auto a = model.tokenize_and_embed("add a red square in the top left");
    const auto b = model.tokenize_and_embed("add a red square in the top left");
    CHECK(a == b);
    CHECK(a.seq_len() == 8);
    CHECK_FALSE(a.truncated);
}

TEST_CASE("external text encoders are truncated to the cap") {
    struct Fixed : TextEncoder {
        int embed_dim() const override { return 5; }
        TextEmbedding encode(std::string_view text) const override {
            TextEmbedding e;
            e.embed_dim = 5;
            const int n = count_tokens(text);
            e.tokens.assign(static_cast<std::size_t>(n), 1);
            e.vectors.assign(static_cast<std::size_t>(n) * 5, 0.25);
            return e;
        }
    };
    Denoiser model(tiny_config());
    model.set_text_encoder(std::make_shared<Fixed>());
    std::string text;
    for (int i = 0; i < 90; ++i) text += "w ";
    const auto e = model.tokenize_and_embed(text);
    CHECK(e.seq_len() == kMaxTextTokens);
    CHECK(e.truncated);

    struct Wrong : Fixed {
        int embed_dim() const override { return 3; }
    };
    CHECK_THROWS_AS(model.set_text_encoder(std::make_shared<Wrong>()), Error);
}

TEST_CASE("condition dropout extremes") {
    const Denoiser model(tiny_config());
    std::mt19937_64 rng(1);
    ConditionBundle bundle{Tensor(3, 4, 4, 0.5), model.tokenize_and_embed("remove the cat"), false, false};
    const auto kept = apply_condition_dropout(bundle, 0.0, rng);
    CHECK_FALSE(kept.image_dropped);
    CHECK_FALSE(kept.text_dropped);
    CHECK(kept.image_cond == bundle.image_cond);
    CHECK(kept.text_cond == bundle.text_cond);
    const auto dropped = apply_condition_dropout(bundle, 1.0, rng);
    CHECK(dropped.image_dropped);
    CHECK(dropped.text_dropped);
    CHECK_THROWS_AS(apply_condition_dropout(bundle, 1.5, rng), Error);
}

TEST_CASE("condition dropout rate at p = 0.05") {
    std::mt19937_64 rng(derive_seed(2024, "dropout.stats"));
    int image = 0;
    int text = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto mask = draw_dropout_mask(0.05, rng);
        image += mask.image;
        text += mask.text;
    }
    CHECK(image >= 450);
    CHECK(image <= 550);
    CHECK(text >= 450);
    CHECK(text <= 550);
    // Frozen regression values for this seeded stream.
    CHECK(image == 503);
    CHECK(text == 514);
}

TEST_CASE("predict_noise shape, determinism and text dependence") {
    const Denoiser model(tiny_config());
    std::mt19937_64 rng(7);
    const auto x = random_tensor(rng, 3, 5, 6);
    const auto img = random_tensor(rng, 3, 5, 6);
    ConditionBundle bundle{img, model.tokenize_and_embed("make the red square blue"), false, false};
    const auto out = model.predict_noise(x, bundle, 12);
    CHECK(out.same_shape(x));
    CHECK(model.predict_noise(x, bundle, 12) == out);

    ConditionBundle other = bundle;
    other.text_cond = model.tokenize_and_embed("make the red square green");
    CHECK_FALSE(model.predict_noise(x, other, 12) == out);

    ConditionBundle reordered = bundle;
    reordered.text_cond = model.tokenize_and_embed("square red the make blue");
    CHECK_FALSE(model.predict_noise(x, reordered, 12) == out);

    CHECK_THROWS_AS(model.predict_noise(x, ConditionBundle{Tensor(3, 5, 5), bundle.text_cond}, 1), Error);
}

TEST_CASE("null-condition equivalence is bit-exact") {
    const Denoiser model(tiny_config());
    std::mt19937_64 rng(8);
    const auto x = random_tensor(rng, 3, 4, 4);
    const auto img = random_tensor(rng, 3, 4, 4);
    ConditionBundle dropped{img, model.tokenize_and_embed("add a cat"), false, true};
    ConditionBundle explicit_null{img, model.null_embedding(), false, false};
    CHECK(model.predict_noise(x, dropped, 3) == model.predict_noise(x, explicit_null, 3));

    ConditionBundle image_dropped{img, model.tokenize_and_embed("add a cat"), true, false};
    ConditionBundle zero_image{zeros_like(img), model.tokenize_and_embed("add a cat"), false, false};
    CHECK(model.predict_noise(x, image_dropped, 3) == model.predict_noise(x, zero_image, 3));
}

TEST_CASE("channel contract fails fast") {
    auto cfg = tiny_config();
    cfg.input_channels = 5;
    CHECK_THROWS_AS(Denoiser{cfg}, Error);
    cfg.input_channels = 6;
    CHECK_NOTHROW(Denoiser{cfg});
    const Denoiser model(cfg);
    CHECK(model.slices()[6].name == "in_w");
    CHECK(model.slices()[6].cols == 9 * 2 * cfg.latent_channels);
}

TEST_CASE("evaluation counter") {
    const Denoiser model(tiny_config());
    const Tensor x(3, 3, 3);
    ConditionBundle b{Tensor(3, 3, 3), model.null_embedding()};
    model.predict_noise(x, b, 0);
    model.predict_noise(x, b, 0);
    CHECK(model.evaluation_count() == 2);
}

TEST_CASE("im2col and col2im are adjoint") {
    std::mt19937_64 rng(12);
    const int c = 2, h = 4, w = 5;
    const auto x = oracle::random_vector(rng, static_cast<std::size_t>(c * h * w));
    const auto y = oracle::random_vector(rng, static_cast<std::size_t>(9 * c * h * w));
    std::vector<double> cols(y.size());
    im2col3x3(x, c, h, w, cols);
    std::vector<double> back(x.size(), 0.0);
    col2im3x3(y, c, h, w, back);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += cols[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("directional derivative of diffusion_loss through predict_noise") {
    Denoiser model(tiny_config());
    std::mt19937_64 rng(99);
    const auto x = random_tensor(rng, 3, 5, 4);
    const auto img = random_tensor(rng, 3, 5, 4);
    const auto eps = random_tensor(rng, 3, 5, 4);
    const std::string instruction = "move the blue circle from the top left to the bottom right";

    auto loss = [&](const Denoiser &m) {
        const auto text = m.tokenize_and_embed(instruction);
        return diffusion_loss(m.forward(x, img, text, 17, nullptr), eps);
    };

    Denoiser::Tape tape;
    const auto text = model.tokenize_and_embed(instruction);
    const auto out = model.forward(x, img, text, 17, &tape);
    Tensor grad_out = zeros_like(out);
    accumulate_distance_grad(eps, out, 1.0, grad_out);
    std::vector<double> grad(model.parameter_count(), 0.0);
    model.backward(tape, grad_out, grad);

    const double h = 1e-4;
    for (int dir = 0; dir < 10; ++dir) {
        const auto v = oracle::random_vector(rng, model.parameter_count());
        double analytic = 0;
        for (std::size_t i = 0; i < v.size(); ++i) analytic += grad[i] * v[i];
        Denoiser plus = model, minus = model;
        for (std::size_t i = 0; i < v.size(); ++i) {
            plus.parameters()[i] += h * v[i];
            minus.parameters()[i] -= h * v[i];
        }
        const double numeric = (loss(plus) - loss(minus)) / (2 * h);
        CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
    }

    // Input gradient, same oracle.
    Tensor grad_x;
    std::vector<double> scratch(model.parameter_count(), 0.0);
    model.backward(tape, grad_out, scratch, &grad_x);
    const auto v = random_tensor(rng, 3, 5, 4);
    double analytic = 0;
    for (std::size_t i = 0; i < v.size(); ++i) analytic += grad_x.data[i] * v.data[i];
    const auto lp = diffusion_loss(model.forward(axpy(x, h, v), img, text, 17, nullptr), eps);
    const auto lm = diffusion_loss(model.forward(axpy(x, -h, v), img, text, 17, nullptr), eps);
    CHECK(oracle::relative_error(analytic, (lp - lm) / (2 * h)) < 1e-4);
}
