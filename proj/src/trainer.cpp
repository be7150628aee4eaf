#include "rectedit/trainer.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

namespace rectedit {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
    require(batch_size >= 1, ErrorCode::config, "batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorCode::config, "learning_rate must be positive");
    require(weight_decay >= 0.0, ErrorCode::config, "weight_decay must be non-negative");
    require(warmup_steps >= 0 && total_steps >= 0, ErrorCode::config, "step counts must be non-negative");
    require(warmup_steps <= total_steps || total_steps == 0, ErrorCode::config, "warmup_steps must be <= total_steps");
    require(dropout_p >= 0.0 && dropout_p <= 1.0, ErrorCode::config, "dropout_p must be in [0, 1]");
    require(dropout_joint_p >= 0.0 && dropout_joint_p <= 1.0, ErrorCode::config, "dropout_joint_p must be in [0, 1]");
    require(checkpoint_every >= 0, ErrorCode::config, "checkpoint_every must be >= 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0,
            ErrorCode::config, "invalid Adam constants");
    try {
        triplet.validate();
    } catch (const Error &e) {
        fail(ErrorCode::config, e.what());
    }
}

TrainSetup parse_train_setup(const KeyValues &values) {
    ConfigReader r(values);
    TrainSetup s;
    auto &t = s.train;
    t.batch_size = static_cast<int>(r.get_int("batch_size", t.batch_size));
    t.learning_rate = r.get_double("learning_rate", t.learning_rate);
    t.weight_decay = r.get_double("weight_decay", t.weight_decay);
    t.warmup_steps = r.get_int("warmup_steps", t.warmup_steps);
    t.total_steps = r.get_int("total_steps", t.total_steps);
    t.dropout_p = r.get_double("dropout_p", t.dropout_p);
    t.dropout_joint_p = r.get_double("dropout_joint_p", t.dropout_joint_p);
    t.triplet.margin = r.get_double("triplet.margin", t.triplet.margin);
    t.triplet.weight = r.get_double("triplet.weight", t.triplet.weight);
    t.triplet.activation_step = r.get_int("triplet.activation_step", t.triplet.activation_step);
    t.seed = r.get_uint("seed", t.seed);
    t.use_rectified = r.get_bool("use_rectified", t.use_rectified);
    t.use_contrastive = r.get_bool("use_contrastive", t.use_contrastive);
    t.checkpoint_every = r.get_int("checkpoint_every", t.checkpoint_every);
    t.adam_beta1 = r.get_double("adam_beta1", t.adam_beta1);
    t.adam_beta2 = r.get_double("adam_beta2", t.adam_beta2);
    t.adam_eps = r.get_double("adam_eps", t.adam_eps);

    auto &m = s.model;
    m.base_width = static_cast<int>(r.get_int("model.base_width", m.base_width));
    m.depth = static_cast<int>(r.get_int("model.depth", m.depth));
    m.embed_dim = static_cast<int>(r.get_int("model.embed_dim", m.embed_dim));
    m.vocab_size = static_cast<int>(r.get_int("model.vocab_size", m.vocab_size));
    m.time_dim = static_cast<int>(r.get_int("model.time_dim", m.time_dim));
    m.cond_hidden = static_cast<int>(r.get_int("model.cond_hidden", m.cond_hidden));
    m.seed = derive_seed(t.seed, "model.init");

    auto &sc = s.schedule;
    sc.num_timesteps = static_cast<int>(r.get_int("schedule.num_timesteps", sc.num_timesteps));
    sc.beta_start = r.get_double("schedule.beta_start", sc.beta_start);
    sc.beta_end = r.get_double("schedule.beta_end", sc.beta_end);

    if (t.batch_size < 1) r.invalid("batch_size", "must be >= 1");
    if (!(t.learning_rate > 0)) r.invalid("learning_rate", "must be positive");
    if (t.weight_decay < 0) r.invalid("weight_decay", "must be non-negative");
    if (t.warmup_steps < 0) r.invalid("warmup_steps", "must be non-negative");
    if (t.total_steps < 0) r.invalid("total_steps", "must be non-negative");
    if (t.total_steps > 0 && t.warmup_steps > t.total_steps) r.invalid("warmup_steps", "exceeds total_steps");
    if (t.dropout_p < 0 || t.dropout_p > 1) r.invalid("dropout_p", "must be in [0, 1]");
    if (t.dropout_joint_p < 0 || t.dropout_joint_p > 1) r.invalid("dropout_joint_p", "must be in [0, 1]");
    if (t.triplet.margin < 0) r.invalid("triplet.margin", "must be non-negative");
    if (t.triplet.weight < 0) r.invalid("triplet.weight", "must be non-negative");
    if (t.triplet.activation_step < 0) r.invalid("triplet.activation_step", "must be non-negative");
    if (t.checkpoint_every < 0) r.invalid("checkpoint_every", "must be non-negative");
    if (m.base_width < 1) r.invalid("model.base_width", "must be >= 1");
    if (m.depth < 1) r.invalid("model.depth", "must be >= 1");
    if (m.embed_dim < 1) r.invalid("model.embed_dim", "must be >= 1");
    if (m.vocab_size < 1) r.invalid("model.vocab_size", "must be >= 1");
    if (m.time_dim < 2 || m.time_dim % 2) r.invalid("model.time_dim", "must be even and >= 2");
    if (m.cond_hidden < 1) r.invalid("model.cond_hidden", "must be >= 1");
    if (sc.num_timesteps < 1) r.invalid("schedule.num_timesteps", "must be >= 1");
    if (!(sc.beta_start > 0 && sc.beta_end < 1 && sc.beta_start <= sc.beta_end)) {
        r.invalid("schedule.beta_start", "betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    r.finish();
    return s;
}

namespace {

std::string number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

KeyValues render_train_setup(const TrainSetup &s) {
    const auto &t = s.train;
    const auto &m = s.model;
    return {
        {"batch_size", std::to_string(t.batch_size)},
        {"learning_rate", number(t.learning_rate)},
        {"weight_decay", number(t.weight_decay)},
        {"warmup_steps", std::to_string(t.warmup_steps)},
        {"total_steps", std::to_string(t.total_steps)},
        {"dropout_p", number(t.dropout_p)},
        {"dropout_joint_p", number(t.dropout_joint_p)},
        {"triplet.margin", number(t.triplet.margin)},
        {"triplet.weight", number(t.triplet.weight)},
        {"triplet.activation_step", std::to_string(t.triplet.activation_step)},
        {"seed", std::to_string(t.seed)},
        {"use_rectified", t.use_rectified ? "true" : "false"},
        {"use_contrastive", t.use_contrastive ? "true" : "false"},
        {"checkpoint_every", std::to_string(t.checkpoint_every)},
        {"adam_beta1", number(t.adam_beta1)},
        {"adam_beta2", number(t.adam_beta2)},
        {"adam_eps", number(t.adam_eps)},
        {"model.base_width", std::to_string(m.base_width)},
        {"model.depth", std::to_string(m.depth)},
        {"model.embed_dim", std::to_string(m.embed_dim)},
        {"model.vocab_size", std::to_string(m.vocab_size)},
        {"model.time_dim", std::to_string(m.time_dim)},
        {"model.cond_hidden", std::to_string(m.cond_hidden)},
        {"schedule.num_timesteps", std::to_string(s.schedule.num_timesteps)},
        {"schedule.beta_start", number(s.schedule.beta_start)},
        {"schedule.beta_end", number(s.schedule.beta_end)},
    };
}

double learning_rate_at(const TrainConfig &config, std::int64_t step) {
    if (config.warmup_steps <= 0 || step >= config.warmup_steps) {
        return config.learning_rate;
    }
    return config.learning_rate * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
}

std::string metrics_to_json(const StepMetrics &m) {
    json j = {{"step", m.step},       {"l_train", m.l_train},   {"l_triplet", m.l_triplet},
              {"l_total", m.l_total}, {"d_pos", m.d_pos},       {"d_neg", m.d_neg},
              {"grad_norm", m.grad_norm}, {"lr", m.lr},         {"skipped_triplets", m.skipped_triplets},
              {"evaluations", m.evaluations}};
    return j.dump();
}

StepMetrics metrics_from_json(const std::string &line) {
    try {
        const auto j = json::parse(line);
        StepMetrics m;
        m.step = j.at("step").get<std::int64_t>();
        m.l_train = j.at("l_train").get<double>();
        m.l_triplet = j.at("l_triplet").get<double>();
        m.l_total = j.at("l_total").get<double>();
        m.d_pos = j.at("d_pos").get<double>();
        m.d_neg = j.at("d_neg").get<double>();
        m.grad_norm = j.at("grad_norm").get<double>();
        m.lr = j.at("lr").get<double>();
        m.skipped_triplets = j.at("skipped_triplets").get<int>();
        m.evaluations = j.at("evaluations").get<std::uint64_t>();
        return m;
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, std::string("bad metrics record: ") + e.what());
    }
}

std::vector<SampleDraw> draw_step(std::span<const TrainingExample> batch, const NoiseSchedule &schedule,
                                  const TrainConfig &config, std::int64_t step) {
    std::mt19937_64 rng(derive_seed(config.seed, "train.step", static_cast<std::uint64_t>(step)));
    std::uniform_int_distribution<int> timestep(0, schedule.num_timesteps() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<SampleDraw> draws;
    draws.reserve(batch.size());
    for (const auto &ex : batch) {
        SampleDraw d;
        d.t = timestep(rng);
        d.epsilon = zeros_like(ex.edited);
        for (auto &v : d.epsilon.data) v = normal(rng);
        d.dropout = draw_dropout_mask(config.dropout_p, rng, config.dropout_joint_p);
        if (!ex.negatives.empty()) {
            d.negative = std::uniform_int_distribution<int>(0, static_cast<int>(ex.negatives.size()) - 1)(rng);
        }
        draws.push_back(std::move(d));
    }
    return draws;
}

LossAndGrad loss_and_grad(std::span<const TrainingExample> batch, std::span<const SampleDraw> draws,
                          const Denoiser &model, const NoiseSchedule &schedule, const TrainConfig &config,
                          std::int64_t step, const BranchObserver &observer) {
    require(!batch.empty(), ErrorCode::empty_list, "empty training batch");
    require(batch.size() == draws.size(), ErrorCode::size_mismatch, "one draw per sample is required");
    const auto evaluations_before = model.evaluation_count();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const bool gate = triplet_gate_open(config.triplet, step);

    struct Branches {
        Tensor eps_pos;
        Tensor eps_neg;
        Denoiser::Tape tape_pos;
        Denoiser::Tape tape_neg;
        bool has_triplet = false;
        TripletTerms terms;
    };
    std::vector<Branches> branches(batch.size());

    LossAndGrad out;
    auto &m = out.metrics;
    m.step = step;
    m.lr = learning_rate_at(config, step);
    int triplet_count = 0;
    double d_pos_sum = 0.0, d_neg_sum = 0.0, triplet_sum = 0.0, l_train = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto &ex = batch[i];
        const auto &d = draws[i];
        auto &b = branches[i];
        if (config.use_contrastive && ex.negatives.empty()) {
            fail(ErrorCode::missing_negatives, "sample " + ex.id + " has no negatives");
        }
        const Tensor x_t = add_noise(ex.edited, d.epsilon, d.t, schedule);
        const Tensor image = d.dropout.image ? zeros_like(ex.original) : ex.original;
        const TextEmbedding text_pos = d.dropout.text ? model.null_embedding() : model.tokenize_and_embed(ex.instruction);
        b.eps_pos = model.forward(x_t, image, text_pos, d.t, &b.tape_pos);
        if (observer) observer({i, false, d.t, &x_t, &d.epsilon, d.dropout, &text_pos});
        const double d_pos = pairwise_distance(d.epsilon, b.eps_pos);
        l_train += d_pos * inv_batch;
        if (!config.use_contrastive) {
            d_pos_sum += d_pos;
            continue;
        }
        const auto &negative = ex.negatives[static_cast<std::size_t>(d.negative)];
        const TextEmbedding text_neg = d.dropout.text ? model.null_embedding() : model.tokenize_and_embed(negative);
        b.eps_neg = model.forward(x_t, image, text_neg, d.t, &b.tape_neg);
        if (observer) observer({i, true, d.t, &x_t, &d.epsilon, d.dropout, &text_neg});
        if (d.dropout.text) {
            ++m.skipped_triplets;
            continue;
        }
        b.has_triplet = true;
        b.terms = triplet_terms(d.epsilon, b.eps_pos, b.eps_neg, config.triplet);
        ++triplet_count;
        d_pos_sum += b.terms.d_pos;
        d_neg_sum += b.terms.d_neg;
        triplet_sum += b.terms.loss;
    }

    m.l_train = l_train;
    if (config.use_contrastive) {
        m.l_triplet = triplet_count > 0 ? triplet_sum / triplet_count : 0.0;
        m.d_pos = triplet_count > 0 ? d_pos_sum / triplet_count : 0.0;
        m.d_neg = triplet_count > 0 ? d_neg_sum / triplet_count : 0.0;
    } else {
        m.d_pos = d_pos_sum * inv_batch;
    }
    m.l_total = total_loss(m.l_train, m.l_triplet, config.triplet, step);

    out.grad.assign(model.parameter_count(), 0.0);
    const double triplet_scale =
        (config.use_contrastive && gate && triplet_count > 0) ? config.triplet.weight / triplet_count : 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto &eps = draws[i].epsilon;
        auto &b = branches[i];
        Tensor grad_pos = zeros_like(eps);
        accumulate_distance_grad(eps, b.eps_pos, inv_batch, grad_pos);
        const bool active = b.has_triplet && b.terms.active && triplet_scale > 0.0;
        if (active) {
            accumulate_distance_grad(eps, b.eps_pos, triplet_scale, grad_pos);
            Tensor grad_neg = zeros_like(eps);
            accumulate_distance_grad(eps, b.eps_neg, -triplet_scale, grad_neg);
            model.backward(b.tape_neg, grad_neg, out.grad);
        }
        model.backward(b.tape_pos, grad_pos, out.grad);
    }
    double sq = 0.0;
    for (double g : out.grad) sq += g * g;
    m.grad_norm = std::sqrt(sq);
    m.evaluations = model.evaluation_count() - evaluations_before;
    return out;
}

AdamW::AdamW(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr, double weight_decay) {
    require(params.size() == grad.size() && params.size() == m_.size(), ErrorCode::size_mismatch,
            "optimizer state does not match the parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= lr * (weight_decay * params[i] + m_hat / (std::sqrt(v_hat) + eps_));
    }
}

void AdamW::restore(std::int64_t t, std::vector<double> m, std::vector<double> v) {
    require(m.size() == m_.size() && v.size() == v_.size(), ErrorCode::size_mismatch, "optimizer state size mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

StepMetrics train_step(std::span<const TrainingExample> batch, Denoiser &model, const NoiseSchedule &schedule,
                       const TrainConfig &config, std::int64_t step, AdamW &optimizer,
                       const BranchObserver &observer) {
    require(step >= 0 && (step < config.total_steps || config.total_steps == 0), ErrorCode::invariant,
            "step is outside the configured run");
    const auto draws = draw_step(batch, schedule, config, step);
    auto result = loss_and_grad(batch, draws, model, schedule, config, step, observer);
    optimizer.step(model.parameters(), result.grad, result.metrics.lr, config.weight_decay);
    return result.metrics;
}

namespace {

std::string pack_doubles(std::span<const double> values) {
    static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");
    std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
    if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
    return base64_encode(bytes);
}

std::vector<double> unpack_doubles(const std::string &text) {
    const auto bytes = base64_decode(text);
    require(bytes.size() % sizeof(double) == 0, ErrorCode::decode, "checkpoint blob has a partial value");
    std::vector<double> values(bytes.size() / sizeof(double));
    if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

}  // namespace

void save_checkpoint(const Checkpoint &c, const std::string &path) {
    json j;
    j["format"] = "rectedit-checkpoint";
    j["version"] = kCheckpointVersion;
    j["model"] = {{"latent_channels", c.model.latent_channels}, {"base_width", c.model.base_width},
                  {"depth", c.model.depth},                     {"embed_dim", c.model.embed_dim},
                  {"seed", c.model.seed},                       {"vocab_size", c.model.vocab_size},
                  {"time_dim", c.model.time_dim},               {"cond_hidden", c.model.cond_hidden},
                  {"input_channels", c.model.input_channels}};
    j["betas"] = c.betas;
    j["step"] = c.step;
    j["setup"] = c.setup;
    j["params"] = pack_doubles(c.params);
    j["optimizer"] = {{"steps", c.optimizer_steps}, {"m", pack_doubles(c.adam_m)}, {"v", pack_doubles(c.adam_v)}};
    // Write then rename so an interrupted save never leaves a torn checkpoint.
    const std::string tmp = path + ".tmp";
    write_text_file(tmp, j.dump(1) + "\n");
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string &path) {
    const auto text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, "checkpoint " + path + " is not JSON: " + e.what());
    }
    try {
        require(j.value("format", std::string()) == "rectedit-checkpoint", ErrorCode::format_version,
                path + " is not a checkpoint");
        require(j.at("version").get<int>() == kCheckpointVersion, ErrorCode::format_version,
                "unsupported checkpoint version in " + path);
        Checkpoint c;
        const auto &m = j.at("model");
        c.model.latent_channels = m.at("latent_channels").get<int>();
        c.model.base_width = m.at("base_width").get<int>();
        c.model.depth = m.at("depth").get<int>();
        c.model.embed_dim = m.at("embed_dim").get<int>();
        c.model.seed = m.at("seed").get<std::uint64_t>();
        c.model.vocab_size = m.at("vocab_size").get<int>();
        c.model.time_dim = m.at("time_dim").get<int>();
        c.model.cond_hidden = m.at("cond_hidden").get<int>();
        c.model.input_channels = m.at("input_channels").get<int>();
        c.betas = j.at("betas").get<std::vector<double>>();
        c.step = j.at("step").get<std::int64_t>();
        c.setup = j.at("setup").get<KeyValues>();
        c.params = unpack_doubles(j.at("params").get<std::string>());
        c.optimizer_steps = j.at("optimizer").at("steps").get<std::int64_t>();
        c.adam_m = unpack_doubles(j.at("optimizer").at("m").get<std::string>());
        c.adam_v = unpack_doubles(j.at("optimizer").at("v").get<std::string>());
        return c;
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, "checkpoint " + path + " is incomplete: " + e.what());
    }
}

Denoiser model_from_checkpoint(const Checkpoint &c) {
    Denoiser model(c.model);
    require(model.parameter_count() == c.params.size(), ErrorCode::decode,
            "checkpoint holds " + std::to_string(c.params.size()) + " parameters, model expects " +
                std::to_string(model.parameter_count()));
    std::copy(c.params.begin(), c.params.end(), model.parameters().begin());
    return model;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch_size, std::uint64_t seed,
                                       std::int64_t step) {
    require(dataset_size > 0, ErrorCode::empty_list, "empty dataset");
    std::mt19937_64 rng(derive_seed(seed, "train.batch", static_cast<std::uint64_t>(step)));
    const auto b = static_cast<std::size_t>(batch_size);
    std::vector<std::size_t> out;
    if (b > dataset_size) {
        std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
        for (std::size_t i = 0; i < b; ++i) out.push_back(pick(rng));
        return out;
    }
    std::vector<std::size_t> all(dataset_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, dataset_size - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(b);
    return all;
}

FitResult fit(const TrainSetup &setup, std::span<const TrainingExample> dataset, Denoiser &model,
              const NoiseSchedule &schedule, const FitOptions &options) {
    const auto &config = setup.train;
    config.validate();
    require(!dataset.empty(), ErrorCode::empty_list, "training dataset is empty");
    require(!options.out_dir.empty(), ErrorCode::config, "fit needs an output directory");
    fs::create_directories(options.out_dir);
    const std::string ckpt_path = (fs::path(options.out_dir) / "model.ckpt").string();
    const std::string metrics_path = (fs::path(options.out_dir) / "metrics.jsonl").string();

    AdamW optimizer(model.parameter_count(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    FitResult result;
    result.checkpoint_path = ckpt_path;

    if (options.resume && fs::exists(ckpt_path)) {
        const auto c = load_checkpoint(ckpt_path);
        require(c.model == model.config(), ErrorCode::config, "checkpoint model config differs from the run config");
        require(c.betas == std::vector<double>(schedule.betas().begin(), schedule.betas().end()), ErrorCode::config,
                "checkpoint noise schedule differs from the run config");
        require(c.params.size() == model.parameter_count(), ErrorCode::decode, "checkpoint parameter count mismatch");
        std::copy(c.params.begin(), c.params.end(), model.parameters().begin());
        optimizer.restore(c.optimizer_steps, c.adam_m, c.adam_v);
        result.first_step = c.step;
    }

    // Keep only the log lines the checkpoint covers.
    std::string kept;
    if (result.first_step > 0 && fs::exists(metrics_path)) {
        std::ifstream in(metrics_path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && metrics_from_json(line).step < result.first_step) kept += line + "\n";
        }
    }
    write_text_file(metrics_path, kept);
    std::ofstream log(metrics_path, std::ios::app);
    require(static_cast<bool>(log), ErrorCode::unreadable_source, "cannot write " + metrics_path);

    const KeyValues rendered = render_train_setup(setup);
    auto snapshot = [&](std::int64_t step) {
        Checkpoint c;
        c.model = model.config();
        c.betas.assign(schedule.betas().begin(), schedule.betas().end());
        c.step = step;
        c.params.assign(model.parameters().begin(), model.parameters().end());
        c.optimizer_steps = optimizer.steps();
        c.adam_m = optimizer.first_moment();
        c.adam_v = optimizer.second_moment();
        c.setup = rendered;
        log.flush();
        save_checkpoint(c, ckpt_path);
    };

    std::vector<TrainingExample> batch;
    for (std::int64_t step = result.first_step; step < config.total_steps; ++step) {
        batch.clear();
        for (auto idx : batch_indices(dataset.size(), config.batch_size, config.seed, step)) {
            batch.push_back(dataset[idx]);
        }
        const auto metrics = train_step(batch, model, schedule, config, step, optimizer);
        log << metrics_to_json(metrics) << '\n';
        result.metrics.push_back(metrics);
        if (options.on_step) options.on_step(metrics);
        if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && step + 1 < config.total_steps) {
            snapshot(step + 1);
        }
    }
    result.final_step = std::max(result.first_step, config.total_steps);
    snapshot(result.final_step);
    return result;
}

}  // namespace rectedit
