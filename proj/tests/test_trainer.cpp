#include "doctest.h"
#include "oracles.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"
#include "rectedit/synth_world.hpp"
#include "rectedit/trainer.hpp"

#include <filesystem>
#include <random>

using namespace rectedit;
namespace fs = std::filesystem;

namespace {

std::vector<TrainingExample> tiny_dataset(int n, std::uint64_t seed = 3) {
    std::vector<TrainingExample> out;
    for (const auto &e : synth_world(n, seed, {8, 2, 0.0, 3})) {
        out.push_back({e.id, image_to_tensor(e.original), image_to_tensor(e.edited), e.instruction,
                       e.negatives.negatives});
    }
    return out;
}

TrainSetup tiny_setup() {
    TrainSetup s;
    s.model.base_width = 5;
    s.model.depth = 1;
    s.model.embed_dim = 6;
    s.model.cond_hidden = 6;
    s.model.time_dim = 4;
    s.model.vocab_size = 64;
    s.model.seed = 11;
    s.schedule = {50, 1e-4, 0.05};
    s.train.batch_size = 4;
    s.train.learning_rate = 1e-3;
    s.train.warmup_steps = 2;
    s.train.total_steps = 10;
    s.train.triplet.activation_step = 0;
    s.train.seed = 5;
    return s;
}

NoiseSchedule schedule_of(const TrainSetup &s) {
    return build_linear_schedule(s.schedule.num_timesteps, s.schedule.beta_start, s.schedule.beta_end);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("rectedit_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("train config defaults") {
    const TrainConfig c;
    CHECK(c.learning_rate == 1e-4);
    CHECK(c.weight_decay == 1e-2);
    CHECK(c.warmup_steps == 100);
    CHECK(c.total_steps == 10000);
    CHECK(c.dropout_p == 0.05);
    CHECK(c.triplet.margin == 5e-3);
    CHECK(c.triplet.weight == 1.0);
    CHECK(c.triplet.activation_step == 2000);
    CHECK_NOTHROW(c.validate());
    TrainConfig bad;
    bad.warmup_steps = bad.total_steps + 1;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("linear warmup then constant") {
    TrainConfig c;
    CHECK(learning_rate_at(c, 50) == doctest::Approx(0.5 * c.learning_rate).epsilon(1e-15));
    CHECK(learning_rate_at(c, 0) == 0.0);
    CHECK(learning_rate_at(c, 100) == c.learning_rate);
    CHECK(learning_rate_at(c, 5000) == c.learning_rate);
    c.warmup_steps = 0;
    CHECK(learning_rate_at(c, 0) == c.learning_rate);
}

TEST_CASE("train setup parsing") {
    const auto s = parse_train_setup({{"learning_rate", "0.01"}, {"model.depth", "3"}, {"schedule.num_timesteps", "200"}});
    CHECK(s.train.learning_rate == 0.01);
    CHECK(s.model.depth == 3);
    CHECK(s.schedule.num_timesteps == 200);
    CHECK(render_train_setup(parse_train_setup(render_train_setup(s))) == render_train_setup(s));
    try {
        parse_train_setup({{"learning_rate", "-1"}, {"lerning_rate", "1"}, {"batch_size", "x"}});
        FAIL("expected config error");
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::config);
        const std::string msg = e.what();
        CHECK(msg.find("lerning_rate") != std::string::npos);
        CHECK(msg.find("batch_size") != std::string::npos);
        CHECK(msg.find("learning_rate:") != std::string::npos);
    }
}

TEST_CASE("gate: l_total is re-derivable from logged fields") {
    auto setup = tiny_setup();
    setup.train.triplet.activation_step = 3;
    setup.train.triplet.weight = 0.7;
    const auto data = tiny_dataset(8);
    const auto schedule = schedule_of(setup);
    Denoiser model(setup.model);
    AdamW opt(model.parameter_count(), 0.9, 0.999, 1e-8);
    for (std::int64_t step = 0; step < 6; ++step) {
        const auto idx = batch_indices(data.size(), setup.train.batch_size, setup.train.seed, step);
        std::vector<TrainingExample> batch;
        for (auto i : idx) batch.push_back(data[i]);
        const auto m = train_step(batch, model, schedule, setup.train, step, opt);
        const double gate = step >= 3 ? 0.7 : 0.0;
        CHECK(std::abs(m.l_total - (m.l_train + gate * m.l_triplet)) <= 1e-9);
        CHECK(m.l_triplet >= 0.0);
        CHECK(m.lr == doctest::Approx(learning_rate_at(setup.train, step)));
        if (step < 3) CHECK(m.l_total == m.l_train);
    }
}

TEST_CASE("non-contrastive steps skip the negative branch") {
    auto setup = tiny_setup();
    setup.train.use_contrastive = false;
    auto data = tiny_dataset(4);
    for (auto &d : data) d.negatives.clear();
    const auto schedule = schedule_of(setup);
    Denoiser model(setup.model);
    AdamW opt(model.parameter_count(), 0.9, 0.999, 1e-8);
    int negative_probes = 0;
    const auto m = train_step(data, model, schedule, setup.train, 0, opt,
                              [&](const BranchProbe &p) { negative_probes += p.negative; });
    CHECK(negative_probes == 0);
    CHECK(m.l_triplet == 0.0);
    CHECK(m.evaluations == data.size());

    setup.train.use_contrastive = true;
    try {
        train_step(data, model, schedule, setup.train, 1, opt);
        FAIL("expected missing negatives");
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::missing_negatives);
    }
}

TEST_CASE("positive and negative branches share x_t, t, noise and dropout") {
    auto setup = tiny_setup();
    setup.train.dropout_p = 0.5;  // exercise dropped conditions too
    setup.train.batch_size = 8;
    const auto data = tiny_dataset(8);
    const auto schedule = schedule_of(setup);
    Denoiser model(setup.model);
    for (std::int64_t step = 0; step < 4; ++step) {
        std::map<std::size_t, BranchProbe> pos;
        std::map<std::size_t, std::vector<double>> pos_x;
        int pairs = 0, dropped_text = 0;
        const auto draws = draw_step(data, schedule, setup.train, step);
        const auto lg = loss_and_grad(data, draws, model, schedule, setup.train, step, [&](const BranchProbe &p) {
            if (!p.negative) {
                pos[p.sample] = p;
                pos_x[p.sample] = p.x_t->data;
                return;
            }
            ++pairs;
            const auto &q = pos.at(p.sample);
            CHECK(q.t == p.t);
            CHECK(pos_x.at(p.sample) == p.x_t->data);
            CHECK(q.dropout.image == p.dropout.image);
            CHECK(q.dropout.text == p.dropout.text);
            CHECK(q.epsilon->data == p.epsilon->data);
            if (p.dropout.text) {
                ++dropped_text;
                CHECK(p.text->is_null());
                CHECK(q.text->is_null());
            } else {
                CHECK(*p.text != *q.text);
            }
        });
        CHECK(pairs == 8);
        int expected_skips = 0;
        for (const auto &d : draws) expected_skips += d.dropout.text;
        CHECK(lg.metrics.skipped_triplets == expected_skips);
        CHECK(dropped_text == expected_skips);
    }
}

TEST_CASE("gradient of L_total matches central differences") {
    auto setup = tiny_setup();
    setup.train.triplet.margin = 0.5;  // keep every hinge active, away from the kink
    setup.train.dropout_p = 0.0;
    const auto data = tiny_dataset(3);
    const auto schedule = schedule_of(setup);
    Denoiser model(setup.model);
    const auto draws = draw_step(data, schedule, setup.train, 4);
    const auto lg = loss_and_grad(data, draws, model, schedule, setup.train, 4);
    REQUIRE(lg.metrics.l_triplet > 0.0);
    std::mt19937_64 rng(9);
    const std::vector<double> base(model.parameters().begin(), model.parameters().end());
    for (int dir = 0; dir < 5; ++dir) {
        const auto d = oracle::random_vector(rng, base.size());
        double analytic = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) analytic += lg.grad[i] * d[i];
        const double h = 1e-5;
        auto at = [&](double s) {
            Denoiser probe = model;
            for (std::size_t i = 0; i < d.size(); ++i) probe.parameters()[i] = base[i] + s * d[i];
            return loss_and_grad(data, draws, probe, schedule, setup.train, 4).metrics.l_total;
        };
        const double numeric = (at(h) - at(-h)) / (2 * h);
        CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("training is deterministic under a seed") {
    const auto setup = tiny_setup();
    const auto data = tiny_dataset(8);
    const auto schedule = schedule_of(setup);
    auto run = [&]() {
        Denoiser model(setup.model);
        AdamW opt(model.parameter_count(), 0.9, 0.999, 1e-8);
        std::vector<std::string> log;
        for (std::int64_t step = 0; step < 4; ++step) {
            std::vector<TrainingExample> batch;
            for (auto i : batch_indices(data.size(), setup.train.batch_size, setup.train.seed, step)) {
                batch.push_back(data[i]);
            }
            log.push_back(metrics_to_json(train_step(batch, model, schedule, setup.train, step, opt)));
        }
        return std::make_pair(log, std::vector<double>(model.parameters().begin(), model.parameters().end()));
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(metrics_from_json(a.first[2]).l_total == metrics_from_json(a.first[2]).l_total);
    CHECK(metrics_to_json(metrics_from_json(a.first[2])) == a.first[2]);
}

TEST_CASE("train_step requires step < total_steps") {
    auto setup = tiny_setup();
    const auto data = tiny_dataset(4);
    const auto schedule = schedule_of(setup);
    Denoiser model(setup.model);
    AdamW opt(model.parameter_count(), 0.9, 0.999, 1e-8);
    CHECK_THROWS_AS(train_step(data, model, schedule, setup.train, setup.train.total_steps, opt), Error);
}

TEST_CASE("fit writes checkpoints and resumes exactly") {
    TempDir dir("fit");
    auto setup = tiny_setup();
    setup.train.checkpoint_every = 5;
    const auto data = tiny_dataset(8);
    const auto schedule = schedule_of(setup);

    SUBCASE("zero steps leaves the initial checkpoint") {
        auto zero = setup;
        zero.train.total_steps = 0;
        zero.train.warmup_steps = 0;
        Denoiser model(zero.model);
        const auto r = fit(zero, data, model, schedule, {(dir.path / "zero").string(), false, {}});
        const auto ckpt = load_checkpoint(r.checkpoint_path);
        CHECK(ckpt.step == 0);
        CHECK(ckpt.params == std::vector<double>(model.parameters().begin(), model.parameters().end()));
        CHECK(read_text_file((dir.path / "zero/metrics.jsonl").string()).empty());
    }

    SUBCASE("interrupted and resumed equals straight through") {
        Denoiser straight(setup.model);
        fit(setup, data, straight, schedule, {(dir.path / "a").string(), false, {}});

        auto first_half = setup;
        first_half.train.total_steps = 5;
        Denoiser part(setup.model);
        fit(first_half, data, part, schedule, {(dir.path / "b").string(), false, {}});
        Denoiser resumed(setup.model);
        const auto r = fit(setup, data, resumed, schedule, {(dir.path / "b").string(), true, {}});
        CHECK(r.first_step == 5);
        CHECK(r.final_step == 10);
        CHECK(std::vector<double>(resumed.parameters().begin(), resumed.parameters().end()) ==
              std::vector<double>(straight.parameters().begin(), straight.parameters().end()));
        CHECK(read_text_file((dir.path / "a/metrics.jsonl").string()) ==
              read_text_file((dir.path / "b/metrics.jsonl").string()));
    }
}

TEST_CASE("checkpoint round trip and version check") {
    TempDir dir("ckpt");
    const auto setup = tiny_setup();
    Denoiser model(setup.model);
    Checkpoint c;
    c.model = setup.model;
    const auto schedule = schedule_of(setup);
    c.betas.assign(schedule.betas().begin(), schedule.betas().end());
    c.step = 3;
    c.params.assign(model.parameters().begin(), model.parameters().end());
    c.optimizer_steps = 3;
    c.adam_m.assign(c.params.size(), 0.25);
    c.adam_v.assign(c.params.size(), 1e-300);
    c.setup = render_train_setup(setup);
    const auto path = (dir.path / "m.ckpt").string();
    save_checkpoint(c, path);
    const auto back = load_checkpoint(path);
    CHECK(back.params == c.params);
    CHECK(back.adam_v == c.adam_v);
    CHECK(back.betas == c.betas);
    CHECK(back.model == c.model);
    CHECK(back.setup == c.setup);
    const auto restored = model_from_checkpoint(back);
    CHECK(std::vector<double>(restored.parameters().begin(), restored.parameters().end()) == c.params);

    auto text = read_text_file(path);
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 7");
    write_text_file(path, text);
    try {
        load_checkpoint(path);
        FAIL("expected version error");
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::format_version);
    }
}

TEST_CASE("batch indices depend only on seed and step") {
    CHECK(batch_indices(100, 8, 1, 4) == batch_indices(100, 8, 1, 4));
    CHECK(batch_indices(100, 8, 1, 4) != batch_indices(100, 8, 1, 5));
    for (auto i : batch_indices(10, 32, 2, 0)) CHECK(i < 10);
    CHECK(batch_indices(10, 32, 2, 0).size() == 32);
}

TEST_CASE("joint condition dropout is off by default and drops both when set") {
    auto setup = tiny_setup();
    CHECK(setup.train.dropout_joint_p == 0.0);
    const auto data = tiny_dataset(6);
    const auto schedule = schedule_of(setup);
    setup.train.dropout_p = 0.0;
    setup.train.dropout_joint_p = 1.0;
    for (const auto &d : draw_step(data, schedule, setup.train, 1)) {
        CHECK(d.dropout.image);
        CHECK(d.dropout.text);
    }
    auto values = render_train_setup(setup);
    CHECK(parse_train_setup(values).train.dropout_joint_p == 1.0);
    values["dropout_joint_p"] = "1.5";
    CHECK_THROWS_AS(parse_train_setup(values), Error);
}
