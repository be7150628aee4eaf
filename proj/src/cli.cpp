#include "rectedit/cli.hpp"

#include "rectedit/config_file.hpp"
#include "rectedit/dataset_builder.hpp"
#include "rectedit/error.hpp"
#include "rectedit/eval_harness.hpp"
#include "rectedit/hashing.hpp"
#include "rectedit/inference.hpp"
#include "rectedit/synth_world.hpp"
#include "rectedit/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef RECTEDIT_VERSION
#define RECTEDIT_VERSION "0.0.0"
#endif

namespace rectedit {

using nlohmann::json;
namespace fs = std::filesystem;

const char *code_version() { return RECTEDIT_VERSION; }

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    int verbosity = 0;
    bool quiet = false;
};

void write_provenance(const fs::path &path, const std::string &command, const std::string &config_hash,
                      std::uint64_t seed, const json &inputs = json::object()) {
    json j = {{"command", command},
              {"code_version", code_version()},
              {"config_hash", config_hash},
              {"seed", seed},
              {"inputs", inputs}};
    write_text_file(path.string(), j.dump(1) + "\n");
}

std::string hash_file(const std::string &path) { return sha256_hex(read_file_bytes(path)); }

void add_guidance_flags(CLI::App *cmd, GuidanceConfig &g) {
    cmd->add_option("--text-scale", g.text_scale, "Text guidance scale")->capture_default_str();
    cmd->add_option("--image-scale", g.image_scale, "Image guidance scale")->capture_default_str();
    cmd->add_option("--steps", g.num_steps, "DDIM sampling steps")->capture_default_str();
    cmd->add_option("--resize", g.resize_shorter_side, "Shorter-side working resolution")->capture_default_str();
    cmd->add_flag("!--no-clip", g.clip_x0, "Disable clamping of the clean-image estimate");
}

json guidance_json(const GuidanceConfig &g) {
    return {{"text_scale", g.text_scale},
            {"image_scale", g.image_scale},
            {"num_steps", g.num_steps},
            {"resize_shorter_side", g.resize_shorter_side},
            {"clip_x0", g.clip_x0}};
}

struct LoadedModel {
    Checkpoint checkpoint;
    Denoiser model;
    NoiseSchedule schedule;
};

LoadedModel load_model(const std::string &path) {
    auto ckpt = load_checkpoint(path);
    Denoiser model = model_from_checkpoint(ckpt);
    NoiseSchedule schedule(ckpt.betas);
    return {std::move(ckpt), std::move(model), std::move(schedule)};
}

// ---- build-data

struct BuildArgs {
    std::string config;
    std::string out;
    std::string mock_vlm;
    std::string preset;
};

int run_build_data(const BuildArgs &a, const Common &common, std::ostream &out) {
    auto values = load_key_values(a.config);
    if (!a.preset.empty()) values["preset"] = a.preset;
    if (common.seed) values["seed"] = std::to_string(*common.seed);
    auto config = parse_build_config(values);
    fs::create_directories(a.out);

    std::vector<SynthEdit> truth;
    if (config.sources.empty()) {
        auto synth = generate_synth_sources(config, a.out);
        config.sources = synth.dirs;
        config.quotas = config.resolved_quotas();
        truth = std::move(synth.edits);
    }

    std::shared_ptr<VlmClient> client;
    if (a.mock_vlm == "synth") {
        require(!truth.empty(), ErrorCode::config, "--mock-vlm synth needs generated synth sources (leave sources unset)");
        client = std::make_shared<SynthOracleVlm>(truth);
    } else if (!a.mock_vlm.empty()) {
        client = std::make_shared<FixtureVlmClient>(a.mock_vlm);
    } else if (!config.vlm_endpoint.empty()) {
        auto http = std::make_shared<HttpVlmClient>(config.vlm_endpoint, config.vlm_path);
        client = std::make_shared<CachingVlmClient>(http, (fs::path(a.out) / "vlm_cache.jsonl").string());
    } else {
        fail(ErrorCode::config, "no VLM configured: pass --mock-vlm <fixture|synth> or set vlm_endpoint");
    }

    const auto manifest = build_dataset(config, a.out, *client);
    write_provenance(fs::path(a.out) / "provenance.json", "build-data", manifest.config_hash, config.seed,
                     {{"config", hash_file(a.config)}, {"mock_vlm", a.mock_vlm}});
    out << "records: " << manifest.total << "\n";
    for (const auto &s : manifest.sources) {
        out << "  " << s.source_id << ": " << s.achieved << "/" << s.quota << " (rectified " << s.rectified
            << ", failures " << s.failures << ", skipped " << s.skipped_corrupt << ")\n";
    }
    out << "forge cost: " << format_usd(manifest.cost_usd) << " USD\n";
    return 0;
}

// ---- train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    bool resume = false;
};

int run_train(const TrainArgs &a, const Common &common, std::ostream &out) {
    auto values = load_key_values(a.config);
    if (common.seed) values["seed"] = std::to_string(*common.seed);
    const auto setup = parse_train_setup(values);
    const auto examples = load_training_examples(a.data, setup.train.use_rectified);
    require(!examples.empty(), ErrorCode::empty_list, "dataset " + a.data + " has no records");
    fs::create_directories(a.out);

    Denoiser model(setup.model);
    const auto schedule =
        build_linear_schedule(setup.schedule.num_timesteps, setup.schedule.beta_start, setup.schedule.beta_end);
    FitOptions options;
    options.out_dir = a.out;
    options.resume = a.resume;
    options.on_step = [&](const StepMetrics &m) {
        if ((m.step + 1) % 100 == 0 || m.step + 1 == setup.train.total_steps) {
            spdlog::info("step {} loss {:.5f} triplet {:.5f} d_neg-d_pos {:.5f}", m.step + 1, m.l_total, m.l_triplet,
                         m.d_neg - m.d_pos);
        }
    };
    const auto result = fit(setup, examples, model, schedule, options);
    const auto config_hash = sha256_hex(render_key_values(render_train_setup(setup)));
    write_provenance(fs::path(a.out) / "provenance.json", "train", config_hash, setup.train.seed,
                     {{"config", hash_file(a.config)}, {"records", hash_file((fs::path(a.data) / "records.jsonl").string())}});
    out << "checkpoint: " << result.checkpoint_path << " (steps " << result.first_step << ".." << result.final_step
        << ")\n";
    return 0;
}

// ---- edit / probe-prior

struct EditArgs {
    std::string model;
    std::string image;
    std::string instruction;
    std::string out;
    std::uint64_t seed = 0;
    GuidanceConfig guidance;
};

int run_edit(const EditArgs &a, std::ostream &out) {
    const auto loaded = load_model(a.model);
    const Image input = load_png(a.image);
    const auto result = edit_image(loaded.model, loaded.schedule, input, a.instruction, a.guidance, a.seed);
    const fs::path out_path(a.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_png(result.image, a.out);
    json inputs = {{"model", hash_file(a.model)},
                   {"image", hash_file(a.image)},
                   {"instruction", a.instruction},
                   {"guidance", guidance_json(a.guidance)}};
    write_provenance(a.out + ".provenance.json", "edit", sha256_hex(inputs.dump()), a.seed, inputs);
    if (result.instruction_truncated) spdlog::warn("instruction truncated to {} tokens", kMaxTextTokens);
    out << "wrote " << a.out << " (" << result.image.width << "x" << result.image.height << ", " << result.ddim_steps
        << " steps, " << result.evaluations << " evaluations)\n";
    return 0;
}

struct ProbeArgs {
    EditArgs edit;
    std::string window;
    std::string mask;
};

int run_probe(ProbeArgs a, std::ostream &out) {
    const auto window = parse_window(a.window);
    const auto loaded = load_model(a.edit.model);
    const Image input = load_png(a.edit.image);
    const auto &g = a.edit.guidance;
    const auto staged = staged_sample(loaded.model, loaded.schedule, input, a.edit.instruction, window, g, a.edit.seed);
    const auto full = edit_image(loaded.model, loaded.schedule, input, a.edit.instruction, g, a.edit.seed);
    const auto null = staged_sample(loaded.model, loaded.schedule, input, a.edit.instruction, {0, 0}, g, a.edit.seed);

    const fs::path dir(a.edit.out);
    fs::create_directories(dir);
    save_png(staged.image, (dir / "staged.png").string());
    save_png(full.image, (dir / "full.png").string());
    save_png(null.image, (dir / "null.png").string());
    const Image working = resize_bilinear(input, staged.image.width, staged.image.height);
    const std::vector<Image> panels = {working, null.image, staged.image, full.image};
    save_png(contact_sheet(panels), (dir / "sheet.png").string());

    const std::vector<std::uint8_t> all(static_cast<std::size_t>(working.width) * working.height, 1);
    json metrics = {{"window", {window.lo, window.hi}},
                    {"num_steps", g.num_steps},
                    {"evaluations", staged.evaluations},
                    {"change_vs_input", masked_change(staged.image, working, all)},
                    {"full_change_vs_input", masked_change(full.image, working, all)},
                    {"change_vs_full", masked_change(staged.image, full.image, all)},
                    {"sheet_order", {"input", "null", "staged", "full"}}};
    if (!a.mask.empty()) {
        const Image mask_img = resize_bilinear(load_png(a.mask), working.width, working.height);
        std::vector<std::uint8_t> mask(all.size());
        for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = mask_img.rgb[p * 3] > 127 ? 1 : 0;
        metrics["mask_change"] = masked_change(staged.image, working, mask);
        metrics["full_mask_change"] = masked_change(full.image, working, mask);
    }
    write_text_file((dir / "metrics.json").string(), metrics.dump(1) + "\n");
    json inputs = {{"model", hash_file(a.edit.model)},
                   {"image", hash_file(a.edit.image)},
                   {"instruction", a.edit.instruction},
                   {"window", a.window},
                   {"guidance", guidance_json(g)}};
    write_provenance(dir / "provenance.json", "probe-prior", sha256_hex(inputs.dump()), a.edit.seed, inputs);
    out << "window [" << window.lo << ", " << window.hi << ") change " << metrics["change_vs_input"].get<double>()
        << ", full " << metrics["full_change_vs_input"].get<double>() << "\n";
    return 0;
}

// ---- evaluate / report

struct EvalArgs {
    std::string model;
    std::string suite;
    std::string judge;
    std::string judge_fixture;
    std::string judge_endpoint;
    std::string judge_path = "/v1/judge";
    std::string out;
    std::string label;
    int workers = 1;
    std::uint64_t seed = 0;
    GuidanceConfig guidance;
};

int run_evaluate(const EvalArgs &a, std::ostream &out) {
    const auto loaded = load_model(a.model);
    const auto suite = load_suite(a.suite);
    std::unique_ptr<JudgeClient> judge;
    if (a.judge == "mock") {
        if (a.judge_fixture.empty()) {
            judge = std::make_unique<RubricJudge>(suite);
        } else {
            judge = std::make_unique<FixtureJudgeClient>(a.judge_fixture);
        }
    } else {
        require(!a.judge_endpoint.empty(), ErrorCode::config, "--judge client needs --judge-endpoint");
        judge = std::make_unique<HttpJudgeClient>(a.judge_endpoint, a.judge_path);
    }
    const auto run = evaluate_suite(loaded.model, loaded.schedule, suite, *judge, a.guidance, a.seed, a.out, a.label,
                                    a.workers);
    json inputs = {{"model", hash_file(a.model)},
                   {"suite", hash_file((fs::path(a.suite) / "suite.jsonl").string())},
                   {"judge", judge->model_id()},
                   {"guidance", guidance_json(a.guidance)}};
    write_provenance(fs::path(a.out) / "provenance.json", "evaluate", sha256_hex(inputs.dump()), a.seed, inputs);
    out << render_report_table({{a.label.empty() ? std::string("model") : a.label, run.report}});
    return 0;
}

int run_report(const std::string &in, const std::string &out_file, std::ostream &out) {
    const auto runs = collect_reports(in);
    const auto table = render_report_table(runs);
    if (!out_file.empty()) {
        const fs::path p(out_file);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_text_file(out_file, table);
    }
    out << table;
    return 0;
}

std::string one_line(std::string text) {
    for (auto &c : text) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return text;
}

}  // namespace

int dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    sink->set_pattern("[%l] %v");
    auto logger = std::make_shared<spdlog::logger>("rectedit", sink);
    const auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct Restore {
        std::shared_ptr<spdlog::logger> logger;
        ~Restore() { spdlog::set_default_logger(logger); }
    } restore{previous};

    CLI::App app{"Instruction-based image editing: data building, training, editing and evaluation."};
    app.name(args.empty() ? "rectedit" : fs::path(args[0]).filename().string());
    app.require_subcommand(1);
    Common common;
    std::uint64_t seed_value = 0;
    auto *seed_opt = app.add_option("--seed", seed_value, "Root seed; overrides the config file")->trigger_on_parse();
    app.add_flag("-v,--verbose", common.verbosity, "More log output (repeatable)");
    app.add_flag("-q,--quiet", common.quiet, "Only log errors");

    BuildArgs build;
    auto *build_cmd = app.add_subcommand("build-data", "Ingest, rectify and write a training corpus");
    build_cmd->add_option("--config", build.config, "Build config (key = value)")->required()->check(CLI::ExistingFile);
    build_cmd->add_option("--out", build.out, "Output directory")->required();
    build_cmd->add_option("--mock-vlm", build.mock_vlm, "'synth' for the ground-truth oracle, or a fixture JSON path");
    build_cmd->add_option("--preset", build.preset, "Corpus size preset")
        ->check(CLI::IsMember({"5k", "10k", "20k", "40k", "desk"}));

    TrainArgs train;
    auto *train_cmd = app.add_subcommand("train", "Train the editing model");
    train_cmd->add_option("--config", train.config, "Training config (key = value)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", train.data, "Dataset directory from build-data")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_flag("--resume", train.resume, "Continue from <out>/model.ckpt");

    EditArgs edit;
    auto *edit_cmd = app.add_subcommand("edit", "Apply an instruction to an image");
    edit_cmd->add_option("--model", edit.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    edit_cmd->add_option("--image", edit.image, "Input PNG")->required()->check(CLI::ExistingFile);
    edit_cmd->add_option("--instruction", edit.instruction, "Editing instruction")->required();
    edit_cmd->add_option("--out", edit.out, "Output PNG")->required();
    add_guidance_flags(edit_cmd, edit.guidance);

    ProbeArgs probe;
    probe.edit.guidance.num_steps = kProbeSteps;
    auto *probe_cmd = app.add_subcommand("probe-prior", "Condition only a window of sampler steps on the instruction");
    probe_cmd->add_option("--model", probe.edit.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--image", probe.edit.image, "Input PNG")->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--instruction", probe.edit.instruction, "Editing instruction")->required();
    probe_cmd->add_option("--window", probe.window, "Sampler-step window a:b, step 0 is the noisiest")->required();
    probe_cmd->add_option("--mask", probe.mask, "Optional target mask PNG for masked change metrics")
        ->check(CLI::ExistingFile);
    probe_cmd->add_option("--out", probe.edit.out, "Output directory")->required();
    add_guidance_flags(probe_cmd, probe.edit.guidance);

    EvalArgs eval;
    auto *eval_cmd = app.add_subcommand("evaluate", "Edit a held-out suite and score it with a judge");
    eval_cmd->add_option("--model", eval.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--suite", eval.suite, "Suite directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--judge", eval.judge, "mock (rubric or --judge-fixture) or client")
        ->required()
        ->check(CLI::IsMember({"mock", "client"}));
    eval_cmd->add_option("--judge-fixture", eval.judge_fixture, "Judge transcript replayed by the mock judge")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--judge-endpoint", eval.judge_endpoint, "Base URL of the judge service");
    eval_cmd->add_option("--judge-path", eval.judge_path, "Request path on the judge service")->capture_default_str();
    eval_cmd->add_option("--out", eval.out, "Output directory")->required();
    eval_cmd->add_option("--label", eval.label, "Run name shown in reports");
    eval_cmd->add_option("--workers", eval.workers, "Parallel judge calls")->check(CLI::PositiveNumber);
    add_guidance_flags(eval_cmd, eval.guidance);

    std::string report_in, report_out;
    auto *report_cmd = app.add_subcommand("report", "Compare evaluation runs");
    report_cmd->add_option("--in", report_in, "Directory holding report.json files")->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--out", report_out, "Also write the table to this file");

    // Name the command when the first positional word is not one we know.
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i].rfind("-", 0) == 0) {
            if (args[i] == "--seed") ++i;
            continue;
        }
        bool known = false;
        for (const auto *sub : app.get_subcommands({})) known = known || sub->get_name() == args[i];
        if (!known) {
            err << "error: " << to_string(ErrorCode::unknown_command) << ": unknown command '" << args[i] << "'\n";
            return static_cast<int>(category_of(ErrorCode::unknown_command));
        }
        break;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        // A misspelled flag usually also leaves a required one unset; name the misspelling.
        const CLI::App *scope = &app;
        for (std::size_t i = 1; i < args.size(); ++i) {
            const auto &arg = args[i];
            if (arg.rfind("-", 0) != 0) {
                if (scope == &app) {
                    for (const auto *sub : app.get_subcommands({})) {
                        if (sub->get_name() == arg) scope = sub;
                    }
                }
                continue;
            }
            const auto name = arg.substr(0, arg.find('='));
            if (name == "-" || name == "--") continue;
            if (scope->get_option_no_throw(name) == nullptr && app.get_option_no_throw(name) == nullptr &&
                name != "-h" && name != "--help") {
                err << "error: " << to_string(ErrorCode::config) << ": unknown option " << name << "\n";
                return static_cast<int>(ErrorCategory::config);
            }
        }
        err << "error: " << to_string(ErrorCode::config) << ": " << one_line(e.what()) << "\n";
        return static_cast<int>(ErrorCategory::config);
    }

    if (seed_opt->count() > 0) common.seed = seed_value;
    logger->set_level(common.quiet            ? spdlog::level::err
                      : common.verbosity >= 1 ? spdlog::level::debug
                                              : spdlog::level::info);
    const std::uint64_t seed = common.seed.value_or(0);
    try {
        if (*build_cmd) return run_build_data(build, common, out);
        if (*train_cmd) return run_train(train, common, out);
        if (*edit_cmd) {
            edit.seed = seed;
            return run_edit(edit, out);
        }
        if (*probe_cmd) {
            probe.edit.seed = seed;
            return run_probe(probe, out);
        }
        if (*eval_cmd) {
            eval.seed = seed;
            return run_evaluate(eval, out);
        }
        if (*report_cmd) return run_report(report_in, report_out, out);
        fail(ErrorCode::unknown_command, "no command given");
    } catch (const Error &e) {
        err << "error: " << to_string(e.code()) << ": " << one_line(e.what()) << "\n";
        return static_cast<int>(category_of(e.code()));
    } catch (const std::exception &e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return static_cast<int>(ErrorCategory::internal);
    }
}

int dispatch(int argc, char **argv) {
    std::vector<std::string> args(argv, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace rectedit
