#include "doctest.h"

#include "rectedit/cli.hpp"
#include "rectedit/dataset_builder.hpp"
#include "rectedit/image.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using rectedit::dispatch;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "rectedit");
    std::ostringstream out, err;
    Run r;
    r.code = dispatch(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string read_all(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path &p, const std::string &text) {
    std::ofstream out(p);
    out << text;
}

fs::path scratch(const std::string &name) {
    const auto dir = fs::temp_directory_path() / ("rectedit_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::set<std::string> tree(const fs::path &root) {
    std::set<std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root)) out.insert(fs::relative(e.path(), root).string());
    return out;
}

const char *kTinyData = R"(preset = desk
scale = 0.001
seed = 3
availability = 1.25
raw_noise = 0.5
suite_size = 4
workers = 1
failure_ceiling = 0.02
forge.k = 3
)";

const char *kTinyTrain = R"(batch_size = 4
learning_rate = 0.001
warmup_steps = 2
total_steps = 6
dropout_p = 0.05
triplet.margin = 0.005
triplet.activation_step = 2
seed = 5
checkpoint_every = 3
model.base_width = 5
model.depth = 1
model.embed_dim = 6
model.time_dim = 4
model.cond_hidden = 6
model.vocab_size = 64
schedule.num_timesteps = 40
schedule.beta_start = 0.0001
schedule.beta_end = 0.05
)";

}  // namespace

TEST_CASE("help exits zero and documents every command") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    for (const char *cmd : {"build-data", "train", "edit", "probe-prior", "evaluate", "report", "--seed"}) {
        CHECK(r.out.find(cmd) != std::string::npos);
    }
    const auto sub = run({"edit", "--help"});
    CHECK(sub.code == 0);
    for (const char *flag : {"--text-scale", "--image-scale", "--steps", "--resize", "--no-clip", "--instruction"}) {
        CHECK(sub.out.find(flag) != std::string::npos);
    }
}

TEST_CASE("unknown flags and commands fail with one line") {
    const auto flag = run({"train", "--bogus", "1"});
    CHECK(flag.code == 2);
    CHECK(flag.err.find("--bogus") != std::string::npos);
    CHECK(flag.err.rfind("error: ", 0) == 0);
    CHECK(flag.err.find('\n') == flag.err.size() - 1);

    const auto cmd = run({"frobnicate"});
    CHECK(cmd.code == 2);
    CHECK(cmd.err.find("unknown-command") != std::string::npos);
    CHECK(cmd.err.find("frobnicate") != std::string::npos);

    const auto missing = run({"train", "--config", "/nonexistent/x.cfg", "--data", ".", "--out", "o"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find('\n') == missing.err.size() - 1);
}

TEST_CASE("config validation names every bad key at once") {
    const auto dir = scratch("badcfg");
    write(dir / "bad.cfg", std::string(kTinyTrain) + "learning_rat = 0.1\nbatch_sise = 3\ntriplet.weight = lots\n");
    fs::create_directories(dir / "data");
    write(dir / "data" / "records.jsonl", "");
    const auto r = run({"train", "--config", (dir / "bad.cfg").string(), "--data", (dir / "data").string(), "--out",
                        (dir / "out").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("learning_rat") != std::string::npos);
    CHECK(r.err.find("batch_sise") != std::string::npos);
    CHECK(r.err.find("triplet.weight") != std::string::npos);
}

TEST_CASE("data errors map to exit code 3") {
    const auto dir = scratch("dataerr");
    write(dir / "junk.png", "this is not a png");
    write(dir / "m.ckpt", "{}");
    const auto r = run({"edit", "--model", (dir / "m.ckpt").string(), "--image", (dir / "junk.png").string(),
                        "--instruction", "x", "--out", (dir / "o.png").string()});
    CHECK(r.code == 3);
    CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("build-data requires an explicit VLM choice") {
    const auto dir = scratch("novlm");
    write(dir / "data.cfg", kTinyData);
    const auto r = run({"build-data", "--config", (dir / "data.cfg").string(), "--out", (dir / "out").string()});
    CHECK(r.code == 2);
}

TEST_CASE("end to end on a tiny corpus, deterministic and confined to output directories") {
    const auto dir = scratch("e2e");
    write(dir / "data.cfg", kTinyData);
    write(dir / "train.cfg", kTinyTrain);
    const auto before = tree(dir);

    const auto built = run({"build-data", "--config", (dir / "data.cfg").string(), "--out", (dir / "data").string(),
                            "--mock-vlm", "synth"});
    REQUIRE(built.code == 0);
    CHECK(fs::exists(dir / "data" / "records.jsonl"));
    CHECK(fs::exists(dir / "data" / "manifest.json"));
    CHECK(fs::exists(dir / "data" / "provenance.json"));
    CHECK(rectedit::load_records((dir / "data").string()).size() == 40);

    for (const char *out : {"run1", "run2"}) {
        const auto t = run({"-q", "train", "--config", (dir / "train.cfg").string(), "--data", (dir / "data").string(),
                            "--out", (dir / out).string()});
        REQUIRE(t.code == 0);
        CHECK(fs::exists(dir / out / "model.ckpt"));
    }
    CHECK(read_all(dir / "run1" / "model.ckpt") == read_all(dir / "run2" / "model.ckpt"));
    CHECK(read_all(dir / "run1" / "metrics.jsonl") == read_all(dir / "run2" / "metrics.jsonl"));
    CHECK(read_all(dir / "run1" / "provenance.json") == read_all(dir / "run2" / "provenance.json"));

    const auto prov = nlohmann::json::parse(read_all(dir / "run1" / "provenance.json"));
    CHECK(prov.at("seed").get<std::uint64_t>() == 5);
    CHECK(prov.at("config_hash").get<std::string>().size() == 64);
    CHECK(prov.at("code_version").get<std::string>() == rectedit::code_version());

    const auto other = run({"-q", "--seed", "6", "train", "--config", (dir / "train.cfg").string(), "--data",
                            (dir / "data").string(), "--out", (dir / "run3").string()});
    REQUIRE(other.code == 0);
    CHECK(read_all(dir / "run1" / "model.ckpt") != read_all(dir / "run3" / "model.ckpt"));

    const auto records = rectedit::load_records((dir / "data").string());
    const fs::path input = dir / "input.png";
    fs::copy_file(dir / "data" / "images" / (records.front().id + "_original.png"), input);
    const std::string model = (dir / "run1" / "model.ckpt").string();
    for (const char *out : {"e1.png", "e2.png"}) {
        const auto e = run({"edit", "--model", model, "--image", input.string(), "--instruction",
                            "make the square blue", "--steps", "4", "--out", (dir / "edits" / out).string()});
        REQUIRE(e.code == 0);
    }
    CHECK(read_all(dir / "edits" / "e1.png") == read_all(dir / "edits" / "e2.png"));
    CHECK(read_all(dir / "edits" / "e1.png.provenance.json") == read_all(dir / "edits" / "e2.png.provenance.json"));

    for (const char *out : {"p1", "p2"}) {
        const auto p = run({"probe-prior", "--model", model, "--image", input.string(), "--instruction",
                            "make the square blue", "--window", "0:2", "--steps", "4", "--out",
                            (dir / "probes" / out).string()});
        REQUIRE(p.code == 0);
    }
    for (const char *f : {"staged.png", "full.png", "null.png", "sheet.png", "metrics.json", "provenance.json"}) {
        CHECK(read_all(dir / "probes" / "p1" / f) == read_all(dir / "probes" / "p2" / f));
    }
    const auto bad_window = run({"probe-prior", "--model", model, "--image", input.string(), "--instruction", "x",
                                 "--window", "0:9", "--steps", "4", "--out", (dir / "probes" / "p3").string()});
    CHECK(bad_window.code == 2);
    CHECK(bad_window.err.find("window") != std::string::npos);

    const auto ev = run({"evaluate", "--model", model, "--suite", (dir / "data" / "suite").string(), "--judge", "mock",
                         "--steps", "3", "--label", "tiny", "--out", (dir / "evals" / "tiny").string()});
    REQUIRE(ev.code == 0);
    CHECK(fs::exists(dir / "evals" / "tiny" / "report.json"));
    CHECK(fs::exists(dir / "evals" / "tiny" / "scores.jsonl"));
    const auto rep = run({"report", "--in", (dir / "evals").string()});
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("tiny") != std::string::npos);
    CHECK(rep.out.find("Following") != std::string::npos);

    // Every new path lives under a declared output directory.
    const std::set<std::string> roots = {"data", "run1", "run2", "run3", "edits", "probes", "evals", "input.png"};
    for (const auto &path : tree(dir)) {
        if (before.contains(path)) continue;
        const auto top = fs::path(path).begin()->string();
        CHECK_MESSAGE(roots.contains(top), path);
    }
}
