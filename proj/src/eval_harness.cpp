#include "rectedit/eval_harness.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"
#include "rectedit/text_encoder.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <thread>

namespace rectedit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_score(double score, const char *axis) {
    require(std::isfinite(score) && score >= 0.0 && score <= kMaxJudgeScore, ErrorCode::parse,
            std::string(axis) + " score " + std::to_string(score) + " is outside [0, 5]");
}

double rubric_score(double error, double zero_at) { return kMaxJudgeScore * (1.0 - std::min(1.0, error / zero_at)); }

}  // namespace

void JudgeScore::validate() const {
    check_score(following_score, "following");
    check_score(preserving_score, "preserving");
    check_score(quality_score, "quality");
}

JudgeScore parse_judge_response(const std::string &text, const std::string &model_id) {
    JudgeScore s;
    try {
        const auto j = json::parse(text);
        auto axis = [&](const char *name, bool &pass, double &score) {
            const auto &a = j.at(name);
            pass = a.at("pass").get<bool>();
            score = a.at("score").get<double>();
        };
        axis("following", s.following_pass, s.following_score);
        axis("preserving", s.preserving_pass, s.preserving_score);
        axis("quality", s.quality_pass, s.quality_score);
    } catch (const json::exception &e) {
        fail(ErrorCode::parse, std::string("judge response: ") + e.what());
    }
    s.judge_model_id = model_id;
    s.raw_response = text;
    s.validate();
    return s;
}

std::string render_judge_response(const JudgeScore &s) {
    json j = {{"following", {{"pass", s.following_pass}, {"score", s.following_score}}},
              {"preserving", {{"pass", s.preserving_pass}, {"score", s.preserving_score}}},
              {"quality", {{"pass", s.quality_pass}, {"score", s.quality_score}}}};
    return j.dump();
}

FixtureJudgeClient::FixtureJudgeClient(const std::string &path) {
    try {
        const auto j = json::parse(read_text_file(path));
        model_id_ = j.value("model_id", std::string("fixture-judge"));
        for (const auto &r : j.at("responses")) responses_.push_back(r.is_string() ? r.get<std::string>() : r.dump());
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, "judge fixture " + path + ": " + e.what());
    }
    require(!responses_.empty(), ErrorCode::empty_list, "judge fixture " + path + " has no responses");
}

FixtureJudgeClient::FixtureJudgeClient(std::string model_id, std::vector<std::string> responses)
    : model_id_(std::move(model_id)), responses_(std::move(responses)) {
    require(!responses_.empty(), ErrorCode::empty_list, "judge fixture has no responses");
}

std::string FixtureJudgeClient::judge(const JudgeRequest &) {
    calls_.fetch_add(1);
    std::lock_guard lock(mutex_);
    const auto &r = responses_[cursor_ % responses_.size()];
    ++cursor_;
    return r;
}

HttpJudgeClient::HttpJudgeClient(std::string base_url, std::string path, std::string model_id,
                                 std::string credential_env, int timeout_seconds)
    : base_url_(std::move(base_url)),
      path_(std::move(path)),
      model_id_(std::move(model_id)),
      credential_env_(std::move(credential_env)),
      timeout_seconds_(timeout_seconds) {}

std::string HttpJudgeClient::judge(const JudgeRequest &request) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (const char *key = std::getenv(credential_env_.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const json body = {{"model_id", model_id_},
                       {"id", request.id},
                       {"instruction", request.instruction},
                       {"images", {base64_encode(request.original_png), base64_encode(request.edited_png)}}};
    const auto result = client.Post(path_, headers, body.dump(), "application/json");
    if (!result) fail(ErrorCode::transport, "judge endpoint unreachable: " + httplib::to_string(result.error()));
    if (result->status >= 500 || result->status == 429) {
        fail(ErrorCode::transport, "judge endpoint returned HTTP " + std::to_string(result->status));
    }
    if (result->status != 200) fail(ErrorCode::parse, "judge endpoint returned HTTP " + std::to_string(result->status));
    return result->body;
}

std::vector<SuiteEntry> load_suite(const std::string &dir) {
    const auto index_path = (fs::path(dir) / "suite.jsonl").string();
    require(fs::exists(index_path), ErrorCode::unreadable_source, "no suite.jsonl in " + dir);
    const auto text = read_text_file(index_path);
    std::vector<SuiteEntry> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const auto line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            SuiteEntry e;
            e.id = j.at("id").get<std::string>();
            e.instruction = j.at("instruction").get<std::string>();
            e.task_type = j.value("task_type", std::string());
            e.original = load_png((fs::path(dir) / j.at("original").get<std::string>()).string());
            e.edited = load_png((fs::path(dir) / j.at("edited").get<std::string>()).string());
            const Image mask = load_png((fs::path(dir) / j.at("mask").get<std::string>()).string());
            require(mask.width == e.original.width && mask.height == e.original.height, ErrorCode::size_mismatch,
                    "suite mask for " + e.id + " does not match its image");
            for (std::size_t p = 0; p < mask.rgb.size() / 3; ++p) e.mask.push_back(mask.rgb[p * 3] > 127 ? 1 : 0);
            out.push_back(std::move(e));
        } catch (const json::exception &ex) {
            fail(ErrorCode::decode, std::string("suite entry: ") + ex.what());
        }
    }
    std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    return out;
}

RubricJudge::RubricJudge(const std::vector<SuiteEntry> &suite, double tolerance, double zero_score_at)
    : tolerance_(tolerance), zero_score_at_(zero_score_at) {
    require(tolerance > 0 && zero_score_at > 0, ErrorCode::config, "rubric thresholds must be positive");
    std::set<std::array<std::uint8_t, 3>> colors;
    for (const auto &e : suite) {
        by_id_[e.id] = &e;
        for (const Image *img : {&e.original, &e.edited}) {
            for (std::size_t p = 0; p < img->rgb.size(); p += 3) {
                colors.insert({img->rgb[p], img->rgb[p + 1], img->rgb[p + 2]});
            }
        }
    }
    palette_.assign(colors.begin(), colors.end());
}

JudgeScore RubricJudge::score(const SuiteEntry &entry, const Image &output) const {
    const Image out = resize_bilinear(output, entry.edited.width, entry.edited.height);
    std::vector<std::uint8_t> outside(entry.mask.size());
    for (std::size_t p = 0; p < outside.size(); ++p) outside[p] = entry.mask[p] ? 0 : 1;
    const double follow_err = masked_change(out, entry.edited, entry.mask);
    const double preserve_err = masked_change(out, entry.original, outside);

    double quality_err = 0.0;
    const std::size_t pixels = out.rgb.size() / 3;
    for (std::size_t p = 0; p < pixels; ++p) {
        double best = 1.0;
        for (const auto &c : palette_) {
            double d = 0.0;
            for (int k = 0; k < 3; ++k) d += std::abs(static_cast<int>(out.rgb[p * 3 + k]) - c[k]) / 255.0;
            best = std::min(best, d / 3.0);
        }
        quality_err += best;
    }
    quality_err /= static_cast<double>(std::max<std::size_t>(pixels, 1));

    JudgeScore s;
    // An output that stays nearer the source than the target has not applied the edit,
    // however small the edited region is.
    s.following_pass = follow_err < tolerance_ && follow_err < masked_change(out, entry.original, entry.mask);
    s.following_score = rubric_score(follow_err, zero_score_at_);
    s.preserving_pass = preserve_err < tolerance_;
    s.preserving_score = rubric_score(preserve_err, zero_score_at_);
    s.quality_pass = quality_err < tolerance_;
    s.quality_score = rubric_score(quality_err, zero_score_at_);
    s.judge_model_id = model_id();
    s.raw_response = render_judge_response(s);
    return s;
}

std::string RubricJudge::judge(const JudgeRequest &request) {
    const auto it = by_id_.find(request.id);
    require(it != by_id_.end(), ErrorCode::invariant, "rubric judge has no ground truth for '" + request.id + "'");
    return render_judge_response(score(*it->second, decode_png(request.edited_png)));
}

JudgeScore judge_edit(const Image &original, const Image &edited, const std::string &instruction, JudgeClient &client,
                      const std::string &id, int max_attempts) {
    require(!original.empty() && !edited.empty(), ErrorCode::decode, "judge_edit needs decodable images");
    require(max_attempts >= 1, ErrorCode::config, "max_attempts must be >= 1");
    const JudgeRequest request{id, instruction, encode_png(original), encode_png(edited)};
    for (int attempt = 1;; ++attempt) {
        try {
            return parse_judge_response(client.judge(request), client.model_id());
        } catch (const Error &e) {
            const bool retryable = e.code() == ErrorCode::transport || e.code() == ErrorCode::parse;
            if (!retryable || attempt >= max_attempts) throw;
            spdlog::debug("judge attempt {} for '{}' failed: {}", attempt, id, e.what());
        }
    }
}

MetricReport report_from_axes(const std::array<double, 3> &accs, const std::array<double, 3> &scores, std::size_t n) {
    MetricReport r;
    r.n = n;
    r.following_acc = accs[0];
    r.preserving_acc = accs[1];
    r.quality_acc = accs[2];
    r.following_score = scores[0];
    r.preserving_score = scores[1];
    r.quality_score = scores[2];
    r.overall_acc = (accs[0] + accs[1] + accs[2]) / 3.0;
    r.overall_score = (scores[0] + scores[1] + scores[2]) / 3.0;
    return r;
}

MetricReport aggregate_scores(const std::vector<JudgeScore> &scores, const std::vector<double> &weights) {
    require(!scores.empty(), ErrorCode::empty_list, "cannot aggregate an empty score list");
    require(weights.empty() || weights.size() == scores.size(), ErrorCode::size_mismatch,
            "one weight per score is required");
    std::array<double, 3> pass{}, score{};
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto &s = scores[i];
        s.validate();
        const double w = weights.empty() ? 1.0 : weights[i];
        require(w >= 0.0 && std::isfinite(w), ErrorCode::invalid_range, "weights must be non-negative");
        pass[0] += w * s.following_pass;
        pass[1] += w * s.preserving_pass;
        pass[2] += w * s.quality_pass;
        score[0] += w * s.following_score;
        score[1] += w * s.preserving_score;
        score[2] += w * s.quality_score;
        total += w;
    }
    require(total > 0.0, ErrorCode::invalid_range, "weights sum to zero");
    for (int a = 0; a < 3; ++a) {
        pass[a] = 100.0 * pass[a] / total;
        score[a] /= total;
    }
    return report_from_axes(pass, score, scores.size());
}

std::string format_acc(double acc) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", acc);
    return buf;
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", score);
    return buf;
}

std::string report_to_json(const MetricReport &r, const std::string &label) {
    json j = {{"label", label},
              {"n", r.n},
              {"errors", r.errors},
              {"following", {{"acc", r.following_acc}, {"score", r.following_score}}},
              {"preserving", {{"acc", r.preserving_acc}, {"score", r.preserving_score}}},
              {"quality", {{"acc", r.quality_acc}, {"score", r.quality_score}}},
              {"overall", {{"acc", r.overall_acc}, {"score", r.overall_score}}}};
    if (r.classic) {
        j["classic"] = {{"l1", r.classic->l1},
                        {"image_sim", r.classic->image_sim},
                        {"text_sim", r.classic->text_sim},
                        {"struct_sim", r.classic->struct_sim}};
    }
    return j.dump(1) + "\n";
}

MetricReport report_from_json(const std::string &text, std::string *label) {
    try {
        const auto j = json::parse(text);
        MetricReport r;
        r.n = j.at("n").get<std::size_t>();
        r.errors = j.value("errors", std::size_t{0});
        r.following_acc = j.at("following").at("acc").get<double>();
        r.following_score = j.at("following").at("score").get<double>();
        r.preserving_acc = j.at("preserving").at("acc").get<double>();
        r.preserving_score = j.at("preserving").at("score").get<double>();
        r.quality_acc = j.at("quality").at("acc").get<double>();
        r.quality_score = j.at("quality").at("score").get<double>();
        r.overall_acc = j.at("overall").at("acc").get<double>();
        r.overall_score = j.at("overall").at("score").get<double>();
        if (j.contains("classic")) {
            const auto &c = j.at("classic");
            r.classic = ClassicMetrics{c.at("l1").get<double>(), c.at("image_sim").get<double>(),
                                       c.at("text_sim").get<double>(), c.at("struct_sim").get<double>()};
        }
        if (label) *label = j.value("label", std::string());
        return r;
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, std::string("bad report: ") + e.what());
    }
}

std::string render_report_table(const std::vector<std::pair<std::string, MetricReport>> &runs) {
    std::size_t name_width = 6;
    for (const auto &[name, r] : runs) name_width = std::max(name_width, name.size());
    const int nw = static_cast<int>(name_width);
    std::string out;
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s | %-14s | %-14s | %-14s | %-14s | %5s\n", nw, "Method", "Following",
                  "Preserving", "Quality", "Overall", "n");
    out += line;
    std::snprintf(line, sizeof(line), "%-*s | %6s %7s | %6s %7s | %6s %7s | %6s %7s | %5s\n", nw, "", "Acc%", "Score",
                  "Acc%", "Score", "Acc%", "Score", "Acc%", "Score", "");
    out += line;
    out += std::string(name_width, '-') + "-+----------------+----------------+----------------+----------------+------\n";
    for (const auto &[name, r] : runs) {
        std::snprintf(line, sizeof(line), "%-*s | %6s %7s | %6s %7s | %6s %7s | %6s %7s | %5zu\n", nw, name.c_str(),
                      format_acc(r.following_acc).c_str(), format_score(r.following_score).c_str(),
                      format_acc(r.preserving_acc).c_str(), format_score(r.preserving_score).c_str(),
                      format_acc(r.quality_acc).c_str(), format_score(r.quality_score).c_str(),
                      format_acc(r.overall_acc).c_str(), format_score(r.overall_score).c_str(), r.n);
        out += line;
    }
    bool any_classic = false;
    for (const auto &run : runs) any_classic = any_classic || run.second.classic.has_value();
    if (any_classic) {
        out += "\n";
        std::snprintf(line, sizeof(line), "%-*s | %8s %9s %9s %10s\n", nw, "Method", "L1", "image", "text", "struct");
        out += line;
        for (const auto &[name, r] : runs) {
            if (!r.classic) continue;
            std::snprintf(line, sizeof(line), "%-*s | %8.4f %9.4f %9.4f %10.4f\n", nw, name.c_str(), r.classic->l1,
                          r.classic->image_sim, r.classic->text_sim, r.classic->struct_sim);
            out += line;
        }
    }
    return out;
}

namespace {

// Cell bounds for a g x g pooling grid: [i*n/g, (i+1)*n/g), at least one pixel wide.
std::pair<int, int> cell_bounds(int i, int n, int g) {
    int lo = i * n / g, hi = (i + 1) * n / g;
    if (hi <= lo) hi = std::min(n, lo + 1);
    return {std::min(lo, n - 1), hi};
}

double gray(const Image &img, int x, int y) {
    const auto *p = img.pixel(x, y);
    return (p[0] + p[1] + p[2]) / (3.0 * 255.0);
}

struct NamedColor {
    const char *name;
    std::array<int, 3> rgb;
};

// Anchors for the joint space; the last two absorb background pixels.
constexpr std::array<NamedColor, 6> kNamedColors = {{{"red", {220, 40, 40}},
                                                     {"green", {40, 200, 60}},
                                                     {"blue", {50, 80, 230}},
                                                     {"yellow", {230, 210, 40}},
                                                     {"", {0, 0, 0}},
                                                     {"", {255, 255, 255}}}};
constexpr int kJointDims = 4;

}  // namespace

std::vector<double> ToyColorEmbedder::embed(const Image &image) const {
    require(!image.empty(), ErrorCode::decode, "cannot embed an empty image");
    std::vector<double> out;
    for (int gy = 0; gy < 4; ++gy) {
        const auto [y0, y1] = cell_bounds(gy, image.height, 4);
        for (int gx = 0; gx < 4; ++gx) {
            const auto [x0, x1] = cell_bounds(gx, image.width, 4);
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) sum += image.pixel(x, y)[c] / 255.0;
                out.push_back(sum / ((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return out;
}

std::vector<double> ToyStructureEmbedder::embed(const Image &image) const {
    require(!image.empty(), ErrorCode::decode, "cannot embed an empty image");
    std::vector<double> out;
    for (int gy = 0; gy < 4; ++gy) {
        const auto [y0, y1] = cell_bounds(gy, image.height, 4);
        for (int gx = 0; gx < 4; ++gx) {
            const auto [x0, x1] = cell_bounds(gx, image.width, 4);
            double dx = 0.0, dy = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    if (x + 1 < image.width) dx += gray(image, x + 1, y) - gray(image, x, y);
                    if (y + 1 < image.height) dy += gray(image, x, y + 1) - gray(image, x, y);
                }
            }
            const double area = (y1 - y0) * (x1 - x0);
            out.push_back(dx / area);
            out.push_back(dy / area);
        }
    }
    return out;
}

std::vector<double> ToyJointEmbedder::embed_image(const Image &image) const {
    require(!image.empty(), ErrorCode::decode, "cannot embed an empty image");
    std::vector<double> out(kJointDims, 0.0);
    const std::size_t pixels = image.rgb.size() / 3;
    for (std::size_t p = 0; p < pixels; ++p) {
        std::size_t best = 0;
        int best_d = 1 << 30;
        for (std::size_t k = 0; k < kNamedColors.size(); ++k) {
            int d = 0;
            for (int c = 0; c < 3; ++c) d += std::abs(image.rgb[p * 3 + c] - kNamedColors[k].rgb[c]);
            if (d < best_d) best_d = d, best = k;
        }
        if (best < kJointDims) out[best] += 1.0 / static_cast<double>(pixels);
    }
    return out;
}

std::vector<double> ToyJointEmbedder::embed_text(const std::string &text) const {
    std::vector<double> out(kJointDims, 0.0);
    for (const auto &word : split_words(text)) {
        for (int k = 0; k < kJointDims; ++k) {
            if (word == kNamedColors[k].name) out[k] += 1.0;
        }
    }
    return out;
}

double cosine_similarity(const std::vector<double> &a, const std::vector<double> &b) {
    require(a.size() == b.size(), ErrorCode::size_mismatch, "cosine needs equal lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

ClassicMetrics classic_metrics(const Image &original, const Image &edited, const Image &reference,
                               const std::string &caption) {
    require(!original.empty() && !edited.empty() && !reference.empty(), ErrorCode::decode,
            "classic metrics need non-empty images");
    const Image out = resize_bilinear(edited, reference.width, reference.height);
    require(out.rgb.size() == reference.rgb.size(), ErrorCode::size_mismatch, "resized image does not match reference");
    ClassicMetrics m;
    double sum = 0.0;
    for (std::size_t i = 0; i < out.rgb.size(); ++i) sum += std::abs(out.rgb[i] - reference.rgb[i]) / 255.0;
    m.l1 = sum / static_cast<double>(out.rgb.size());
    m.image_sim = cosine_similarity(ToyColorEmbedder().embed(out), ToyColorEmbedder().embed(reference));
    m.struct_sim = cosine_similarity(ToyStructureEmbedder().embed(out), ToyStructureEmbedder().embed(reference));
    const ToyJointEmbedder joint;
    m.text_sim = cosine_similarity(joint.embed_image(out), joint.embed_text(caption));
    return m;
}

EvalRun evaluate_suite(const Denoiser &model, const NoiseSchedule &schedule, const std::vector<SuiteEntry> &suite,
                       JudgeClient &judge, const GuidanceConfig &guidance, std::uint64_t seed,
                       const std::string &out_dir, const std::string &label, int workers) {
    require(!suite.empty(), ErrorCode::empty_list, "evaluation suite is empty");
    require(workers >= 1, ErrorCode::config, "workers must be >= 1");
    fs::create_directories(fs::path(out_dir) / "edits");

    std::vector<const SuiteEntry *> order;
    for (const auto &e : suite) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](auto *a, auto *b) { return a->id < b->id; });

    // Sampling stays sequential so outputs do not depend on the worker count.
    std::vector<Image> outputs;
    for (const auto *e : order) {
        outputs.push_back(edit_image(model, schedule, e->original, e->instruction, guidance,
                                     derive_seed(seed, "eval.edit." + e->id)).image);
        save_png(outputs.back(), (fs::path(out_dir) / "edits" / (e->id + ".png")).string());
    }

    EvalRun run;
    run.records.resize(order.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < order.size(); i = next.fetch_add(1)) {
            auto &rec = run.records[i];
            rec.id = order[i]->id;
            try {
                rec.score = judge_edit(order[i]->original, outputs[i], order[i]->instruction, judge, rec.id);
            } catch (const Error &e) {
                rec.error = std::string(to_string(e.code())) + ": " + e.what();
            }
            rec.classic = classic_metrics(order[i]->original, outputs[i], order[i]->edited, order[i]->instruction);
        }
    };
    std::vector<std::thread> threads;
    for (int w = 1; w < workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto &t : threads) t.join();

    std::vector<JudgeScore> scores;
    ClassicMetrics mean;
    std::string lines;
    for (const auto &rec : run.records) {
        json j = {{"id", rec.id},
                  {"classic",
                   {{"l1", rec.classic.l1},
                    {"image_sim", rec.classic.image_sim},
                    {"text_sim", rec.classic.text_sim},
                    {"struct_sim", rec.classic.struct_sim}}}};
        if (rec.score) {
            scores.push_back(*rec.score);
            j["judge_model_id"] = rec.score->judge_model_id;
            j["verdict"] = json::parse(render_judge_response(*rec.score));
        } else {
            j["error"] = rec.error;
        }
        lines += j.dump() + "\n";
        mean.l1 += rec.classic.l1;
        mean.image_sim += rec.classic.image_sim;
        mean.text_sim += rec.classic.text_sim;
        mean.struct_sim += rec.classic.struct_sim;
    }
    const double n = static_cast<double>(run.records.size());
    mean.l1 /= n;
    mean.image_sim /= n;
    mean.text_sim /= n;
    mean.struct_sim /= n;

    if (!scores.empty()) run.report = aggregate_scores(scores);
    run.report.n = scores.size();
    run.report.errors = run.records.size() - scores.size();
    run.report.classic = mean;
    if (run.report.errors > 0) spdlog::warn("{} of {} judge calls failed", run.report.errors, run.records.size());

    write_text_file((fs::path(out_dir) / "scores.jsonl").string(), lines);
    write_text_file((fs::path(out_dir) / "report.json").string(), report_to_json(run.report, label));
    write_text_file((fs::path(out_dir) / "report.txt").string(),
                    render_report_table({{label.empty() ? std::string("model") : label, run.report}}));
    return run;
}

std::vector<std::pair<std::string, MetricReport>> collect_reports(const std::string &dir) {
    require(fs::is_directory(dir), ErrorCode::unreadable_source, dir + " is not a directory");
    std::vector<fs::path> candidates{fs::path(dir)};
    std::vector<fs::path> subdirs;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) subdirs.push_back(entry.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    candidates.insert(candidates.end(), subdirs.begin(), subdirs.end());
    std::vector<std::pair<std::string, MetricReport>> out;
    for (const auto &path : candidates) {
        const auto file = path / "report.json";
        if (!fs::exists(file)) continue;
        std::string label;
        auto report = report_from_json(read_text_file(file.string()), &label);
        if (label.empty()) label = path.filename().string();
        out.emplace_back(label, report);
    }
    require(!out.empty(), ErrorCode::unreadable_source, "no report.json under " + dir);
    return out;
}

}  // namespace rectedit
