#pragma once

#include "rectedit/denoiser.hpp"
#include "rectedit/image.hpp"
#include "rectedit/inference.hpp"
#include "rectedit/noise_schedule.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rectedit {

inline constexpr double kMaxJudgeScore = 5.0;

struct JudgeScore {
    bool following_pass = false;
    double following_score = 0.0;
    bool preserving_pass = false;
    double preserving_score = 0.0;
    bool quality_pass = false;
    double quality_score = 0.0;
    std::string judge_model_id;
    std::string raw_response;

    /// Throws ErrorCode::parse when a score is outside [0, 5] or not finite.
    void validate() const;
};

/// Wire form of a verdict:
/// {"following": {"pass": b, "score": x}, "preserving": {...}, "quality": {...}}.
/// Throws ErrorCode::parse on missing fields or out-of-range scores.
JudgeScore parse_judge_response(const std::string &text, const std::string &model_id);
std::string render_judge_response(const JudgeScore &score);

struct JudgeRequest {
    std::string id;
    std::string instruction;
    std::vector<std::uint8_t> original_png;
    std::vector<std::uint8_t> edited_png;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    /// Raw response text. Throws ErrorCode::transport for retryable failures.
    virtual std::string judge(const JudgeRequest &request) = 0;
    virtual std::string model_id() const = 0;
};

/// Replays a transcript {"model_id": ..., "responses": [<verdict or string>, ...]}, cycling.
/// String entries are returned verbatim, which lets a fixture carry malformed replies.
class FixtureJudgeClient : public JudgeClient {
public:
    explicit FixtureJudgeClient(const std::string &path);
    FixtureJudgeClient(std::string model_id, std::vector<std::string> responses);

    std::string judge(const JudgeRequest &request) override;
    std::string model_id() const override { return model_id_; }
    std::uint64_t calls() const { return calls_.load(); }

private:
    std::string model_id_;
    std::vector<std::string> responses_;
    std::size_t cursor_ = 0;
    std::mutex mutex_;
    std::atomic<std::uint64_t> calls_{0};
};

/// POSTs {"model_id", "id", "instruction", "images": [b64 original, b64 edited]} and returns the body.
class HttpJudgeClient : public JudgeClient {
public:
    HttpJudgeClient(std::string base_url, std::string path, std::string model_id = "gpt-4o",
                    std::string credential_env = "RECTEDIT_JUDGE_API_KEY", int timeout_seconds = 60);

    std::string judge(const JudgeRequest &request) override;
    std::string model_id() const override { return model_id_; }

private:
    std::string base_url_;
    std::string path_;
    std::string model_id_;
    std::string credential_env_;
    int timeout_seconds_;
};

/// One held-out evaluation case with programmatic ground truth.
struct SuiteEntry {
    std::string id;
    std::string instruction;
    std::string task_type;
    Image original;
    Image edited;
    /// 1 where the edit is supposed to change pixels.
    std::vector<std::uint8_t> mask;
};

/// Reads <dir>/suite.jsonl as written by write_suite.
std::vector<SuiteEntry> load_suite(const std::string &dir);

/// Deterministic judge over suite ground truth.
///   following:  mean change against the true edit inside the mask < tolerance, and smaller
///               than the change against the original there
///   preserving: mean change against the original outside the mask < tolerance
///   quality:    mean distance of each pixel to the nearest suite color < tolerance
/// Scores fall linearly from 5 at zero error to 0 at `zero_score_at`.
class RubricJudge : public JudgeClient {
public:
    explicit RubricJudge(const std::vector<SuiteEntry> &suite, double tolerance = 0.1, double zero_score_at = 0.25);

    std::string judge(const JudgeRequest &request) override;
    std::string model_id() const override { return "synth-rubric"; }

    /// Same verdict without the wire round trip.
    JudgeScore score(const SuiteEntry &entry, const Image &output) const;

private:
    std::map<std::string, const SuiteEntry *> by_id_;
    std::vector<std::array<std::uint8_t, 3>> palette_;
    double tolerance_;
    double zero_score_at_;
};

/// Retries transport and parse failures up to `max_attempts`, then rethrows the last error.
JudgeScore judge_edit(const Image &original, const Image &edited, const std::string &instruction, JudgeClient &client,
                      const std::string &id = {}, int max_attempts = 3);

struct ClassicMetrics {
    double l1 = 0.0;
    double image_sim = 0.0;
    double text_sim = 0.0;
    double struct_sim = 0.0;
};

struct MetricReport {
    std::size_t n = 0;
    std::size_t errors = 0;
    double following_acc = 0.0;
    double following_score = 0.0;
    double preserving_acc = 0.0;
    double preserving_score = 0.0;
    double quality_acc = 0.0;
    double quality_score = 0.0;
    double overall_acc = 0.0;
    double overall_score = 0.0;
    std::optional<ClassicMetrics> classic;
};

/// Overall fields from per-axis Acc (%) and mean scores.
MetricReport report_from_axes(const std::array<double, 3> &accs, const std::array<double, 3> &scores,
                              std::size_t n = 0);

/// Acc = 100 * weighted fraction of passes; scores are weighted means. Empty weights mean 1 each.
MetricReport aggregate_scores(const std::vector<JudgeScore> &scores, const std::vector<double> &weights = {});

/// "69.7" and "3.91".
std::string format_acc(double acc);
std::string format_score(double score);

std::string report_to_json(const MetricReport &report, const std::string &label = {});
MetricReport report_from_json(const std::string &text, std::string *label = nullptr);

/// Aligned table with one row per run.
std::string render_report_table(const std::vector<std::pair<std::string, MetricReport>> &runs);

/// Deterministic stand-ins for pretrained encoders.
class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual std::vector<double> embed(const Image &image) const = 0;
};

/// Mean of each RGB channel over a 4x4 grid of cells, scaled to [0, 1]. 48 dims.
class ToyColorEmbedder : public ImageEmbedder {
public:
    std::vector<double> embed(const Image &image) const override;
};

/// Mean horizontal and vertical grayscale differences over a 4x4 grid. 32 dims.
class ToyStructureEmbedder : public ImageEmbedder {
public:
    std::vector<double> embed(const Image &image) const override;
};

/// Shared text/image space over color names: image dims are the pixel fractions closest
/// to each named color, text dims count the color words.
class ToyJointEmbedder {
public:
    std::vector<double> embed_image(const Image &image) const;
    std::vector<double> embed_text(const std::string &text) const;
};

/// 0 when either vector is all zeros.
double cosine_similarity(const std::vector<double> &a, const std::vector<double> &b);

/// Resizes `edited` to the reference's size with bilinear filtering, then compares.
/// text_sim compares the edited image with `caption` in the joint space.
ClassicMetrics classic_metrics(const Image &original, const Image &edited, const Image &reference,
                               const std::string &caption);

struct EvalRecord {
    std::string id;
    std::optional<JudgeScore> score;
    std::string error;
    ClassicMetrics classic;
};

struct EvalRun {
    MetricReport report;
    std::vector<EvalRecord> records;
};

/// Edits every suite entry, judges the outputs with bounded parallelism and aggregates in id order.
/// Writes <out>/edits/<id>.png, <out>/scores.jsonl, <out>/report.json and <out>/report.txt.
EvalRun evaluate_suite(const Denoiser &model, const NoiseSchedule &schedule, const std::vector<SuiteEntry> &suite,
                       JudgeClient &judge, const GuidanceConfig &guidance, std::uint64_t seed,
                       const std::string &out_dir, const std::string &label = {}, int workers = 1);

/// Collects report.json from `dir` and its immediate subdirectories, sorted by path.
std::vector<std::pair<std::string, MetricReport>> collect_reports(const std::string &dir);

}  // namespace rectedit
