#pragma once

#include "rectedit/config_file.hpp"
#include "rectedit/instruction_forge.hpp"
#include "rectedit/synth_world.hpp"
#include "rectedit/trainer.hpp"
#include "rectedit/vlm_client.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rectedit {

inline constexpr int kSourceFormatVersion = 1;

/// Source directory layout:
///   source.json   {"format": "rectedit-source", "version": 1, "source_id": ..., "verified": bool}
///   pairs.jsonl   {"original": rel, "edited": rel, "instruction": ..., "task_type": ...} per line
struct RawPair {
    std::string id;
    std::string source_id;
    bool verified = false;
    std::string task_type;
    std::string raw_instruction;
    std::vector<std::uint8_t> original_png;
    std::vector<std::uint8_t> edited_png;
};

struct IngestResult {
    std::string source_id;
    bool verified = false;
    std::vector<RawPair> pairs;
    int skipped = 0;
};

/// Id = content hash of (source_id, image bytes, instruction). Undecodable pairs are skipped and counted.
IngestResult ingest_source(const std::string &dir);

/// Writes synth pairs as a source directory.
void write_synth_source(const std::string &dir, const std::string &source_id, bool verified,
                        const std::vector<SynthEdit> &edits);

/// Per-source quotas proportional to `reference`, rounded half up, for a target total.
std::vector<int> proportional_quotas(const std::vector<int> &reference, double total);

/// Reference per-source quotas of the full-scale corpus.
inline const std::vector<int> kReferenceQuotas = {10177, 8807, 21016};

/// Picks exactly quotas[s] indices from source s, spread across labels as evenly as
/// possible (uniform when a source has no labels). Result indices are sorted.
std::vector<std::vector<std::size_t>> balance_sample(const std::vector<std::vector<std::string>> &labels,
                                                     const std::vector<int> &quotas, std::uint64_t seed);

struct EditSample {
    std::string id;
    std::string source_id;
    std::string original_path;
    std::string edited_path;
    std::string raw_instruction;
    std::optional<std::string> rectified_instruction;
    std::optional<NegativeSet> negatives;
    bool verified = false;
    std::string task_type;
};

std::string sample_to_json(const EditSample &sample);
EditSample sample_from_json(const std::string &line);

/// Empty when the sample is training-ready and consistent.
std::vector<std::string> sample_problems(const EditSample &sample, int max_diff_tokens);

struct BuildConfig {
    /// 5k, 10k, 20k, 40k or desk.
    std::string preset = "desk";
    /// Desk scaling applied to the preset size.
    double scale = 0.01;
    std::uint64_t seed = 0;
    /// Extra synth pairs generated per source beyond its quota.
    double availability = 1.25;
    double raw_noise = 0.5;
    int suite_size = 0;
    int workers = 1;
    double failure_ceiling = 0.02;
    /// Source directories; empty means generate synth sources.
    std::vector<std::string> sources;
    std::vector<int> quotas;
    std::string vlm_endpoint;
    std::string vlm_path = "/v1/edit-diff";
    ForgeConfig forge;

    double preset_total() const;
    std::vector<int> resolved_quotas() const;
    void validate() const;
};

BuildConfig parse_build_config(const KeyValues &values);
KeyValues render_build_config(const BuildConfig &config);

struct SourceManifest {
    std::string source_id;
    bool verified = false;
    int quota = 0;
    int achieved = 0;
    int rectified = 0;
    int failures = 0;
    int skipped_corrupt = 0;
    double cost_usd = 0.0;
};

struct DatasetManifest {
    std::vector<SourceManifest> sources;
    int total = 0;
    std::map<std::string, int> task_histogram;
    std::string config_hash;
    double cost_usd = 0.0;
    int failures = 0;
    std::map<std::string, int> failure_reasons;
};

std::string manifest_to_json(const DatasetManifest &manifest);
DatasetManifest manifest_from_json(const std::string &text);

/// Synth sources and their ground truth, as generated for a build.
struct SynthSources {
    std::vector<std::string> dirs;
    std::vector<SynthEdit> edits;
};

/// Generates one synth source per quota under <out>/sources.
SynthSources generate_synth_sources(const BuildConfig &config, const std::string &out_dir);

/// Writes a held-out evaluation suite (pairs plus target masks) to `dir`.
void write_suite(const std::string &dir, const std::vector<SynthEdit> &edits);

/// Runs ingest, balance and forge; writes <out>/records.jsonl (sorted by id), <out>/manifest.json
/// and <out>/images/. Throws failure_ceiling when too many samples fail.
DatasetManifest build_dataset(const BuildConfig &config, const std::string &out_dir, VlmClient &client);

struct CostSummary {
    double total_usd = 0.0;
    std::map<std::string, double> per_source_usd;
};

/// Price per processed pair, summed per source.
CostSummary cost_report(const DatasetManifest &manifest, const PriceTable &prices = {},
                        const std::string &model_id = "gpt-4o");
std::string format_usd(double usd);

std::vector<EditSample> load_records(const std::string &dataset_dir);
/// Loads images and picks the rectified or raw instruction as the positive.
std::vector<TrainingExample> load_training_examples(const std::string &dataset_dir, bool use_rectified);

}  // namespace rectedit
