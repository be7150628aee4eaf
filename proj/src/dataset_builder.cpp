#include "rectedit/dataset_builder.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"
#include "rectedit/image.hpp"
#include "rectedit/text_encoder.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <random>
#include <thread>

namespace rectedit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string content_id(const std::string &source_id, const std::vector<std::uint8_t> &a,
                       const std::vector<std::uint8_t> &b, const std::string &instruction) {
    Sha256 h;
    h.field(source_id);
    h.field(std::to_string(a.size())).update(a);
    h.field(std::to_string(b.size())).update(b);
    h.field(instruction);
    return h.hex_digest().substr(0, 16);
}

json negatives_json(const NegativeSet &set) {
    json negatives = json::array(), attributes = json::array();
    for (std::size_t i = 0; i < set.negatives.size(); ++i) {
        negatives.push_back(set.negatives[i]);
        attributes.push_back(to_string(set.attributes[i]));
    }
    return {{"negatives", negatives}, {"attributes", attributes}};
}

std::string mask_name(const std::string &id) { return id + "_mask.png"; }

Image mask_image(const std::vector<std::uint8_t> &mask, int size) {
    Image image(size, size, 0);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask[p]) std::fill_n(image.rgb.begin() + static_cast<std::ptrdiff_t>(p * 3), 3, std::uint8_t{255});
    }
    return image;
}

}  // namespace

IngestResult ingest_source(const std::string &dir) {
    const fs::path root(dir);
    const auto header_path = (root / "source.json").string();
    require(fs::is_directory(root) && fs::exists(header_path), ErrorCode::unreadable_source,
            "source " + dir + " has no source.json");
    IngestResult result;
    std::string index;
    try {
        const auto header = json::parse(read_text_file(header_path));
        require(header.value("format", std::string()) == "rectedit-source", ErrorCode::format_version,
                dir + " is not a rectedit source");
        const int version = header.at("version").get<int>();
        require(version == kSourceFormatVersion, ErrorCode::format_version,
                "source " + dir + " has version " + std::to_string(version) + ", expected " +
                    std::to_string(kSourceFormatVersion));
        result.source_id = header.at("source_id").get<std::string>();
        result.verified = header.at("verified").get<bool>();
        index = read_text_file((root / "pairs.jsonl").string());
    } catch (const json::exception &e) {
        fail(ErrorCode::unreadable_source, "source " + dir + " header: " + e.what());
    }

    std::size_t start = 0;
    while (start < index.size()) {
        auto end = index.find('\n', start);
        if (end == std::string::npos) end = index.size();
        const auto line = index.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            RawPair pair;
            pair.source_id = result.source_id;
            pair.verified = result.verified;
            pair.raw_instruction = j.at("instruction").get<std::string>();
            pair.task_type = j.value("task_type", std::string());
            pair.original_png = read_file_bytes((root / j.at("original").get<std::string>()).string());
            pair.edited_png = read_file_bytes((root / j.at("edited").get<std::string>()).string());
            decode_png(pair.original_png);
            decode_png(pair.edited_png);
            pair.id = content_id(pair.source_id, pair.original_png, pair.edited_png, pair.raw_instruction);
            result.pairs.push_back(std::move(pair));
        } catch (const json::exception &) {
            ++result.skipped;
        } catch (const Error &) {
            ++result.skipped;
        }
    }
    if (result.skipped > 0) {
        spdlog::warn("source {}: skipped {} corrupt entries", result.source_id, result.skipped);
    }
    return result;
}

void write_synth_source(const std::string &dir, const std::string &source_id, bool verified,
                        const std::vector<SynthEdit> &edits) {
    fs::create_directories(fs::path(dir) / "images");
    json header = {{"format", "rectedit-source"},
                   {"version", kSourceFormatVersion},
                   {"source_id", source_id},
                   {"verified", verified}};
    write_text_file((fs::path(dir) / "source.json").string(), header.dump(1) + "\n");
    std::string index;
    for (const auto &e : edits) {
        const std::string orig = "images/" + e.id + "_original.png";
        const std::string edit = "images/" + e.id + "_edited.png";
        save_png(e.original, (fs::path(dir) / orig).string());
        save_png(e.edited, (fs::path(dir) / edit).string());
        json line = {{"original", orig},
                     {"edited", edit},
                     {"instruction", verified ? e.instruction : e.raw_instruction},
                     {"task_type", to_string(e.kind)}};
        index += line.dump() + "\n";
    }
    write_text_file((fs::path(dir) / "pairs.jsonl").string(), index);
}

std::vector<int> proportional_quotas(const std::vector<int> &reference, double total) {
    require(!reference.empty(), ErrorCode::empty_list, "no reference quotas");
    require(total >= 0.0, ErrorCode::invalid_range, "total must be non-negative");
    const double sum = std::accumulate(reference.begin(), reference.end(), 0.0);
    std::vector<int> out;
    for (int q : reference) {
        out.push_back(static_cast<int>(std::floor(q * total / sum + 0.5)));
    }
    return out;
}

std::vector<std::vector<std::size_t>> balance_sample(const std::vector<std::vector<std::string>> &labels,
                                                     const std::vector<int> &quotas, std::uint64_t seed) {
    require(labels.size() == quotas.size(), ErrorCode::size_mismatch, "one quota per source is required");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const int quota = quotas[s];
        require(quota >= 0, ErrorCode::invalid_range, "quota must be non-negative");
        require(static_cast<std::size_t>(quota) <= labels[s].size(), ErrorCode::quota_exceeds_available,
                "source " + std::to_string(s) + " has " + std::to_string(labels[s].size()) + " pairs, quota is " +
                    std::to_string(quota));
        std::mt19937_64 rng(derive_seed(seed, "balance", s));
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < labels[s].size(); ++i) groups[labels[s][i]].push_back(i);
        for (auto &[label, members] : groups) std::shuffle(members.begin(), members.end(), rng);
        std::vector<std::size_t> picked;
        // Round-robin over labels in sorted order keeps every label within one of the others.
        for (std::size_t round = 0; static_cast<int>(picked.size()) < quota; ++round) {
            for (auto &[label, members] : groups) {
                if (static_cast<int>(picked.size()) >= quota) break;
                if (round < members.size()) picked.push_back(members[round]);
            }
        }
        std::sort(picked.begin(), picked.end());
        out.push_back(std::move(picked));
    }
    return out;
}

std::string sample_to_json(const EditSample &s) {
    json j;
    j["id"] = s.id;
    j["source_id"] = s.source_id;
    j["original_path"] = s.original_path;
    j["edited_path"] = s.edited_path;
    j["raw_instruction"] = s.raw_instruction;
    j["rectified_instruction"] = s.rectified_instruction ? json(*s.rectified_instruction) : json(nullptr);
    if (s.negatives) {
        const auto n = negatives_json(*s.negatives);
        j["negatives"] = n.at("negatives");
        j["attributes"] = n.at("attributes");
    } else {
        j["negatives"] = json::array();
        j["attributes"] = json::array();
    }
    j["verified"] = s.verified;
    j["task_type"] = s.task_type;
    return j.dump();
}

EditSample sample_from_json(const std::string &line) {
    try {
        const auto j = json::parse(line);
        EditSample s;
        s.id = j.at("id").get<std::string>();
        s.source_id = j.at("source_id").get<std::string>();
        s.original_path = j.at("original_path").get<std::string>();
        s.edited_path = j.at("edited_path").get<std::string>();
        s.raw_instruction = j.at("raw_instruction").get<std::string>();
        if (!j.at("rectified_instruction").is_null()) {
            s.rectified_instruction = j.at("rectified_instruction").get<std::string>();
        }
        const auto &negatives = j.at("negatives");
        const auto &attributes = j.at("attributes");
        if (!negatives.empty()) {
            NegativeSet set;
            set.positive = s.rectified_instruction.value_or(s.raw_instruction);
            for (const auto &n : negatives) set.negatives.push_back(n.get<std::string>());
            for (const auto &a : attributes) set.attributes.push_back(attribute_from_string(a.get<std::string>()));
            s.negatives = std::move(set);
        }
        s.verified = j.at("verified").get<bool>();
        s.task_type = j.value("task_type", std::string());
        return s;
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, std::string("bad record: ") + e.what());
    } catch (const Error &e) {
        fail(ErrorCode::decode, std::string("bad record: ") + e.what());
    }
}

std::vector<std::string> sample_problems(const EditSample &s, int max_diff_tokens) {
    std::vector<std::string> problems;
    if (s.verified && s.rectified_instruction != s.raw_instruction) {
        problems.push_back("verified sample has a rectified instruction that differs from the raw one");
    }
    if (!s.rectified_instruction || s.rectified_instruction->empty()) {
        problems.push_back("missing rectified instruction");
    } else if (count_tokens(*s.rectified_instruction) > kMaxTextTokens) {
        problems.push_back("rectified instruction exceeds the token budget");
    }
    if (!s.negatives || s.negatives->negatives.empty()) {
        problems.push_back("no negatives");
    } else {
        try {
            s.negatives->validate(max_diff_tokens);
        } catch (const Error &e) {
            problems.push_back(e.what());
        }
    }
    return problems;
}

double BuildConfig::preset_total() const {
    static const std::map<std::string, double> sizes = {
        {"5k", 5000}, {"10k", 10000}, {"20k", 20000}, {"40k", 40000}, {"desk", 40000}};
    const auto it = sizes.find(preset);
    if (it == sizes.end()) fail(ErrorCode::config, "unknown preset '" + preset + "'");
    return it->second * scale;
}

std::vector<int> BuildConfig::resolved_quotas() const {
    if (!quotas.empty()) return quotas;
    return proportional_quotas(kReferenceQuotas, preset_total());
}

void BuildConfig::validate() const {
    preset_total();
    require(scale > 0.0, ErrorCode::config, "scale must be positive");
    require(availability >= 1.0, ErrorCode::config, "availability must be >= 1");
    require(raw_noise >= 0.0 && raw_noise <= 1.0, ErrorCode::config, "raw_noise must be in [0, 1]");
    require(suite_size >= 0, ErrorCode::config, "suite_size must be >= 0");
    require(workers >= 1, ErrorCode::config, "workers must be >= 1");
    require(failure_ceiling >= 0.0 && failure_ceiling <= 1.0, ErrorCode::config, "failure_ceiling must be in [0, 1]");
    require(sources.empty() || quotas.size() == sources.size(), ErrorCode::config,
            "quotas must list one value per source");
    forge.validate();
}

BuildConfig parse_build_config(const KeyValues &values) {
    ConfigReader r(values);
    BuildConfig c;
    c.preset = r.get_string("preset", c.preset);
    c.scale = r.get_double("scale", c.scale);
    c.seed = r.get_uint("seed", c.seed);
    c.availability = r.get_double("availability", c.availability);
    c.raw_noise = r.get_double("raw_noise", c.raw_noise);
    c.suite_size = static_cast<int>(r.get_int("suite_size", c.suite_size));
    c.workers = static_cast<int>(r.get_int("workers", c.workers));
    c.failure_ceiling = r.get_double("failure_ceiling", c.failure_ceiling);
    const auto sources = r.get_string("sources", "");
    if (!sources.empty()) {
        std::string current;
        for (char ch : sources + ",") {
            if (ch == ',') {
                const auto b = current.find_first_not_of(" \t");
                const auto e = current.find_last_not_of(" \t");
                if (b != std::string::npos) c.sources.push_back(current.substr(b, e - b + 1));
                current.clear();
            } else {
                current.push_back(ch);
            }
        }
    }
    for (auto q : r.get_ints("quotas", {})) c.quotas.push_back(static_cast<int>(q));
    c.vlm_endpoint = r.get_string("vlm_endpoint", c.vlm_endpoint);
    c.vlm_path = r.get_string("vlm_path", c.vlm_path);
    c.forge.model_id = r.get_string("forge.model_id", c.forge.model_id);
    c.forge.k = static_cast<int>(r.get_int("forge.k", c.forge.k));
    c.forge.max_diff_tokens = static_cast<int>(r.get_int("forge.max_diff_tokens", c.forge.max_diff_tokens));
    c.forge.max_retries = static_cast<int>(r.get_int("forge.max_retries", c.forge.max_retries));
    c.forge.token_budget = static_cast<int>(r.get_int("forge.token_budget", c.forge.token_budget));
    c.forge.prices.fallback_usd = r.get_double("forge.price_usd", c.forge.prices.fallback_usd);
    c.forge.retry.max_attempts = static_cast<int>(r.get_int("forge.retry_attempts", c.forge.retry.max_attempts));
    c.forge.retry.initial_delay_ms = r.get_double("forge.retry_delay_ms", c.forge.retry.initial_delay_ms);

    static const std::set<std::string> presets = {"5k", "10k", "20k", "40k", "desk"};
    if (!presets.count(c.preset)) r.invalid("preset", "must be one of 5k, 10k, 20k, 40k, desk");
    if (!(c.scale > 0)) r.invalid("scale", "must be positive");
    if (c.availability < 1) r.invalid("availability", "must be >= 1");
    if (c.raw_noise < 0 || c.raw_noise > 1) r.invalid("raw_noise", "must be in [0, 1]");
    if (c.suite_size < 0) r.invalid("suite_size", "must be >= 0");
    if (c.workers < 1) r.invalid("workers", "must be >= 1");
    if (c.failure_ceiling < 0 || c.failure_ceiling > 1) r.invalid("failure_ceiling", "must be in [0, 1]");
    if (!c.sources.empty() && c.quotas.size() != c.sources.size()) r.invalid("quotas", "needs one value per source");
    for (int q : c.quotas) {
        if (q < 0) r.invalid("quotas", "must be non-negative");
    }
    if (c.forge.k < 1) r.invalid("forge.k", "must be >= 1");
    if (c.forge.max_diff_tokens < 1) r.invalid("forge.max_diff_tokens", "must be >= 1");
    if (c.forge.max_retries < 0) r.invalid("forge.max_retries", "must be >= 0");
    if (c.forge.token_budget < 1) r.invalid("forge.token_budget", "must be >= 1");
    if (c.forge.prices.fallback_usd < 0) r.invalid("forge.price_usd", "must be non-negative");
    if (c.forge.retry.max_attempts < 1) r.invalid("forge.retry_attempts", "must be >= 1");
    r.finish();
    return c;
}

KeyValues render_build_config(const BuildConfig &c) {
    auto number = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::string sources, quotas;
    for (std::size_t i = 0; i < c.sources.size(); ++i) sources += (i ? "," : "") + c.sources[i];
    for (std::size_t i = 0; i < c.quotas.size(); ++i) quotas += (i ? "," : "") + std::to_string(c.quotas[i]);
    return {
        {"preset", c.preset},
        {"scale", number(c.scale)},
        {"seed", std::to_string(c.seed)},
        {"availability", number(c.availability)},
        {"raw_noise", number(c.raw_noise)},
        {"suite_size", std::to_string(c.suite_size)},
        {"workers", std::to_string(c.workers)},
        {"failure_ceiling", number(c.failure_ceiling)},
        {"sources", sources},
        {"quotas", quotas},
        {"vlm_endpoint", c.vlm_endpoint},
        {"vlm_path", c.vlm_path},
        {"forge.model_id", c.forge.model_id},
        {"forge.k", std::to_string(c.forge.k)},
        {"forge.max_diff_tokens", std::to_string(c.forge.max_diff_tokens)},
        {"forge.max_retries", std::to_string(c.forge.max_retries)},
        {"forge.token_budget", std::to_string(c.forge.token_budget)},
        {"forge.price_usd", number(c.forge.prices.fallback_usd)},
        {"forge.retry_attempts", std::to_string(c.forge.retry.max_attempts)},
        {"forge.retry_delay_ms", number(c.forge.retry.initial_delay_ms)},
    };
}

std::string manifest_to_json(const DatasetManifest &m) {
    json j;
    j["sources"] = json::array();
    for (const auto &s : m.sources) {
        j["sources"].push_back({{"source_id", s.source_id},
                                {"verified", s.verified},
                                {"quota", s.quota},
                                {"achieved", s.achieved},
                                {"rectified", s.rectified},
                                {"failures", s.failures},
                                {"skipped_corrupt", s.skipped_corrupt},
                                {"cost_usd", s.cost_usd}});
    }
    j["total"] = m.total;
    j["task_histogram"] = m.task_histogram;
    j["config_hash"] = m.config_hash;
    j["cost_usd"] = m.cost_usd;
    j["failures"] = m.failures;
    j["failure_reasons"] = m.failure_reasons;
    return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string &text) {
    try {
        const auto j = json::parse(text);
        DatasetManifest m;
        for (const auto &s : j.at("sources")) {
            m.sources.push_back({s.at("source_id").get<std::string>(), s.at("verified").get<bool>(),
                                 s.at("quota").get<int>(), s.at("achieved").get<int>(), s.at("rectified").get<int>(),
                                 s.at("failures").get<int>(), s.at("skipped_corrupt").get<int>(),
                                 s.at("cost_usd").get<double>()});
        }
        m.total = j.at("total").get<int>();
        m.task_histogram = j.at("task_histogram").get<std::map<std::string, int>>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.cost_usd = j.at("cost_usd").get<double>();
        m.failures = j.at("failures").get<int>();
        m.failure_reasons = j.at("failure_reasons").get<std::map<std::string, int>>();
        return m;
    } catch (const json::exception &e) {
        fail(ErrorCode::decode, std::string("bad manifest: ") + e.what());
    }
}

SynthSources generate_synth_sources(const BuildConfig &config, const std::string &out_dir) {
    static const std::vector<std::pair<std::string, bool>> names = {
        {"source_a", false}, {"source_b", true}, {"source_c", false}};
    const auto quotas = config.resolved_quotas();
    require(quotas.size() == names.size(), ErrorCode::config, "synth sources need exactly three quotas");
    SynthSources out;
    for (std::size_t s = 0; s < names.size(); ++s) {
        SynthConfig sc;
        sc.raw_noise = names[s].second ? 0.0 : config.raw_noise;
        sc.k = config.forge.k;
        const int available = std::max(1, static_cast<int>(std::ceil(quotas[s] * config.availability)));
        auto edits = synth_world(available, derive_seed(config.seed, "synth.source", s), sc);
        const auto dir = (fs::path(out_dir) / "sources" / names[s].first).string();
        write_synth_source(dir, names[s].first, names[s].second, edits);
        out.dirs.push_back(dir);
        out.edits.insert(out.edits.end(), edits.begin(), edits.end());
    }
    if (config.suite_size > 0) {
        SynthConfig sc;
        sc.k = config.forge.k;
        write_suite((fs::path(out_dir) / "suite").string(),
                    synth_world(config.suite_size, derive_seed(config.seed, "synth.suite"), sc));
    }
    return out;
}

void write_suite(const std::string &dir, const std::vector<SynthEdit> &edits) {
    fs::create_directories(fs::path(dir) / "images");
    std::string index;
    for (const auto &e : edits) {
        const std::string orig = "images/" + e.id + "_original.png";
        const std::string edit = "images/" + e.id + "_edited.png";
        const std::string mask = "images/" + mask_name(e.id);
        save_png(e.original, (fs::path(dir) / orig).string());
        save_png(e.edited, (fs::path(dir) / edit).string());
        save_png(mask_image(e.mask, e.original.width), (fs::path(dir) / mask).string());
        json line = {{"id", e.id},           {"original", orig},
                     {"edited", edit},       {"mask", mask},
                     {"instruction", e.instruction},
                     {"task_type", to_string(e.kind)}};
        line.update(negatives_json(e.negatives));
        index += line.dump() + "\n";
    }
    write_text_file((fs::path(dir) / "suite.jsonl").string(), index);
}

DatasetManifest build_dataset(const BuildConfig &config, const std::string &out_dir, VlmClient &client) {
    config.validate();
    require(!config.sources.empty(), ErrorCode::config, "build_dataset needs at least one source");
    const auto quotas = config.resolved_quotas();
    require(quotas.size() == config.sources.size(), ErrorCode::config, "one quota per source is required");
    fs::create_directories(fs::path(out_dir) / "images");

    DatasetManifest manifest;

    std::vector<IngestResult> ingested;
    std::vector<std::vector<std::string>> labels;
    for (const auto &dir : config.sources) {
        ingested.push_back(ingest_source(dir));
        std::vector<std::string> l;
        for (const auto &p : ingested.back().pairs) l.push_back(p.task_type);
        labels.push_back(std::move(l));
    }
    const auto picks = balance_sample(labels, quotas, config.seed);

    // Sources hash by id rather than path, and the worker count is left out: neither changes the output.
    auto hashed = render_build_config(config);
    hashed.erase("workers");
    hashed["sources"].clear();
    for (std::size_t s = 0; s < ingested.size(); ++s) hashed["sources"] += (s ? "," : "") + ingested[s].source_id;
    manifest.config_hash = sha256_hex(render_key_values(hashed));

    struct Job {
        std::size_t source;
        const RawPair *pair;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < picks.size(); ++s) {
        for (auto idx : picks[s]) jobs.push_back({s, &ingested[s].pairs[idx]});
    }

    struct Outcome {
        std::optional<EditSample> sample;
        bool rectified = false;
        std::string failure;
    };
    std::vector<Outcome> outcomes(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            const auto &pair = *jobs[i].pair;
            EncodedPair encoded{{pair.id, pair.raw_instruction}, pair.original_png, pair.edited_png};
            try {
                EditSample s;
                s.id = pair.id;
                s.source_id = pair.source_id;
                s.verified = pair.verified;
                s.raw_instruction = pair.raw_instruction;
                s.task_type = pair.task_type;
                s.original_path = "images/" + pair.id + "_original.png";
                s.edited_path = "images/" + pair.id + "_edited.png";
                if (pair.verified) {
                    s.rectified_instruction = pair.raw_instruction;
                } else {
                    s.rectified_instruction = rectify_instruction(encoded, client, config.forge).summarized_instruction;
                    outcomes[i].rectified = true;
                }
                s.negatives = generate_negatives(encoded, *s.rectified_instruction, client, config.forge);
                outcomes[i].sample = std::move(s);
            } catch (const Error &e) {
                outcomes[i].failure = std::string(to_string(e.code()));
                spdlog::warn("pair {} failed: {}", pair.id, e.what());
            }
        }
    };
    std::vector<std::thread> threads;
    for (int w = 1; w < config.workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto &t : threads) t.join();

    for (std::size_t s = 0; s < config.sources.size(); ++s) {
        SourceManifest sm;
        sm.source_id = ingested[s].source_id;
        sm.verified = ingested[s].verified;
        sm.quota = quotas[s];
        sm.skipped_corrupt = ingested[s].skipped;
        manifest.sources.push_back(sm);
    }
    std::vector<EditSample> samples;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto &sm = manifest.sources[jobs[i].source];
        auto &o = outcomes[i];
        if (!o.sample) {
            ++sm.failures;
            ++manifest.failures;
            ++manifest.failure_reasons[o.failure];
            continue;
        }
        if (o.rectified) ++sm.rectified;
        ++sm.achieved;
        ++manifest.task_histogram[o.sample->task_type];
        const auto &pair = *jobs[i].pair;
        write_file_bytes((fs::path(out_dir) / o.sample->original_path).string(), pair.original_png);
        write_file_bytes((fs::path(out_dir) / o.sample->edited_path).string(), pair.edited_png);
        samples.push_back(std::move(*o.sample));
    }
    // Every processed pair goes through the VLM at least once (negatives), so each is billed.
    const double unit = config.forge.prices.price(config.forge.model_id);
    for (auto &sm : manifest.sources) {
        sm.cost_usd = sm.achieved * unit;
        manifest.total += sm.achieved;
        manifest.cost_usd += sm.cost_usd;
    }

    const double rate = jobs.empty() ? 0.0 : static_cast<double>(manifest.failures) / static_cast<double>(jobs.size());
    if (rate > config.failure_ceiling) {
        fail(ErrorCode::failure_ceiling, std::to_string(manifest.failures) + " of " + std::to_string(jobs.size()) +
                                             " samples failed, above the ceiling of " +
                                             format_usd(100.0 * config.failure_ceiling) + "%");
    }

    std::sort(samples.begin(), samples.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    std::string records;
    for (const auto &s : samples) records += sample_to_json(s) + "\n";
    write_text_file((fs::path(out_dir) / "records.jsonl").string(), records);
    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(manifest));
    return manifest;
}

CostSummary cost_report(const DatasetManifest &manifest, const PriceTable &prices, const std::string &model_id) {
    CostSummary out;
    const double unit = prices.price(model_id);
    for (const auto &s : manifest.sources) {
        const double usd = s.achieved * unit;
        out.per_source_usd[s.source_id] = usd;
        out.total_usd += usd;
    }
    return out;
}

std::string format_usd(double usd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", usd);
    return buf;
}

std::vector<EditSample> load_records(const std::string &dataset_dir) {
    const auto text = read_text_file((fs::path(dataset_dir) / "records.jsonl").string());
    std::vector<EditSample> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        if (end > start) out.push_back(sample_from_json(text.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

std::vector<TrainingExample> load_training_examples(const std::string &dataset_dir, bool use_rectified) {
    std::vector<TrainingExample> out;
    for (const auto &s : load_records(dataset_dir)) {
        TrainingExample ex;
        ex.id = s.id;
        ex.original = image_to_tensor(load_png((fs::path(dataset_dir) / s.original_path).string()));
        ex.edited = image_to_tensor(load_png((fs::path(dataset_dir) / s.edited_path).string()));
        ex.instruction = use_rectified ? s.rectified_instruction.value_or(s.raw_instruction) : s.raw_instruction;
        if (s.negatives) ex.negatives = s.negatives->negatives;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace rectedit
