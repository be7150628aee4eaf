#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rectedit {

enum class VlmTask { rectify, summarize, negatives };

std::string to_string(VlmTask task);
VlmTask vlm_task_from_string(const std::string &text);

struct VlmRequest {
    VlmTask task = VlmTask::rectify;
    std::string model_id;
    /// Encoded (PNG) images, original first.
    std::vector<std::vector<std::uint8_t>> images;
    std::string prompt;
    int max_response_tokens = 512;
    double temperature = 0.0;

    /// Throws ErrorCode::invariant when images or prompt are empty.
    void validate() const;
};

struct VlmSections {
    std::string layout;
    std::string local_attributes;
    std::string style_details;
    std::string summary;
};

struct NegativeCandidate {
    std::string text;
    std::string attribute;
};

struct VlmUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct VlmResponse {
    std::optional<VlmSections> sections;
    std::vector<NegativeCandidate> candidates;
    VlmUsage usage;
};

/// Wire encoding: {model_id, task, images[] (base64), prompt, max_response_tokens, temperature}.
std::string request_to_json(const VlmRequest &request);
VlmRequest request_from_json(const std::string &text);

/// Wire encoding: {sections: {layout, local_attributes, style_details, summary},
/// candidates: [{text, attribute}], usage: {prompt_tokens, completion_tokens}}.
std::string response_to_json(const VlmResponse &response);
/// Throws ErrorCode::malformed_response on structurally invalid payloads.
VlmResponse response_from_json(const std::string &text);

/// Content address of a request: hash(image bytes, prompt, model_id, temperature).
std::string request_cache_key(const VlmRequest &request);

class VlmClient {
public:
    virtual ~VlmClient() = default;
    /// Throws ErrorCode::transport for retryable failures.
    virtual VlmResponse complete(const VlmRequest &request) = 0;
    /// Number of requests this client sent to its backend.
    virtual std::uint64_t backend_calls() const = 0;
};

/// Replays canned responses from a JSON fixture file, per task, cycling.
///
/// File layout: {"rectify": [resp...], "summarize": [resp...], "negatives": [resp...]}.
class FixtureVlmClient : public VlmClient {
public:
    explicit FixtureVlmClient(const std::string &path);
    explicit FixtureVlmClient(std::map<VlmTask, std::vector<VlmResponse>> responses);

    VlmResponse complete(const VlmRequest &request) override;
    std::uint64_t backend_calls() const override { return calls_.load(); }

private:
    std::map<VlmTask, std::vector<VlmResponse>> responses_;
    std::map<VlmTask, std::size_t> cursor_;
    std::mutex mutex_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Posts the wire request to an HTTP endpoint. The bearer token is read from
/// the environment variable named by `credential_env` and never logged.
class HttpVlmClient : public VlmClient {
public:
    HttpVlmClient(std::string base_url, std::string path, std::string credential_env = "RECTEDIT_VLM_API_KEY",
                  int timeout_seconds = 60);

    VlmResponse complete(const VlmRequest &request) override;
    std::uint64_t backend_calls() const override { return calls_.load(); }

private:
    std::string base_url_;
    std::string path_;
    std::string credential_env_;
    int timeout_seconds_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Content-addressed, append-only response cache in front of another client.
/// Cache file: one JSON object per line, {"key": ..., "task": ..., "response": {...}}.
class CachingVlmClient : public VlmClient {
public:
    CachingVlmClient(std::shared_ptr<VlmClient> inner, std::string cache_path);

    VlmResponse complete(const VlmRequest &request) override;
    std::uint64_t backend_calls() const override { return inner_->backend_calls(); }

    std::size_t cached_entries() const;
    std::uint64_t hits() const { return hits_.load(); }

private:
    std::shared_ptr<VlmClient> inner_;
    std::string cache_path_;
    std::map<std::string, std::string> entries_;
    mutable std::mutex mutex_;
    std::atomic<std::uint64_t> hits_{0};
};

}  // namespace rectedit
