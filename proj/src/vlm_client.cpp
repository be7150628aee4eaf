#include "rectedit/vlm_client.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rectedit {

using nlohmann::json;

std::string to_string(VlmTask task) {
    switch (task) {
    case VlmTask::rectify: return "rectify";
    case VlmTask::summarize: return "summarize";
    case VlmTask::negatives: return "negatives";
    }
    return "rectify";
}

VlmTask vlm_task_from_string(const std::string &text) {
    if (text == "rectify") return VlmTask::rectify;
    if (text == "summarize") return VlmTask::summarize;
    if (text == "negatives") return VlmTask::negatives;
    fail(ErrorCode::malformed_response, "unknown VLM task '" + text + "'");
}

void VlmRequest::validate() const {
    require(!images.empty() && images.size() <= 2, ErrorCode::invariant, "VLM request needs one or two images");
    for (const auto &im : images) {
        require(!im.empty(), ErrorCode::invariant, "VLM request carries an empty image");
    }
    require(!prompt.empty(), ErrorCode::invariant, "VLM request prompt is empty");
}

std::string request_to_json(const VlmRequest &request) {
    json j;
    j["model_id"] = request.model_id;
    j["task"] = to_string(request.task);
    j["images"] = json::array();
    for (const auto &im : request.images) {
        j["images"].push_back(base64_encode(im));
    }
    j["prompt"] = request.prompt;
    j["max_response_tokens"] = request.max_response_tokens;
    j["temperature"] = request.temperature;
    return j.dump();
}

VlmRequest request_from_json(const std::string &text) {
    try {
        const auto j = json::parse(text);
        VlmRequest r;
        r.model_id = j.at("model_id").get<std::string>();
        r.task = vlm_task_from_string(j.value("task", std::string("rectify")));
        for (const auto &im : j.at("images")) {
            r.images.push_back(base64_decode(im.get<std::string>()));
        }
        r.prompt = j.at("prompt").get<std::string>();
        r.max_response_tokens = j.at("max_response_tokens").get<int>();
        r.temperature = j.at("temperature").get<double>();
        return r;
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_response, std::string("bad VLM request: ") + e.what());
    }
}

namespace {

json response_to_object(const VlmResponse &response) {
    json j = json::object();
    if (response.sections) {
        j["sections"] = {
            {"layout", response.sections->layout},
            {"local_attributes", response.sections->local_attributes},
            {"style_details", response.sections->style_details},
            {"summary", response.sections->summary},
        };
    }
    if (!response.candidates.empty()) {
        j["candidates"] = json::array();
        for (const auto &c : response.candidates) {
            j["candidates"].push_back({{"text", c.text}, {"attribute", c.attribute}});
        }
    }
    j["usage"] = {{"prompt_tokens", response.usage.prompt_tokens},
                  {"completion_tokens", response.usage.completion_tokens}};
    return j;
}

VlmResponse response_from_object(const json &j) {
    if (!j.is_object()) {
        fail(ErrorCode::malformed_response, "VLM response is not an object");
    }
    VlmResponse r;
    if (j.contains("sections")) {
        const auto &s = j.at("sections");
        if (!s.is_object()) {
            fail(ErrorCode::malformed_response, "sections is not an object");
        }
        VlmSections sec;
        for (const char *key : {"layout", "local_attributes", "style_details", "summary"}) {
            if (!s.contains(key) || !s.at(key).is_string()) {
                fail(ErrorCode::malformed_response, std::string("response missing section '") + key + "'");
            }
        }
        sec.layout = s.at("layout").get<std::string>();
        sec.local_attributes = s.at("local_attributes").get<std::string>();
        sec.style_details = s.at("style_details").get<std::string>();
        sec.summary = s.at("summary").get<std::string>();
        r.sections = std::move(sec);
    }
    if (j.contains("candidates")) {
        if (!j.at("candidates").is_array()) {
            fail(ErrorCode::malformed_response, "candidates is not an array");
        }
        for (const auto &c : j.at("candidates")) {
            if (!c.is_object() || !c.contains("text") || !c.at("text").is_string()) {
                fail(ErrorCode::malformed_response, "candidate without text");
            }
            r.candidates.push_back({c.at("text").get<std::string>(), c.value("attribute", std::string())});
        }
    }
    if (j.contains("usage") && j.at("usage").is_object()) {
        r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", std::int64_t{0});
        r.usage.completion_tokens = j.at("usage").value("completion_tokens", std::int64_t{0});
    }
    return r;
}

}  // namespace

std::string response_to_json(const VlmResponse &response) { return response_to_object(response).dump(); }

VlmResponse response_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_response, std::string("VLM response is not JSON: ") + e.what());
    }
    return response_from_object(j);
}

std::string request_cache_key(const VlmRequest &request) {
    Sha256 h;
    h.field("images").field(std::to_string(request.images.size()));
    for (const auto &im : request.images) {
        h.field(std::to_string(im.size()));
        h.update(im);
    }
    char temperature[64];
    std::snprintf(temperature, sizeof(temperature), "%.17g", request.temperature);
    h.field(request.prompt).field(request.model_id).field(temperature);
    return h.hex_digest();
}

FixtureVlmClient::FixtureVlmClient(std::map<VlmTask, std::vector<VlmResponse>> responses)
    : responses_(std::move(responses)) {}

FixtureVlmClient::FixtureVlmClient(const std::string &path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception &e) {
        fail(ErrorCode::config, "fixture file " + path + " is not JSON: " + e.what());
    }
    for (auto task : {VlmTask::rectify, VlmTask::summarize, VlmTask::negatives}) {
        const auto name = to_string(task);
        if (!j.contains(name)) {
            continue;
        }
        for (const auto &item : j.at(name)) {
            responses_[task].push_back(response_from_object(item));
        }
    }
}

VlmResponse FixtureVlmClient::complete(const VlmRequest &request) {
    request.validate();
    calls_.fetch_add(1);
    std::lock_guard lock(mutex_);
    const auto it = responses_.find(request.task);
    if (it == responses_.end() || it->second.empty()) {
        fail(ErrorCode::transport, "no fixture response for task " + to_string(request.task));
    }
    auto &cursor = cursor_[request.task];
    const auto &response = it->second[cursor % it->second.size()];
    ++cursor;
    return response;
}

HttpVlmClient::HttpVlmClient(std::string base_url, std::string path, std::string credential_env, int timeout_seconds)
    : base_url_(std::move(base_url)), path_(std::move(path)), credential_env_(std::move(credential_env)),
      timeout_seconds_(timeout_seconds) {}

VlmResponse HttpVlmClient::complete(const VlmRequest &request) {
    request.validate();
    calls_.fetch_add(1);
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (const char *key = std::getenv(credential_env_.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const auto result = client.Post(path_, headers, request_to_json(request), "application/json");
    if (!result) {
        fail(ErrorCode::transport, "VLM endpoint unreachable: " + httplib::to_string(result.error()));
    }
    if (result->status >= 500 || result->status == 429) {
        fail(ErrorCode::transport, "VLM endpoint returned HTTP " + std::to_string(result->status));
    }
    if (result->status != 200) {
        fail(ErrorCode::malformed_response, "VLM endpoint returned HTTP " + std::to_string(result->status));
    }
    return response_from_json(result->body);
}

CachingVlmClient::CachingVlmClient(std::shared_ptr<VlmClient> inner, std::string cache_path)
    : inner_(std::move(inner)), cache_path_(std::move(cache_path)) {
    std::ifstream in(cache_path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            entries_[j.at("key").get<std::string>()] = j.at("response").dump();
        } catch (const json::exception &) {
            // A torn final line from an interrupted build is ignored.
        }
    }
}

std::size_t CachingVlmClient::cached_entries() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

VlmResponse CachingVlmClient::complete(const VlmRequest &request) {
    const auto key = request_cache_key(request);
    {
        std::lock_guard lock(mutex_);
        if (const auto it = entries_.find(key); it != entries_.end()) {
            hits_.fetch_add(1);
            return response_from_json(it->second);
        }
    }
    const auto response = inner_->complete(request);
    const auto payload = response_to_json(response);
    std::lock_guard lock(mutex_);
    if (entries_.emplace(key, payload).second) {
        std::ofstream out(cache_path_, std::ios::app);
        require(static_cast<bool>(out), ErrorCode::unreadable_source, "cannot append to cache " + cache_path_);
        json line = {{"key", key}, {"task", to_string(request.task)}, {"response", json::parse(payload)}};
        out << line.dump() << '\n';
    }
    return response;
}

}  // namespace rectedit
