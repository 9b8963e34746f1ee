#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/model_clients.hpp"

#include <httplib.h>

#include <thread>

namespace vidsearch {
namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Client make_client(const Endpoint& endpoint, const SplitUrl& url) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    return client;
}

/// Runs `attempt` until it returns a body, retrying transport failures and
/// non-2xx statuses with exponential backoff.
std::string with_retries(const RetryPolicy& policy, const std::string& what,
                         const std::function<httplib::Result()>& attempt) {
    std::string last_error;
    const int attempts = policy.retries + 1;
    for (int i = 0; i < attempts; ++i) {
        if (i > 0) std::this_thread::sleep_for(policy.base_delay * (1 << (i - 1)));
        auto result = attempt();
        if (!result) {
            last_error = what + ": " + httplib::to_string(result.error());
            continue;
        }
        if (result->status >= 200 && result->status < 300) return result->body;
        last_error = what + ": HTTP " + std::to_string(result->status);
    }
    throw TransportError(last_error, attempts);
}

Json parse_reply(const std::string& body, const std::string& what, int attempts) {
    try {
        return Json::parse(body);
    } catch (const Json::exception& e) {
        throw TransportError(what + ": malformed reply: " + e.what(), attempts);
    }
}

}  // namespace

HttpLlmClient::HttpLlmClient(Endpoint endpoint, RetryPolicy retry) : endpoint_(std::move(endpoint)), retry_(retry) {}

std::string HttpLlmClient::complete(const std::string& prompt) const {
    const auto url = split_url(endpoint_.url);
    const Json body = {{"contents", Json::array({{{"role", "user"}, {"parts", Json::array({{{"text", prompt}}})}}})}};
    const auto payload = body.dump();
    const auto reply_body = with_retries(retry_, "llm request", [&] {
        auto client = make_client(endpoint_, url);
        httplib::Headers headers;
        if (!endpoint_.api_key.empty()) headers.emplace("x-goog-api-key", endpoint_.api_key);
        return client.Post(url.path, headers, payload, "application/json");
    });
    const Json reply = parse_reply(reply_body, "llm request", retry_.retries + 1);
    std::string text;
    try {
        for (const auto& part : reply.at("candidates").at(0).at("content").at("parts"))
            if (part.contains("text")) text += part["text"].get<std::string>();
    } catch (const Json::exception& e) {
        throw TransportError(std::string("llm request: unexpected reply shape: ") + e.what(), retry_.retries + 1);
    }
    if (text.empty()) throw TransportError("llm request: empty reply", retry_.retries + 1);
    return text;
}

HttpImageSearchClient::HttpImageSearchClient(Endpoint endpoint, std::string engine_id, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), engine_id_(std::move(engine_id)), retry_(retry) {}

std::vector<std::string> HttpImageSearchClient::search_images(const std::string& query, std::size_t n) const {
    if (n == 0) return {};
    const auto url = split_url(endpoint_.url);
    const httplib::Params params{{"key", endpoint_.api_key},
                                 {"cx", engine_id_},
                                 {"q", query},
                                 {"searchType", "image"},
                                 {"num", std::to_string(std::min<std::size_t>(n, 10))}};
    const auto body = with_retries(retry_, "image search", [&] {
        auto client = make_client(endpoint_, url);
        return client.Get(url.path, params, httplib::Headers{});
    });
    const Json reply = parse_reply(body, "image search", retry_.retries + 1);
    std::vector<std::string> out;
    for (const auto& item : reply.value("items", Json::array())) {
        if (out.size() >= n) break;
        const auto link = item.value("link", std::string());
        if (!link.empty() && std::find(out.begin(), out.end(), link) == out.end()) out.push_back(link);
    }
    return out;
}

HttpEmbeddingClient::HttpEmbeddingClient(Endpoint endpoint, Eigen::Index dimension, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), dimension_(dimension), retry_(retry) {}

EmbeddingVector HttpEmbeddingClient::request(const std::string& field, const std::string& value) const {
    const auto url = split_url(endpoint_.url);
    const auto payload = Json{{field, value}}.dump();
    const auto body = with_retries(retry_, "embedding request", [&] {
        auto client = make_client(endpoint_, url);
        httplib::Headers headers;
        if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
        return client.Post(url.path, headers, payload, "application/json");
    });
    const Json reply = parse_reply(body, "embedding request", retry_.retries + 1);
    std::vector<float> values;
    try {
        values = reply.at("embedding").get<std::vector<float>>();
    } catch (const Json::exception& e) {
        throw TransportError(std::string("embedding request: unexpected reply shape: ") + e.what(), retry_.retries + 1);
    }
    if (static_cast<Eigen::Index>(values.size()) != dimension_)
        throw DimensionError("embedding endpoint returned dimension " + std::to_string(values.size()) + ", expected " +
                             std::to_string(dimension_));
    EmbeddingVector v = Eigen::Map<const EmbeddingVector>(values.data(), dimension_);
    if (!v.allFinite()) throw TransportError("embedding request: non-finite values", retry_.retries + 1);
    return v;
}

EmbeddingVector HttpEmbeddingClient::embed_text(const std::string& text) const { return request("text", text); }

EmbeddingVector HttpEmbeddingClient::embed_image(const std::string& reference) const {
    return request("image", reference);
}

}  // namespace vidsearch
