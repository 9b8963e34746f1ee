#pragma once

// Interfaces to the external models (embedder, LLM, web image search), their
// deterministic offline mocks, HTTP-backed implementations and caches.

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace vidsearch {

using EmbeddingVector = Eigen::VectorXf;

/// Text/image encoder sharing one embedding space. Implementations must be
/// deterministic and safe to call from several threads.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual Eigen::Index dimension() const = 0;
    virtual EmbeddingVector embed_text(const std::string& text) const = 0;
    /// `reference` is a URL or a local path.
    virtual EmbeddingVector embed_image(const std::string& reference) const = 0;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// Non-empty reply, or throws TransportError.
    virtual std::string complete(const std::string& prompt) const = 0;
};

class ImageSearchClient {
public:
    virtual ~ImageSearchClient() = default;
    /// At most n distinct references.
    virtual std::vector<std::string> search_images(const std::string& query, std::size_t n) const = 0;
};

// ---------------------------------------------------------------------------
// Prompt framing shared by every agent. The first line names the task; the
// mock LLM dispatches on it.

inline constexpr std::string_view kTaskPrefix = "### task: ";
namespace task {
inline constexpr std::string_view kRefineOcr = "refine_ocr";
inline constexpr std::string_view kPlan = "plan";
inline constexpr std::string_view kImageQueries = "image_queries";
inline constexpr std::string_view kAnswer = "answer";
}  // namespace task

/// Task name from the first prompt line, or empty.
std::string prompt_task(std::string_view prompt);

// ---------------------------------------------------------------------------
// Mocks

/// Unit-norm vector derived from SHA-256(seed, input, block counter). Equal
/// arguments give bit-identical output. Requires dimension >= 2.
EmbeddingVector mock_embed(std::string_view input, Eigen::Index dimension, std::string_view seed = {});

class MockEmbedder final : public EmbeddingClient {
public:
    explicit MockEmbedder(Eigen::Index dimension, std::string seed = {});
    Eigen::Index dimension() const override { return dimension_; }
    EmbeddingVector embed_text(const std::string& text) const override;
    /// Embeds the reference string itself, so fixtures can place frames next
    /// to known reference images.
    EmbeddingVector embed_image(const std::string& reference) const override;

private:
    Eigen::Index dimension_;
    std::string seed_;
};

/// Pure function of the prompt:
///  - refine_ocr: echoes every "N. text" item;
///  - image_queries: "<name>" and "<name> <city>" per listed candidate;
///  - answer: a template answer citing the first listed frame;
///  - anything else: "{}".
class MockLlm final : public LlmClient {
public:
    std::string complete(const std::string& prompt) const override;
};

/// LLM backed by a callable; counts calls. Used by tests to script replies.
class CallbackLlm final : public LlmClient {
public:
    using Fn = std::function<std::string(const std::string&)>;
    explicit CallbackLlm(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const std::string& prompt) const override;
    int calls() const { return calls_.load(); }

private:
    Fn fn_;
    mutable std::atomic<int> calls_{0};
};

/// Exact-match table from query string to image references.
class FixtureImageSearch final : public ImageSearchClient {
public:
    explicit FixtureImageSearch(std::map<std::string, std::vector<std::string>> table);
    /// JSON object {"query": ["ref", ...], ...}; relative local references are
    /// resolved against the file's directory.
    static FixtureImageSearch from_file(const std::filesystem::path& path);
    std::vector<std::string> search_images(const std::string& query, std::size_t n) const override;

private:
    std::map<std::string, std::vector<std::string>> table_;
};

// ---------------------------------------------------------------------------
// Remote clients

struct RetryPolicy {
    int retries = 2;
    std::chrono::milliseconds base_delay{200};
};

struct Endpoint {
    std::string url;  // scheme://host[:port]/path
    std::string api_key;
    std::chrono::seconds timeout{60};
};

/// Gemini generateContent-compatible endpoint; key sent as x-goog-api-key.
class HttpLlmClient final : public LlmClient {
public:
    HttpLlmClient(Endpoint endpoint, RetryPolicy retry = {});
    std::string complete(const std::string& prompt) const override;

private:
    Endpoint endpoint_;
    RetryPolicy retry_;
};

/// Google Custom Search JSON API (searchType=image).
class HttpImageSearchClient final : public ImageSearchClient {
public:
    HttpImageSearchClient(Endpoint endpoint, std::string engine_id, RetryPolicy retry = {});
    std::vector<std::string> search_images(const std::string& query, std::size_t n) const override;

private:
    Endpoint endpoint_;
    std::string engine_id_;
    RetryPolicy retry_;
};

/// POST {"text": ...} or {"image": ref} -> {"embedding": [...]}.
class HttpEmbeddingClient final : public EmbeddingClient {
public:
    HttpEmbeddingClient(Endpoint endpoint, Eigen::Index dimension, RetryPolicy retry = {});
    Eigen::Index dimension() const override { return dimension_; }
    EmbeddingVector embed_text(const std::string& text) const override;
    EmbeddingVector embed_image(const std::string& reference) const override;

private:
    EmbeddingVector request(const std::string& field, const std::string& value) const;

    Endpoint endpoint_;
    Eigen::Index dimension_;
    RetryPolicy retry_;
};

// ---------------------------------------------------------------------------
// Response caches keyed by request content. Failures are not cached.

class CachingLlm final : public LlmClient {
public:
    explicit CachingLlm(std::shared_ptr<const LlmClient> inner) : inner_(std::move(inner)) {}
    std::string complete(const std::string& prompt) const override;

private:
    std::shared_ptr<const LlmClient> inner_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::string> cache_;
};

class CachingEmbedder final : public EmbeddingClient {
public:
    explicit CachingEmbedder(std::shared_ptr<const EmbeddingClient> inner) : inner_(std::move(inner)) {}
    Eigen::Index dimension() const override { return inner_->dimension(); }
    EmbeddingVector embed_text(const std::string& text) const override;
    EmbeddingVector embed_image(const std::string& reference) const override;

private:
    EmbeddingVector cached(const std::string& key, const std::function<EmbeddingVector()>& compute) const;

    std::shared_ptr<const EmbeddingClient> inner_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, EmbeddingVector> cache_;
};

class CachingImageSearch final : public ImageSearchClient {
public:
    explicit CachingImageSearch(std::shared_ptr<const ImageSearchClient> inner) : inner_(std::move(inner)) {}
    std::vector<std::string> search_images(const std::string& query, std::size_t n) const override;

private:
    std::shared_ptr<const ImageSearchClient> inner_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> cache_;
};

}  // namespace vidsearch
