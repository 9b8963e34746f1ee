#pragma once

// Engine configuration, ingestion into immutable corpus snapshots, and the
// request dispatch shared by the HTTP service and the CLI.

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/landmark.hpp"
#include "vidsearch/landmark_kb.hpp"
#include "vidsearch/model_clients.hpp"
#include "vidsearch/object_index.hpp"
#include "vidsearch/orchestrator.hpp"
#include "vidsearch/planner.hpp"
#include "vidsearch/text_index.hpp"
#include "vidsearch/vector_index.hpp"

namespace vidsearch {

/// Request-level failure carrying an HTTP status and a structured body.
class ApiError : public Error {
public:
    ApiError(int status, const std::string& what, Json details = Json::object())
        : Error(what), status_(status), details_(std::move(details)) {}
    int status() const { return status_; }
    const Json& details() const { return details_; }

private:
    int status_;
    Json details_;
};

struct DataPaths {
    std::optional<std::filesystem::path> shots;
    std::optional<std::filesystem::path> meta;
    std::optional<std::filesystem::path> embeddings;  // .jsonl or binary
    std::optional<std::filesystem::path> asr;
    std::optional<std::filesystem::path> ocr;
    std::optional<std::filesystem::path> objects;
    std::optional<std::filesystem::path> landmarks;
    std::optional<std::filesystem::path> image_fixtures;  // mock image search table
};

struct EngineConfig {
    DataPaths data;
    ModalityWeights weights;
    std::size_t top_k_per_modality = 100;
    std::size_t default_k = 20;
    I2IParams i2i;
    std::size_t temporal_k_per_step = 200;
    KeyframePolicy keyframes;
    bool mock_mode = false;
    Eigen::Index embedding_dimension = 64;  // used when no embeddings file fixes it
    std::string embedding_seed;
    Endpoint embedding_endpoint;
    Endpoint llm_endpoint;
    Endpoint image_search_endpoint;
    std::string image_search_engine_id;
    RetryPolicy retry;
    double fallback_fps = 25.0;
    std::vector<std::string> include;  // "L01" (group) or "L01/V003" (video)
    std::vector<std::string> exclude;
    std::size_t parallelism = 4;
    bool allow_reingest = false;
    std::string thumbnail_base_url;

    /// Relative data paths are resolved against `base_dir`. Unknown keys are rejected.
    static EngineConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
    static EngineConfig load(const std::filesystem::path& path);

    using EnvLookup = std::function<const char*(const char*)>;
    /// MOCK_MODE, LLM_ENDPOINT, LLM_API_KEY, IMG_SEARCH_ENDPOINT, IMG_SEARCH_KEY,
    /// IMG_SEARCH_ENGINE_ID, EMBED_ENDPOINT, EMBED_API_KEY.
    void apply_env(const EnvLookup& lookup);
    void apply_env();

    void validate() const;
    /// Without API keys.
    Json to_json() const;
};

/// Include/exclude rules over videos. An empty include list keeps everything.
VideoFilter make_video_filter(const std::vector<std::string>& include, const std::vector<std::string>& exclude);

/// Immutable snapshot of every index built by one ingestion.
struct Corpus {
    Catalog catalog;
    std::unique_ptr<VectorIndex> vectors;
    std::unique_ptr<TextIndex> text;
    std::unique_ptr<ObjectIndex> objects;
    LandmarkKB kb;
    std::shared_ptr<const EmbeddingClient> embedder;  // dimension follows the vector index
    std::shared_ptr<const ImageSearchClient> images;
    bool has_asr = false;
    bool has_ocr = false;
    Json capabilities;  // {"modes": {...}, "reasons": {...}}
    Json report;

    Indices indices() const { return {&catalog, vectors.get(), text.get(), objects.get()}; }
};

inline constexpr std::array<std::string_view, 7> kSearchModes{"semantic", "ocr",  "asr",     "object",
                                                              "llandmark", "i2i", "temporal"};

class Engine {
public:
    explicit Engine(EngineConfig config);

    const EngineConfig& config() const { return config_; }

    /// Builds and freezes every index, then swaps the snapshot in. `request`
    /// may override "data" paths and "include"/"exclude" lists. A second call
    /// throws ApiError(409) unless the config allows reingestion.
    Json ingest(const Json& request = Json::object());

    /// Dispatches on request["mode"]. Every response carries "capabilities"
    /// and "timing_ms".
    Json search(const Json& request) const;
    Json capabilities() const;
    /// Metadata and timestamp of one frame.
    Json frame(const std::string& group, const std::string& video, const std::string& frame) const;
    /// {"submission": text, "ground_truth": JSONL text, "ks": [...], "strict_answers": bool}.
    static Json evaluate(const Json& request);

    std::shared_ptr<const Corpus> snapshot() const;

private:
    Json search_semantic(const Corpus& corpus, const Json& request) const;
    Json search_text(const Corpus& corpus, const Json& request, Channel channel) const;
    Json search_object(const Corpus& corpus, const Json& request) const;
    Json search_llandmark(const Corpus& corpus, const Json& request) const;
    Json search_i2i(const Corpus& corpus, const Json& request) const;
    Json search_temporal(const Corpus& corpus, const Json& request) const;
    Json capabilities_of(const Corpus* corpus) const;
    std::shared_ptr<const Corpus> require_corpus() const;
    void require_mode(const Corpus& corpus, const std::string& mode) const;

    EngineConfig config_;
    std::shared_ptr<const LlmClient> llm_;          // answers and image queries; null when unconfigured
    std::shared_ptr<const LlmClient> planner_llm_;  // null in mock mode

    std::mutex ingest_mutex_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Corpus> corpus_;
    bool ingested_ = false;
};

}  // namespace vidsearch
