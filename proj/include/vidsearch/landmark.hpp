#pragma once

// Landmark knowledge enhancement of plans, and the LLM-assisted
// image-to-image landmark search pipeline.

#include <string>
#include <string_view>
#include <vector>

#include "vidsearch/errors.hpp"
#include "vidsearch/landmark_kb.hpp"
#include "vidsearch/model_clients.hpp"
#include "vidsearch/planner.hpp"
#include "vidsearch/vector_index.hpp"

namespace vidsearch {

/// Replaces every mention of a detected landmark in semantic_query with the
/// landmark's visual description. Keyword lists are never touched. Idempotent.
SearchPlan enhance_plan(SearchPlan plan, const LandmarkKB& kb);

struct LandmarkQueries {
    std::string landmark;              // canonical KB name
    std::vector<std::string> queries;  // web image search strings
};

/// "<name>" and "<name> <city>".
std::vector<std::string> template_image_queries(const LandmarkEntry& entry);

std::string build_image_query_prompt(std::string_view query, const LandmarkKB& kb, std::size_t max_landmarks);

/// Landmarks of `query` with descriptive web image queries, at most
/// max_landmarks, in query order. The LLM proposes landmarks and queries;
/// unknown landmarks and queries that do not name their landmark are dropped,
/// and an unusable reply falls back to KB detection with template queries.
std::vector<LandmarkQueries> generate_image_queries(std::string_view query, const LandmarkKB& kb, const LlmClient& llm,
                                                    std::size_t max_landmarks,
                                                    std::vector<std::string>* warnings = nullptr);

struct I2IParams {
    std::size_t per_reference_top_k = 50;
    std::size_t max_landmarks = 2;
    std::size_t images_per_landmark = 3;

    void validate() const;
};

struct I2IClients {
    const LlmClient& llm;
    const ImageSearchClient& images;
    const EmbeddingClient& embedder;
};

struct ReferenceImage {
    std::string landmark;
    std::string query;
    std::string reference;
    bool ok = false;
    std::string error;
    std::size_t hit_count = 0;
};

struct I2IResult {
    std::vector<LandmarkQueries> landmarks;
    std::vector<ReferenceImage> references;
    std::vector<VectorHit> hits;
    std::vector<std::string> warnings;
};

class I2IError : public Error {
public:
    enum class Kind { NoLandmark, AllFetchesFailed };
    I2IError(Kind kind, const std::string& what, I2IResult partial)
        : Error(what), kind_(kind), partial_(std::move(partial)) {}
    Kind kind() const { return kind_; }
    const I2IResult& partial() const { return partial_; }

private:
    Kind kind_;
    I2IResult partial_;
};

/// Union of hit lists with duplicate keys collapsed to their highest score,
/// sorted by score descending then key.
std::vector<VectorHit> merge_max(const std::vector<std::vector<VectorHit>>& lists);

/// generate queries -> fetch reference images -> embed and search each ->
/// merge_max. Throws I2IError when no landmark is found or no reference image
/// could be fetched and searched; the caller should fall back to text search.
I2IResult i2i_search(std::string_view query, const I2IParams& params, const I2IClients& clients,
                     const LandmarkKB& kb, const VectorIndex& index, std::size_t parallelism = 4,
                     const KeyFilter& scope = {});

}  // namespace vidsearch
