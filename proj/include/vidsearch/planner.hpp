#pragma once

// Query parsing and planning: natural-language query -> weighted SearchPlan.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidsearch/jsonl.hpp"
#include "vidsearch/landmark_kb.hpp"
#include "vidsearch/model_clients.hpp"
#include "vidsearch/object_index.hpp"

namespace vidsearch {

enum class Modality { Semantic, Asr, Ocr, Object };

inline constexpr std::array<Modality, 4> kModalities{Modality::Semantic, Modality::Asr, Modality::Ocr,
                                                     Modality::Object};

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct ModalityWeights {
    double semantic = 0.5;
    double asr = 0.2;
    double ocr = 0.2;
    double object = 0.1;

    double get(Modality m) const;
    void set(Modality m, double w);
    /// Throws InvalidArgument when any weight is negative or non-finite, or all are zero.
    void validate() const;
    bool operator==(const ModalityWeights&) const = default;
};

struct SearchPlan {
    std::string original_query;
    std::string semantic_query;
    std::vector<std::string> asr_keywords;
    std::vector<std::string> ocr_keywords;
    std::optional<ObjectQuery> object_query;
    ModalityWeights weights;
    std::vector<std::string> detected_landmarks;
    std::size_t top_k_per_modality = 100;

    std::string source = "rule";  // "rule" or "llm"
    std::vector<std::string> warnings;

    /// Throws InvalidArgument on the first violated invariant.
    void validate(const LandmarkKB& kb) const;
};

struct PlannerOptions {
    ModalityWeights default_weights;
    std::size_t top_k_per_modality = 100;
    /// Ask the LLM for an English semantic_query; otherwise it keeps the query's
    /// language. The rule path never translates.
    bool translate = true;
};

/// Canonical names of every landmark mentioned in `query`, in query order,
/// deduplicated. Case- and accent-insensitive; longest match wins.
std::vector<std::string> detect_landmarks(std::string_view query, const LandmarkKB& kb);

/// COCO labels mentioned in `query` (singular/plural and a few common
/// synonyms), in query order.
std::vector<std::string> detect_object_labels(std::string_view query);

/// Deterministic plan without an LLM. Modalities with nothing to search (no
/// keywords, no object labels) get weight 0.
SearchPlan build_rule_plan(std::string_view query, const LandmarkKB& kb, const PlannerOptions& options = {});

std::string build_plan_prompt(std::string_view query, const LandmarkKB& kb, const PlannerOptions& options);

/// Parses and validates an LLM plan reply; nullopt (with `reason`) when it
/// does not meet the SearchPlan contract.
std::optional<SearchPlan> parse_plan_reply(std::string_view reply, std::string_view query, const LandmarkKB& kb,
                                           const PlannerOptions& options, std::string& reason);

/// With an LLM, a validated structured completion; otherwise, or when the LLM
/// fails or replies with an invalid plan, the rule plan (with a warning).
SearchPlan build_plan(std::string_view query, const LandmarkKB& kb, const LlmClient* llm,
                      const PlannerOptions& options = {});

Json to_json(const ModalityWeights& w);
ModalityWeights weights_from_json(const Json& j, ModalityWeights base = {});
Json to_json(const ObjectQuery& q);
ObjectQuery object_query_from_json(const Json& j);
Json to_json(const SearchPlan& plan);

}  // namespace vidsearch
