#pragma once

// Plan execution across the indices, late fusion, temporal sequence retrieval,
// evidence packaging and answer synthesis.

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/errors.hpp"
#include "vidsearch/model_clients.hpp"
#include "vidsearch/object_index.hpp"
#include "vidsearch/planner.hpp"
#include "vidsearch/text_index.hpp"
#include "vidsearch/vector_index.hpp"

namespace vidsearch {

/// Non-owning view of the frozen indices. Absent members disable the
/// corresponding modality.
struct Indices {
    const Catalog* catalog = nullptr;
    const VectorIndex* vectors = nullptr;
    const TextIndex* text = nullptr;
    const ObjectIndex* objects = nullptr;
};

using ModalityResult = std::variant<std::vector<VectorHit>, std::vector<TextHit>, std::vector<ObjectMatch>>;

struct PlanExecution {
    std::map<Modality, ModalityResult> results;
    std::vector<std::string> warnings;
};

struct ExecuteOptions {
    std::size_t parallelism = 4;
    KeyFilter scope;
};

/// Runs every modality with weight > 0 concurrently. A failing modality is
/// reported as a warning and yields an empty list; throws only when every
/// scheduled modality failed.
PlanExecution execute_plan(const SearchPlan& plan, const Indices& indices, const EmbeddingClient* embedder,
                           const ExecuteOptions& options = {});

using ScoreMap = std::map<FrameKey, double>;

/// Per-modality min-max normalisation into [0, 1] (a single hit, or a list of
/// equal scores, maps to 1). ASR segment hits are projected onto every
/// cataloged keyframe inside the segment; a frame keeps its best projection.
std::map<Modality, ScoreMap> normalize_results(const PlanExecution& execution, const Catalog* catalog);

struct ScoredFrame {
    FrameKey key;
    std::map<Modality, double> per_modality;
    double fused = 0;
};

/// fused = sum(w_m * s_m) / sum(w_m) over the modalities the frame was
/// retrieved in (weight-0 modalities ignored). Sorted by fused descending,
/// then key.
std::vector<ScoredFrame> fuse_normalized(const std::map<Modality, ScoreMap>& scores, const ModalityWeights& weights);

std::vector<ScoredFrame> fuse(const PlanExecution& execution, const ModalityWeights& weights, const Catalog* catalog);

struct VideoScore {
    VideoId video;
    double score = 0;
};

struct TemporalStepResult {
    std::size_t step_index = 0;
    std::map<VideoId, double> per_video;  // best keyframe similarity per retrieved video
};

struct TemporalResult {
    std::vector<TemporalStepResult> steps;
    std::vector<VideoScore> ranking;
};

/// Per step: per-video best keyframe cosine, keeping the k_per_step best
/// videos. Videos present in every step are ranked by their minimum step
/// score, descending, then video id.
TemporalResult temporal_search(const std::vector<std::string>& queries, const EmbeddingClient& embedder,
                               const VectorIndex& index, std::size_t k_per_step = 200, const KeyFilter& scope = {});

struct EvidencePackage {
    VideoId video;
    std::vector<ScoredFrame> frames;
    std::vector<TextHit> asr_snippets;
    std::vector<TextHit> ocr_texts;
    std::vector<std::pair<FrameKey, std::vector<std::string>>> objects;
};

/// Partitions frames by video; packages ordered by each video's best fused
/// score. ASR/OCR hits of the execution that touch a package frame, and the
/// detected labels of package frames, are attached.
std::vector<EvidencePackage> group_by_video(const std::vector<ScoredFrame>& frames, const PlanExecution* execution,
                                            const Indices& indices);

struct Answer {
    std::string text;
    std::vector<FrameKey> cited_frames;
    std::vector<std::string> warnings;
};

class AnswerError : public Error {
public:
    AnswerError(const std::string& what, std::vector<EvidencePackage> evidence)
        : Error(what), evidence_(std::move(evidence)) {}
    const std::vector<EvidencePackage>& evidence() const { return evidence_; }

private:
    std::vector<EvidencePackage> evidence_;
};

std::string build_answer_prompt(const std::vector<EvidencePackage>& packages, const std::string& question);

/// Citations not present in the packages are dropped with a warning.
Answer synthesize_answer(const std::vector<EvidencePackage>& packages, const std::string& question,
                         const LlmClient& llm);

}  // namespace vidsearch
