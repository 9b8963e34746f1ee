#pragma once

// Challenge scoring: per-task R-Scores, Mean of Top-k R-Scores and
// submission / ground-truth file parsing.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/jsonl.hpp"

namespace vidsearch::eval {

enum class Task { KIS, QA, TRAKE };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

struct FrameRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;  // inclusive
};

struct GroundTruthItem {
    std::string query_id;
    Task task = Task::KIS;
    std::string video_name;
    std::vector<FrameRange> ranges;  // exactly one for KIS/QA, ordered segments for TRAKE
    std::optional<std::string> answer;
    std::int64_t tolerance = 0;

    void validate() const;
};

struct Prediction {
    std::size_t rank = 1;
    std::string video_name;
    std::vector<std::int64_t> frames;
    std::optional<std::string> answer;
};

struct KSet {
    std::vector<std::size_t> ks{1, 5, 20, 50, 100};

    void validate() const;
    static KSet parse(std::string_view csv);
};

struct ScoreOptions {
    bool strict_answers = false;  // compare answers byte for byte
};

/// "L01_V003" or "L01/V003" -> {L01, V003}, split at the first separator.
VideoId parse_video_name(std::string_view name);

/// trim + NFC + case fold.
std::string normalize_answer(std::string_view answer);

/// Throws InvalidArgument on a task mismatch (an answer given for a non-QA item).
double r_score(const Prediction& prediction, const GroundTruthItem& gt, const ScoreOptions& options = {});

/// Mean over k of the best r_score among predictions with rank <= k.
double final_score(const std::vector<Prediction>& predictions, const GroundTruthItem& gt, const KSet& ks = {},
                   const ScoreOptions& options = {});

struct QuerySubmission {
    std::string query_id;
    std::vector<Prediction> predictions;  // rank = line order within the query
};

/// Lines "query_id, video_name, f1[;f2...][, answer]". Blank lines are skipped.
std::vector<QuerySubmission> parse_submission_text(std::string_view text, std::string_view source = "submission");
std::vector<QuerySubmission> parse_submission(const std::filesystem::path& path);

GroundTruthItem ground_truth_from_json(const Json& record);
std::vector<GroundTruthItem> load_ground_truth(const std::filesystem::path& path);
std::vector<GroundTruthItem> parse_ground_truth_text(std::string_view text, std::string_view source = "ground truth");

struct QueryScore {
    std::string query_id;
    Task task = Task::KIS;
    std::size_t prediction_count = 0;
    double score = 0;
};

struct EvalReport {
    std::vector<QueryScore> per_query;  // ground-truth order
    double mean = 0;
    std::vector<std::string> warnings;
};

/// Queries without predictions score 0; predictions for unknown queries are
/// reported as warnings.
EvalReport evaluate(const std::vector<QuerySubmission>& submission, const std::vector<GroundTruthItem>& ground_truth,
                    const KSet& ks = {}, const ScoreOptions& options = {});

Json to_json(const QueryScore& score);
Json to_json(const EvalReport& report);

}  // namespace vidsearch::eval
