#pragma once

// Vietnamese OCR post-processing: accent stripping and batched LLM restoration.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/model_clients.hpp"

namespace vidsearch {

/// Canonical decomposition with every combining mark removed and đ/Đ mapped
/// to d/D. Idempotent; characters without marks pass through unchanged.
std::string strip_diacritics(std::string_view text);

struct OcrEntry {
    FrameKey key;
    std::string text_raw;
    std::string text_nonaccent;
    std::optional<std::string> text_refined;
    double confidence = 0;
};

/// Entry with text_nonaccent derived from text_raw.
OcrEntry make_ocr_entry(FrameKey key, std::string text_raw, double confidence);

struct RefineOptions {
    std::size_t batch_size = 20;
    std::size_t parallelism = 4;
};

struct BatchFailure {
    std::size_t batch = 0;
    std::size_t first_entry = 0;
    std::size_t entry_count = 0;
    std::string error;
};

struct RefineResult {
    std::vector<OcrEntry> entries;        // same length and order as the input
    std::vector<BatchFailure> failures;   // one per failed LLM call
    std::size_t llm_calls = 0;
    std::size_t unparsed_items = 0;       // items that fell back to text_nonaccent
};

/// Numbered-list prompt: one "N. <text_nonaccent>" line per entry, N from 1.
std::string build_refine_prompt(std::span<const OcrEntry> batch);

/// "N. text" lines of a reply keyed by N; other lines are ignored.
std::map<std::size_t, std::string> parse_numbered_reply(std::string_view reply);

/// Splits entries into batches of at most batch_size, one LLM call each,
/// run concurrently up to options.parallelism. Keys and confidences are never
/// touched. Missing reply lines and failed calls fall back to text_nonaccent.
RefineResult refine_batch(std::vector<OcrEntry> entries, const LlmClient& llm, const RefineOptions& options = {});

/// Reads the OCR line-delimited format, refines it and writes the same
/// records back with text_refined filled in.
RefineResult refine_ocr_file(const std::filesystem::path& in, const std::filesystem::path& out,
                             const LlmClient& llm, const RefineOptions& options = {});

}  // namespace vidsearch
