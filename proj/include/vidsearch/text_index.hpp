#pragma once

// Okapi BM25 inverted index over ASR segments and OCR frames.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidsearch/catalog.hpp"

namespace vidsearch {

enum class Channel { ASR, OCR };

std::string_view to_string(Channel c);
Channel channel_from_string(std::string_view s);

struct TextDoc {
    std::string doc_id;
    VideoId video;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;  // inclusive; equals start_frame for OCR
    Channel channel = Channel::ASR;
    std::string text;
    std::optional<double> confidence;
};

/// Byte range [begin, end) into TextDoc::text.
struct Highlight {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct TextHit {
    TextDoc doc;
    double score = 0;
    std::vector<Highlight> highlights;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Each document is indexed twice: its lowercased tokens, and the same tokens
/// with diacritics stripped. A query scores against both fields (the folded
/// field with a folded query) and the higher score wins, so accented and
/// non-accented spellings find each other. For text without diacritics both
/// fields are identical and the score is plain BM25.
class TextIndex {
public:
    explicit TextIndex(Bm25Params params = {}) : params_(params) {}

    /// Replaces any document with the same doc_id. Throws on blank text or an
    /// inverted frame span.
    void index_document(TextDoc doc);

    void freeze();
    bool frozen() const { return frozen_; }
    std::size_t size() const { return docs_.size(); }
    std::size_t size(Channel channel) const;

    /// Distinct terms of a stored document (its posting count).
    std::size_t posting_count(const std::string& doc_id) const;

    /// Documents matching at least one query term, by BM25 descending then
    /// doc_id ascending. Zero-IDF matches are kept with score 0.
    std::vector<TextHit> search(const std::string& query, std::optional<Channel> channel, std::size_t k) const;

    /// ASR file: {group_id, video_id, start_frame, end_frame, text} per line.
    void load_asr(const std::filesystem::path& path, const VideoFilter& keep = {});
    /// OCR file: {group_id, video_id, frame_id, text_raw, text_refined?, confidence} per line.
    /// The refined text is indexed when present, else the raw text.
    void load_ocr(const std::filesystem::path& path, const VideoFilter& keep = {});

private:
    struct Field {
        std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings;
        std::vector<std::uint32_t> lengths;
        double avg_length = 0;
    };
    struct Stored {
        TextDoc doc;
        std::vector<std::string> exact_terms;
        std::vector<std::string> folded_terms;
    };

    // Statistics are kept per channel, as if ASR and OCR were separate indices.
    struct Partition {
        std::vector<const Stored*> docs;
        Field exact;
        Field folded;
    };

    void accumulate(const Field& field, std::size_t doc_count, const std::vector<std::string>& terms,
                    std::vector<double>& scores, std::vector<char>& matched) const;
    void search_partition(const Partition& part, const std::vector<std::string>& exact_terms,
                          const std::vector<std::string>& folded_terms, std::vector<TextHit>& out) const;
    void require_frozen() const;

    Bm25Params params_;
    bool frozen_ = false;
    std::map<std::string, Stored> docs_;
    std::map<Channel, Partition> partitions_;
};

}  // namespace vidsearch
