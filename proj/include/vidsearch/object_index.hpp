#pragma once

// Per-keyframe object detections, loaded lazily from one JSON document of the
// form {"group/video/frame": [{"label", "score", "bbox": [x, y, w, h]}, ...]}.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vidsearch/catalog.hpp"
#include "vidsearch/vector_index.hpp"

namespace vidsearch {

struct Detection {
    std::string label;
    double score = 0;
    double x = 0, y = 0, w = 0, h = 0;  // normalised to [0, 1]
};

enum class MatchMode { And, Or };

struct ObjectQuery {
    std::vector<std::string> labels;
    MatchMode mode = MatchMode::Or;
    double min_score = 0;

    /// Deduplicates labels (keeping first occurrence) and checks the ranges.
    void normalize();
};

struct ObjectMatch {
    FrameKey key;
    int matched_count = 0;
};

using DetectionStore = std::map<FrameKey, std::vector<Detection>>;

class ObjectIndex {
public:
    /// Nothing is read until the first query.
    explicit ObjectIndex(std::filesystem::path path, KeyFilter keep = {});
    explicit ObjectIndex(DetectionStore store);

    ObjectIndex(const ObjectIndex&) = delete;
    ObjectIndex& operator=(const ObjectIndex&) = delete;

    /// AND: every label present; OR: any label present. Ranked by the number of
    /// matching detection instances, then FrameKey; truncated to k.
    std::vector<ObjectMatch> filter_frames(ObjectQuery query, std::size_t k) const;

    /// Detections of one frame (empty when absent).
    std::vector<Detection> detections(const FrameKey& key) const;

    /// Forces the load; throws ParseError with the byte offset on bad input.
    void ensure_loaded() const;
    bool loaded() const;
    int load_count() const;
    std::size_t frame_count() const;
    std::size_t detection_count() const;

private:
    const DetectionStore& store() const;

    std::filesystem::path path_;
    KeyFilter keep_;
    mutable std::mutex mutex_;
    mutable std::optional<DetectionStore> store_;
    mutable int load_count_ = 0;
};

/// Parses the detections document; exposed for tests and ingestion tools.
DetectionStore parse_detection_store(const std::string& content, const std::string& origin,
                                     const KeyFilter& keep = {});

}  // namespace vidsearch
