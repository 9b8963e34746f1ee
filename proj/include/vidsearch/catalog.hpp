#pragma once

// Frame identity, shots, keyframe selection and frame-to-time mapping.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vidsearch {

/// (group_id, video_id): identity of one source video.
struct VideoId {
    std::string group_id;
    std::string video_id;

    auto operator<=>(const VideoId&) const = default;
    bool operator==(const VideoId&) const = default;

    /// "group/video".
    std::string str() const { return group_id + "/" + video_id; }
};

/// Identity of one keyframe. Canonical text form is "group/video/frame".
struct FrameKey {
    std::string group_id;
    std::string video_id;
    std::int64_t frame_id = 0;

    FrameKey() = default;
    FrameKey(std::string group, std::string video, std::int64_t frame);
    FrameKey(const VideoId& video, std::int64_t frame);

    VideoId video() const { return {group_id, video_id}; }
    std::string str() const;

    /// Ordering matches the canonical text order, which is the tie-break used
    /// by every ranking in the engine.
    std::strong_ordering operator<=>(const FrameKey& other) const;
    bool operator==(const FrameKey&) const = default;
};

/// Throws ParseError naming the offending segment.
FrameKey parse_frame_key(std::string_view text);

struct FrameKeyHash {
    std::size_t operator()(const FrameKey& k) const noexcept;
};

struct Shot {
    VideoId video;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;  // inclusive

    std::int64_t frame_count() const { return end_frame - start_frame + 1; }
};

struct KeyframePolicy {
    std::vector<double> percentiles{0.15, 0.5, 0.85};

    /// Throws InvalidArgument unless strictly increasing and within [0, 1].
    void validate() const;
};

struct VideoMeta {
    VideoId video;
    double fps = 0;
    std::int64_t frame_count = 0;
};

/// Keyframe indices for one shot: every frame when the shot has no more
/// frames than percentiles, else round-half-down(start + p * (end - start))
/// per percentile, deduplicated and ascending.
std::vector<std::int64_t> select_keyframes(const Shot& shot, const KeyframePolicy& policy = {});

/// frame_id / fps. Throws InvalidArgument when the frame is out of range.
double index_to_time(const FrameKey& key, const VideoMeta& meta);

using VideoFilter = std::function<bool(const VideoId&)>;

/// In-memory catalog of shots, keyframes and video metadata. Built once at
/// ingestion and read-only afterwards.
class Catalog {
public:
    Catalog() = default;

    /// Shots file: one {group_id, video_id, start_frame, end_frame} per line.
    void load_shots(const std::filesystem::path& path, const VideoFilter& keep = {});
    /// Metadata file: one {group_id, video_id, fps, frame_count} per line.
    void load_meta(const std::filesystem::path& path, const VideoFilter& keep = {});

    void add_shot(const Shot& shot);
    void add_meta(const VideoMeta& meta);

    /// Sorts shots, checks they do not overlap and materialises keyframes.
    void finalize(const KeyframePolicy& policy = {});

    std::size_t shot_count() const;
    std::size_t keyframe_count() const;
    std::size_t video_count() const { return shots_.size(); }

    const std::vector<Shot>& shots(const VideoId& video) const;
    /// Keyframe ids of a video, ascending. Empty for unknown videos.
    const std::vector<std::int64_t>& keyframes(const VideoId& video) const;
    /// Keyframes of `video` with start <= frame_id <= end.
    std::vector<FrameKey> keyframes_in_span(const VideoId& video, std::int64_t start, std::int64_t end) const;
    std::vector<FrameKey> all_keyframes() const;
    std::vector<VideoId> videos() const;

    std::optional<VideoMeta> meta(const VideoId& video) const;

    /// Uses stored metadata, else `fallback_fps` with the video's last cataloged
    /// frame as the range bound. Throws NotFound for unknown videos.
    double frame_time(const FrameKey& key, double fallback_fps) const;

private:
    std::map<VideoId, std::vector<Shot>> shots_;
    std::map<VideoId, std::vector<std::int64_t>> keyframes_;
    std::map<VideoId, VideoMeta> meta_;
};

}  // namespace vidsearch
