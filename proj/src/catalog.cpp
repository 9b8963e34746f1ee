#include "vidsearch/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"

namespace vidsearch {
namespace {

// Percentiles are treated as exact decimals with this many fractional digits.
constexpr std::int64_t kPercentileScale = 1'000'000'000;

void check_id_segment(std::string_view value, std::string_view name) {
    if (value.empty()) throw ParseError(std::string(name) + " segment is empty");
    if (value.find('/') != std::string_view::npos)
        throw ParseError(std::string(name) + " segment contains '/': " + std::string(value));
}

VideoId video_from(const Json& j) {
    VideoId v{j.at("group_id").get<std::string>(), j.at("video_id").get<std::string>()};
    check_id_segment(v.group_id, "group_id");
    check_id_segment(v.video_id, "video_id");
    return v;
}

}  // namespace

FrameKey::FrameKey(std::string group, std::string video, std::int64_t frame)
    : group_id(std::move(group)), video_id(std::move(video)), frame_id(frame) {}

FrameKey::FrameKey(const VideoId& video, std::int64_t frame)
    : group_id(video.group_id), video_id(video.video_id), frame_id(frame) {}

std::string FrameKey::str() const { return group_id + "/" + video_id + "/" + std::to_string(frame_id); }

std::strong_ordering FrameKey::operator<=>(const FrameKey& other) const {
    const int c = str().compare(other.str());
    return c < 0 ? std::strong_ordering::less : c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal;
}

std::size_t FrameKeyHash::operator()(const FrameKey& k) const noexcept {
    std::size_t h = std::hash<std::string>{}(k.group_id);
    h ^= std::hash<std::string>{}(k.video_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<std::int64_t>{}(k.frame_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

FrameKey parse_frame_key(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (true) {
        const auto slash = text.find('/', pos);
        parts.push_back(text.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos));
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
    }
    if (parts.size() != 3)
        throw ParseError("frame key '" + std::string(text) + "' has " + std::to_string(parts.size()) +
                         " segment(s), expected group_id/video_id/frame_id");
    check_id_segment(parts[0], "group_id");
    check_id_segment(parts[1], "video_id");
    const auto frame = parts[2];
    std::int64_t value = -1;
    const auto [end, ec] = std::from_chars(frame.data(), frame.data() + frame.size(), value);
    if (frame.empty() || ec != std::errc{} || end != frame.data() + frame.size() || value < 0 ||
        (frame.size() > 1 && frame[0] == '0'))
        throw ParseError("frame_id segment '" + std::string(frame) + "' is not a non-negative decimal integer");
    return {std::string(parts[0]), std::string(parts[1]), value};
}

void KeyframePolicy::validate() const {
    if (percentiles.empty()) throw InvalidArgument("keyframe policy needs at least one percentile");
    for (std::size_t i = 0; i < percentiles.size(); ++i) {
        const double p = percentiles[i];
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("percentile outside [0, 1]");
        if (i > 0 && !(percentiles[i - 1] < p)) throw InvalidArgument("percentiles must be strictly increasing");
    }
}

std::vector<std::int64_t> select_keyframes(const Shot& shot, const KeyframePolicy& policy) {
    if (shot.start_frame < 0 || shot.start_frame > shot.end_frame)
        throw InvalidArgument("invalid shot [" + std::to_string(shot.start_frame) + ", " +
                              std::to_string(shot.end_frame) + "]");
    policy.validate();
    std::vector<std::int64_t> frames;
    if (shot.frame_count() <= static_cast<std::int64_t>(policy.percentiles.size())) {
        for (auto f = shot.start_frame; f <= shot.end_frame; ++f) frames.push_back(f);
        return frames;
    }
    const auto span = static_cast<__int128>(shot.end_frame - shot.start_frame);
    for (double p : policy.percentiles) {
        const auto scaled = static_cast<__int128>(std::llround(p * static_cast<double>(kPercentileScale)));
        const __int128 offset = scaled * span;
        auto whole = static_cast<std::int64_t>(offset / kPercentileScale);
        const __int128 rem = offset % kPercentileScale;
        if (2 * rem > kPercentileScale) ++whole;  // exact .5 rounds down
        frames.push_back(shot.start_frame + whole);
    }
    std::sort(frames.begin(), frames.end());
    frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
    return frames;
}

double index_to_time(const FrameKey& key, const VideoMeta& meta) {
    if (key.video() != meta.video) throw NotFound("no metadata for video " + key.video().str());
    if (!(meta.fps > 0)) throw InvalidArgument("fps must be positive");
    if (key.frame_id < 0 || key.frame_id >= meta.frame_count)
        throw InvalidArgument("frame " + std::to_string(key.frame_id) + " out of range for " + meta.video.str() +
                              " (" + std::to_string(meta.frame_count) + " frames)");
    return static_cast<double>(key.frame_id) / meta.fps;
}

void Catalog::load_shots(const std::filesystem::path& path, const VideoFilter& keep) {
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        Shot s{video_from(j), j.at("start_frame").get<std::int64_t>(), j.at("end_frame").get<std::int64_t>()};
        if (keep && !keep(s.video)) return;
        add_shot(s);
    });
}

void Catalog::load_meta(const std::filesystem::path& path, const VideoFilter& keep) {
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        VideoMeta m{video_from(j), j.at("fps").get<double>(), j.at("frame_count").get<std::int64_t>()};
        if (keep && !keep(m.video)) return;
        add_meta(m);
    });
}

void Catalog::add_shot(const Shot& shot) {
    if (shot.start_frame < 0 || shot.start_frame > shot.end_frame)
        throw InvalidArgument("invalid shot [" + std::to_string(shot.start_frame) + ", " +
                              std::to_string(shot.end_frame) + "] in " + shot.video.str());
    shots_[shot.video].push_back(shot);
}

void Catalog::add_meta(const VideoMeta& meta) {
    if (!(meta.fps > 0)) throw InvalidArgument("fps must be positive for " + meta.video.str());
    if (meta.frame_count < 1) throw InvalidArgument("frame_count must be >= 1 for " + meta.video.str());
    meta_[meta.video] = meta;
}

void Catalog::finalize(const KeyframePolicy& policy) {
    keyframes_.clear();
    for (auto& [video, shots] : shots_) {
        std::sort(shots.begin(), shots.end(),
                  [](const Shot& a, const Shot& b) { return a.start_frame < b.start_frame; });
        for (std::size_t i = 1; i < shots.size(); ++i) {
            if (shots[i].start_frame <= shots[i - 1].end_frame)
                throw InvalidArgument("overlapping shots in " + video.str() + " at frame " +
                                      std::to_string(shots[i].start_frame));
        }
        auto& frames = keyframes_[video];
        for (const auto& s : shots) {
            const auto picked = select_keyframes(s, policy);
            frames.insert(frames.end(), picked.begin(), picked.end());
        }
    }
}

std::size_t Catalog::shot_count() const {
    std::size_t n = 0;
    for (const auto& [_, s] : shots_) n += s.size();
    return n;
}

std::size_t Catalog::keyframe_count() const {
    std::size_t n = 0;
    for (const auto& [_, f] : keyframes_) n += f.size();
    return n;
}

const std::vector<Shot>& Catalog::shots(const VideoId& video) const {
    static const std::vector<Shot> empty;
    const auto it = shots_.find(video);
    return it == shots_.end() ? empty : it->second;
}

const std::vector<std::int64_t>& Catalog::keyframes(const VideoId& video) const {
    static const std::vector<std::int64_t> empty;
    const auto it = keyframes_.find(video);
    return it == keyframes_.end() ? empty : it->second;
}

std::vector<FrameKey> Catalog::keyframes_in_span(const VideoId& video, std::int64_t start, std::int64_t end) const {
    const auto& frames = keyframes(video);
    std::vector<FrameKey> out;
    for (auto it = std::lower_bound(frames.begin(), frames.end(), start); it != frames.end() && *it <= end; ++it)
        out.emplace_back(video, *it);
    return out;
}

std::vector<FrameKey> Catalog::all_keyframes() const {
    std::vector<FrameKey> out;
    for (const auto& [video, frames] : keyframes_)
        for (auto f : frames) out.emplace_back(video, f);
    return out;
}

std::vector<VideoId> Catalog::videos() const {
    std::vector<VideoId> out;
    for (const auto& [video, _] : shots_) out.push_back(video);
    return out;
}

std::optional<VideoMeta> Catalog::meta(const VideoId& video) const {
    const auto it = meta_.find(video);
    if (it == meta_.end()) return std::nullopt;
    return it->second;
}

double Catalog::frame_time(const FrameKey& key, double fallback_fps) const {
    if (auto m = meta(key.video())) return index_to_time(key, *m);
    const auto it = shots_.find(key.video());
    if (it == shots_.end() || it->second.empty()) throw NotFound("unknown video " + key.video().str());
    std::int64_t last = 0;
    for (const auto& s : it->second) last = std::max(last, s.end_frame);
    return index_to_time(key, VideoMeta{key.video(), fallback_fps, last + 1});
}

}  // namespace vidsearch
