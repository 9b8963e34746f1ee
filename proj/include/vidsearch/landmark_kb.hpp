#pragma once

// Curated landmark knowledge: canonical names, aliases and visual descriptions.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vidsearch {

struct LandmarkEntry {
    std::string name;
    std::vector<std::string> aliases;
    std::string visual_description;
    std::optional<std::string> city;
};

/// A landmark mention: byte range [begin, end) into `text` (the NFC form of
/// the searched string).
struct LandmarkMention {
    std::size_t entry = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct MentionScan {
    std::string text;
    std::vector<LandmarkMention> mentions;  // ordered by position, non-overlapping
};

class LandmarkKB {
public:
    LandmarkKB() = default;

    /// Validates: non-empty unique names, non-empty descriptions, no surface
    /// form (name or alias) shared between entries, and no description that
    /// mentions its own landmark. Comparison is case- and accent-insensitive.
    explicit LandmarkKB(std::vector<LandmarkEntry> entries, int version = 1);

    /// {"version": n, "landmarks": [{name, aliases, visual_description, city}]}
    static LandmarkKB load(const std::filesystem::path& path);

    const std::vector<LandmarkEntry>& entries() const { return entries_; }
    int version() const { return version_; }
    bool empty() const { return entries_.empty(); }

    /// Entry whose name or alias equals `surface` (case/accent-insensitive).
    const LandmarkEntry* find(std::string_view surface) const;

    /// Case- and accent-insensitive scan for every name and alias, on word
    /// boundaries. Overlaps are resolved longest-first.
    MentionScan scan(std::string_view text) const;

private:
    std::vector<LandmarkEntry> entries_;
    int version_ = 1;
    std::map<std::string, std::size_t> by_folded_surface_;
};

}  // namespace vidsearch
