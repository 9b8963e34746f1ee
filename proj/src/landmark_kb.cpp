#include "vidsearch/landmark_kb.hpp"

#include <algorithm>
#include <fstream>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {

LandmarkKB::LandmarkKB(std::vector<LandmarkEntry> entries, int version)
    : entries_(std::move(entries)), version_(version) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& e = entries_[i];
        e.name = unicode::trim(e.name);
        if (e.name.empty()) throw InvalidArgument("landmark entry " + std::to_string(i) + " has an empty name");
        if (unicode::trim(e.visual_description).empty())
            throw InvalidArgument("landmark '" + e.name + "' has an empty visual description");
        std::vector<std::string> surfaces{e.name};
        surfaces.insert(surfaces.end(), e.aliases.begin(), e.aliases.end());
        for (const auto& s : surfaces) {
            const auto key = unicode::fold_key(unicode::trim(s));
            if (key.empty()) continue;
            const auto [it, inserted] = by_folded_surface_.try_emplace(key, i);
            if (!inserted && it->second != i)
                throw InvalidArgument("landmark surface form '" + s + "' is shared by '" +
                                      entries_[it->second].name + "' and '" + e.name + "'");
        }
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto scanned = scan(entries_[i].visual_description);
        for (const auto& m : scanned.mentions)
            if (m.entry == i)
                throw InvalidArgument("visual description of '" + entries_[i].name + "' mentions the landmark itself");
    }
}

LandmarkKB LandmarkKB::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open landmark knowledge base " + path.string());
    try {
        const Json doc = Json::parse(in);
        std::vector<LandmarkEntry> entries;
        for (const auto& j : doc.at("landmarks")) {
            LandmarkEntry e;
            e.name = j.at("name").get<std::string>();
            e.aliases = j.value("aliases", std::vector<std::string>{});
            e.visual_description = j.at("visual_description").get<std::string>();
            if (j.contains("city") && j["city"].is_string()) e.city = j["city"].get<std::string>();
            entries.push_back(std::move(e));
        }
        return LandmarkKB(std::move(entries), doc.value("version", 1));
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const InvalidArgument& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

const LandmarkEntry* LandmarkKB::find(std::string_view surface) const {
    const auto it = by_folded_surface_.find(unicode::fold_key(unicode::trim(surface)));
    return it == by_folded_surface_.end() ? nullptr : &entries_[it->second];
}

MentionScan LandmarkKB::scan(std::string_view text) const {
    const auto folded = unicode::fold_with_offsets(text);
    const std::string& hay = folded.folded;
    struct Candidate {
        std::size_t begin, end, entry;
    };
    std::vector<Candidate> candidates;
    for (const auto& [needle, entry] : by_folded_surface_) {
        for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
            const auto end = pos + needle.size();
            if (unicode::word_char_before(hay, pos) && unicode::word_char_after(hay, pos)) continue;
            if (unicode::word_char_before(hay, end) && unicode::word_char_after(hay, end)) continue;
            // The match must start and end on code point boundaries of the source.
            if (pos > 0 && folded.origin[pos] == folded.origin[pos - 1]) continue;
            if (end < hay.size() && folded.origin[end] == folded.origin[end - 1]) continue;
            candidates.push_back({pos, end, entry});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        const auto la = a.end - a.begin, lb = b.end - b.begin;
        return la != lb ? la > lb : a.begin < b.begin;
    });
    std::vector<Candidate> accepted;
    for (const auto& c : candidates) {
        const bool overlaps = std::any_of(accepted.begin(), accepted.end(),
                                          [&](const Candidate& a) { return c.begin < a.end && a.begin < c.end; });
        if (!overlaps) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end(), [](const Candidate& a, const Candidate& b) { return a.begin < b.begin; });

    MentionScan out;
    out.text = folded.nfc_text;
    for (const auto& c : accepted) out.mentions.push_back({c.entry, folded.origin[c.begin], folded.origin[c.end]});
    return out;
}

}  // namespace vidsearch
