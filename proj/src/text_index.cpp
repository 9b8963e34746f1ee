#include "vidsearch/text_index.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

std::vector<std::string> distinct(std::vector<std::string> terms) {
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

void build_field(const std::vector<std::vector<std::string>>& docs, auto& field) {
    field.postings.clear();
    field.lengths.clear();
    std::uint64_t total = 0;
    for (std::uint32_t d = 0; d < docs.size(); ++d) {
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : docs[d]) ++tf[t];
        for (const auto& [term, count] : tf) field.postings[term].emplace_back(d, count);
        field.lengths.push_back(static_cast<std::uint32_t>(docs[d].size()));
        total += docs[d].size();
    }
    field.avg_length = docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs.size());
}

}  // namespace

std::string_view to_string(Channel c) { return c == Channel::ASR ? "asr" : "ocr"; }

Channel channel_from_string(std::string_view s) {
    const auto lower = unicode::to_lower(s);
    if (lower == "asr") return Channel::ASR;
    if (lower == "ocr") return Channel::OCR;
    throw InvalidArgument("unknown text channel '" + std::string(s) + "'");
}

void TextIndex::index_document(TextDoc doc) {
    if (frozen_) throw StateError("text index is frozen");
    if (unicode::trim(doc.text).empty()) throw InvalidArgument("document '" + doc.doc_id + "' has empty text");
    if (doc.start_frame > doc.end_frame) throw InvalidArgument("document '" + doc.doc_id + "' has start > end");
    if (doc.channel == Channel::OCR && doc.start_frame != doc.end_frame)
        throw InvalidArgument("OCR document '" + doc.doc_id + "' must cover a single frame");
    if (doc.confidence && !(*doc.confidence >= 0.0 && *doc.confidence <= 1.0))
        throw InvalidArgument("document '" + doc.doc_id + "' confidence outside [0, 1]");
    Stored stored;
    for (auto& token : unicode::tokenize(doc.text)) {
        stored.folded_terms.push_back(unicode::strip_marks(token.text));
        stored.exact_terms.push_back(std::move(token.text));
    }
    stored.doc = std::move(doc);
    const auto id = stored.doc.doc_id;
    docs_.insert_or_assign(id, std::move(stored));
}

std::size_t TextIndex::posting_count(const std::string& doc_id) const {
    const auto it = docs_.find(doc_id);
    if (it == docs_.end()) throw NotFound("unknown document '" + doc_id + "'");
    return distinct(it->second.exact_terms).size();
}

std::size_t TextIndex::size(Channel channel) const {
    return static_cast<std::size_t>(std::count_if(
        docs_.begin(), docs_.end(), [channel](const auto& kv) { return kv.second.doc.channel == channel; }));
}

void TextIndex::freeze() {
    if (frozen_) return;
    partitions_.clear();
    for (const auto& [_, stored] : docs_) partitions_[stored.doc.channel].docs.push_back(&stored);
    for (auto& [_, part] : partitions_) {
        std::vector<std::vector<std::string>> exact, folded;
        for (const auto* s : part.docs) {
            exact.push_back(s->exact_terms);
            folded.push_back(s->folded_terms);
        }
        build_field(exact, part.exact);
        build_field(folded, part.folded);
    }
    frozen_ = true;
}

void TextIndex::require_frozen() const {
    if (!frozen_) throw StateError("text index must be frozen before searching");
}

void TextIndex::accumulate(const Field& field, std::size_t doc_count, const std::vector<std::string>& terms,
                           std::vector<double>& scores, std::vector<char>& matched) const {
    const auto n_docs = static_cast<double>(doc_count);
    for (const auto& term : terms) {
        const auto it = field.postings.find(term);
        if (it == field.postings.end()) continue;
        const auto df = static_cast<double>(it->second.size());
        const double idf = std::max(0.0, std::log((n_docs - df + 0.5) / (df + 0.5)));
        for (const auto& [doc, tf_count] : it->second) {
            const auto tf = static_cast<double>(tf_count);
            const double norm = 1.0 - params_.b + params_.b * static_cast<double>(field.lengths[doc]) / field.avg_length;
            scores[doc] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
            matched[doc] = 1;
        }
    }
}

void TextIndex::search_partition(const Partition& part, const std::vector<std::string>& exact_terms,
                                 const std::vector<std::string>& folded_terms, std::vector<TextHit>& out) const {
    const auto n = part.docs.size();
    std::vector<double> exact_scores(n, 0.0), folded_scores(n, 0.0);
    std::vector<char> matched(n, 0);
    accumulate(part.exact, n, exact_terms, exact_scores, matched);
    accumulate(part.folded, n, folded_terms, folded_scores, matched);
    for (std::size_t d = 0; d < n; ++d) {
        if (!matched[d]) continue;
        out.push_back({part.docs[d]->doc, std::max(exact_scores[d], folded_scores[d]), {}});
    }
}

std::vector<TextHit> TextIndex::search(const std::string& query, std::optional<Channel> channel, std::size_t k) const {
    require_frozen();
    if (k < 1) throw InvalidArgument("k must be >= 1");
    std::vector<std::string> exact_terms, folded_terms;
    for (auto& token : unicode::tokenize(query)) {
        folded_terms.push_back(unicode::strip_marks(token.text));
        exact_terms.push_back(std::move(token.text));
    }
    exact_terms = distinct(std::move(exact_terms));
    folded_terms = distinct(std::move(folded_terms));
    if (exact_terms.empty()) return {};

    std::vector<TextHit> hits;
    for (const auto& [c, part] : partitions_) {
        if (channel && *channel != c) continue;
        search_partition(part, exact_terms, folded_terms, hits);
    }
    std::sort(hits.begin(), hits.end(), [](const TextHit& a, const TextHit& b) {
        return a.score > b.score || (a.score == b.score && a.doc.doc_id < b.doc.doc_id);
    });
    if (hits.size() > k) hits.resize(k);

    const std::set<std::string> exact_set(exact_terms.begin(), exact_terms.end());
    const std::set<std::string> folded_set(folded_terms.begin(), folded_terms.end());
    for (auto& hit : hits) {
        for (const auto& token : unicode::tokenize(hit.doc.text)) {
            if (exact_set.contains(token.text) || folded_set.contains(unicode::strip_marks(token.text)))
                hit.highlights.push_back({token.begin, token.end});
        }
    }
    return hits;
}

void TextIndex::load_asr(const std::filesystem::path& path, const VideoFilter& keep) {
    for_each_jsonl(path, [&](const Json& j, std::size_t line) {
        TextDoc d;
        d.video = {j.at("group_id").get<std::string>(), j.at("video_id").get<std::string>()};
        if (keep && !keep(d.video)) return;
        d.start_frame = j.at("start_frame").get<std::int64_t>();
        d.end_frame = j.at("end_frame").get<std::int64_t>();
        d.channel = Channel::ASR;
        d.text = j.at("text").get<std::string>();
        d.doc_id = j.contains("doc_id") ? j["doc_id"].get<std::string>()
                                        : "asr:" + d.video.str() + "/" + std::to_string(d.start_frame) + "-" +
                                              std::to_string(d.end_frame) + "#" + std::to_string(line);
        index_document(std::move(d));
    });
}

void TextIndex::load_ocr(const std::filesystem::path& path, const VideoFilter& keep) {
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        TextDoc d;
        d.video = {j.at("group_id").get<std::string>(), j.at("video_id").get<std::string>()};
        if (keep && !keep(d.video)) return;
        d.start_frame = d.end_frame = j.at("frame_id").get<std::int64_t>();
        d.channel = Channel::OCR;
        const auto refined = j.value("text_refined", Json());
        d.text = refined.is_string() && !unicode::trim(refined.get<std::string>()).empty()
                     ? refined.get<std::string>()
                     : j.at("text_raw").get<std::string>();
        if (j.contains("confidence") && !j["confidence"].is_null()) d.confidence = j["confidence"].get<double>();
        d.doc_id = "ocr:" + FrameKey(d.video, d.start_frame).str();
        index_document(std::move(d));
    });
}

}  // namespace vidsearch
