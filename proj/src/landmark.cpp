#include "vidsearch/landmark.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "vidsearch/jsonl.hpp"
#include "vidsearch/parallel.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

bool names_landmark(const std::string& text, const LandmarkKB& kb, const LandmarkEntry& entry) {
    for (const auto& m : kb.scan(text).mentions)
        if (&kb.entries()[m.entry] == &entry) return true;
    return false;
}

void add_unique(std::vector<std::string>& out, std::string s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
}

std::optional<std::vector<LandmarkQueries>> parse_image_query_reply(const std::string& reply, const LandmarkKB& kb,
                                                                    std::vector<std::string>& warnings) {
    const auto first = reply.find('[');
    const auto last = reply.rfind(']');
    if (first == std::string::npos || last == std::string::npos || last < first) return std::nullopt;
    Json doc;
    try {
        doc = Json::parse(reply.substr(first, last - first + 1));
    } catch (const Json::exception&) {
        return std::nullopt;
    }
    std::vector<LandmarkQueries> out;
    for (const auto& item : doc) {
        if (!item.is_object() || !item.contains("landmark") || !item["landmark"].is_string()) continue;
        const auto* entry = kb.find(item["landmark"].get<std::string>());
        if (!entry) {
            warnings.push_back("image query reply names unknown landmark '" + item["landmark"].get<std::string>() + "'");
            continue;
        }
        if (std::any_of(out.begin(), out.end(), [&](const auto& lq) { return lq.landmark == entry->name; })) continue;
        LandmarkQueries lq{entry->name, {}};
        for (const auto& q : item.value("queries", Json::array())) {
            if (!q.is_string()) continue;
            auto text = unicode::normalize_space(q.get<std::string>());
            if (names_landmark(text, kb, *entry)) {
                add_unique(lq.queries, std::move(text));
            } else {
                warnings.push_back("dropped image query '" + text + "' that does not name " + entry->name);
            }
        }
        if (lq.queries.empty()) lq.queries = template_image_queries(*entry);
        out.push_back(std::move(lq));
    }
    return out;
}

}  // namespace

SearchPlan enhance_plan(SearchPlan plan, const LandmarkKB& kb) {
    std::set<const LandmarkEntry*> wanted;
    for (const auto& name : plan.detected_landmarks) {
        if (const auto* entry = kb.find(name)) {
            wanted.insert(entry);
        } else {
            plan.warnings.push_back("landmark '" + name + "' is not in the knowledge base; query left unchanged");
        }
    }
    if (wanted.empty()) return plan;
    const auto scan = kb.scan(plan.semantic_query);
    bool changed = false;
    std::string rewritten;
    std::size_t cursor = 0;
    for (const auto& m : scan.mentions) {
        const auto& entry = kb.entries()[m.entry];
        if (!wanted.contains(&entry)) continue;
        rewritten += scan.text.substr(cursor, m.begin - cursor);
        rewritten += entry.visual_description;
        cursor = m.end;
        changed = true;
    }
    if (!changed) return plan;
    rewritten += scan.text.substr(cursor);
    plan.semantic_query = unicode::normalize_space(rewritten);
    return plan;
}

std::vector<std::string> template_image_queries(const LandmarkEntry& entry) {
    std::vector<std::string> q{entry.name};
    if (entry.city && !entry.city->empty()) q.push_back(entry.name + " " + *entry.city);
    return q;
}

std::string build_image_query_prompt(std::string_view query, const LandmarkKB& kb, std::size_t max_landmarks) {
    std::string prompt;
    prompt += kTaskPrefix;
    prompt += task::kImageQueries;
    prompt += "\nIdentify at most " + std::to_string(max_landmarks) +
              " landmarks in the query and write descriptive web image search queries for each "
              "(for example a viewpoint or time of day). Every query must contain the landmark's name. "
              "Reply with a JSON array: [{\"landmark\": \"<name from the known landmarks>\", \"queries\": "
              "[\"...\"]}].\n### query\n";
    prompt += std::string(query) + "\n### detected\n";
    for (const auto& name : detect_landmarks(query, kb)) {
        const auto* e = kb.find(name);
        prompt += "- " + e->name + " | " + e->city.value_or("") + "\n";
    }
    prompt += "### known landmarks\n";
    for (const auto& e : kb.entries()) prompt += "- " + e.name + " | " + e.city.value_or("") + "\n";
    return prompt;
}

std::vector<LandmarkQueries> generate_image_queries(std::string_view query, const LandmarkKB& kb, const LlmClient& llm,
                                                    std::size_t max_landmarks, std::vector<std::string>* warnings) {
    if (unicode::trim(query).empty()) throw InvalidArgument("query is empty");
    std::vector<std::string> local_warnings;
    std::optional<std::vector<LandmarkQueries>> proposed;
    try {
        proposed = parse_image_query_reply(llm.complete(build_image_query_prompt(query, kb, max_landmarks)), kb,
                                           local_warnings);
        if (!proposed) local_warnings.push_back("image query reply is not a JSON array; using templates");
    } catch (const std::exception& e) {
        local_warnings.push_back(std::string("image query generation failed; using templates: ") + e.what());
    }
    std::vector<LandmarkQueries> result;
    if (proposed && !proposed->empty()) {
        // Landmarks named in the query keep query order; extra LLM finds follow in reply order.
        const auto in_query = detect_landmarks(query, kb);
        auto rank = [&](const LandmarkQueries& lq) {
            const auto it = std::find(in_query.begin(), in_query.end(), lq.landmark);
            return it == in_query.end() ? in_query.size() : static_cast<std::size_t>(it - in_query.begin());
        };
        result = std::move(*proposed);
        std::stable_sort(result.begin(), result.end(),
                         [&](const LandmarkQueries& a, const LandmarkQueries& b) { return rank(a) < rank(b); });
    } else {
        for (const auto& name : detect_landmarks(query, kb)) result.push_back({name, template_image_queries(*kb.find(name))});
    }
    if (result.size() > max_landmarks) result.resize(max_landmarks);
    if (warnings) warnings->insert(warnings->end(), local_warnings.begin(), local_warnings.end());
    return result;
}

void I2IParams::validate() const {
    if (per_reference_top_k < 1 || max_landmarks < 1 || images_per_landmark < 1)
        throw InvalidArgument("i2i parameters must all be >= 1");
}

std::vector<VectorHit> merge_max(const std::vector<std::vector<VectorHit>>& lists) {
    std::map<FrameKey, double> best;
    for (const auto& list : lists) {
        for (const auto& hit : list) {
            auto [it, inserted] = best.try_emplace(hit.key, hit.score);
            if (!inserted) it->second = std::max(it->second, hit.score);
        }
    }
    std::vector<VectorHit> merged;
    merged.reserve(best.size());
    for (auto& [key, score] : best) merged.push_back({key, score});
    std::stable_sort(merged.begin(), merged.end(), [](const VectorHit& a, const VectorHit& b) { return a.score > b.score; });
    return merged;
}

I2IResult i2i_search(std::string_view query, const I2IParams& params, const I2IClients& clients, const LandmarkKB& kb,
                     const VectorIndex& index, std::size_t parallelism, const KeyFilter& scope) {
    params.validate();
    I2IResult result;
    result.landmarks = generate_image_queries(query, kb, clients.llm, params.max_landmarks, &result.warnings);
    if (result.landmarks.empty())
        throw I2IError(I2IError::Kind::NoLandmark, "no landmark detected in query; fall back to text search", result);

    // Reference acquisition, one task per landmark.
    std::vector<std::vector<ReferenceImage>> per_landmark(result.landmarks.size());
    std::vector<std::vector<std::string>> fetch_warnings(result.landmarks.size());
    parallel_for(result.landmarks.size(), parallelism, [&](std::size_t i) {
        const auto& lq = result.landmarks[i];
        std::set<std::string> seen;
        for (const auto& q : lq.queries) {
            if (per_landmark[i].size() >= params.images_per_landmark) break;
            try {
                for (auto& ref : clients.images.search_images(q, params.images_per_landmark - per_landmark[i].size())) {
                    if (per_landmark[i].size() >= params.images_per_landmark) break;
                    if (seen.insert(ref).second) per_landmark[i].push_back({lq.landmark, q, std::move(ref), false, {}, 0});
                }
            } catch (const std::exception& e) {
                fetch_warnings[i].push_back("image search failed for '" + q + "': " + e.what());
            }
        }
    });
    for (std::size_t i = 0; i < per_landmark.size(); ++i) {
        result.references.insert(result.references.end(), per_landmark[i].begin(), per_landmark[i].end());
        result.warnings.insert(result.warnings.end(), fetch_warnings[i].begin(), fetch_warnings[i].end());
    }

    // Embedding and similarity search, one task per reference image.
    std::vector<std::vector<VectorHit>> lists(result.references.size());
    parallel_for(result.references.size(), parallelism, [&](std::size_t i) {
        auto& ref = result.references[i];
        try {
            lists[i] = index.search(clients.embedder.embed_image(ref.reference), params.per_reference_top_k, scope);
            ref.ok = true;
            ref.hit_count = lists[i].size();
        } catch (const std::exception& e) {
            ref.error = e.what();
        }
    });
    const bool any_ok = std::any_of(result.references.begin(), result.references.end(), [](const auto& r) { return r.ok; });
    if (!any_ok)
        throw I2IError(I2IError::Kind::AllFetchesFailed,
                       "no reference image could be fetched and searched; fall back to text search", result);
    result.hits = merge_max(lists);
    return result;
}

}  // namespace vidsearch
