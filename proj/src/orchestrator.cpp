#include "vidsearch/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>

#include "vidsearch/parallel.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

FrameKey text_hit_key(const TextHit& hit) { return FrameKey(hit.doc.video, hit.doc.start_frame); }

std::vector<TextHit> run_text(const TextIndex* text, const std::vector<std::string>& keywords, Channel channel,
                              std::size_t k, const KeyFilter& scope) {
    if (!text) throw Error("text index not available");
    if (keywords.empty()) throw Error("no keywords for " + std::string(to_string(channel)) + " search");
    auto hits = text->search(join(keywords, " "), channel, k);
    if (scope) std::erase_if(hits, [&](const TextHit& h) { return !scope(text_hit_key(h)); });
    return hits;
}

/// Min-max normalises `raw` in place.
void min_max(std::vector<double>& raw) {
    if (raw.empty()) return;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double min = *lo, max = *hi;
    for (auto& v : raw) v = (raw.size() == 1 || max == min) ? 1.0 : (v - min) / (max - min);
}

void keep_max(ScoreMap& m, const FrameKey& key, double s) {
    auto [it, inserted] = m.try_emplace(key, s);
    if (!inserted) it->second = std::max(it->second, s);
}

}  // namespace

PlanExecution execute_plan(const SearchPlan& plan, const Indices& indices, const EmbeddingClient* embedder,
                           const ExecuteOptions& options) {
    std::vector<Modality> scheduled;
    for (auto m : kModalities)
        if (plan.weights.get(m) > 0) scheduled.push_back(m);

    const std::size_t k = plan.top_k_per_modality;
    std::vector<std::optional<ModalityResult>> results(scheduled.size());
    std::vector<std::string> errors(scheduled.size());
    parallel_for(scheduled.size(), options.parallelism, [&](std::size_t i) {
        try {
            switch (scheduled[i]) {
                case Modality::Semantic: {
                    if (!indices.vectors || !embedder) throw Error("vector index or embedder not available");
                    results[i] = indices.vectors->search(embedder->embed_text(plan.semantic_query), k, options.scope);
                    break;
                }
                case Modality::Asr:
                    results[i] = run_text(indices.text, plan.asr_keywords, Channel::ASR, k, options.scope);
                    break;
                case Modality::Ocr:
                    results[i] = run_text(indices.text, plan.ocr_keywords, Channel::OCR, k, options.scope);
                    break;
                case Modality::Object: {
                    if (!indices.objects) throw Error("object index not available");
                    if (!plan.object_query) throw Error("plan has no object query");
                    auto matches = indices.objects->filter_frames(*plan.object_query, k);
                    if (options.scope) std::erase_if(matches, [&](const ObjectMatch& m) { return !options.scope(m.key); });
                    results[i] = std::move(matches);
                    break;
                }
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    PlanExecution execution;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < scheduled.size(); ++i) {
        const auto m = scheduled[i];
        if (results[i]) {
            execution.results.emplace(m, std::move(*results[i]));
            continue;
        }
        ++failed;
        execution.warnings.push_back(std::string(to_string(m)) + " search failed: " + errors[i]);
        switch (m) {
            case Modality::Semantic: execution.results.emplace(m, std::vector<VectorHit>{}); break;
            case Modality::Asr:
            case Modality::Ocr: execution.results.emplace(m, std::vector<TextHit>{}); break;
            case Modality::Object: execution.results.emplace(m, std::vector<ObjectMatch>{}); break;
        }
    }
    if (!scheduled.empty() && failed == scheduled.size())
        throw Error("every modality failed: " + join(execution.warnings, "; "));
    return execution;
}

std::map<Modality, ScoreMap> normalize_results(const PlanExecution& execution, const Catalog* catalog) {
    std::map<Modality, ScoreMap> out;
    for (const auto& [modality, result] : execution.results) {
        auto& scores = out[modality];
        std::visit(
            [&, m = modality](const auto& hits) {
                using Hit = typename std::decay_t<decltype(hits)>::value_type;
                std::vector<double> raw;
                raw.reserve(hits.size());
                for (const auto& h : hits) {
                    if constexpr (std::is_same_v<Hit, ObjectMatch>) {
                        raw.push_back(static_cast<double>(h.matched_count));
                    } else {
                        raw.push_back(h.score);
                    }
                }
                min_max(raw);
                for (std::size_t i = 0; i < hits.size(); ++i) {
                    const auto& h = hits[i];
                    if constexpr (std::is_same_v<Hit, TextHit>) {
                        if (m == Modality::Asr && catalog) {
                            for (const auto& key : catalog->keyframes_in_span(h.doc.video, h.doc.start_frame, h.doc.end_frame))
                                keep_max(scores, key, raw[i]);
                        } else {
                            keep_max(scores, text_hit_key(h), raw[i]);
                        }
                    } else {
                        keep_max(scores, h.key, raw[i]);
                    }
                }
            },
            result);
    }
    return out;
}

std::vector<ScoredFrame> fuse_normalized(const std::map<Modality, ScoreMap>& scores, const ModalityWeights& weights) {
    std::map<FrameKey, ScoredFrame> frames;
    for (const auto& [modality, map] : scores) {
        if (!(weights.get(modality) > 0)) continue;
        for (const auto& [key, s] : map) {
            auto& f = frames[key];
            f.key = key;
            f.per_modality[modality] = s;
        }
    }
    std::vector<ScoredFrame> fused;
    fused.reserve(frames.size());
    for (auto& [key, f] : frames) {
        // Extended precision keeps simple weight ratios exact, e.g. (2*0.9 + 0.3) / 3 == 0.7.
        long double numerator = 0, denominator = 0;
        for (auto m : kModalities) {
            const auto it = f.per_modality.find(m);
            if (it == f.per_modality.end()) continue;
            const long double w = weights.get(m);
            numerator += w * static_cast<long double>(it->second);
            denominator += w;
        }
        f.fused = static_cast<double>(numerator / denominator);
        fused.push_back(std::move(f));
    }
    std::stable_sort(fused.begin(), fused.end(), [](const ScoredFrame& a, const ScoredFrame& b) { return a.fused > b.fused; });
    return fused;
}

std::vector<ScoredFrame> fuse(const PlanExecution& execution, const ModalityWeights& weights, const Catalog* catalog) {
    return fuse_normalized(normalize_results(execution, catalog), weights);
}

TemporalResult temporal_search(const std::vector<std::string>& queries, const EmbeddingClient& embedder,
                               const VectorIndex& index, std::size_t k_per_step, const KeyFilter& scope) {
    if (queries.empty()) throw InvalidArgument("temporal search needs at least one query");
    if (k_per_step < 1) throw InvalidArgument("k_per_step must be >= 1");
    TemporalResult result;
    const auto& keys = index.keys();
    for (std::size_t step = 0; step < queries.size(); ++step) {
        const auto similarity = index.scores(embedder.embed_text(queries[step]));
        std::map<VideoId, double> best;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (scope && !scope(keys[i])) continue;
            const double s = similarity[static_cast<Eigen::Index>(i)];
            auto [it, inserted] = best.try_emplace(keys[i].video(), s);
            if (!inserted) it->second = std::max(it->second, s);
        }
        std::vector<VideoScore> ranked;
        for (const auto& [v, s] : best) ranked.push_back({v, s});
        std::stable_sort(ranked.begin(), ranked.end(), [](const VideoScore& a, const VideoScore& b) { return a.score > b.score; });
        if (ranked.size() > k_per_step) ranked.resize(k_per_step);
        TemporalStepResult sr{step, {}};
        for (const auto& vs : ranked) sr.per_video.emplace(vs.video, vs.score);
        result.steps.push_back(std::move(sr));
    }
    for (const auto& [video, first_score] : result.steps.front().per_video) {
        double score = first_score;
        bool everywhere = true;
        for (std::size_t step = 1; step < result.steps.size() && everywhere; ++step) {
            const auto it = result.steps[step].per_video.find(video);
            if (it == result.steps[step].per_video.end()) {
                everywhere = false;
            } else {
                score = std::min(score, it->second);
            }
        }
        if (everywhere) result.ranking.push_back({video, score});
    }
    std::stable_sort(result.ranking.begin(), result.ranking.end(),
                     [](const VideoScore& a, const VideoScore& b) { return a.score > b.score; });
    return result;
}

std::vector<EvidencePackage> group_by_video(const std::vector<ScoredFrame>& frames, const PlanExecution* execution,
                                            const Indices& indices) {
    std::vector<EvidencePackage> packages;
    std::map<VideoId, std::size_t> slot;
    for (const auto& f : frames) {
        const auto video = f.key.video();
        auto [it, inserted] = slot.try_emplace(video, packages.size());
        if (inserted) packages.push_back(EvidencePackage{video, {}, {}, {}, {}});
        packages[it->second].frames.push_back(f);
    }
    // Frames arrive sorted by fused score, so first appearance order is best-first;
    // sort anyway so callers may pass unsorted input.
    auto best = [](const EvidencePackage& p) {
        double b = -std::numeric_limits<double>::infinity();
        for (const auto& f : p.frames) b = std::max(b, f.fused);
        return b;
    };
    std::stable_sort(packages.begin(), packages.end(),
                     [&](const EvidencePackage& a, const EvidencePackage& b) { return best(a) > best(b); });

    for (auto& p : packages) {
        std::set<std::int64_t> frame_ids;
        for (const auto& f : p.frames) frame_ids.insert(f.key.frame_id);
        if (execution) {
            auto text_hits = [&](Modality m) -> const std::vector<TextHit>* {
                const auto it = execution->results.find(m);
                if (it == execution->results.end()) return nullptr;
                return std::get_if<std::vector<TextHit>>(&it->second);
            };
            if (const auto* asr = text_hits(Modality::Asr)) {
                for (const auto& h : *asr) {
                    if (h.doc.video != p.video) continue;
                    const auto lo = frame_ids.lower_bound(h.doc.start_frame);
                    if (lo != frame_ids.end() && *lo <= h.doc.end_frame) p.asr_snippets.push_back(h);
                }
            }
            if (const auto* ocr = text_hits(Modality::Ocr)) {
                for (const auto& h : *ocr)
                    if (h.doc.video == p.video && frame_ids.contains(h.doc.start_frame)) p.ocr_texts.push_back(h);
            }
        }
        if (indices.objects) {
            try {
                for (const auto& f : p.frames) {
                    std::set<std::string> labels;
                    for (const auto& d : indices.objects->detections(f.key)) labels.insert(d.label);
                    if (!labels.empty()) p.objects.emplace_back(f.key, std::vector<std::string>(labels.begin(), labels.end()));
                }
            } catch (const Error&) {
                p.objects.clear();  // detections unavailable; the package is still usable
            }
        }
    }
    return packages;
}

std::string build_answer_prompt(const std::vector<EvidencePackage>& packages, const std::string& question) {
    std::string prompt;
    prompt += kTaskPrefix;
    prompt += task::kAnswer;
    prompt +=
        "\nAnswer the question using only the evidence below and cite the frames you rely on by key.\n"
        "Reply in two lines:\nANSWER: <answer>\nCITATIONS: <frame key>, <frame key>\n### question\n";
    prompt += question + "\n### evidence\n";
    for (const auto& p : packages) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& f : p.frames) best = std::max(best, f.fused);
        prompt += "video " + p.video.str() + " best=" + fixed4(best) + "\n";
        for (const auto& f : p.frames) {
            prompt += "frame " + f.key.str() + " fused=" + fixed4(f.fused);
            for (const auto& [m, s] : f.per_modality) prompt += " " + std::string(to_string(m)) + "=" + fixed4(s);
            prompt += "\n";
        }
        for (const auto& h : p.asr_snippets)
            prompt += "asr " + p.video.str() + " [" + std::to_string(h.doc.start_frame) + "-" +
                      std::to_string(h.doc.end_frame) + "]: " + unicode::normalize_space(h.doc.text) + "\n";
        for (const auto& h : p.ocr_texts)
            prompt += "ocr " + text_hit_key(h).str() + ": " + unicode::normalize_space(h.doc.text) + "\n";
        for (const auto& [key, labels] : p.objects) prompt += "objects " + key.str() + ": " + join(labels, ", ") + "\n";
    }
    return prompt;
}

Answer synthesize_answer(const std::vector<EvidencePackage>& packages, const std::string& question,
                         const LlmClient& llm) {
    if (packages.empty()) throw InvalidArgument("answer synthesis needs at least one evidence package");
    std::string reply;
    try {
        reply = llm.complete(build_answer_prompt(packages, question));
    } catch (const std::exception& e) {
        throw AnswerError(std::string("answer synthesis failed: ") + e.what(), packages);
    }

    std::set<FrameKey> known;
    for (const auto& p : packages)
        for (const auto& f : p.frames) known.insert(f.key);

    Answer answer;
    std::string body;
    std::string citations;
    for (auto line_view : [&] {
             std::vector<std::string> lines;
             std::size_t pos = 0;
             while (pos <= reply.size()) {
                 auto nl = reply.find('\n', pos);
                 if (nl == std::string::npos) nl = reply.size();
                 lines.push_back(reply.substr(pos, nl - pos));
                 pos = nl + 1;
             }
             return lines;
         }()) {
        const auto line = unicode::trim(line_view);
        const auto upper = unicode::case_fold(line.substr(0, std::min<std::size_t>(line.size(), 10)));
        if (upper.starts_with("citations:")) {
            citations += line.substr(10) + ",";
        } else if (upper.starts_with("answer:")) {
            body += unicode::trim(line.substr(7));
        } else if (!line.empty()) {
            if (!body.empty()) body += " ";
            body += line;
        }
    }
    answer.text = unicode::trim(body);

    std::string token;
    auto flush = [&] {
        const auto t = unicode::trim(token);
        token.clear();
        if (t.empty()) return;
        try {
            const auto key = parse_frame_key(t);
            if (!known.contains(key)) {
                answer.warnings.push_back("dropped citation of frame " + t + " that is not in the evidence");
            } else if (std::find(answer.cited_frames.begin(), answer.cited_frames.end(), key) == answer.cited_frames.end()) {
                answer.cited_frames.push_back(key);
            }
        } catch (const ParseError&) {
            answer.warnings.push_back("dropped malformed citation '" + t + "'");
        }
    };
    for (char c : citations) {
        if (c == ',' || c == ' ' || c == ';') {
            flush();
        } else {
            token += c;
        }
    }
    flush();
    return answer;
}

}  // namespace vidsearch
