#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "vidsearch/orchestrator.hpp"

using namespace vidsearch;

namespace {

FrameKey key(const std::string& k) { return parse_frame_key(k); }

ModalityWeights weights(double s, double a, double o, double b) { return {s, a, o, b}; }

/// Embeds text by table lookup.
class TableEmbedder final : public EmbeddingClient {
public:
    explicit TableEmbedder(std::map<std::string, EmbeddingVector> table, Eigen::Index dim)
        : table_(std::move(table)), dim_(dim) {}
    Eigen::Index dimension() const override { return dim_; }
    EmbeddingVector embed_text(const std::string& text) const override { return table_.at(text); }
    EmbeddingVector embed_image(const std::string& ref) const override { return table_.at(ref); }

private:
    std::map<std::string, EmbeddingVector> table_;
    Eigen::Index dim_;
};

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0, 1);
    std::vector<double> v(dim);
    for (auto& x : v) x = n(rng);
    return v;
}

EmbeddingVector to_float(const std::vector<double>& v) {
    EmbeddingVector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = static_cast<float>(v[i]);
    return out;
}

std::vector<double> to_double(const EmbeddingVector& v) {
    const Eigen::VectorXd d = v.cast<double>().normalized();
    return {d.data(), d.data() + d.size()};
}

double fused_of(const std::vector<ScoredFrame>& frames, const FrameKey& k) {
    for (const auto& f : frames)
        if (f.key == k) return f.fused;
    return std::nan("");
}

std::map<Modality, ScoreMap> random_scores(std::mt19937_64& rng, std::size_t frames) {
    std::uniform_real_distribution<double> u(0, 1);
    std::bernoulli_distribution present(0.6);
    std::map<Modality, ScoreMap> scores;
    for (auto m : kModalities)
        for (std::size_t i = 0; i < frames; ++i)
            if (present(rng)) scores[m][{"G", "V" + std::to_string(i % 5), static_cast<std::int64_t>(i)}] = u(rng);
    return scores;
}

ModalityWeights random_weights(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1);
    return {u(rng), u(rng), u(rng), u(rng)};
}

TextHit text_hit(const std::string& video, std::int64_t start, std::int64_t end, Channel ch, double score,
                 const std::string& text = "t") {
    const auto vk = key(video + "/0").video();
    return {TextDoc{video + "-" + std::to_string(start), vk, start, end, ch, text, std::nullopt}, score, {}};
}

}  // namespace

TEST(Fusion, Examples) {
    const auto a = key("L01/V001/1");
    EXPECT_EQ(fuse_normalized({{Modality::Semantic, {{a, 0.8}}}}, weights(1, 1, 1, 1))[0].fused, 0.8);
    EXPECT_EQ(fuse_normalized({{Modality::Semantic, {{a, 0.8}}}, {Modality::Ocr, {{a, 0.6}}}}, weights(1, 1, 1, 1))[0].fused,
              0.7);
    EXPECT_EQ(fuse_normalized({{Modality::Semantic, {{a, 0.9}}}, {Modality::Asr, {{a, 0.3}}}}, weights(2, 1, 0, 0))[0].fused,
              0.7);
}

TEST(Fusion, ZeroWeightModalitiesAreIgnored) {
    const auto a = key("g/v/1"), b = key("g/v/2");
    const auto out = fuse_normalized({{Modality::Semantic, {{a, 0.5}}}, {Modality::Object, {{a, 1.0}, {b, 1.0}}}},
                                     weights(1, 0, 0, 0));
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].fused, 0.5);
    EXPECT_EQ(out[0].per_modality.size(), 1u);
}

TEST(Fusion, TiesBreakByKeyAndScoresStayInUnitInterval) {
    std::mt19937_64 rng(41);
    for (int round = 0; round < 200; ++round) {
        const auto out = fuse_normalized(random_scores(rng, 40), random_weights(rng));
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_GE(out[i].fused, 0.0);
            EXPECT_LE(out[i].fused, 1.0);
            if (i > 0) {
                EXPECT_GE(out[i - 1].fused, out[i].fused);
                if (out[i - 1].fused == out[i].fused) EXPECT_LT(out[i - 1].key, out[i].key);
            }
        }
    }
    const auto tie = fuse_normalized({{Modality::Semantic, {{key("g/v/9"), 0.5}, {key("g/v/10"), 0.5}}}}, {});
    EXPECT_EQ(tie[0].key.str(), "g/v/10");
}

TEST(Fusion, MatchesWeightedMeanOracle) {
    std::mt19937_64 rng(42);
    for (int round = 0; round < 200; ++round) {
        const auto scores = random_scores(rng, 30);
        const auto w = random_weights(rng);
        for (const auto& f : fuse_normalized(scores, w)) {
            double num = 0, den = 0;
            for (const auto& [m, map] : scores)
                if (auto it = map.find(f.key); it != map.end()) {
                    num += w.get(m) * it->second;
                    den += w.get(m);
                }
            EXPECT_NEAR(f.fused, num / den, 1e-12);
        }
    }
}

TEST(Fusion, DominanceOverTheSameModalitiesNeverLowersRank) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0, 1);
    std::bernoulli_distribution present(0.5);
    const auto x = key("g/v/1"), y = key("g/v/2");
    for (int round = 0; round < 2000; ++round) {
        std::map<Modality, ScoreMap> scores;
        for (auto m : kModalities) {
            if (!present(rng)) continue;
            const double sy = u(rng);
            scores[m][y] = sy;
            scores[m][x] = sy + (1 - sy) * u(rng);
        }
        if (scores.empty()) continue;
        const auto out = fuse_normalized(scores, random_weights(rng));
        EXPECT_GE(fused_of(out, x), fused_of(out, y));
    }
}

TEST(Fusion, ExtraModalitiesAtLeastAsStrongNeverLowerRank) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0, 1);
    const auto x = key("g/v/1"), y = key("g/v/2");
    for (int round = 0; round < 2000; ++round) {
        auto mods = std::vector<Modality>(kModalities.begin(), kModalities.end());
        std::shuffle(mods.begin(), mods.end(), rng);
        const std::size_t shared = 1 + rng() % 3;
        const auto w = random_weights(rng);
        std::map<Modality, ScoreMap> scores;
        long double num = 0, den = 0;
        for (std::size_t i = 0; i < shared; ++i) {
            const double sy = u(rng);
            scores[mods[i]][y] = sy;
            scores[mods[i]][x] = sy + (1 - sy) * u(rng);
            num += w.get(mods[i]) * sy;
            den += w.get(mods[i]);
        }
        const double fused_y = static_cast<double>(num / den);
        for (std::size_t i = shared; i < mods.size(); ++i)
            if (rng() % 2) scores[mods[i]][x] = fused_y + (1 - fused_y) * u(rng);
        const auto out = fuse_normalized(scores, w);
        EXPECT_GE(fused_of(out, x), fused_of(out, y) - 1e-15);
    }
}

TEST(Fusion, RaisingWeightOfAModalityWhereXIsTopNeverLowersXAgainstAbsentY) {
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(0, 1), raise(0.01, 2);
    const auto x = key("g/v/1"), y = key("g/v/2");
    for (int round = 0; round < 2000; ++round) {
        auto scores = random_scores(rng, 6);
        const auto m = kModalities[rng() % 4];
        scores[m][x] = 1.0;
        scores[m].erase(y);
        for (auto other : kModalities)
            if (other != m && !scores[other].contains(y)) scores[other][y] = u(rng);
        auto w = random_weights(rng);
        const auto before = fuse_normalized(scores, w);
        w.set(m, w.get(m) + raise(rng));
        const auto after = fuse_normalized(scores, w);
        EXPECT_GE(fused_of(after, x), fused_of(before, x) - 1e-15);
        EXPECT_EQ(fused_of(after, y), fused_of(before, y));
        if (fused_of(before, x) >= fused_of(before, y)) EXPECT_GE(fused_of(after, x), fused_of(after, y));
    }
}

TEST(Fusion, OutputIsIndependentOfModalityArrivalOrder) {
    std::mt19937_64 rng(46);
    const auto scores = random_scores(rng, 50);
    const auto w = random_weights(rng);
    std::vector<Modality> order(kModalities.begin(), kModalities.end());
    std::vector<std::pair<FrameKey, double>> reference;
    int permutations = 0;
    do {
        std::map<Modality, ScoreMap> arrived;
        for (auto m : order) {
            std::vector<std::pair<FrameKey, double>> items(scores.at(m).begin(), scores.at(m).end());
            std::shuffle(items.begin(), items.end(), rng);
            auto& target = arrived[m];
            for (auto& [k, s] : items) target.emplace(k, s);
        }
        std::vector<std::pair<FrameKey, double>> out;
        for (const auto& f : fuse_normalized(arrived, w)) out.emplace_back(f.key, f.fused);
        if (reference.empty()) reference = out;
        ASSERT_EQ(out.size(), reference.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_EQ(out[i].first, reference[i].first);
            EXPECT_EQ(std::memcmp(&out[i].second, &reference[i].second, sizeof(double)), 0);
        }
        ++permutations;
    } while (std::next_permutation(order.begin(), order.end()));
    EXPECT_EQ(permutations, 24);
}

TEST(Normalize, MinMaxPerModality) {
    PlanExecution ex;
    ex.results[Modality::Semantic] = std::vector<VectorHit>{{key("g/v/1"), 0.9}, {key("g/v/2"), 0.5}, {key("g/v/3"), 0.1}};
    ex.results[Modality::Object] = std::vector<ObjectMatch>{{key("g/v/4"), 3}};
    ex.results[Modality::Ocr] = std::vector<TextHit>{text_hit("g/v", 7, 7, Channel::OCR, 2.0), text_hit("g/v", 8, 8, Channel::OCR, 2.0)};
    const auto n = normalize_results(ex, nullptr);
    EXPECT_EQ(n.at(Modality::Semantic).at(key("g/v/1")), 1.0);
    EXPECT_NEAR(n.at(Modality::Semantic).at(key("g/v/2")), 0.5, 1e-12);
    EXPECT_EQ(n.at(Modality::Semantic).at(key("g/v/3")), 0.0);
    EXPECT_EQ(n.at(Modality::Object).at(key("g/v/4")), 1.0);
    EXPECT_EQ(n.at(Modality::Ocr).at(key("g/v/7")), 1.0);
    EXPECT_EQ(n.at(Modality::Ocr).at(key("g/v/8")), 1.0);
}

TEST(Normalize, AsrSegmentsProjectOntoKeyframes) {
    Catalog catalog;
    catalog.add_shot({{"g", "v"}, 0, 99});
    catalog.finalize();
    PlanExecution ex;
    ex.results[Modality::Asr] = std::vector<TextHit>{text_hit("g/v", 10, 60, Channel::ASR, 4.0),
                                                     text_hit("g/v", 40, 99, Channel::ASR, 1.0)};
    const auto n = normalize_results(ex, &catalog).at(Modality::Asr);
    EXPECT_EQ(n.size(), 3u);
    EXPECT_EQ(n.at(key("g/v/15")), 1.0);
    EXPECT_EQ(n.at(key("g/v/49")), 1.0);
    EXPECT_EQ(n.at(key("g/v/84")), 0.0);
    const auto without = normalize_results(ex, nullptr).at(Modality::Asr);
    EXPECT_EQ(without.size(), 2u);
    EXPECT_TRUE(without.contains(key("g/v/10")));
}

TEST(ExecutePlan, OnlyPositiveWeightsRunAndFailuresBecomeWarnings) {
    const MockEmbedder embedder(8);
    VectorIndex index(8);
    index.add(key("g/v/1"), embedder.embed_text("a"));
    index.freeze();
    testing_support::TempDir dir;
    ObjectIndex broken(dir.path() / "missing.json");
    SearchPlan plan;
    plan.original_query = plan.semantic_query = "a dog";
    plan.weights = weights(1, 0, 0, 0);
    auto ex = execute_plan(plan, {nullptr, &index, nullptr, &broken}, &embedder);
    EXPECT_EQ(ex.results.size(), 1u);
    EXPECT_TRUE(ex.warnings.empty());

    plan.weights = weights(1, 0, 0, 1);
    plan.object_query = ObjectQuery{{"dog"}, MatchMode::Or, 0};
    ex = execute_plan(plan, {nullptr, &index, nullptr, &broken}, &embedder);
    EXPECT_EQ(ex.results.size(), 2u);
    ASSERT_EQ(ex.warnings.size(), 1u);
    EXPECT_EQ(ex.warnings[0].rfind("object search failed", 0), 0u);
    EXPECT_TRUE(std::get<std::vector<ObjectMatch>>(ex.results.at(Modality::Object)).empty());
    EXPECT_EQ(std::get<std::vector<VectorHit>>(ex.results.at(Modality::Semantic)).size(), 1u);

    plan.weights = weights(0, 0, 0, 1);
    EXPECT_THROW(execute_plan(plan, {nullptr, &index, nullptr, &broken}, &embedder), Error);
}

TEST(ExecutePlan, ScopeRestrictsEveryModality) {
    const MockEmbedder embedder(8);
    VectorIndex index(8);
    for (int i = 0; i < 10; ++i) index.add({i % 2 ? "L01" : "L02", "V001", i}, embedder.embed_text(std::to_string(i)));
    index.freeze();
    ObjectIndex objects(DetectionStore{{key("L01/V001/1"), {{"dog", 0.9, 0.1, 0.1, 0.2, 0.2}}},
                                       {key("L02/V001/2"), {{"dog", 0.9, 0.1, 0.1, 0.2, 0.2}}}});
    SearchPlan plan;
    plan.original_query = plan.semantic_query = "dog";
    plan.weights = weights(1, 0, 0, 1);
    plan.object_query = ObjectQuery{{"dog"}, MatchMode::Or, 0};
    ExecuteOptions options;
    options.scope = [](const FrameKey& k) { return k.group_id == "L02"; };
    const auto ex = execute_plan(plan, {nullptr, &index, nullptr, &objects}, &embedder, options);
    for (const auto& f : fuse(ex, plan.weights, nullptr)) EXPECT_EQ(f.key.group_id, "L02");
}

TEST(Temporal, Examples) {
    // A: best 0.9 in step 1, 0.4 in step 2; B: 0.6 and 0.5; C only in step 1; D only in step 2.
    const std::map<std::string, EmbeddingVector> table{
        {"s1", (EmbeddingVector(3) << 1, 0, 0).finished()}, {"s2", (EmbeddingVector(3) << 0, 1, 0).finished()}};
    const TableEmbedder embedder(table, 3);
    auto vec = [](double a, double b) {
        const double c = std::sqrt(std::max(0.0, 1 - a * a - b * b));
        return (EmbeddingVector(3) << float(a), float(b), float(c)).finished();
    };
    VectorIndex index(3);
    index.add(key("g/A/1"), vec(0.9, 0.0));
    index.add(key("g/A/2"), vec(0.0, 0.4));
    index.add(key("g/B/1"), vec(0.6, 0.5));
    index.add(key("g/C/1"), vec(0.95, -0.3));
    index.add(key("g/D/1"), vec(0.0, 0.8));
    index.freeze();
    const auto r = temporal_search({"s1", "s2"}, embedder, index, 3);
    ASSERT_EQ(r.ranking.size(), 2u);
    EXPECT_EQ(r.ranking[0].video.str(), "g/B");
    EXPECT_NEAR(r.ranking[0].score, 0.5, 1e-6);
    EXPECT_EQ(r.ranking[1].video.str(), "g/A");
    EXPECT_NEAR(r.ranking[1].score, 0.4, 1e-6);
    // Depth 2 keeps C and A in step 1 but D and B in step 2.
    EXPECT_TRUE(temporal_search({"s1", "s2"}, embedder, index, 2).ranking.empty());
    const auto single = temporal_search({"s1"}, embedder, index, 10);
    ASSERT_EQ(single.ranking.size(), 4u);
    EXPECT_EQ(single.ranking[0].video.str(), "g/C");
    EXPECT_THROW(temporal_search({}, embedder, index), InvalidArgument);
    EXPECT_THROW(temporal_search({"s1"}, embedder, index, 0), InvalidArgument);
}

TEST(Temporal, MatchesBruteForceOracle) {
    std::mt19937_64 rng(47);
    const std::size_t dim = 16;
    for (int round = 0; round < 10; ++round) {
        std::map<FrameKey, std::vector<double>> rows;
        VectorIndex index(dim);
        for (int v = 0; v < 20; ++v)
            for (int f = 0; f < 5; ++f) {
                const auto e = to_float(random_vector(rng, dim));
                const FrameKey k{"L0" + std::to_string(v % 3), "V" + std::to_string(100 + v), f * 10};
                index.add(k, e);
                rows[k] = to_double(e);
            }
        index.freeze();
        std::map<std::string, EmbeddingVector> table;
        std::vector<std::vector<double>> step_vectors;
        std::vector<std::string> queries;
        for (int s = 0; s < 3; ++s) {
            const auto e = to_float(random_vector(rng, dim));
            queries.push_back("step" + std::to_string(s));
            table[queries.back()] = e;
            step_vectors.push_back(to_double(e));
        }
        const TableEmbedder embedder(table, dim);
        for (std::size_t k : {1, 5, 12, 20}) {
            const auto got = temporal_search(queries, embedder, index, k).ranking;
            const auto want = oracle::temporal(rows, step_vectors, k);
            ASSERT_EQ(got.size(), want.size()) << "k=" << k;
            for (std::size_t i = 0; i < got.size(); ++i) {
                EXPECT_EQ(got[i].video, want[i].video);
                EXPECT_NEAR(got[i].score, want[i].score, 1e-5);
            }
        }
    }
}

TEST(GroupByVideo, PartitionsAndOrdersByBestFrame) {
    std::vector<ScoredFrame> frames{{key("g/B/1"), {}, 0.9}, {key("g/A/1"), {}, 0.8}, {key("g/B/2"), {}, 0.2},
                                    {key("g/C/5"), {}, 0.95}};
    const auto p = group_by_video(frames, nullptr, {});
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p[0].video.str(), "g/C");
    EXPECT_EQ(p[1].video.str(), "g/B");
    EXPECT_EQ(p[1].frames.size(), 2u);
    EXPECT_EQ(p[2].video.str(), "g/A");
    EXPECT_TRUE(group_by_video({}, nullptr, {}).empty());
    EXPECT_EQ(group_by_video({frames[0], frames[2]}, nullptr, {}).size(), 1u);
}

TEST(GroupByVideo, AttachesTextAndObjectEvidence) {
    PlanExecution ex;
    ex.results[Modality::Asr] = std::vector<TextHit>{text_hit("g/A", 0, 20, Channel::ASR, 1.0, "xin chào"),
                                                     text_hit("g/A", 30, 40, Channel::ASR, 1.0)};
    ex.results[Modality::Ocr] = std::vector<TextHit>{text_hit("g/A", 15, 15, Channel::OCR, 1.0, "BẾN THÀNH"),
                                                     text_hit("g/B", 15, 15, Channel::OCR, 1.0)};
    ObjectIndex objects(DetectionStore{{key("g/A/15"), {{"dog", 0.9, 0.1, 0.1, 0.2, 0.2}, {"car", 0.8, 0.1, 0.1, 0.2, 0.2}}}});
    const auto p = group_by_video({{key("g/A/15"), {}, 1.0}}, &ex, {nullptr, nullptr, nullptr, &objects});
    ASSERT_EQ(p.size(), 1u);
    ASSERT_EQ(p[0].asr_snippets.size(), 1u);
    EXPECT_EQ(p[0].asr_snippets[0].doc.text, "xin chào");
    ASSERT_EQ(p[0].ocr_texts.size(), 1u);
    ASSERT_EQ(p[0].objects.size(), 1u);
    EXPECT_EQ(p[0].objects[0].second, (std::vector<std::string>{"car", "dog"}));
}

TEST(Answer, MockCitesTheTopFrame) {
    const auto packages = group_by_video({{key("L01/V003/49"), {{Modality::Semantic, 1.0}}, 1.0}}, nullptr, {});
    const auto a = synthesize_answer(packages, "Where is this?", MockLlm{});
    EXPECT_EQ(a.text, "The strongest evidence is frame 49 of video L01/V003.");
    EXPECT_EQ(a.cited_frames, (std::vector<FrameKey>{key("L01/V003/49")}));
    EXPECT_TRUE(a.warnings.empty());
}

TEST(Answer, UnknownAndMalformedCitationsAreDropped) {
    const auto packages = group_by_video({{key("g/v/1"), {}, 1.0}, {key("g/v/2"), {}, 0.5}}, nullptr, {});
    CallbackLlm llm([](const std::string&) {
        return std::string("ANSWER: It is a dog.\nCITATIONS: g/v/2, L09/V009/1; g/v/2 nonsense");
    });
    const auto a = synthesize_answer(packages, "q", llm);
    EXPECT_EQ(a.text, "It is a dog.");
    EXPECT_EQ(a.cited_frames, (std::vector<FrameKey>{key("g/v/2")}));
    EXPECT_EQ(a.warnings.size(), 2u);
}

TEST(Answer, ErrorsCarryEvidence) {
    EXPECT_THROW(synthesize_answer({}, "q", MockLlm{}), InvalidArgument);
    const auto packages = group_by_video({{key("g/v/1"), {}, 1.0}}, nullptr, {});
    CallbackLlm down([](const std::string&) -> std::string { throw TransportError("down", 3); });
    try {
        synthesize_answer(packages, "q", down);
        FAIL();
    } catch (const AnswerError& e) {
        EXPECT_EQ(e.evidence().size(), 1u);
    }
}
