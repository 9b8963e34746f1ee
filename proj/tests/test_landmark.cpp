#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_support.hpp"
#include "vidsearch/landmark.hpp"
#include "vidsearch/ocr_refine.hpp"

using namespace vidsearch;

namespace {

const LandmarkKB& kb() {
    static const auto k = LandmarkKB::load(testing_support::data_dir() / "landmarks.json");
    return k;
}

VectorHit hit(const std::string& key, double score) { return {parse_frame_key(key), score}; }

/// Union with per-key maximum, sorted by score then key.
std::vector<VectorHit> merge_oracle(const std::vector<std::vector<VectorHit>>& lists) {
    std::map<std::string, VectorHit> best;
    for (const auto& l : lists)
        for (const auto& h : l) {
            auto it = best.find(h.key.str());
            if (it == best.end() || h.score > it->second.score) best[h.key.str()] = h;
        }
    std::vector<VectorHit> out;
    for (const auto& [_, h] : best) out.push_back(h);
    std::sort(out.begin(), out.end(), [](const VectorHit& a, const VectorHit& b) {
        return a.score != b.score ? a.score > b.score : a.key.str() < b.key.str();
    });
    return out;
}

}  // namespace

TEST(LandmarkKB, ShippedFileIsValidAndCoversSeedLandmarks) {
    EXPECT_GE(kb().entries().size(), 10u);
    for (const char* name : {"St. Joseph's Cathedral", "Turtle Tower", "Ben Thanh Market", "Imperial City of Hue",
                             "Bach Dang Wharf", "Thang Long Imperial Citadel"})
        EXPECT_NE(kb().find(name), nullptr) << name;
    EXPECT_EQ(kb().find("St. Joseph's Cathedral")->visual_description,
              "Twin square bell towers, dark gray stone, Gothic architecture, neo-Gothic facade");
}

TEST(LandmarkKB, LookupIsCaseAndAccentInsensitive) {
    ASSERT_NE(kb().find("chợ bến thành"), nullptr);
    EXPECT_EQ(kb().find("chợ bến thành")->name, "Ben Thanh Market");
    EXPECT_EQ(kb().find("CHO BEN THANH")->name, "Ben Thanh Market");
    EXPECT_EQ(kb().find("nowhere"), nullptr);
}

TEST(LandmarkKB, ValidationRejectsBadEntries) {
    using E = LandmarkEntry;
    EXPECT_THROW(LandmarkKB({E{"A", {}, "", std::nullopt}}), InvalidArgument);
    EXPECT_THROW(LandmarkKB({E{"A", {}, "d", std::nullopt}, E{"a", {}, "e", std::nullopt}}), InvalidArgument);
    EXPECT_THROW(LandmarkKB({E{"A", {"X"}, "d", std::nullopt}, E{"B", {"x"}, "e", std::nullopt}}), InvalidArgument);
    EXPECT_THROW(LandmarkKB({E{"Red Tower", {}, "the red tower at dusk", std::nullopt}}), InvalidArgument);
    EXPECT_NO_THROW(LandmarkKB({E{"Red Tower", {"Thap Do"}, "brick spire", std::nullopt}}));
}

TEST(LandmarkKB, ScanRespectsWordBoundariesAndLongestMatch) {
    const LandmarkKB k({{"Hoan Kiem", {}, "lake area", std::nullopt}, {"Hoan Kiem Lake", {}, "green water", std::nullopt}});
    auto s = k.scan("walk by hoan kiem lake today");
    ASSERT_EQ(s.mentions.size(), 1u);
    EXPECT_EQ(k.entries()[s.mentions[0].entry].name, "Hoan Kiem Lake");
    EXPECT_TRUE(k.scan("xhoan kiem").mentions.empty());
}

TEST(DetectLandmarks, Examples) {
    EXPECT_EQ(detect_landmarks("in front of St. Joseph's Cathedral in Hanoi", kb()),
              (std::vector<std::string>{"St. Joseph's Cathedral"}));
    EXPECT_EQ(detect_landmarks("near Turtle Tower", kb()), (std::vector<std::string>{"Turtle Tower"}));
    EXPECT_TRUE(detect_landmarks("a market in the city", kb()).empty());
    EXPECT_EQ(detect_landmarks("từ Tháp Rùa đến chợ Bến Thành rồi lại Tháp Rùa", kb()),
              (std::vector<std::string>{"Turtle Tower", "Ben Thanh Market"}));
}

TEST(DetectLandmarks, DiacriticInsensitiveProperty) {
    std::mt19937_64 rng(9);
    std::vector<std::string> surfaces;
    for (const auto& e : kb().entries()) {
        surfaces.push_back(e.name);
        for (const auto& a : e.aliases) surfaces.push_back(a);
    }
    const std::vector<std::string> fillers{"cảnh", "đẹp", "ở", "the view of", "gần", "buổi sáng", "and"};
    std::uniform_int_distribution<std::size_t> s(0, surfaces.size() - 1), f(0, fillers.size() - 1), n(0, 3);
    for (int i = 0; i < 300; ++i) {
        std::string q;
        for (auto parts = 1 + n(rng); parts--;) q += fillers[f(rng)] + " " + (n(rng) ? surfaces[s(rng)] + " " : "");
        EXPECT_EQ(detect_landmarks(strip_diacritics(q), kb()), detect_landmarks(q, kb())) << q;
    }
}

TEST(EnhancePlan, SubstitutesDescriptionAndKeepsKeywords) {
    const auto plan = build_rule_plan("The video shows St. Joseph's Cathedral in Hanoi", kb());
    const auto enhanced = enhance_plan(plan, kb());
    EXPECT_EQ(enhanced.semantic_query,
              "The video shows Twin square bell towers, dark gray stone, Gothic architecture, neo-Gothic facade in Hanoi");
    EXPECT_EQ(enhanced.asr_keywords, plan.asr_keywords);
    EXPECT_EQ(enhanced.ocr_keywords, plan.ocr_keywords);
    EXPECT_EQ(to_json(enhance_plan(enhanced, kb())), to_json(enhanced));
}

TEST(EnhancePlan, NoLandmarksMeansNoChange) {
    const auto plan = build_rule_plan("a red car on a street", kb());
    EXPECT_EQ(to_json(enhance_plan(plan, kb())), to_json(plan));
}

TEST(EnhancePlan, AccentedMentionIsReplaced) {
    const auto plan = build_rule_plan("Cảnh Nhà thờ Lớn Hà Nội", kb());
    ASSERT_EQ(plan.detected_landmarks, (std::vector<std::string>{"St. Joseph's Cathedral"}));
    EXPECT_EQ(enhance_plan(plan, kb()).semantic_query,
              "Cảnh Twin square bell towers, dark gray stone, Gothic architecture, neo-Gothic facade");
}

TEST(EnhancePlan, UnknownLandmarkIsLeftWithWarning) {
    auto plan = build_rule_plan("a quiet street", kb());
    plan.detected_landmarks.push_back("Atlantis");
    const auto out = enhance_plan(plan, kb());
    EXPECT_EQ(out.semantic_query, plan.semantic_query);
    EXPECT_FALSE(out.warnings.empty());
}

TEST(EnhancePlan, NeverTouchesKeywordsProperty) {
    std::mt19937_64 rng(13);
    std::vector<std::string> names;
    for (const auto& e : kb().entries()) names.push_back(e.name);
    std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
    for (int i = 0; i < 100; ++i) {
        const auto q = "scene with " + names[pick(rng)] + " and \"" + names[pick(rng)] + "\" at night";
        const auto plan = build_rule_plan(q, kb());
        const auto out = enhance_plan(plan, kb());
        EXPECT_EQ(out.asr_keywords, plan.asr_keywords);
        EXPECT_EQ(out.ocr_keywords, plan.ocr_keywords);
        EXPECT_EQ(to_json(enhance_plan(out, kb())), to_json(out));
    }
}

TEST(ImageQueries, LlmProposalsAreKeptWhenTheyNameTheLandmark) {
    CallbackLlm llm([](const std::string&) {
        return std::string(R"([{"landmark": "Imperial City of Hue", "queries": ["The Imperial City of Hue from above",
                              "aerial drone shot", "Hue Citadel gate at night"]}])");
    });
    const auto r = generate_image_queries("The Imperial City of Hue", kb(), llm, 2);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].landmark, "Imperial City of Hue");
    EXPECT_EQ(r[0].queries, (std::vector<std::string>{"The Imperial City of Hue from above", "Hue Citadel gate at night"}));
}

TEST(ImageQueries, MockPathUsesTemplatesAndTruncates) {
    const auto r = generate_image_queries("Turtle Tower, Ben Thanh Market and Dragon Bridge", kb(), MockLlm{}, 2);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].landmark, "Turtle Tower");
    EXPECT_EQ(r[1].landmark, "Ben Thanh Market");
    EXPECT_EQ(r[1].queries, (std::vector<std::string>{"Ben Thanh Market", "Ben Thanh Market Ho Chi Minh City"}));
    EXPECT_TRUE(generate_image_queries("a quiet beach", kb(), MockLlm{}, 2).empty());
}

TEST(ImageQueries, GarbageReplyFallsBackToTemplates) {
    CallbackLlm llm([](const std::string&) { return std::string("I cannot help with that."); });
    std::vector<std::string> warnings;
    const auto r = generate_image_queries("near Turtle Tower", kb(), llm, 2, &warnings);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].queries, template_image_queries(*kb().find("Turtle Tower")));
    EXPECT_FALSE(warnings.empty());
}

TEST(MergeMax, Examples) {
    auto merged = merge_max({{hit("g/v/1", 0.8)}, {hit("g/v/1", 0.9)}});
    ASSERT_EQ(merged.size(), 1u);
    EXPECT_EQ(merged[0].score, 0.9);
    merged = merge_max({{hit("g/v/2", 0.7)}, {hit("g/v/1", 0.6)}});
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].key.str(), "g/v/2");
    EXPECT_EQ(merged[1].key.str(), "g/v/1");
}

TEST(MergeMax, MatchesOracleOnRandomLists) {
    std::mt19937_64 rng(15);
    std::uniform_int_distribution<int> frame(0, 40), nl(1, 6), nh(0, 15);
    std::uniform_int_distribution<int> score(0, 20);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::vector<VectorHit>> lists(static_cast<std::size_t>(nl(rng)));
        for (auto& l : lists)
            for (int i = nh(rng); i--;) l.push_back({{"g", "v", frame(rng)}, score(rng) / 20.0});
        const auto got = merge_max(lists), want = merge_oracle(lists);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].key, want[i].key);
            EXPECT_EQ(got[i].score, want[i].score);
        }
    }
}

TEST(I2I, ParameterSweepHonoursCardinalityAndDedup) {
    const MockEmbedder embedder(16, "sweep");
    VectorIndex index(16);
    for (int i = 0; i < 300; ++i) index.add({"L0" + std::to_string(i % 3), "V00" + std::to_string(i % 7), i},
                                            embedder.embed_text("frame " + std::to_string(i)));
    index.freeze();
    std::map<std::string, std::vector<std::string>> table;
    for (const auto& e : kb().entries())
        for (const auto& q : template_image_queries(e))
            for (int r = 0; r < 5; ++r) table[q].push_back("ref://" + q + "/" + std::to_string(r));
    const FixtureImageSearch images(table);
    const MockLlm llm;
    const std::string query = "Turtle Tower, Ben Thanh Market, Dragon Bridge and Golden Bridge";
    for (std::size_t top_k : {1, 3, 10, 50})
        for (std::size_t max_l : {1, 2, 4})
            for (std::size_t per : {1, 2, 3, 7}) {
                const I2IParams params{top_k, max_l, per};
                const auto r = i2i_search(query, params, {llm, images, embedder}, kb(), index, 3);
                EXPECT_LE(r.hits.size(), max_l * per * top_k);
                EXPECT_LE(r.landmarks.size(), max_l);
                std::set<FrameKey> keys;
                for (const auto& h : r.hits) EXPECT_TRUE(keys.insert(h.key).second);
                std::vector<std::vector<VectorHit>> lists;
                for (const auto& ref : r.references)
                    lists.push_back(index.search(embedder.embed_image(ref.reference), top_k));
                const auto want = merge_oracle(lists);
                ASSERT_EQ(r.hits.size(), want.size());
                for (std::size_t i = 0; i < want.size(); ++i) {
                    EXPECT_EQ(r.hits[i].key, want[i].key);
                    EXPECT_EQ(r.hits[i].score, want[i].score);
                }
                std::map<std::string, std::size_t> per_landmark;
                for (const auto& ref : r.references) ++per_landmark[ref.landmark];
                for (const auto& [_, n] : per_landmark) EXPECT_LE(n, per);
            }
}

TEST(I2I, FailuresAndFallbackSignals) {
    const MockEmbedder embedder(8);
    VectorIndex index(8);
    index.add({"g", "v", 1}, embedder.embed_text("x"));
    index.freeze();
    const FixtureImageSearch empty({});
    try {
        i2i_search("a quiet beach", {}, {MockLlm{}, empty, embedder}, kb(), index);
        FAIL();
    } catch (const I2IError& e) {
        EXPECT_EQ(e.kind(), I2IError::Kind::NoLandmark);
    }
    try {
        i2i_search("Turtle Tower", {}, {MockLlm{}, empty, embedder}, kb(), index);
        FAIL();
    } catch (const I2IError& e) {
        EXPECT_EQ(e.kind(), I2IError::Kind::AllFetchesFailed);
        EXPECT_EQ(e.partial().landmarks.size(), 1u);
    }
    EXPECT_THROW(i2i_search("Turtle Tower", {0, 1, 1}, {MockLlm{}, empty, embedder}, kb(), index), InvalidArgument);
}

TEST(I2I, PartialFetchFailuresAreTolerated) {
    struct Flaky final : ImageSearchClient {
        std::vector<std::string> search_images(const std::string& q, std::size_t) const override {
            if (q == "Turtle Tower") throw TransportError("down", 3);
            return {"ref-ok"};
        }
    } flaky;
    const MockEmbedder embedder(8);
    VectorIndex index(8);
    index.add({"g", "v", 1}, embedder.embed_image("ref-ok"));
    index.freeze();
    const auto r = i2i_search("Turtle Tower", {5, 1, 3}, {MockLlm{}, flaky, embedder}, kb(), index);
    ASSERT_EQ(r.hits.size(), 1u);
    EXPECT_NEAR(r.hits[0].score, 1.0, 1e-6);
    EXPECT_FALSE(r.warnings.empty());
}
