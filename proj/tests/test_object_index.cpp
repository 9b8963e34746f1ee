#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_support.hpp"
#include "vidsearch/object_index.hpp"

using namespace vidsearch;

namespace {

Detection det(std::string label, double score = 0.9) { return {std::move(label), score, 0.1, 0.1, 0.2, 0.2}; }

const FrameKey F1{"L01", "V001", 10};
const FrameKey F2{"L01", "V001", 20};

ObjectQuery query(std::vector<std::string> labels, MatchMode mode, double min_score = 0) {
    ObjectQuery q;
    q.labels = std::move(labels);
    q.mode = mode;
    q.min_score = min_score;
    return q;
}

// Full scan over the store.
std::vector<ObjectMatch> scan(const DetectionStore& store, const ObjectQuery& q, std::size_t k) {
    std::vector<ObjectMatch> out;
    for (const auto& [key, dets] : store) {
        int count = 0;
        std::set<std::string> present;
        for (const auto& d : dets) {
            if (d.score < q.min_score) continue;
            if (std::find(q.labels.begin(), q.labels.end(), d.label) == q.labels.end()) continue;
            ++count;
            present.insert(d.label);
        }
        const std::set<std::string> wanted(q.labels.begin(), q.labels.end());
        const bool ok = q.mode == MatchMode::And ? present == wanted : !present.empty();
        if (ok) out.push_back({key, count});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ObjectMatch& a, const ObjectMatch& b) { return a.matched_count > b.matched_count; });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace

TEST(ObjectIndex, Examples) {
    ObjectIndex idx(DetectionStore{{F1, {det("person"), det("person"), det("car")}}, {F2, {det("person")}}});
    auto r = idx.filter_frames(query({"person", "car"}, MatchMode::And), 10);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].key, F1);
    EXPECT_EQ(r[0].matched_count, 3);

    EXPECT_TRUE(idx.filter_frames(query({"bicycle"}, MatchMode::Or), 10).empty());

    r = idx.filter_frames(query({"person"}, MatchMode::Or), 10);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].key, F1);
    EXPECT_EQ(r[0].matched_count, 2);
    EXPECT_EQ(r[1].key, F2);
    EXPECT_EQ(r[1].matched_count, 1);
}

TEST(ObjectIndex, QueryNormalization) {
    auto q = query({"car", "person", "car"}, MatchMode::Or);
    q.normalize();
    EXPECT_EQ(q.labels, (std::vector<std::string>{"car", "person"}));
    auto empty = query({}, MatchMode::Or);
    EXPECT_THROW(empty.normalize(), InvalidArgument);
    auto bad = query({"car"}, MatchMode::Or, 1.5);
    EXPECT_THROW(bad.normalize(), InvalidArgument);
}

TEST(ObjectIndex, LazyLoadAndMemoization) {
    testing_support::TempDir dir;
    const auto path = dir.write("o.json", R"({"g/v/1": [{"label": "dog", "score": 0.8, "bbox": [0.1, 0.1, 0.2, 0.2]}]})");
    ObjectIndex idx(path);
    EXPECT_FALSE(idx.loaded());
    EXPECT_EQ(idx.load_count(), 0);
    std::filesystem::remove(path);
    ObjectIndex never_queried(dir.path() / "missing.json");
    EXPECT_EQ(never_queried.load_count(), 0);
    dir.write("o.json", R"({"g/v/1": [{"label": "dog", "score": 0.8, "bbox": [0.1, 0.1, 0.2, 0.2]}]})");
    EXPECT_EQ(idx.filter_frames(query({"dog"}, MatchMode::Or), 5).size(), 1u);
    EXPECT_EQ(idx.filter_frames(query({"dog"}, MatchMode::And), 5).size(), 1u);
    EXPECT_EQ(idx.load_count(), 1);
}

TEST(ObjectIndex, CorruptFileFailsOnFirstQueryWithOffset) {
    testing_support::TempDir dir;
    const auto path = dir.write("o.json", R"({"g/v/1": [{"label": "dog", "score": 0.8, )");
    ObjectIndex idx(path);
    try {
        idx.filter_frames(query({"dog"}, MatchMode::Or), 5);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
}

TEST(ObjectIndex, SchemaViolationsAreParseErrors) {
    EXPECT_THROW(parse_detection_store(R"({"g/v/1": [{"label": "", "score": 0.5, "bbox": [0,0,0.1,0.1]}]})", "t"),
                 ParseError);
    EXPECT_THROW(parse_detection_store(R"({"g/v/1": [{"label": "a", "score": 1.5, "bbox": [0,0,0.1,0.1]}]})", "t"),
                 ParseError);
    EXPECT_THROW(parse_detection_store(R"({"g/v/1": [{"label": "a", "score": 0.5, "bbox": [0,0,0,0.1]}]})", "t"),
                 ParseError);
    EXPECT_THROW(parse_detection_store(R"({"g/v": []})", "t"), ParseError);
}

TEST(ObjectIndex, MatchesScanOracleAndSetProperties) {
    std::mt19937_64 rng(31);
    const std::vector<std::string> labels{"person", "car", "dog", "boat", "bus", "cat"};
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1), ndet(0, 6), nlab(1, 3);
    std::uniform_real_distribution<double> score(0, 1);
    DetectionStore store;
    for (int i = 0; i < 500; ++i) {
        std::vector<Detection> dets;
        for (auto n = ndet(rng); n--;) dets.push_back(det(labels[pick(rng)], score(rng)));
        store[{"G" + std::to_string(i % 4), "V" + std::to_string(i % 9), i}] = dets;
    }
    ObjectIndex idx{DetectionStore(store)};
    for (int t = 0; t < 50; ++t) {
        std::vector<std::string> ql;
        for (auto n = nlab(rng); n--;) {
            const auto& l = labels[pick(rng)];
            if (std::find(ql.begin(), ql.end(), l) == ql.end()) ql.push_back(l);
        }
        const double min_score = t % 3 == 0 ? 0.0 : score(rng) * 0.6;
        const auto k = 1 + static_cast<std::size_t>(t * 10);
        for (auto mode : {MatchMode::And, MatchMode::Or}) {
            const auto got = idx.filter_frames(query(ql, mode, min_score), k);
            const auto want = scan(store, query(ql, mode, min_score), k);
            ASSERT_EQ(got.size(), want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                EXPECT_EQ(got[i].key, want[i].key);
                EXPECT_EQ(got[i].matched_count, want[i].matched_count);
            }
        }
        std::set<FrameKey> and_keys, or_keys, stricter;
        for (const auto& m : idx.filter_frames(query(ql, MatchMode::And, min_score), 1000)) and_keys.insert(m.key);
        for (const auto& m : idx.filter_frames(query(ql, MatchMode::Or, min_score), 1000)) or_keys.insert(m.key);
        for (const auto& m : idx.filter_frames(query(ql, MatchMode::Or, std::min(1.0, min_score + 0.3)), 1000))
            stricter.insert(m.key);
        EXPECT_TRUE(std::includes(or_keys.begin(), or_keys.end(), and_keys.begin(), and_keys.end()));
        EXPECT_TRUE(std::includes(or_keys.begin(), or_keys.end(), stricter.begin(), stricter.end()));
    }
}

TEST(ObjectIndex, FixtureCounts) {
    ObjectIndex idx(testing_support::corpus_dir() / "objects.json");
    idx.ensure_loaded();
    const auto doc = Json::parse(testing_support::read_text(testing_support::corpus_dir() / "objects.json"));
    std::size_t detections = 0;
    for (const auto& [_, list] : doc.items()) detections += list.size();
    EXPECT_EQ(idx.frame_count(), doc.size());
    EXPECT_EQ(idx.detection_count(), detections);
    const auto r = idx.filter_frames(query({"motorcycle"}, MatchMode::Or), 10);
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].key.str(), "L01/V004/15");
    EXPECT_EQ(r[0].matched_count, 3);
}
