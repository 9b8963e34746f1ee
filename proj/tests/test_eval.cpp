#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "vidsearch/eval_harness.hpp"

using namespace vidsearch;
using namespace vidsearch::eval;

namespace {

GroundTruthItem kis(std::int64_t lo = 40, std::int64_t hi = 60) { return {"q1", Task::KIS, "L01_V003", {{lo, hi}}, {}, 0}; }

Prediction pred(std::size_t rank, std::vector<std::int64_t> frames, std::string video = "L01_V003",
                std::optional<std::string> answer = {}) {
    return {rank, std::move(video), std::move(frames), std::move(answer)};
}

}  // namespace

TEST(RScore, Kis) {
    EXPECT_EQ(r_score(pred(1, {50}), kis()), 1.0);
    EXPECT_EQ(r_score(pred(1, {40}), kis()), 1.0);
    EXPECT_EQ(r_score(pred(1, {60}), kis()), 1.0);
    EXPECT_EQ(r_score(pred(1, {61}), kis()), 0.0);
    EXPECT_EQ(r_score(pred(1, {50}, "L01/V003"), kis()), 1.0);
    EXPECT_EQ(r_score(pred(1, {50}, "L01_V004"), kis()), 0.0);
}

TEST(RScore, QaComparesNormalizedAnswers) {
    const GroundTruthItem qa{"q2", Task::QA, "L02_V001", {{100, 200}}, "Hanoi", 0};
    EXPECT_EQ(r_score(pred(1, {150}, "L02_V001", "hanoi "), qa), 1.0);
    EXPECT_EQ(r_score(pred(1, {150}, "L02_V001", "Hà Nội"), qa), 0.0);
    EXPECT_EQ(r_score(pred(1, {99}, "L02_V001", "Hanoi"), qa), 0.0);
    EXPECT_EQ(r_score(pred(1, {150}, "L02_V001"), qa), 0.0);
    EXPECT_EQ(r_score(pred(1, {150}, "L02_V001", "hanoi"), qa, {true}), 0.0);
    EXPECT_EQ(r_score(pred(1, {150}, "L02_V001", "Hanoi"), qa, {true}), 1.0);
    EXPECT_EQ(normalize_answer("  Nhà Thờ  "), normalize_answer("nhà thờ"));
}

TEST(RScore, TrakeCountsMatchedSegments) {
    const GroundTruthItem trake{"q3", Task::TRAKE, "L01_V004", {{10, 20}, {100, 130}}, {}, 0};
    EXPECT_EQ(r_score(pred(1, {15, 200}, "L01_V004"), trake), 0.5);
    EXPECT_EQ(r_score(pred(1, {15, 120}, "L01_V004"), trake), 1.0);
    EXPECT_EQ(r_score(pred(1, {120, 15}, "L01_V004"), trake), 0.0);
    EXPECT_EQ(r_score(pred(1, {15}, "L01_V004"), trake), 0.5);
    auto tolerant = trake;
    tolerant.tolerance = 5;
    EXPECT_EQ(r_score(pred(1, {25, 95}, "L01_V004"), tolerant), 1.0);
}

TEST(RScore, AnswerForNonQaIsATaskMismatch) {
    EXPECT_THROW(r_score(pred(1, {50}, "L01_V003", "x"), kis()), InvalidArgument);
}

TEST(FinalScore, Examples) {
    std::vector<Prediction> all;
    for (std::size_t r = 1; r <= 100; ++r) all.push_back(pred(r, {50}));
    EXPECT_EQ(final_score(all, kis()), 1.0);
    std::vector<Prediction> sixth;
    for (std::size_t r = 1; r <= 10; ++r) sixth.push_back(pred(r, {r == 6 ? 50 : 500}));
    EXPECT_DOUBLE_EQ(final_score(sixth, kis()), 0.6);
    EXPECT_EQ(final_score({pred(1, {500})}, kis()), 0.0);
    EXPECT_EQ(final_score({}, kis()), 0.0);
    EXPECT_EQ(final_score({pred(1, {50}), pred(2, {500})}, kis(), KSet{{1}}), 1.0);
    EXPECT_THROW(final_score({pred(1, {50}), pred(1, {51})}, kis()), InvalidArgument);
}

TEST(FinalScore, MatchesPrefixMaxOracle) {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<std::int64_t> frame(0, 200);
    std::uniform_int_distribution<std::size_t> count(0, 120);
    const GroundTruthItem trake{"t", Task::TRAKE, "L01_V003", {{10, 40}, {60, 90}, {120, 150}}, {}, 3};
    for (int round = 0; round < 1000; ++round) {
        const auto& gt = round % 2 ? trake : kis();
        std::vector<Prediction> preds;
        std::map<std::size_t, double> r_by_rank;
        std::vector<std::size_t> ranks;
        for (std::size_t r = 1, n = count(rng); r <= n; ++r) ranks.push_back(r * (1 + rng() % 2));
        std::sort(ranks.begin(), ranks.end());
        ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
        std::shuffle(ranks.begin(), ranks.end(), rng);
        for (auto r : ranks) {
            std::vector<std::int64_t> frames{frame(rng), frame(rng), frame(rng)};
            const auto video = rng() % 4 ? "L01_V003" : "L09_V003";
            preds.push_back(pred(r, frames, video));
            // Independent r computation.
            double r_value = 0;
            if (std::string(video) == "L01_V003") {
                if (gt.task == Task::KIS) {
                    for (auto f : frames) r_value = std::max(r_value, f >= 40 && f <= 60 ? 1.0 : 0.0);
                } else {
                    int hits = 0;
                    for (std::size_t j = 0; j < 3; ++j)
                        hits += frames[j] >= gt.ranges[j].lo - 3 && frames[j] <= gt.ranges[j].hi + 3;
                    r_value = hits / 3.0;
                }
            }
            r_by_rank[r] = r_value;
        }
        const KSet ks = round % 3 ? KSet{} : KSet{{1, 3, 7, 10}};
        EXPECT_NEAR(final_score(preds, gt, ks), oracle::prefix_max_score(r_by_rank, ks.ks), 1e-12);
    }
}

TEST(FinalScore, MonotoneUnderImprovedPrediction) {
    std::mt19937_64 rng(62);
    for (int round = 0; round < 300; ++round) {
        std::vector<Prediction> preds;
        for (std::size_t r = 1; r <= 30; ++r) preds.push_back(pred(r, {static_cast<std::int64_t>(rng() % 200)}));
        const double before = final_score(preds, kis());
        preds[rng() % preds.size()].frames = {50};
        EXPECT_GE(final_score(preds, kis()), before);
    }
}

TEST(KSet, ParseAndValidate) {
    EXPECT_EQ(KSet::parse("1,5,20").ks, (std::vector<std::size_t>{1, 5, 20}));
    EXPECT_THROW(KSet::parse("5,1"), InvalidArgument);
    EXPECT_THROW(KSet::parse("0,1"), InvalidArgument);
    EXPECT_THROW(KSet::parse(""), Error);
    EXPECT_THROW(KSet{{}}.validate(), InvalidArgument);
}

TEST(Submission, ParsesExamples) {
    const auto s = parse_submission_text("q1, L01_V003, 152\nq2, L01_V003, 10;20;30\n\nq1, L01_V004, 7, ignored\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].query_id, "q1");
    ASSERT_EQ(s[0].predictions.size(), 2u);
    EXPECT_EQ(s[0].predictions[0].frames, (std::vector<std::int64_t>{152}));
    EXPECT_EQ(s[0].predictions[1].rank, 2u);
    EXPECT_EQ(s[0].predictions[1].answer, "ignored");
    EXPECT_EQ(s[1].predictions[0].frames, (std::vector<std::int64_t>{10, 20, 30}));
    const auto qa = parse_submission_text("q, L01_V003, 5, Chợ Bến Thành, phía nam\n");
    EXPECT_EQ(qa[0].predictions[0].answer, "Chợ Bến Thành, phía nam");
}

TEST(Submission, MalformedLinesReportLineNumbers) {
    for (const char* bad : {"q3, L01_V003", "q3, L01V003, 5", "q3, L01_V003, x", "q3, L01_V003, -1", ", L01_V003, 5",
                            "q3, L01_V003, 5;"}) {
        try {
            parse_submission_text(std::string("q1, L01_V003, 1\n") + bad, "sub.txt");
            FAIL() << bad;
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find("sub.txt:2"), std::string::npos) << e.what();
        }
    }
    EXPECT_THROW(parse_submission_text("q1, L01_V003, 1\nq1, L01/V003, 1\n"), ParseError);
}

TEST(GroundTruth, ParsingAndValidation) {
    const auto gt = load_ground_truth(testing_support::corpus_dir() / "ground_truth.jsonl");
    ASSERT_EQ(gt.size(), 3u);
    EXPECT_EQ(gt[1].answer, "Ben Thanh");
    EXPECT_EQ(gt[2].ranges.size(), 2u);
    for (const char* bad : {R"({"query_id": "x", "task": "KIS", "video_name": "L01_V001", "frame_range": [5, 1]})",
                            R"({"query_id": "x", "task": "QA", "video_name": "L01_V001", "frame_range": [1, 5]})",
                            R"({"query_id": "x", "task": "TRAKE", "video_name": "L01_V001", "frame_range": [[1, 5]]})",
                            R"({"query_id": "x", "task": "TRAKE", "video_name": "L01_V001", "frame_range": [[5, 9], [1, 3]], "tolerance": 0})",
                            R"({"query_id": "x", "task": "AVS", "video_name": "L01_V001", "frame_range": [1, 5]})",
                            R"({"query_id": "x", "task": "KIS", "frame_range": [1, 5]})"})
        EXPECT_THROW(parse_ground_truth_text(bad), ParseError) << bad;
}

TEST(Evaluate, FixtureSubmission) {
    const auto report = evaluate(parse_submission(testing_support::corpus_dir() / "submission.txt"),
                                 load_ground_truth(testing_support::corpus_dir() / "ground_truth.jsonl"));
    ASSERT_EQ(report.per_query.size(), 3u);
    EXPECT_DOUBLE_EQ(report.per_query[0].score, 0.8);
    EXPECT_EQ(report.per_query[1].score, 1.0);
    EXPECT_EQ(report.per_query[2].score, 0.5);
    EXPECT_DOUBLE_EQ(report.mean, (0.8 + 1.0 + 0.5) / 3);
    EXPECT_TRUE(report.warnings.empty());
}

TEST(Evaluate, MissingAndUnknownQueries) {
    const auto gt = parse_ground_truth_text(
        R"({"query_id": "a", "task": "KIS", "video_name": "L01_V001", "frame_range": [1, 5]})"
        "\n"
        R"({"query_id": "b", "task": "KIS", "video_name": "L01_V001", "frame_range": [1, 5]})");
    const auto report = evaluate(parse_submission_text("a, L01_V001, 3\nzzz, L01_V001, 3\n"), gt);
    EXPECT_EQ(report.mean, 0.5);
    EXPECT_EQ(report.warnings.size(), 2u);
    EXPECT_THROW(evaluate(parse_submission_text("a, L01_V001, 3, answer\n"), gt), InvalidArgument);
    EXPECT_EQ(to_json(report)["per_query"].size(), 2u);
}
