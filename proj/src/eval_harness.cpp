#include "vidsearch/eval_harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vidsearch/unicode.hpp"

namespace vidsearch::eval {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(line, line_no);
        pos = nl + 1;
    }
}

std::int64_t parse_frame_index(std::string_view s) {
    const auto t = unicode::trim(s);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || v < 0)
        throw ParseError("invalid frame index '" + t + "'");
    return v;
}

FrameRange range_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw ParseError("frame range must be [lo, hi]");
    return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

}  // namespace

std::string_view to_string(Task task) {
    switch (task) {
        case Task::KIS: return "KIS";
        case Task::QA: return "QA";
        case Task::TRAKE: return "TRAKE";
    }
    return "KIS";
}

Task task_from_string(std::string_view name) {
    const auto n = unicode::case_fold(unicode::trim(name));
    if (n == "kis") return Task::KIS;
    if (n == "qa") return Task::QA;
    if (n == "trake") return Task::TRAKE;
    throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

void GroundTruthItem::validate() const {
    if (ranges.empty()) throw InvalidArgument("ground truth " + query_id + " has no frame range");
    if (task != Task::TRAKE && ranges.size() != 1)
        throw InvalidArgument("ground truth " + query_id + " must have exactly one frame range");
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].lo > ranges[i].hi) throw InvalidArgument("ground truth " + query_id + " has a range with lo > hi");
        if (i > 0 && ranges[i].lo <= ranges[i - 1].hi)
            throw InvalidArgument("ground truth " + query_id + " segments must be ordered and non-overlapping");
    }
    if (task == Task::QA && !answer) throw InvalidArgument("QA ground truth " + query_id + " has no answer");
    if (tolerance < 0) throw InvalidArgument("ground truth " + query_id + " has a negative tolerance");
    parse_video_name(video_name);
}

void KSet::validate() const {
    if (ks.empty()) throw InvalidArgument("k set is empty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1) throw InvalidArgument("every k must be >= 1");
        if (i > 0 && ks[i] <= ks[i - 1]) throw InvalidArgument("k set must be strictly increasing");
    }
}

KSet KSet::parse(std::string_view csv) {
    KSet set{{}};
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        auto comma = csv.find(',', pos);
        if (comma == std::string_view::npos) comma = csv.size();
        const auto v = parse_frame_index(csv.substr(pos, comma - pos));
        set.ks.push_back(static_cast<std::size_t>(v));
        pos = comma + 1;
    }
    set.validate();
    return set;
}

VideoId parse_video_name(std::string_view name) {
    const auto t = unicode::trim(name);
    const auto sep = t.find_first_of("_/");
    if (sep == std::string::npos || sep == 0 || sep + 1 == t.size())
        throw InvalidArgument("video name '" + t + "' is not group_video");
    return {t.substr(0, sep), t.substr(sep + 1)};
}

std::string normalize_answer(std::string_view answer) {
    return unicode::case_fold(unicode::nfc(unicode::trim(answer)));
}

double r_score(const Prediction& prediction, const GroundTruthItem& gt, const ScoreOptions& options) {
    if (prediction.answer && gt.task != Task::QA)
        throw InvalidArgument("task mismatch: prediction carries an answer for " + std::string(to_string(gt.task)) +
                              " query " + gt.query_id);
    if (parse_video_name(prediction.video_name) != parse_video_name(gt.video_name)) return 0.0;

    if (gt.task == Task::TRAKE) {
        std::size_t hits = 0;
        const auto n = std::min(prediction.frames.size(), gt.ranges.size());
        for (std::size_t j = 0; j < n; ++j) {
            const auto f = prediction.frames[j];
            if (f >= gt.ranges[j].lo - gt.tolerance && f <= gt.ranges[j].hi + gt.tolerance) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(gt.ranges.size());
    }

    const auto& range = gt.ranges.front();
    const bool in_range = std::any_of(prediction.frames.begin(), prediction.frames.end(),
                                      [&](std::int64_t f) { return f >= range.lo && f <= range.hi; });
    if (!in_range) return 0.0;
    if (gt.task == Task::KIS) return 1.0;
    if (!prediction.answer || !gt.answer) return 0.0;
    const bool same = options.strict_answers ? *prediction.answer == *gt.answer
                                             : normalize_answer(*prediction.answer) == normalize_answer(*gt.answer);
    return same ? 1.0 : 0.0;
}

double final_score(const std::vector<Prediction>& predictions, const GroundTruthItem& gt, const KSet& ks,
                   const ScoreOptions& options) {
    ks.validate();
    std::vector<std::pair<std::size_t, double>> by_rank;
    by_rank.reserve(predictions.size());
    std::set<std::size_t> ranks;
    for (const auto& p : predictions) {
        if (p.rank < 1) throw InvalidArgument("prediction ranks start at 1");
        if (!ranks.insert(p.rank).second) throw InvalidArgument("duplicate prediction rank " + std::to_string(p.rank));
        by_rank.emplace_back(p.rank, r_score(p, gt, options));
    }
    std::sort(by_rank.begin(), by_rank.end());
    double total = 0;
    double best = 0;
    std::size_t next = 0;
    for (const auto k : ks.ks) {
        while (next < by_rank.size() && by_rank[next].first <= k) best = std::max(best, by_rank[next++].second);
        total += best;
    }
    return total / static_cast<double>(ks.ks.size());
}

std::vector<QuerySubmission> parse_submission_text(std::string_view text, std::string_view source) {
    std::vector<QuerySubmission> out;
    std::map<std::string, std::size_t> slot;
    std::set<std::tuple<std::string, VideoId, std::vector<std::int64_t>>> seen;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (unicode::trim(line).empty()) return;
        auto fail = [&](const std::string& msg) {
            throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
        };
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        const auto c3 = c2 == std::string_view::npos ? c2 : line.find(',', c2 + 1);
        std::vector<std::string_view> fields;
        if (c2 != std::string_view::npos)
            fields = {line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1, c3 - c2 - 1)};
        if (fields.size() < 3) fail("expected 'query_id, video_name, frames[, answer]'");
        Prediction p;
        const auto query_id = unicode::trim(fields[0]);
        if (query_id.empty()) fail("empty query id");
        p.video_name = unicode::trim(fields[1]);
        VideoId video;
        try {
            video = parse_video_name(p.video_name);
        } catch (const Error& e) {
            fail(e.what());
        }
        const auto frames = unicode::trim(fields[2]);
        if (frames.empty()) fail("no frame indices");
        try {
            std::size_t fpos = 0;
            while (fpos <= frames.size()) {
                auto semi = frames.find(';', fpos);
                if (semi == std::string::npos) semi = frames.size();
                p.frames.push_back(parse_frame_index(std::string_view(frames).substr(fpos, semi - fpos)));
                fpos = semi + 1;
            }
        } catch (const Error& e) {
            fail(e.what());
        }
        if (c3 != std::string_view::npos) p.answer = unicode::trim(line.substr(c3 + 1));
        if (!seen.emplace(query_id, video, p.frames).second) fail("duplicate prediction for query " + query_id);
        auto [it, inserted] = slot.try_emplace(query_id, out.size());
        if (inserted) out.push_back({query_id, {}});
        auto& preds = out[it->second].predictions;
        p.rank = preds.size() + 1;
        preds.push_back(std::move(p));
    });
    return out;
}

std::vector<QuerySubmission> parse_submission(const std::filesystem::path& path) {
    return parse_submission_text(read_file(path), path.string());
}

GroundTruthItem ground_truth_from_json(const Json& record) {
    if (!record.is_object()) throw ParseError("ground truth record must be an object");
    GroundTruthItem gt;
    try {
        gt.query_id = record.at("query_id").get<std::string>();
        gt.task = task_from_string(record.at("task").get<std::string>());
        gt.video_name = record.at("video_name").get<std::string>();
        const auto& fr = record.at("frame_range");
        if (gt.task == Task::TRAKE) {
            if (!fr.is_array()) throw ParseError("TRAKE frame_range must be a list of [lo, hi] segments");
            for (const auto& seg : fr) gt.ranges.push_back(range_from_json(seg));
            if (!record.contains("tolerance")) throw ParseError("TRAKE ground truth needs a tolerance");
        } else {
            gt.ranges.push_back(range_from_json(fr));
        }
        if (record.contains("tolerance")) gt.tolerance = record.at("tolerance").get<std::int64_t>();
        if (record.contains("answer") && !record.at("answer").is_null()) gt.answer = record.at("answer").get<std::string>();
    } catch (const Json::exception& e) {
        throw ParseError(e.what());
    }
    gt.validate();
    return gt;
}

std::vector<GroundTruthItem> parse_ground_truth_text(std::string_view text, std::string_view source) {
    std::vector<GroundTruthItem> out;
    std::set<std::string> ids;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (unicode::trim(line).empty()) return;
        const auto where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        try {
            out.push_back(ground_truth_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw ParseError(where + e.what());
        } catch (const Error& e) {
            throw ParseError(where + e.what());
        }
        if (!ids.insert(out.back().query_id).second) throw ParseError(where + "duplicate query id " + out.back().query_id);
    });
    return out;
}

std::vector<GroundTruthItem> load_ground_truth(const std::filesystem::path& path) {
    return parse_ground_truth_text(read_file(path), path.string());
}

EvalReport evaluate(const std::vector<QuerySubmission>& submission, const std::vector<GroundTruthItem>& ground_truth,
                    const KSet& ks, const ScoreOptions& options) {
    ks.validate();
    std::map<std::string, const QuerySubmission*> by_id;
    for (const auto& q : submission) by_id.emplace(q.query_id, &q);
    EvalReport report;
    std::set<std::string> known;
    double total = 0;
    for (const auto& gt : ground_truth) {
        known.insert(gt.query_id);
        QueryScore qs{gt.query_id, gt.task, 0, 0};
        if (const auto it = by_id.find(gt.query_id); it != by_id.end()) {
            qs.prediction_count = it->second->predictions.size();
            try {
                qs.score = final_score(it->second->predictions, gt, ks, options);
            } catch (const Error& e) {
                throw InvalidArgument("query " + gt.query_id + ": " + e.what());
            }
        } else {
            report.warnings.push_back("no predictions for query " + gt.query_id);
        }
        total += qs.score;
        report.per_query.push_back(qs);
    }
    for (const auto& q : submission)
        if (!known.contains(q.query_id)) report.warnings.push_back("predictions for unknown query " + q.query_id);
    report.mean = ground_truth.empty() ? 0.0 : total / static_cast<double>(ground_truth.size());
    return report;
}

Json to_json(const QueryScore& score) {
    return Json{{"query_id", score.query_id},
                {"task", to_string(score.task)},
                {"predictions", score.prediction_count},
                {"score", score.score}};
}

Json to_json(const EvalReport& report) {
    Json per = Json::array();
    for (const auto& q : report.per_query) per.push_back(to_json(q));
    return Json{{"per_query", per}, {"mean", report.mean}, {"queries", report.per_query.size()}, {"warnings", report.warnings}};
}

}  // namespace vidsearch::eval
