#include "vidsearch/object_index.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

Detection parse_detection(const Json& j, const std::string& where) {
    Detection d;
    d.label = j.at("label").get<std::string>();
    d.score = j.at("score").get<double>();
    const auto bbox = j.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 4) throw ParseError(where + ": bbox must have 4 components");
    d.x = bbox[0];
    d.y = bbox[1];
    d.w = bbox[2];
    d.h = bbox[3];
    if (d.label.empty()) throw ParseError(where + ": empty label");
    if (!in_unit(d.score)) throw ParseError(where + ": score outside [0, 1]");
    if (!in_unit(d.x) || !in_unit(d.y) || !in_unit(d.w) || !in_unit(d.h) || d.w <= 0 || d.h <= 0)
        throw ParseError(where + ": bbox outside the unit square");
    return d;
}

}  // namespace

void ObjectQuery::normalize() {
    std::vector<std::string> unique;
    std::set<std::string> seen;
    for (auto& label : labels) {
        auto l = unicode::to_lower(unicode::trim(label));
        if (!l.empty() && seen.insert(l).second) unique.push_back(std::move(l));
    }
    labels = std::move(unique);
    if (labels.empty()) throw InvalidArgument("object query needs at least one label");
    if (!in_unit(min_score)) throw InvalidArgument("object query min_score outside [0, 1]");
}

DetectionStore parse_detection_store(const std::string& content, const std::string& origin, const KeyFilter& keep) {
    Json doc;
    try {
        doc = Json::parse(content);
    } catch (const Json::parse_error& e) {
        throw ParseError(origin + ": parse error at byte offset " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError(origin + ": top level must be an object keyed by frame key");
    DetectionStore store;
    for (const auto& [text, list] : doc.items()) {
        const auto where = origin + " [" + text + "]";
        FrameKey key;
        try {
            key = parse_frame_key(text);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (keep && !keep(key)) continue;
        if (!list.is_array()) throw ParseError(where + ": detections must be an array");
        auto& out = store[key];
        try {
            for (const auto& d : list) out.push_back(parse_detection(d, where));
        } catch (const Json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        for (auto& d : out) d.label = unicode::to_lower(d.label);
    }
    return store;
}

ObjectIndex::ObjectIndex(std::filesystem::path path, KeyFilter keep) : path_(std::move(path)), keep_(std::move(keep)) {}

ObjectIndex::ObjectIndex(DetectionStore store) : store_(std::move(store)) {}

const DetectionStore& ObjectIndex::store() const {
    std::lock_guard lock(mutex_);
    if (!store_) {
        ++load_count_;
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw NotFound("cannot open detections file " + path_.string());
        std::ostringstream content;
        content << in.rdbuf();
        store_ = parse_detection_store(content.str(), path_.string(), keep_);
    }
    return *store_;
}

void ObjectIndex::ensure_loaded() const { store(); }

bool ObjectIndex::loaded() const {
    std::lock_guard lock(mutex_);
    return store_.has_value();
}

int ObjectIndex::load_count() const {
    std::lock_guard lock(mutex_);
    return load_count_;
}

std::size_t ObjectIndex::frame_count() const { return store().size(); }

std::size_t ObjectIndex::detection_count() const {
    std::size_t n = 0;
    for (const auto& [_, list] : store()) n += list.size();
    return n;
}

std::vector<Detection> ObjectIndex::detections(const FrameKey& key) const {
    const auto& s = store();
    const auto it = s.find(key);
    return it == s.end() ? std::vector<Detection>{} : it->second;
}

std::vector<ObjectMatch> ObjectIndex::filter_frames(ObjectQuery query, std::size_t k) const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    query.normalize();
    const std::set<std::string> wanted(query.labels.begin(), query.labels.end());
    std::vector<ObjectMatch> matches;
    for (const auto& [key, list] : store()) {
        std::set<std::string> present;
        int count = 0;
        for (const auto& d : list) {
            if (d.score < query.min_score || !wanted.contains(d.label)) continue;
            present.insert(d.label);
            ++count;
        }
        const bool ok = query.mode == MatchMode::And ? present.size() == wanted.size() : !present.empty();
        if (ok) matches.push_back({key, count});
    }
    std::sort(matches.begin(), matches.end(), [](const ObjectMatch& a, const ObjectMatch& b) {
        return a.matched_count > b.matched_count || (a.matched_count == b.matched_count && a.key < b.key);
    });
    if (matches.size() > k) matches.resize(k);
    return matches;
}

}  // namespace vidsearch
