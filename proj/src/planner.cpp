#include "vidsearch/planner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vidsearch/errors.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

// The 80 COCO detection classes.
constexpr std::array<std::string_view, 80> kCocoLabels{
    "person",        "bicycle",      "car",           "motorcycle",    "airplane",     "bus",
    "train",         "truck",        "boat",          "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench",        "bird",          "cat",           "dog",          "horse",
    "sheep",         "cow",          "elephant",      "bear",          "zebra",        "giraffe",
    "backpack",      "umbrella",     "handbag",       "tie",           "suitcase",     "frisbee",
    "skis",          "snowboard",    "sports ball",   "kite",          "baseball bat", "baseball glove",
    "skateboard",    "surfboard",    "tennis racket", "bottle",        "wine glass",   "cup",
    "fork",          "knife",        "spoon",         "bowl",          "banana",       "apple",
    "sandwich",      "orange",       "broccoli",      "carrot",        "hot dog",      "pizza",
    "donut",         "cake",         "chair",         "couch",         "potted plant", "bed",
    "dining table",  "toilet",       "tv",            "laptop",        "mouse",        "remote",
    "keyboard",      "cell phone",   "microwave",     "oven",          "toaster",      "sink",
    "refrigerator",  "book",         "clock",         "vase",          "scissors",     "teddy bear",
    "hair drier",    "toothbrush"};

const std::map<std::string, std::string> kSynonyms{
    {"people", "person"},       {"persons", "person"},     {"man", "person"},         {"men", "person"},
    {"woman", "person"},        {"women", "person"},       {"boy", "person"},         {"boys", "person"},
    {"girl", "person"},         {"girls", "person"},       {"child", "person"},       {"children", "person"},
    {"pedestrian", "person"},   {"pedestrians", "person"}, {"motorbike", "motorcycle"}, {"motorbikes", "motorcycle"},
    {"bike", "bicycle"},        {"bikes", "bicycle"},      {"phone", "cell phone"},   {"phones", "cell phone"},
    {"smartphone", "cell phone"}, {"cellphone", "cell phone"}, {"plane", "airplane"}, {"planes", "airplane"},
    {"sofa", "couch"},          {"television", "tv"},      {"automobile", "car"},     {"automobiles", "car"},
    {"knives", "knife"},        {"mice", "mouse"},         {"ship", "boat"},
    {"ships", "boat"},
};

/// Token sequence (space-joined) -> label.
const std::map<std::string, std::string>& object_lexicon() {
    static const auto lexicon = [] {
        std::map<std::string, std::string> m(kSynonyms.begin(), kSynonyms.end());
        for (auto label : kCocoLabels) {
            const std::string l(label);
            m.try_emplace(l, l);
            m.try_emplace(l + "s", l);
            m.try_emplace(l + "es", l);
        }
        return m;
    }();
    return lexicon;
}

std::vector<std::string> quoted_phrases(const std::string& text) {
    std::vector<std::string> out;
    const std::array<std::pair<std::string_view, std::string_view>, 2> quotes{
        {{"\"", "\""}, {"“", "”"}}};
    for (const auto& [open, close] : quotes) {
        std::size_t pos = 0;
        while ((pos = text.find(open, pos)) != std::string::npos) {
            const auto start = pos + open.size();
            const auto end = text.find(close, start);
            if (end == std::string::npos) break;
            auto phrase = unicode::trim(std::string_view(text).substr(start, end - start));
            if (!phrase.empty()) out.push_back(std::move(phrase));
            pos = end + close.size();
        }
    }
    return out;
}

void push_unique(std::vector<std::string>& v, std::string s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(std::move(s));
}

std::string extract_json_object(std::string_view reply) {
    const auto first = reply.find('{');
    const auto last = reply.rfind('}');
    if (first == std::string_view::npos || last == std::string_view::npos || last < first) return {};
    return std::string(reply.substr(first, last - first + 1));
}

}  // namespace

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::Semantic: return "semantic";
        case Modality::Asr: return "asr";
        case Modality::Ocr: return "ocr";
        case Modality::Object: return "object";
    }
    return "semantic";
}

Modality modality_from_string(std::string_view s) {
    for (auto m : kModalities)
        if (to_string(m) == s) return m;
    throw InvalidArgument("unknown modality '" + std::string(s) + "'");
}

double ModalityWeights::get(Modality m) const {
    switch (m) {
        case Modality::Semantic: return semantic;
        case Modality::Asr: return asr;
        case Modality::Ocr: return ocr;
        case Modality::Object: return object;
    }
    return 0;
}

void ModalityWeights::set(Modality m, double w) {
    switch (m) {
        case Modality::Semantic: semantic = w; break;
        case Modality::Asr: asr = w; break;
        case Modality::Ocr: ocr = w; break;
        case Modality::Object: object = w; break;
    }
}

void ModalityWeights::validate() const {
    bool any = false;
    for (auto m : kModalities) {
        const double w = get(m);
        if (!std::isfinite(w) || w < 0)
            throw InvalidArgument("weight for " + std::string(to_string(m)) + " must be a finite value >= 0");
        any = any || w > 0;
    }
    if (!any) throw InvalidArgument("at least one modality weight must be > 0");
}

void SearchPlan::validate(const LandmarkKB& kb) const {
    weights.validate();
    if (unicode::trim(semantic_query).empty() && weights.semantic > 0)
        throw InvalidArgument("semantic query is empty");
    if (top_k_per_modality < 1) throw InvalidArgument("top_k_per_modality must be >= 1");
    const auto normalized = unicode::normalize_space(unicode::nfc(original_query));
    for (const auto* list : {&asr_keywords, &ocr_keywords}) {
        for (const auto& k : *list) {
            const auto kw = unicode::normalize_space(unicode::nfc(k));
            if (kw.empty() || normalized.find(kw) == std::string::npos)
                throw InvalidArgument("keyword '" + k + "' is not a verbatim part of the query");
        }
    }
    for (const auto& name : detected_landmarks)
        if (!kb.find(name)) throw InvalidArgument("detected landmark '" + name + "' is not in the knowledge base");
    if (object_query) {
        auto q = *object_query;
        q.normalize();
    }
}

std::vector<std::string> detect_landmarks(std::string_view query, const LandmarkKB& kb) {
    std::vector<std::string> names;
    for (const auto& m : kb.scan(query).mentions) push_unique(names, kb.entries()[m.entry].name);
    return names;
}

std::vector<std::string> detect_object_labels(std::string_view query) {
    const auto tokens = unicode::tokenize(unicode::fold_key(query));
    const auto& lexicon = object_lexicon();
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < tokens.size();) {
        std::size_t consumed = 0;
        for (std::size_t len = std::min<std::size_t>(3, tokens.size() - i); len >= 1 && consumed == 0; --len) {
            std::string phrase = tokens[i].text;
            for (std::size_t j = 1; j < len; ++j) phrase += " " + tokens[i + j].text;
            if (auto it = lexicon.find(phrase); it != lexicon.end()) {
                push_unique(labels, it->second);
                consumed = len;
            }
        }
        i += consumed ? consumed : 1;
    }
    return labels;
}

SearchPlan build_rule_plan(std::string_view query, const LandmarkKB& kb, const PlannerOptions& options) {
    const auto normalized = unicode::normalize_space(unicode::nfc(query));
    if (normalized.empty()) throw InvalidArgument("query is empty");
    SearchPlan plan;
    plan.original_query = std::string(query);
    plan.semantic_query = normalized;
    plan.weights = options.default_weights;
    plan.top_k_per_modality = options.top_k_per_modality;

    const auto scan = kb.scan(normalized);
    std::vector<std::string> keywords;
    for (const auto& m : scan.mentions) {
        push_unique(plan.detected_landmarks, kb.entries()[m.entry].name);
        push_unique(keywords, scan.text.substr(m.begin, m.end - m.begin));
    }
    for (auto& phrase : quoted_phrases(normalized)) push_unique(keywords, std::move(phrase));
    plan.asr_keywords = keywords;
    plan.ocr_keywords = keywords;

    if (auto labels = detect_object_labels(normalized); !labels.empty()) {
        ObjectQuery q;
        q.labels = std::move(labels);
        q.mode = MatchMode::Or;
        plan.object_query = std::move(q);
    }
    if (keywords.empty()) {
        plan.weights.asr = 0;
        plan.weights.ocr = 0;
    }
    if (!plan.object_query) plan.weights.object = 0;
    plan.validate(kb);
    return plan;
}

std::string build_plan_prompt(std::string_view query, const LandmarkKB& kb, const PlannerOptions& options) {
    std::string prompt;
    prompt += kTaskPrefix;
    prompt += task::kPlan;
    prompt += R"(
You plan searches over a Vietnamese video archive with four modalities: semantic (CLIP image-text
similarity), asr (speech transcripts), ocr (on-screen text) and object (COCO detections).
Reply with one JSON object and nothing else, with exactly these fields:
  "semantic_query": descriptive sentence of what the frame looks like,
  "asr_keywords": list of phrases copied verbatim from the query (Vietnamese terms and landmark names unchanged),
  "ocr_keywords": list of phrases copied verbatim from the query,
  "object_query": null or {"labels": [COCO labels], "mode": "AND" or "OR"},
  "weights": {"semantic": w, "asr": w, "ocr": w, "object": w} with non-negative numbers,
  "detected_landmarks": list of landmark names taken from the known landmarks below.
)";
    prompt += options.translate ? "Write semantic_query in English.\n" : "Write semantic_query in the language of the query.\n";
    prompt += "Default weights: " + to_json(options.default_weights).dump() + "\n";
    prompt += "### known landmarks\n";
    for (const auto& e : kb.entries()) prompt += "- " + e.name + "\n";
    prompt += "### query\n";
    prompt += std::string(query) + "\n";
    return prompt;
}

std::optional<SearchPlan> parse_plan_reply(std::string_view reply, std::string_view query, const LandmarkKB& kb,
                                           const PlannerOptions& options, std::string& reason) {
    const auto body = extract_json_object(reply);
    if (body.empty()) {
        reason = "reply has no JSON object";
        return std::nullopt;
    }
    try {
        const Json j = Json::parse(body);
        static const std::set<std::string> fields{"semantic_query", "asr_keywords", "ocr_keywords",
                                                  "object_query",   "weights",      "detected_landmarks"};
        for (const auto& f : fields)
            if (!j.contains(f)) throw InvalidArgument("missing field '" + f + "'");
        for (const auto& [k, _] : j.items())
            if (!fields.contains(k)) throw InvalidArgument("unexpected field '" + k + "'");
        SearchPlan plan;
        plan.source = "llm";
        plan.original_query = std::string(query);
        plan.semantic_query = unicode::normalize_space(j.at("semantic_query").get<std::string>());
        plan.asr_keywords = j.at("asr_keywords").get<std::vector<std::string>>();
        plan.ocr_keywords = j.at("ocr_keywords").get<std::vector<std::string>>();
        if (!j.at("object_query").is_null()) {
            plan.object_query = object_query_from_json(j["object_query"]);
            plan.object_query->normalize();
        }
        const auto& w = j.at("weights");
        for (auto m : kModalities) plan.weights.set(m, w.at(std::string(to_string(m))).get<double>());
        for (const auto& name : j.at("detected_landmarks").get<std::vector<std::string>>()) {
            const auto* entry = kb.find(name);
            if (!entry) throw InvalidArgument("unknown landmark '" + name + "'");
            push_unique(plan.detected_landmarks, entry->name);
        }
        plan.top_k_per_modality = options.top_k_per_modality;
        if (plan.asr_keywords.empty()) plan.weights.asr = 0;
        if (plan.ocr_keywords.empty()) plan.weights.ocr = 0;
        if (!plan.object_query) plan.weights.object = 0;
        plan.validate(kb);
        return plan;
    } catch (const Json::exception& e) {
        reason = e.what();
    } catch (const Error& e) {
        reason = e.what();
    }
    return std::nullopt;
}

SearchPlan build_plan(std::string_view query, const LandmarkKB& kb, const LlmClient* llm, const PlannerOptions& options) {
    if (unicode::trim(query).empty()) throw InvalidArgument("query is empty");
    if (!llm) return build_rule_plan(query, kb, options);
    std::string warning;
    try {
        std::string reason;
        if (auto plan = parse_plan_reply(llm->complete(build_plan_prompt(query, kb, options)), query, kb, options,
                                         reason))
            return *plan;
        warning = "llm plan rejected, using rule planner: " + reason;
    } catch (const std::exception& e) {
        warning = std::string("llm planner unavailable, using rule planner: ") + e.what();
    }
    auto plan = build_rule_plan(query, kb, options);
    plan.warnings.push_back(std::move(warning));
    return plan;
}

Json to_json(const ModalityWeights& w) {
    return {{"semantic", w.semantic}, {"asr", w.asr}, {"ocr", w.ocr}, {"object", w.object}};
}

ModalityWeights weights_from_json(const Json& j, ModalityWeights base) {
    if (!j.is_object()) throw InvalidArgument("weights must be an object");
    for (const auto& [k, v] : j.items()) base.set(modality_from_string(k), v.get<double>());
    base.validate();
    return base;
}

Json to_json(const ObjectQuery& q) {
    return {{"labels", q.labels}, {"mode", q.mode == MatchMode::And ? "AND" : "OR"}, {"min_score", q.min_score}};
}

ObjectQuery object_query_from_json(const Json& j) {
    ObjectQuery q;
    q.labels = j.at("labels").get<std::vector<std::string>>();
    const auto mode = unicode::to_lower(j.value("mode", std::string("OR")));
    if (mode == "and") {
        q.mode = MatchMode::And;
    } else if (mode == "or") {
        q.mode = MatchMode::Or;
    } else {
        throw InvalidArgument("object query mode must be AND or OR");
    }
    q.min_score = j.value("min_score", 0.0);
    q.normalize();
    return q;
}

Json to_json(const SearchPlan& plan) {
    return {{"original_query", plan.original_query},
            {"semantic_query", plan.semantic_query},
            {"asr_keywords", plan.asr_keywords},
            {"ocr_keywords", plan.ocr_keywords},
            {"object_query", plan.object_query ? to_json(*plan.object_query) : Json(nullptr)},
            {"weights", to_json(plan.weights)},
            {"detected_landmarks", plan.detected_landmarks},
            {"top_k_per_modality", plan.top_k_per_modality},
            {"source", plan.source},
            {"warnings", plan.warnings}};
}

}  // namespace vidsearch
