#include "vidsearch/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <set>

#include "vidsearch/eval_harness.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

ApiError bad_request(const std::string& what) { return ApiError(400, what); }

// ---------------------------------------------------------------------------
// Config parsing

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw InvalidArgument(std::string("config field '") + key + "': " + e.what());
    }
}

void require_known_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + " must be an object");
    for (const auto& [k, _] : j.items())
        if (!known.contains(k)) throw InvalidArgument("unknown " + where + " field '" + k + "'");
}

void read_endpoint(const Json& j, Endpoint& e) {
    require_known_keys(j, {"endpoint", "api_key", "timeout_s"}, "endpoint");
    read_opt(j, "endpoint", e.url);
    read_opt(j, "api_key", e.api_key);
    if (j.contains("timeout_s")) e.timeout = std::chrono::seconds(j.at("timeout_s").get<long long>());
}

DataPaths read_paths(const Json& j, const std::filesystem::path& base_dir) {
    require_known_keys(j, {"shots", "meta", "embeddings", "asr", "ocr", "objects", "landmarks", "image_fixtures"},
                       "data");
    DataPaths p;
    auto one = [&](const char* key, std::optional<std::filesystem::path>& out) {
        if (!j.contains(key) || j.at(key).is_null()) return;
        if (!j.at(key).is_string()) throw InvalidArgument(std::string("data path '") + key + "' must be a string");
        std::filesystem::path path = j.at(key).get<std::string>();
        out = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    one("shots", p.shots);
    one("meta", p.meta);
    one("embeddings", p.embeddings);
    one("asr", p.asr);
    one("ocr", p.ocr);
    one("objects", p.objects);
    one("landmarks", p.landmarks);
    one("image_fixtures", p.image_fixtures);
    return p;
}

void merge_paths(DataPaths& into, const DataPaths& from) {
    auto one = [](auto& a, const auto& b) {
        if (b) a = b;
    };
    one(into.shots, from.shots);
    one(into.meta, from.meta);
    one(into.embeddings, from.embeddings);
    one(into.asr, from.asr);
    one(into.ocr, from.ocr);
    one(into.objects, from.objects);
    one(into.landmarks, from.landmarks);
    one(into.image_fixtures, from.image_fixtures);
}

Json path_json(const std::optional<std::filesystem::path>& p) { return p ? Json(p->string()) : Json(nullptr); }

bool parse_flag(std::string_view name, std::string_view value) {
    const auto v = unicode::case_fold(unicode::trim(value));
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
    throw InvalidArgument(std::string(name) + " must be a boolean, got '" + std::string(value) + "'");
}

std::vector<std::string> string_list(const Json& j, const std::string& what) {
    if (!j.is_array()) throw bad_request(what + " must be a list of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw bad_request(what + " must be a list of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus building

bool usable(const std::optional<std::filesystem::path>& p) { return p && std::filesystem::is_regular_file(*p); }

bool is_jsonl(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    return ext == ".jsonl" || ext == ".json" || ext == ".ndjson";
}

Eigen::Index jsonl_dimension(const std::filesystem::path& path) {
    Eigen::Index dim = 0;
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open " + path.string());
    std::string line;
    while (dim == 0 && std::getline(in, line)) {
        if (unicode::trim(line).empty()) continue;
        try {
            dim = static_cast<Eigen::Index>(Json::parse(line).at("vector").size());
        } catch (const Json::exception& e) {
            throw ParseError(path.string() + ":1: " + e.what());
        }
    }
    return dim;
}

// ---------------------------------------------------------------------------
// Response building

Json frame_json(const Corpus& corpus, const FrameKey& key, double fallback_fps) {
    Json j{{"key", key.str()}, {"group_id", key.group_id}, {"video_id", key.video_id}, {"frame_id", key.frame_id}};
    try {
        j["time_s"] = corpus.catalog.frame_time(key, fallback_fps);
    } catch (const Error&) {
        j["time_s"] = nullptr;
    }
    return j;
}

Json text_hit_json(const TextHit& h) {
    Json highlights = Json::array();
    for (const auto& hl : h.highlights) highlights.push_back({hl.begin, hl.end});
    Json j{{"doc_id", h.doc.doc_id},
           {"channel", to_string(h.doc.channel)},
           {"key", FrameKey(h.doc.video, h.doc.start_frame).str()},
           {"group_id", h.doc.video.group_id},
           {"video_id", h.doc.video.video_id},
           {"start_frame", h.doc.start_frame},
           {"end_frame", h.doc.end_frame},
           {"score", h.score},
           {"text", h.doc.text},
           {"highlights", highlights}};
    if (h.doc.confidence) j["confidence"] = *h.doc.confidence;
    return j;
}

Json scored_frame_json(const Corpus& corpus, const ScoredFrame& f, double fallback_fps) {
    auto j = frame_json(corpus, f.key, fallback_fps);
    j["fused"] = f.fused;
    Json per = Json::object();
    for (const auto& [m, s] : f.per_modality) per[std::string(to_string(m))] = s;
    j["per_modality"] = per;
    return j;
}

Json packages_json(const Corpus& corpus, const std::vector<EvidencePackage>& packages, double fallback_fps) {
    Json out = Json::array();
    for (const auto& p : packages) {
        double best = -std::numeric_limits<double>::infinity();
        Json frames = Json::array();
        for (const auto& f : p.frames) {
            best = std::max(best, f.fused);
            frames.push_back(scored_frame_json(corpus, f, fallback_fps));
        }
        Json asr = Json::array(), ocr = Json::array(), objects = Json::array();
        for (const auto& h : p.asr_snippets) asr.push_back(text_hit_json(h));
        for (const auto& h : p.ocr_texts) ocr.push_back(text_hit_json(h));
        for (const auto& [key, labels] : p.objects) objects.push_back({{"key", key.str()}, {"labels", labels}});
        out.push_back({{"video", p.video.str()},
                       {"group_id", p.video.group_id},
                       {"video_id", p.video.video_id},
                       {"best", best},
                       {"frames", frames},
                       {"asr", asr},
                       {"ocr", ocr},
                       {"objects", objects}});
    }
    return out;
}

Json modality_result_json(const Corpus& corpus, const ModalityResult& result, double fallback_fps) {
    Json out = Json::array();
    std::visit(
        [&](const auto& hits) {
            using Hit = typename std::decay_t<decltype(hits)>::value_type;
            for (const auto& h : hits) {
                if constexpr (std::is_same_v<Hit, TextHit>) {
                    out.push_back(text_hit_json(h));
                } else if constexpr (std::is_same_v<Hit, VectorHit>) {
                    auto j = frame_json(corpus, h.key, fallback_fps);
                    j["score"] = h.score;
                    out.push_back(std::move(j));
                } else {
                    auto j = frame_json(corpus, h.key, fallback_fps);
                    j["score"] = static_cast<double>(h.matched_count);
                    j["matched_count"] = h.matched_count;
                    out.push_back(std::move(j));
                }
            }
        },
        result);
    return out;
}

/// One ScoredFrame per distinct frame carrying the best raw score of `modality`.
std::vector<ScoredFrame> frames_from(const ModalityResult& result, Modality modality) {
    std::map<FrameKey, double> best;
    std::visit(
        [&](const auto& hits) {
            using Hit = typename std::decay_t<decltype(hits)>::value_type;
            for (const auto& h : hits) {
                FrameKey key;
                double s = 0;
                if constexpr (std::is_same_v<Hit, TextHit>) {
                    key = FrameKey(h.doc.video, h.doc.start_frame);
                    s = h.score;
                } else if constexpr (std::is_same_v<Hit, VectorHit>) {
                    key = h.key;
                    s = h.score;
                } else {
                    key = h.key;
                    s = static_cast<double>(h.matched_count);
                }
                auto [it, inserted] = best.try_emplace(key, s);
                if (!inserted) it->second = std::max(it->second, s);
            }
        },
        result);
    std::vector<ScoredFrame> frames;
    for (const auto& [key, s] : best) frames.push_back({key, {{modality, s}}, s});
    std::stable_sort(frames.begin(), frames.end(), [](const ScoredFrame& a, const ScoredFrame& b) { return a.fused > b.fused; });
    return frames;
}

class UnavailableLlm final : public LlmClient {
public:
    std::string complete(const std::string&) const override { throw TransportError("no LLM endpoint configured", 0); }
};

}  // namespace

// ---------------------------------------------------------------------------
// EngineConfig

EngineConfig EngineConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
    require_known_keys(j,
                       {"data", "weights", "top_k_per_modality", "default_k", "i2i", "temporal_k_per_step",
                        "keyframe_percentiles", "mock_mode", "embedding", "llm", "image_search", "retries",
                        "retry_base_delay_ms", "fallback_fps", "include", "exclude", "parallelism", "allow_reingest",
                        "thumbnail_base_url"},
                       "config");
    EngineConfig c;
    try {
        if (j.contains("data")) c.data = read_paths(j.at("data"), base_dir);
        if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"), c.weights);
        read_opt(j, "top_k_per_modality", c.top_k_per_modality);
        read_opt(j, "default_k", c.default_k);
        if (j.contains("i2i")) {
            const auto& i = j.at("i2i");
            require_known_keys(i, {"per_reference_top_k", "max_landmarks", "images_per_landmark"}, "i2i");
            read_opt(i, "per_reference_top_k", c.i2i.per_reference_top_k);
            read_opt(i, "max_landmarks", c.i2i.max_landmarks);
            read_opt(i, "images_per_landmark", c.i2i.images_per_landmark);
        }
        read_opt(j, "temporal_k_per_step", c.temporal_k_per_step);
        read_opt(j, "keyframe_percentiles", c.keyframes.percentiles);
        read_opt(j, "mock_mode", c.mock_mode);
        if (j.contains("embedding")) {
            const auto& e = j.at("embedding");
            require_known_keys(e, {"dimension", "seed", "endpoint", "api_key", "timeout_s"}, "embedding");
            read_opt(e, "dimension", c.embedding_dimension);
            read_opt(e, "seed", c.embedding_seed);
            Json ep = Json::object();
            for (const char* k : {"endpoint", "api_key", "timeout_s"})
                if (e.contains(k)) ep[k] = e.at(k);
            read_endpoint(ep, c.embedding_endpoint);
        }
        if (j.contains("llm")) read_endpoint(j.at("llm"), c.llm_endpoint);
        if (j.contains("image_search")) {
            Json is = j.at("image_search");
            if (!is.is_object()) throw InvalidArgument("image_search must be an object");
            read_opt(is, "engine_id", c.image_search_engine_id);
            is.erase("engine_id");
            read_endpoint(is, c.image_search_endpoint);
        }
        read_opt(j, "retries", c.retry.retries);
        if (j.contains("retry_base_delay_ms"))
            c.retry.base_delay = std::chrono::milliseconds(j.at("retry_base_delay_ms").get<long long>());
        read_opt(j, "fallback_fps", c.fallback_fps);
        read_opt(j, "include", c.include);
        read_opt(j, "exclude", c.exclude);
        read_opt(j, "parallelism", c.parallelism);
        read_opt(j, "allow_reingest", c.allow_reingest);
        read_opt(j, "thumbnail_base_url", c.thumbnail_base_url);
    } catch (const Json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void EngineConfig::apply_env(const EnvLookup& lookup) {
    auto set = [&](const char* name, std::string& out) {
        if (const char* v = lookup(name); v && *v) out = v;
    };
    if (const char* v = lookup("MOCK_MODE"); v && *v) mock_mode = parse_flag("MOCK_MODE", v);
    set("LLM_ENDPOINT", llm_endpoint.url);
    set("LLM_API_KEY", llm_endpoint.api_key);
    set("IMG_SEARCH_ENDPOINT", image_search_endpoint.url);
    set("IMG_SEARCH_KEY", image_search_endpoint.api_key);
    set("IMG_SEARCH_ENGINE_ID", image_search_engine_id);
    set("EMBED_ENDPOINT", embedding_endpoint.url);
    set("EMBED_API_KEY", embedding_endpoint.api_key);
}

void EngineConfig::apply_env() {
    apply_env([](const char* name) { return std::getenv(name); });
}

void EngineConfig::validate() const {
    weights.validate();
    i2i.validate();
    keyframes.validate();
    if (top_k_per_modality < 1) throw InvalidArgument("top_k_per_modality must be >= 1");
    if (default_k < 1) throw InvalidArgument("default_k must be >= 1");
    if (temporal_k_per_step < 1) throw InvalidArgument("temporal_k_per_step must be >= 1");
    if (embedding_dimension < 2) throw InvalidArgument("embedding dimension must be >= 2");
    if (!(fallback_fps > 0)) throw InvalidArgument("fallback_fps must be positive");
    if (parallelism < 1) throw InvalidArgument("parallelism must be >= 1");
    if (retry.retries < 0) throw InvalidArgument("retries must be >= 0");
    make_video_filter(include, exclude);
}

Json EngineConfig::to_json() const {
    return Json{{"data",
                 {{"shots", path_json(data.shots)},
                  {"meta", path_json(data.meta)},
                  {"embeddings", path_json(data.embeddings)},
                  {"asr", path_json(data.asr)},
                  {"ocr", path_json(data.ocr)},
                  {"objects", path_json(data.objects)},
                  {"landmarks", path_json(data.landmarks)},
                  {"image_fixtures", path_json(data.image_fixtures)}}},
                {"weights", vidsearch::to_json(weights)},
                {"top_k_per_modality", top_k_per_modality},
                {"default_k", default_k},
                {"i2i",
                 {{"per_reference_top_k", i2i.per_reference_top_k},
                  {"max_landmarks", i2i.max_landmarks},
                  {"images_per_landmark", i2i.images_per_landmark}}},
                {"temporal_k_per_step", temporal_k_per_step},
                {"keyframe_percentiles", keyframes.percentiles},
                {"mock_mode", mock_mode},
                {"embedding", {{"dimension", embedding_dimension}, {"seed", embedding_seed}, {"endpoint", embedding_endpoint.url}}},
                {"llm", {{"endpoint", llm_endpoint.url}}},
                {"image_search", {{"endpoint", image_search_endpoint.url}, {"engine_id", image_search_engine_id}}},
                {"fallback_fps", fallback_fps},
                {"include", include},
                {"exclude", exclude},
                {"parallelism", parallelism},
                {"allow_reingest", allow_reingest},
                {"thumbnail_base_url", thumbnail_base_url}};
}

VideoFilter make_video_filter(const std::vector<std::string>& include, const std::vector<std::string>& exclude) {
    struct Rule {
        std::string group;
        std::optional<std::string> video;
    };
    auto parse = [](const std::vector<std::string>& raw) {
        std::vector<Rule> rules;
        for (const auto& r : raw) {
            const auto t = unicode::trim(r);
            const auto slash = t.find('/');
            if (t.empty() || slash == 0 || (slash != std::string::npos && (slash + 1 == t.size() || t.find('/', slash + 1) != std::string::npos)))
                throw InvalidArgument("include/exclude entries are 'group' or 'group/video', got '" + r + "'");
            if (slash == std::string::npos) {
                rules.push_back({t, std::nullopt});
            } else {
                rules.push_back({t.substr(0, slash), t.substr(slash + 1)});
            }
        }
        return rules;
    };
    auto inc = parse(include);
    auto exc = parse(exclude);
    if (inc.empty() && exc.empty()) return {};
    auto matches = [](const std::vector<Rule>& rules, const VideoId& v) {
        return std::any_of(rules.begin(), rules.end(), [&](const Rule& r) {
            return r.group == v.group_id && (!r.video || *r.video == v.video_id);
        });
    };
    return [inc = std::move(inc), exc = std::move(exc), matches](const VideoId& v) {
        if (!inc.empty() && !matches(inc, v)) return false;
        return !matches(exc, v);
    };
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.mock_mode) {
        llm_ = std::make_shared<MockLlm>();
    } else if (!config_.llm_endpoint.url.empty()) {
        llm_ = std::make_shared<CachingLlm>(std::make_shared<HttpLlmClient>(config_.llm_endpoint, config_.retry));
        planner_llm_ = llm_;
    }
}

std::shared_ptr<const Corpus> Engine::snapshot() const {
    std::lock_guard lock(mutex_);
    return corpus_;
}

std::shared_ptr<const Corpus> Engine::require_corpus() const {
    auto c = snapshot();
    if (!c) throw ApiError(409, "no corpus has been ingested", Json{{"capabilities", capabilities_of(nullptr)}});
    return c;
}

Json Engine::ingest(const Json& request) {
    std::lock_guard ingest_lock(ingest_mutex_);
    {
        std::lock_guard lock(mutex_);
        if (ingested_ && !config_.allow_reingest)
            throw ApiError(409, "reingestion is disabled; start the server with reingestion allowed",
                           Json{{"capabilities", capabilities_of(corpus_.get())}});
    }
    if (!request.is_object()) throw bad_request("ingest request must be a JSON object");
    for (const auto& [k, _] : request.items())
        if (k != "data" && k != "include" && k != "exclude") throw bad_request("unknown ingest field '" + k + "'");

    const auto start = Clock::now();
    DataPaths paths = config_.data;
    if (request.contains("data")) {
        try {
            merge_paths(paths, read_paths(request.at("data"), {}));
        } catch (const InvalidArgument& e) {
            throw bad_request(e.what());
        }
    }
    const auto include = request.contains("include") ? string_list(request.at("include"), "include") : config_.include;
    const auto exclude = request.contains("exclude") ? string_list(request.at("exclude"), "exclude") : config_.exclude;
    VideoFilter keep;
    try {
        keep = make_video_filter(include, exclude);
    } catch (const InvalidArgument& e) {
        throw bad_request(e.what());
    }
    KeyFilter keep_key;
    if (keep) keep_key = [keep](const FrameKey& k) { return keep(k.video()); };

    auto corpus = std::make_shared<Corpus>();
    Json warnings = Json::array();
    Json modes = Json::object();
    Json reasons = Json::object();
    auto disable = [&](const std::string& mode, const std::string& reason) {
        modes[mode] = false;
        if (!reasons.contains(mode)) reasons[mode] = reason;
    };
    for (auto m : kSearchModes) modes[std::string(m)] = true;

    // Catalog.
    if (!paths.shots) throw NotFound("no shots file configured; the catalog is required");
    corpus->catalog.load_shots(*paths.shots, keep);
    if (usable(paths.meta)) {
        corpus->catalog.load_meta(*paths.meta, keep);
    } else if (paths.meta) {
        warnings.push_back("metadata file " + paths.meta->string() + " not found; timestamps use fallback fps");
    }
    corpus->catalog.finalize(config_.keyframes);
    std::set<FrameKey> cataloged;
    for (auto& k : corpus->catalog.all_keyframes()) cataloged.insert(std::move(k));

    // Embeddings and the embedder.
    Eigen::Index dimension = config_.embedding_dimension;
    if (usable(paths.embeddings)) {
        dimension = is_jsonl(*paths.embeddings) ? jsonl_dimension(*paths.embeddings)
                                                : read_embedding_dimension(*paths.embeddings);
        if (dimension < 1) throw ParseError(paths.embeddings->string() + ": no embeddings");
        corpus->vectors = std::make_unique<VectorIndex>(dimension);
        if (is_jsonl(*paths.embeddings)) {
            corpus->vectors->load_jsonl(*paths.embeddings, keep_key);
        } else {
            corpus->vectors->load_binary(*paths.embeddings, keep_key);
        }
        corpus->vectors->freeze();
        std::size_t orphans = 0;
        for (const auto& k : corpus->vectors->keys()) orphans += cataloged.contains(k) ? 0 : 1;
        if (orphans)
            warnings.push_back(std::to_string(orphans) + " embedding(s) belong to frames that are not cataloged keyframes");
    } else {
        const std::string reason = paths.embeddings ? "embeddings file " + paths.embeddings->string() + " not found"
                                                    : "no embeddings file configured";
        warnings.push_back(reason);
        for (const char* m : {"semantic", "i2i", "temporal"}) disable(m, reason);
    }
    if (config_.mock_mode) {
        corpus->embedder = std::make_shared<MockEmbedder>(dimension, config_.embedding_seed);
    } else if (!config_.embedding_endpoint.url.empty()) {
        corpus->embedder = std::make_shared<CachingEmbedder>(
            std::make_shared<HttpEmbeddingClient>(config_.embedding_endpoint, dimension, config_.retry));
    } else {
        for (const char* m : {"semantic", "i2i", "temporal"}) disable(m, "no embedding endpoint configured");
    }

    // Text.
    corpus->text = std::make_unique<TextIndex>();
    auto load_text = [&](const std::optional<std::filesystem::path>& p, const char* mode, bool& flag, auto loader) {
        if (usable(p)) {
            loader(*p);
            flag = true;
        } else {
            const std::string reason = p ? std::string(mode) + " file " + p->string() + " not found"
                                         : std::string("no ") + mode + " file configured";
            warnings.push_back(reason);
            disable(mode, reason);
        }
    };
    load_text(paths.asr, "asr", corpus->has_asr, [&](const auto& p) { corpus->text->load_asr(p, keep); });
    load_text(paths.ocr, "ocr", corpus->has_ocr, [&](const auto& p) { corpus->text->load_ocr(p, keep); });
    corpus->text->freeze();

    // Objects.
    if (usable(paths.objects)) {
        corpus->objects = std::make_unique<ObjectIndex>(*paths.objects, keep_key);
        corpus->objects->ensure_loaded();
    } else {
        const std::string reason = paths.objects ? "objects file " + paths.objects->string() + " not found"
                                                 : "no objects file configured";
        warnings.push_back(reason);
        disable("object", reason);
    }

    // Landmarks and reference images.
    if (usable(paths.landmarks)) {
        corpus->kb = LandmarkKB::load(*paths.landmarks);
    } else {
        const std::string reason = paths.landmarks ? "landmark file " + paths.landmarks->string() + " not found"
                                                   : "no landmark file configured";
        warnings.push_back(reason + "; landmark enhancement is off");
        disable("i2i", reason);
    }
    if (config_.mock_mode) {
        if (usable(paths.image_fixtures)) {
            corpus->images = std::make_shared<FixtureImageSearch>(FixtureImageSearch::from_file(*paths.image_fixtures));
        } else {
            disable("i2i", "mock mode without an image fixture table");
        }
    } else if (!config_.image_search_endpoint.url.empty()) {
        corpus->images = std::make_shared<CachingImageSearch>(std::make_shared<HttpImageSearchClient>(
            config_.image_search_endpoint, config_.image_search_engine_id, config_.retry));
    } else {
        disable("i2i", "no image search endpoint configured");
    }

    const bool any_modality = modes["semantic"].get<bool>() || modes["asr"].get<bool>() || modes["ocr"].get<bool>() ||
                              modes["object"].get<bool>();
    if (!any_modality) disable("llandmark", "no search modality is available");

    corpus->capabilities = Json{{"modes", modes}, {"reasons", reasons}};
    corpus->report = Json{{"shots", corpus->catalog.shot_count()},
                          {"keyframes", corpus->catalog.keyframe_count()},
                          {"videos", corpus->catalog.video_count()},
                          {"embeddings", corpus->vectors ? corpus->vectors->size() : 0},
                          {"embedding_dimension", dimension},
                          {"asr_docs", corpus->text->size(Channel::ASR)},
                          {"ocr_docs", corpus->text->size(Channel::OCR)},
                          {"docs", corpus->text->size()},
                          {"detection_frames", corpus->objects ? corpus->objects->frame_count() : 0},
                          {"detections", corpus->objects ? corpus->objects->detection_count() : 0},
                          {"landmarks", corpus->kb.entries().size()},
                          {"include", include},
                          {"exclude", exclude},
                          {"warnings", warnings}};

    std::shared_ptr<const Corpus> frozen = std::move(corpus);
    {
        std::lock_guard lock(mutex_);
        corpus_ = frozen;
        ingested_ = true;
    }
    Json report = frozen->report;
    report["capabilities"] = capabilities_of(frozen.get());
    report["timing_ms"] = Json{{"total", elapsed_ms(start)}};
    return report;
}

Json Engine::capabilities_of(const Corpus* corpus) const {
    Json modes = Json::object();
    Json reasons = Json::object();
    if (corpus) {
        modes = corpus->capabilities.at("modes");
        reasons = corpus->capabilities.at("reasons");
    } else {
        for (auto m : kSearchModes) {
            modes[std::string(m)] = false;
            reasons[std::string(m)] = "no corpus has been ingested";
        }
    }
    return Json{{"ready", corpus != nullptr},
                {"mock_mode", config_.mock_mode},
                {"modes", modes},
                {"reasons", reasons},
                {"answer", llm_ != nullptr},
                {"llm_planner", planner_llm_ != nullptr},
                {"reingest", config_.allow_reingest},
                {"thumbnail_base_url", config_.thumbnail_base_url},
                {"defaults",
                 {{"k", config_.default_k},
                  {"weights", to_json(config_.weights)},
                  {"top_k_per_modality", config_.top_k_per_modality},
                  {"temporal_k_per_step", config_.temporal_k_per_step},
                  {"i2i",
                   {{"per_reference_top_k", config_.i2i.per_reference_top_k},
                    {"max_landmarks", config_.i2i.max_landmarks},
                    {"images_per_landmark", config_.i2i.images_per_landmark}}}}}};
}

Json Engine::capabilities() const { return capabilities_of(snapshot().get()); }

void Engine::require_mode(const Corpus& corpus, const std::string& mode) const {
    const auto& modes = corpus.capabilities.at("modes");
    if (!modes.value(mode, false))
        throw ApiError(409, "mode '" + mode + "' is disabled: " + corpus.capabilities.at("reasons").value(mode, ""),
                       Json{{"capabilities", capabilities_of(&corpus)}});
}

namespace {

const std::set<std::string> kRequestFields{"mode",    "query",   "queries",   "k",         "weights",
                                           "top_k_per_modality", "i2i", "k_per_step", "include", "exclude",
                                           "translate", "answer", "object_query"};

std::size_t count_field(const Json& r, const char* key, std::size_t fallback) {
    if (!r.contains(key) || r.at(key).is_null()) return fallback;
    const auto& v = r.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 100000)
        throw bad_request(std::string("'") + key + "' must be an integer in [1, 100000]");
    return static_cast<std::size_t>(v.get<long long>());
}

bool flag_field(const Json& r, const char* key, bool fallback) {
    if (!r.contains(key) || r.at(key).is_null()) return fallback;
    if (!r.at(key).is_boolean()) throw bad_request(std::string("'") + key + "' must be a boolean");
    return r.at(key).get<bool>();
}

std::string query_field(const Json& r) {
    if (!r.contains("query") || !r.at("query").is_string()) throw bad_request("'query' must be a string");
    auto q = r.at("query").get<std::string>();
    if (unicode::trim(q).empty()) throw bad_request("'query' is empty");
    return q;
}

KeyFilter scope_of(const Json& r) {
    std::vector<std::string> inc, exc;
    if (r.contains("include")) inc = string_list(r.at("include"), "include");
    if (r.contains("exclude")) exc = string_list(r.at("exclude"), "exclude");
    VideoFilter f;
    try {
        f = make_video_filter(inc, exc);
    } catch (const InvalidArgument& e) {
        throw bad_request(e.what());
    }
    if (!f) return {};
    return [f](const FrameKey& k) { return f(k.video()); };
}

}  // namespace

Json Engine::search(const Json& request) const {
    const auto start = Clock::now();
    if (!request.is_object()) throw bad_request("request body must be a JSON object");
    for (const auto& [k, _] : request.items())
        if (!kRequestFields.contains(k)) throw bad_request("unknown request field '" + k + "'");
    if (!request.contains("mode") || !request.at("mode").is_string())
        throw ApiError(400, "'mode' is required", Json{{"allowed_modes", kSearchModes}});
    const auto mode = request.at("mode").get<std::string>();
    if (std::find(kSearchModes.begin(), kSearchModes.end(), mode) == kSearchModes.end())
        throw ApiError(400, "unknown mode '" + mode + "'", Json{{"allowed_modes", kSearchModes}});

    const auto corpus = require_corpus();
    require_mode(*corpus, mode);

    Json body;
    try {
        if (mode == "semantic") body = search_semantic(*corpus, request);
        if (mode == "asr") body = search_text(*corpus, request, Channel::ASR);
        if (mode == "ocr") body = search_text(*corpus, request, Channel::OCR);
        if (mode == "object") body = search_object(*corpus, request);
        if (mode == "llandmark") body = search_llandmark(*corpus, request);
        if (mode == "i2i") body = search_i2i(*corpus, request);
        if (mode == "temporal") body = search_temporal(*corpus, request);
    } catch (const InvalidArgument& e) {
        throw bad_request(e.what());
    } catch (const DimensionError& e) {
        throw bad_request(e.what());
    } catch (const Json::exception& e) {
        throw bad_request(e.what());
    }
    body["mode"] = mode;
    if (!body.contains("warnings")) body["warnings"] = Json::array();
    body["capabilities"] = capabilities_of(corpus.get());
    if (body.contains("timing_ms")) {
        body["timing_ms"]["total"] = elapsed_ms(start);
    } else {
        body["timing_ms"] = Json{{"total", elapsed_ms(start)}};
    }
    return body;
}

Json Engine::search_semantic(const Corpus& corpus, const Json& request) const {
    const auto query = query_field(request);
    const auto k = count_field(request, "k", config_.default_k);
    const ModalityResult hits = corpus.vectors->search(corpus.embedder->embed_text(query), k, scope_of(request));
    PlanExecution execution;
    execution.results.emplace(Modality::Semantic, hits);
    return Json{{"query", query},
                {"results", modality_result_json(corpus, hits, config_.fallback_fps)},
                {"videos", packages_json(corpus, group_by_video(frames_from(hits, Modality::Semantic), &execution, corpus.indices()),
                                         config_.fallback_fps)}};
}

Json Engine::search_text(const Corpus& corpus, const Json& request, Channel channel) const {
    const auto query = query_field(request);
    const auto k = count_field(request, "k", config_.default_k);
    const auto scope = scope_of(request);
    auto hits = corpus.text->search(query, channel, scope ? corpus.text->size(channel) : k);
    if (scope) {
        std::erase_if(hits, [&](const TextHit& h) { return !scope(FrameKey(h.doc.video, h.doc.start_frame)); });
        if (hits.size() > k) hits.resize(k);
    }
    const auto modality = channel == Channel::ASR ? Modality::Asr : Modality::Ocr;
    const ModalityResult result = hits;
    PlanExecution execution;
    execution.results.emplace(modality, result);
    Json warnings = Json::array();
    if (hits.empty() && unicode::tokenize(query).empty()) warnings.push_back("query has no searchable terms");
    return Json{{"query", query},
                {"results", modality_result_json(corpus, result, config_.fallback_fps)},
                {"videos", packages_json(corpus, group_by_video(frames_from(result, modality), &execution, corpus.indices()),
                                         config_.fallback_fps)},
                {"warnings", warnings}};
}

Json Engine::search_object(const Corpus& corpus, const Json& request) const {
    const auto k = count_field(request, "k", config_.default_k);
    ObjectQuery oq;
    std::string query;
    if (request.contains("object_query") && !request.at("object_query").is_null()) {
        oq = object_query_from_json(request.at("object_query"));
        if (request.contains("query")) query = query_field(request);
    } else {
        query = query_field(request);
        oq.labels = detect_object_labels(query);
        if (oq.labels.empty()) {
            // Plain label lists such as "car, person" are accepted as is.
            for (const auto& t : unicode::tokenize(query)) oq.labels.push_back(t.text);
        }
    }
    oq.normalize();
    const auto scope = scope_of(request);
    auto matches = corpus.objects->filter_frames(oq, scope ? corpus.objects->frame_count() : k);
    if (scope) {
        std::erase_if(matches, [&](const ObjectMatch& m) { return !scope(m.key); });
        if (matches.size() > k) matches.resize(k);
    }
    const ModalityResult result = matches;
    PlanExecution execution;
    execution.results.emplace(Modality::Object, result);
    return Json{{"query", query},
                {"object_query", to_json(oq)},
                {"results", modality_result_json(corpus, result, config_.fallback_fps)},
                {"videos", packages_json(corpus, group_by_video(frames_from(result, Modality::Object), &execution, corpus.indices()),
                                         config_.fallback_fps)}};
}

Json Engine::search_llandmark(const Corpus& corpus, const Json& request) const {
    const auto query = query_field(request);
    const auto k = count_field(request, "k", config_.default_k);
    const bool translate = flag_field(request, "translate", true);
    const bool want_answer = flag_field(request, "answer", true);
    Json timing = Json::object();
    auto stage = Clock::now();

    PlannerOptions options;
    options.default_weights = config_.weights;
    options.top_k_per_modality = count_field(request, "top_k_per_modality", config_.top_k_per_modality);
    options.translate = translate;
    SearchPlan plan = build_plan(query, corpus.kb, planner_llm_.get(), options);
    if (!planner_llm_ && request.contains("translate") && translate)
        plan.warnings.push_back("translation needs an LLM planner; the query is used as written");
    if (request.contains("weights") && !request.at("weights").is_null()) {
        const auto& overrides = request.at("weights");
        (void)weights_from_json(overrides, config_.weights);
        for (const auto& [name, w] : overrides.items()) plan.weights.set(modality_from_string(name), w.get<double>());
    }
    const auto& modes = corpus.capabilities.at("modes");
    for (auto m : kModalities) {
        const std::string name(to_string(m));
        if (plan.weights.get(m) > 0 && !modes.value(name, false)) {
            plan.weights.set(m, 0);
            plan.warnings.push_back(name + " search is disabled; its weight was set to 0");
        }
    }
    if (std::none_of(kModalities.begin(), kModalities.end(), [&](Modality m) { return plan.weights.get(m) > 0; }))
        throw ApiError(409, "no enabled modality has a positive weight for this query",
                       Json{{"plan", to_json(plan)}, {"capabilities", capabilities_of(&corpus)}});
    timing["plan"] = elapsed_ms(stage);

    const SearchPlan enhanced = enhance_plan(plan, corpus.kb);
    stage = Clock::now();
    const auto execution = execute_plan(enhanced, corpus.indices(), corpus.embedder.get(),
                                        ExecuteOptions{config_.parallelism, scope_of(request)});
    timing["search"] = elapsed_ms(stage);

    stage = Clock::now();
    auto fused = fuse(execution, enhanced.weights, &corpus.catalog);
    if (fused.size() > k) fused.resize(k);
    const auto packages = group_by_video(fused, &execution, corpus.indices());
    timing["fusion"] = elapsed_ms(stage);

    Json warnings = Json::array();
    for (const auto& w : enhanced.warnings) warnings.push_back(w);
    for (const auto& w : execution.warnings) warnings.push_back(w);

    Json answer = nullptr;
    stage = Clock::now();
    if (want_answer && llm_ && !packages.empty()) {
        try {
            const auto a = synthesize_answer(packages, query, *llm_);
            Json cited = Json::array();
            for (const auto& key : a.cited_frames) cited.push_back(key.str());
            answer = Json{{"text", a.text}, {"citations", cited}, {"warnings", a.warnings}};
        } catch (const AnswerError& e) {
            warnings.push_back(e.what());
        }
    } else if (want_answer && !llm_) {
        warnings.push_back("answer synthesis needs an LLM endpoint");
    }
    timing["answer"] = elapsed_ms(stage);

    Json per_modality = Json::object();
    for (const auto& [m, r] : execution.results)
        per_modality[std::string(to_string(m))] = modality_result_json(corpus, r, config_.fallback_fps);
    Json fused_json = Json::array();
    for (const auto& f : fused) fused_json.push_back(scored_frame_json(corpus, f, config_.fallback_fps));

    return Json{{"query", query},
                {"plan", to_json(plan)},
                {"enhanced_plan", to_json(enhanced)},
                {"refined_query", enhanced.semantic_query},
                {"weights", to_json(enhanced.weights)},
                {"per_modality", per_modality},
                {"fused", fused_json},
                {"videos", packages_json(corpus, packages, config_.fallback_fps)},
                {"answer", answer},
                {"warnings", warnings},
                {"timing_ms", timing}};
}

Json Engine::search_i2i(const Corpus& corpus, const Json& request) const {
    const auto query = query_field(request);
    const auto k = count_field(request, "k", config_.default_k);
    I2IParams params = config_.i2i;
    if (request.contains("i2i") && !request.at("i2i").is_null()) {
        const auto& p = request.at("i2i");
        if (!p.is_object()) throw bad_request("'i2i' must be an object");
        for (const auto& [key, _] : p.items())
            if (key != "per_reference_top_k" && key != "max_landmarks" && key != "images_per_landmark")
                throw bad_request("unknown i2i field '" + key + "'");
        params.per_reference_top_k = count_field(p, "per_reference_top_k", params.per_reference_top_k);
        params.max_landmarks = count_field(p, "max_landmarks", params.max_landmarks);
        params.images_per_landmark = count_field(p, "images_per_landmark", params.images_per_landmark);
    }
    const auto scope = scope_of(request);
    static const UnavailableLlm no_llm;
    const I2IClients clients{llm_ ? *llm_ : static_cast<const LlmClient&>(no_llm), *corpus.images, *corpus.embedder};

    auto describe = [&](const I2IResult& r) {
        Json landmarks = Json::array();
        for (const auto& lq : r.landmarks) landmarks.push_back({{"landmark", lq.landmark}, {"queries", lq.queries}});
        Json refs = Json::array();
        for (const auto& ref : r.references)
            refs.push_back({{"landmark", ref.landmark},
                            {"query", ref.query},
                            {"reference", ref.reference},
                            {"ok", ref.ok},
                            {"error", ref.error},
                            {"hit_count", ref.hit_count}});
        return std::pair{landmarks, refs};
    };
    Json params_json{{"per_reference_top_k", params.per_reference_top_k},
                     {"max_landmarks", params.max_landmarks},
                     {"images_per_landmark", params.images_per_landmark}};
    try {
        auto result = i2i_search(query, params, clients, corpus.kb, *corpus.vectors, config_.parallelism, scope);
        auto [landmarks, refs] = describe(result);
        auto hits = result.hits;
        if (hits.size() > k) hits.resize(k);
        const ModalityResult r = hits;
        PlanExecution execution;
        execution.results.emplace(Modality::Semantic, r);
        return Json{{"query", query},
                    {"params", params_json},
                    {"landmarks", landmarks},
                    {"references", refs},
                    {"fallback", nullptr},
                    {"results", modality_result_json(corpus, r, config_.fallback_fps)},
                    {"videos", packages_json(corpus, group_by_video(frames_from(r, Modality::Semantic), &execution, corpus.indices()),
                                             config_.fallback_fps)},
                    {"warnings", result.warnings}};
    } catch (const I2IError& e) {
        auto [landmarks, refs] = describe(e.partial());
        Json warnings = e.partial().warnings;
        warnings.push_back(e.what());
        const ModalityResult r = corpus.vectors->search(corpus.embedder->embed_text(query), k, scope);
        PlanExecution execution;
        execution.results.emplace(Modality::Semantic, r);
        return Json{{"query", query},
                    {"params", params_json},
                    {"landmarks", landmarks},
                    {"references", refs},
                    {"fallback", {{"mode", "semantic"}, {"reason", e.kind() == I2IError::Kind::NoLandmark ? "no_landmark" : "no_reference_images"}}},
                    {"results", modality_result_json(corpus, r, config_.fallback_fps)},
                    {"videos", packages_json(corpus, group_by_video(frames_from(r, Modality::Semantic), &execution, corpus.indices()),
                                             config_.fallback_fps)},
                    {"warnings", warnings}};
    }
}

Json Engine::search_temporal(const Corpus& corpus, const Json& request) const {
    if (!request.contains("queries")) throw bad_request("temporal mode needs 'queries', an ordered list of strings");
    const auto queries = string_list(request.at("queries"), "queries");
    if (queries.empty()) throw bad_request("'queries' is empty");
    for (const auto& q : queries)
        if (unicode::trim(q).empty()) throw bad_request("'queries' contains an empty query");
    const auto k = count_field(request, "k", config_.default_k);
    const auto k_per_step = count_field(request, "k_per_step", config_.temporal_k_per_step);
    const auto result = temporal_search(queries, *corpus.embedder, *corpus.vectors, k_per_step, scope_of(request));

    auto video_json = [](const VideoId& v, double s) {
        return Json{{"video", v.str()}, {"group_id", v.group_id}, {"video_id", v.video_id}, {"score", s}};
    };
    Json steps = Json::array();
    for (const auto& step : result.steps) {
        std::vector<VideoScore> ordered;
        for (const auto& [v, s] : step.per_video) ordered.push_back({v, s});
        std::stable_sort(ordered.begin(), ordered.end(), [](const VideoScore& a, const VideoScore& b) { return a.score > b.score; });
        Json videos = Json::array();
        for (const auto& vs : ordered) videos.push_back(video_json(vs.video, vs.score));
        steps.push_back({{"step_index", step.step_index}, {"query", queries[step.step_index]}, {"videos", videos}});
    }
    Json ranking = Json::array();
    for (std::size_t i = 0; i < result.ranking.size() && i < k; ++i)
        ranking.push_back(video_json(result.ranking[i].video, result.ranking[i].score));
    return Json{{"queries", queries}, {"k_per_step", k_per_step}, {"steps", steps}, {"ranking", ranking}};
}

Json Engine::frame(const std::string& group, const std::string& video, const std::string& frame) const {
    const auto corpus = require_corpus();
    FrameKey key;
    try {
        key = parse_frame_key(group + "/" + video + "/" + frame);
    } catch (const ParseError& e) {
        throw bad_request(e.what());
    }
    const auto vid = key.video();
    const auto& keyframes = corpus->catalog.keyframes(vid);
    if (keyframes.empty() && !corpus->catalog.meta(vid)) throw ApiError(404, "unknown video " + vid.str());
    auto j = frame_json(*corpus, key, config_.fallback_fps);
    j["is_keyframe"] = std::binary_search(keyframes.begin(), keyframes.end(), key.frame_id);
    Json shot = nullptr;
    for (const auto& s : corpus->catalog.shots(vid))
        if (s.start_frame <= key.frame_id && key.frame_id <= s.end_frame) shot = {{"start_frame", s.start_frame}, {"end_frame", s.end_frame}};
    j["shot"] = shot;
    if (const auto m = corpus->catalog.meta(vid)) {
        j["fps"] = m->fps;
        j["frame_count"] = m->frame_count;
    } else {
        j["fps"] = config_.fallback_fps;
        j["frame_count"] = nullptr;
    }
    Json labels = Json::array();
    if (corpus->objects)
        for (const auto& d : corpus->objects->detections(key))
            labels.push_back({{"label", d.label}, {"score", d.score}, {"box", {d.x, d.y, d.w, d.h}}});
    j["detections"] = labels;
    j["thumbnail"] = config_.thumbnail_base_url.empty()
                         ? Json(nullptr)
                         : Json(config_.thumbnail_base_url + "/" + key.group_id + "/" + key.video_id + "/" +
                                std::to_string(key.frame_id) + ".jpg");
    return j;
}

Json Engine::evaluate(const Json& request) {
    if (!request.is_object()) throw bad_request("eval request must be a JSON object");
    for (const auto& [k, _] : request.items())
        if (k != "submission" && k != "ground_truth" && k != "ks" && k != "strict_answers")
            throw bad_request("unknown eval field '" + k + "'");
    if (!request.contains("submission") || !request.at("submission").is_string())
        throw bad_request("'submission' must be the submission file text");
    if (!request.contains("ground_truth") || !request.at("ground_truth").is_string())
        throw bad_request("'ground_truth' must be the ground-truth JSONL text");
    try {
        eval::KSet ks;
        if (request.contains("ks")) {
            const auto& v = request.at("ks");
            if (!v.is_array()) throw bad_request("'ks' must be a list of integers");
            ks.ks.clear();
            for (const auto& x : v) {
                if (!x.is_number_integer() || x.get<long long>() < 1) throw bad_request("'ks' must be positive integers");
                ks.ks.push_back(static_cast<std::size_t>(x.get<long long>()));
            }
        }
        eval::ScoreOptions options;
        options.strict_answers = flag_field(request, "strict_answers", false);
        const auto submission = eval::parse_submission_text(request.at("submission").get<std::string>());
        const auto gt = eval::parse_ground_truth_text(request.at("ground_truth").get<std::string>());
        return eval::to_json(eval::evaluate(submission, gt, ks, options));
    } catch (const ApiError&) {
        throw;
    } catch (const Error& e) {
        throw bad_request(e.what());
    }
}

}  // namespace vidsearch
