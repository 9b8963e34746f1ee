// Command-line front end: ingest, search, eval, serve, refine-ocr, mock-embed.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "vidsearch/engine.hpp"
#include "vidsearch/eval_harness.hpp"
#include "vidsearch/http_api.hpp"
#include "vidsearch/ocr_refine.hpp"

#include <CLI11.hpp>

namespace {

using vidsearch::Json;

struct GlobalOptions {
    std::string config;
    bool mock = false;
    std::string llm_endpoint;
    std::string llm_api_key;
    std::string img_endpoint;
    std::string img_key;
    std::string img_engine_id;
    std::string embed_endpoint;
};

struct DataOptions {
    std::string shots, meta, embeddings, asr, ocr, objects, landmarks, image_fixtures;
    std::vector<std::string> include, exclude;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--shots", d.shots, "Shots JSONL");
    cmd->add_option("--meta", d.meta, "Video metadata JSONL");
    cmd->add_option("--embeddings", d.embeddings, "Keyframe embeddings (JSONL or binary)");
    cmd->add_option("--asr", d.asr, "ASR segments JSONL");
    cmd->add_option("--ocr", d.ocr, "OCR records JSONL");
    cmd->add_option("--objects", d.objects, "Object detections JSON");
    cmd->add_option("--landmarks", d.landmarks, "Landmark knowledge base JSON");
    cmd->add_option("--image-fixtures", d.image_fixtures, "Mock image search table JSON");
    cmd->add_option("--include", d.include, "Groups or group/video ids to keep");
    cmd->add_option("--exclude", d.exclude, "Groups or group/video ids to drop");
}

Json ingest_request(const DataOptions& d) {
    Json data = Json::object();
    auto put = [&](const char* key, const std::string& v) {
        if (!v.empty()) data[key] = std::filesystem::absolute(v).string();
    };
    put("shots", d.shots);
    put("meta", d.meta);
    put("embeddings", d.embeddings);
    put("asr", d.asr);
    put("ocr", d.ocr);
    put("objects", d.objects);
    put("landmarks", d.landmarks);
    put("image_fixtures", d.image_fixtures);
    Json req = Json::object();
    if (!data.empty()) req["data"] = data;
    if (!d.include.empty()) req["include"] = d.include;
    if (!d.exclude.empty()) req["exclude"] = d.exclude;
    return req;
}

vidsearch::EngineConfig make_config(const GlobalOptions& g) {
    std::string path = g.config;
    if (path.empty())
        if (const char* env = std::getenv("ENGINE_CONFIG"); env && *env) path = env;
    auto config = path.empty() ? vidsearch::EngineConfig{} : vidsearch::EngineConfig::load(path);
    config.apply_env();
    if (g.mock) config.mock_mode = true;
    if (!g.llm_endpoint.empty()) config.llm_endpoint.url = g.llm_endpoint;
    if (!g.llm_api_key.empty()) config.llm_endpoint.api_key = g.llm_api_key;
    if (!g.img_endpoint.empty()) config.image_search_endpoint.url = g.img_endpoint;
    if (!g.img_key.empty()) config.image_search_endpoint.api_key = g.img_key;
    if (!g.img_engine_id.empty()) config.image_search_engine_id = g.img_engine_id;
    if (!g.embed_endpoint.empty()) config.embedding_endpoint.url = g.embed_endpoint;
    config.validate();
    return config;
}

std::unique_ptr<vidsearch::LlmClient> make_llm(const vidsearch::EngineConfig& config) {
    if (config.mock_mode) return std::make_unique<vidsearch::MockLlm>();
    if (config.llm_endpoint.url.empty()) throw vidsearch::InvalidArgument("no LLM endpoint configured (set LLM_ENDPOINT or MOCK_MODE=1)");
    return std::make_unique<vidsearch::HttpLlmClient>(config.llm_endpoint, config.retry);
}

void print_ranked(const Json& response) {
    const auto mode = response.at("mode").get<std::string>();
    std::cout << std::setprecision(17);
    if (mode == "temporal") {
        for (const auto& v : response.at("ranking")) std::cout << v.at("video").get<std::string>() << '\t' << v.at("score").get<double>() << '\n';
    } else if (mode == "llandmark") {
        for (const auto& f : response.at("fused")) std::cout << f.at("key").get<std::string>() << '\t' << f.at("fused").get<double>() << '\n';
    } else {
        for (const auto& h : response.at("results")) std::cout << h.at("key").get<std::string>() << '\t' << h.at("score").get<double>() << '\n';
    }
    for (const auto& w : response.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
}

int run_mock_embed(const std::string& captions, const std::string& out, int dim, const std::string& seed) {
    std::vector<std::pair<vidsearch::FrameKey, vidsearch::EmbeddingVector>> rows;
    vidsearch::for_each_jsonl(captions, [&](const Json& rec, std::size_t) {
        rows.emplace_back(vidsearch::parse_frame_key(rec.at("key").get<std::string>()),
                          vidsearch::mock_embed(rec.at("caption").get<std::string>(), dim, seed));
    });
    const std::filesystem::path out_path(out);
    if (out_path.extension() == ".jsonl") {
        std::ofstream o(out_path);
        if (!o) throw vidsearch::NotFound("cannot write " + out);
        for (const auto& [key, v] : rows) {
            Json vec = Json::array();
            for (Eigen::Index i = 0; i < v.size(); ++i) vec.push_back(v[i]);
            o << Json{{"key", key.str()}, {"vector", vec}}.dump() << '\n';
        }
    } else {
        vidsearch::VectorIndex index(dim);
        for (const auto& [key, v] : rows) index.add(key, v);
        index.freeze();
        index.save(out_path);
    }
    std::cout << Json{{"written", rows.size()}, {"dimension", dim}, {"path", out}}.dump() << '\n';
    return 0;
}

vidsearch::HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal video retrieval engine"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "Engine config JSON (default: $ENGINE_CONFIG)");
    app.add_flag("--mock", g.mock, "Use the deterministic offline model mocks");
    app.add_option("--llm-endpoint", g.llm_endpoint, "LLM endpoint URL");
    app.add_option("--llm-api-key", g.llm_api_key, "LLM API key");
    app.add_option("--img-search-endpoint", g.img_endpoint, "Image search endpoint URL");
    app.add_option("--img-search-key", g.img_key, "Image search API key");
    app.add_option("--img-search-engine-id", g.img_engine_id, "Image search engine id");
    app.add_option("--embed-endpoint", g.embed_endpoint, "Embedding endpoint URL");

    DataOptions data;

    auto* ingest = app.add_subcommand("ingest", "Build every index and print the ingestion report");
    add_data_options(ingest, data);

    auto* search = app.add_subcommand("search", "Ingest, run one search and print 'key<TAB>score' lines");
    add_data_options(search, data);
    std::string mode = "semantic";
    std::vector<std::string> queries;
    std::size_t k = 0;
    bool as_json = false;
    std::string weights;
    search->add_option("--mode", mode, "semantic, ocr, asr, object, llandmark, i2i or temporal")
        ->check(CLI::IsMember({"semantic", "ocr", "asr", "object", "llandmark", "i2i", "temporal"}));
    search->add_option("--query", queries, "Query text; repeat for temporal steps")->required();
    search->add_option("--k", k, "Number of results");
    search->add_option("--weights", weights, "Weight overrides as JSON, e.g. {\"ocr\":0.5}");
    search->add_flag("--json", as_json, "Print the full JSON response");

    auto* eval = app.add_subcommand("eval", "Score a submission against ground truth");
    std::string submission, ground_truth, ks = "1,5,20,50,100";
    bool strict = false;
    eval->add_option("--submission", submission, "Submission file")->required();
    eval->add_option("--ground-truth", ground_truth, "Ground-truth JSONL")->required();
    eval->add_option("--ks", ks, "Comma-separated k values");
    eval->add_flag("--strict-answers", strict, "Compare QA answers byte for byte");

    auto* serve = app.add_subcommand("serve", "Ingest and serve the HTTP API");
    add_data_options(serve, data);
    vidsearch::ServerOptions server_options;
    bool allow_reingest = false;
    std::string static_dir;
    serve->add_option("--host", server_options.host, "Bind address");
    serve->add_option("--port", server_options.port, "Port (0 picks a free one)");
    serve->add_option("--static-dir", static_dir, "Directory served at /");
    serve->add_flag("--allow-reingest", allow_reingest, "Accept POST /api/ingest while serving");

    auto* refine = app.add_subcommand("refine-ocr", "Strip accents from OCR text and restore them with the LLM");
    std::string refine_in, refine_out;
    vidsearch::RefineOptions refine_options;
    refine->add_option("--in", refine_in, "OCR JSONL")->required();
    refine->add_option("--out", refine_out, "Output JSONL")->required();
    refine->add_option("--batch-size", refine_options.batch_size, "Lines per LLM call")->check(CLI::PositiveNumber);
    refine->add_option("--parallelism", refine_options.parallelism, "Concurrent LLM calls")->check(CLI::PositiveNumber);

    auto* embed = app.add_subcommand("mock-embed", "Embed frame captions with the deterministic mock embedder");
    std::string captions, embed_out, seed;
    int dim = 64;
    embed->add_option("--captions", captions, "JSONL of {key, caption}")->required();
    embed->add_option("--out", embed_out, "Output (.jsonl, or binary otherwise)")->required();
    embed->add_option("--dim", dim, "Embedding dimension")->check(CLI::Range(2, 65536));
    embed->add_option("--seed", seed, "Mock embedder seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << '\n';
        return app.exit(e);
    }

    try {
        if (*embed) return run_mock_embed(captions, embed_out, dim, seed);

        if (*eval) {
            auto report = vidsearch::eval::evaluate(vidsearch::eval::parse_submission(submission),
                                                    vidsearch::eval::load_ground_truth(ground_truth),
                                                    vidsearch::eval::KSet::parse(ks), {strict});
            for (const auto& q : report.per_query) std::cout << vidsearch::eval::to_json(q).dump() << '\n';
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << Json{{"mean", report.mean}, {"queries", report.per_query.size()}}.dump() << '\n';
            return 0;
        }

        auto config = make_config(g);

        if (*refine) {
            const auto llm = make_llm(config);
            const auto result = vidsearch::refine_ocr_file(refine_in, refine_out, *llm, refine_options);
            for (const auto& f : result.failures)
                std::cerr << "warning: batch " << f.batch << " fell back to accent-free text: " << f.error << '\n';
            std::cout << Json{{"entries", result.entries.size()},
                              {"llm_calls", result.llm_calls},
                              {"failed_batches", result.failures.size()},
                              {"unparsed_items", result.unparsed_items}}
                             .dump()
                      << '\n';
            return 0;
        }

        if (*serve) config.allow_reingest = config.allow_reingest || allow_reingest;
        vidsearch::Engine engine(config);
        const auto report = engine.ingest(ingest_request(data));

        if (*ingest) {
            std::cout << report.dump(2) << '\n';
            return 0;
        }

        if (*search) {
            Json request{{"mode", mode}};
            if (mode == "temporal") {
                request["queries"] = queries;
            } else {
                if (queries.size() != 1) throw vidsearch::InvalidArgument("--query is given once except in temporal mode");
                request["query"] = queries.front();
            }
            if (k > 0) request["k"] = k;
            if (!weights.empty()) request["weights"] = Json::parse(weights);
            const auto response = engine.search(request);
            if (as_json) {
                std::cout << response.dump(2) << '\n';
            } else {
                print_ranked(response);
            }
            return 0;
        }

        if (*serve) {
            if (!static_dir.empty()) server_options.static_dir = static_dir;
            vidsearch::HttpServer server(engine, server_options);
            const int port = server.bind();
            std::cerr << "capabilities: " << engine.capabilities().at("modes").dump() << '\n';
            for (const auto& w : report.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
            std::cerr << "listening on http://" << server_options.host << ':' << port << '\n';
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.serve();
            g_server = nullptr;
            return 0;
        }
    } catch (const vidsearch::ApiError& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (!e.details().empty()) std::cerr << e.details().dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
