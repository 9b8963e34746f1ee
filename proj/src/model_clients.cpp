#include "vidsearch/model_clients.hpp"

#include <openssl/sha.h>

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {
namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }
    return lines;
}

/// Lines following a "### <name>" marker up to the next "### " line.
std::vector<std::string_view> section(std::string_view prompt, std::string_view name) {
    std::vector<std::string_view> out;
    bool inside = false;
    const std::string marker = "### " + std::string(name);
    for (auto line : lines_of(prompt)) {
        if (line.starts_with("### ")) {
            inside = line == marker;
            continue;
        }
        if (inside) out.push_back(line);
    }
    return out;
}

std::string mock_refine(std::string_view prompt) {
    std::string reply;
    for (auto line : section(prompt, "input")) {
        if (line.empty()) continue;
        reply.append(line);
        reply += '\n';
    }
    return reply.empty() ? std::string("(no input)") : reply;
}

std::string mock_image_queries(std::string_view prompt) {
    Json reply = Json::array();
    for (auto line : section(prompt, "detected")) {
        if (!line.starts_with("- ")) continue;
        line.remove_prefix(2);
        const auto bar = line.find(" | ");
        const auto name = unicode::trim(line.substr(0, bar));
        const auto city = bar == std::string_view::npos ? std::string() : unicode::trim(line.substr(bar + 3));
        Json queries = Json::array({name});
        if (!city.empty()) queries.push_back(name + " " + city);
        reply.push_back({{"landmark", name}, {"queries", queries}});
    }
    return reply.dump();
}

std::string mock_answer(std::string_view prompt) {
    for (auto line : section(prompt, "evidence")) {
        if (!line.starts_with("frame ")) continue;
        line.remove_prefix(6);
        const auto key = std::string(line.substr(0, line.find(' ')));
        const auto slash = key.rfind('/');
        return "ANSWER: The strongest evidence is frame " + key.substr(slash + 1) + " of video " +
               key.substr(0, slash) + ".\nCITATIONS: " + key;
    }
    return "ANSWER: No evidence was provided.\nCITATIONS:";
}

}  // namespace

std::string prompt_task(std::string_view prompt) {
    const auto first = prompt.substr(0, prompt.find('\n'));
    if (!first.starts_with(kTaskPrefix)) return {};
    return unicode::trim(first.substr(kTaskPrefix.size()));
}

EmbeddingVector mock_embed(std::string_view input, Eigen::Index dimension, std::string_view seed) {
    if (dimension < 2) throw InvalidArgument("mock embedding dimension must be >= 2");
    Eigen::VectorXd v(dimension);
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    std::uint64_t block = 0;
    std::array<double, 4> uniforms{};
    std::size_t available = 0;
    auto next_uniform = [&]() {
        if (available == 0) {
            std::string message;
            message.reserve(seed.size() + input.size() + 10);
            message.append(seed);
            message += '\x1f';
            message.append(input);
            message += '\x1f';
            for (int i = 0; i < 8; ++i) message += static_cast<char>((block >> (8 * i)) & 0xFF);
            ++block;
            SHA256(reinterpret_cast<const unsigned char*>(message.data()), message.size(), digest.data());
            for (std::size_t w = 0; w < 4; ++w) {
                std::uint64_t word = 0;
                for (std::size_t b = 0; b < 8; ++b) word |= static_cast<std::uint64_t>(digest[w * 8 + b]) << (8 * b);
                // Top 53 bits mapped into the open interval (0, 1).
                uniforms[w] = (static_cast<double>(word >> 11) + 0.5) / 9007199254740992.0;
            }
            available = 4;
        }
        return uniforms[4 - available--];
    };
    for (Eigen::Index i = 0; i < dimension; i += 2) {
        const double radius = std::sqrt(-2.0 * std::log(next_uniform()));
        const double angle = 2.0 * std::numbers::pi * next_uniform();
        v[i] = radius * std::cos(angle);
        if (i + 1 < dimension) v[i + 1] = radius * std::sin(angle);
    }
    v.normalize();
    return v.cast<float>();
}

MockEmbedder::MockEmbedder(Eigen::Index dimension, std::string seed) : dimension_(dimension), seed_(std::move(seed)) {
    if (dimension < 2) throw InvalidArgument("mock embedding dimension must be >= 2");
}

EmbeddingVector MockEmbedder::embed_text(const std::string& text) const { return mock_embed(text, dimension_, seed_); }

EmbeddingVector MockEmbedder::embed_image(const std::string& reference) const {
    return mock_embed(reference, dimension_, seed_);
}

std::string MockLlm::complete(const std::string& prompt) const {
    const auto t = prompt_task(prompt);
    if (t == task::kRefineOcr) return mock_refine(prompt);
    if (t == task::kImageQueries) return mock_image_queries(prompt);
    if (t == task::kAnswer) return mock_answer(prompt);
    return "{}";
}

std::string CallbackLlm::complete(const std::string& prompt) const {
    ++calls_;
    return fn_(prompt);
}

FixtureImageSearch::FixtureImageSearch(std::map<std::string, std::vector<std::string>> table)
    : table_(std::move(table)) {}

FixtureImageSearch FixtureImageSearch::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open image fixture table " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    std::map<std::string, std::vector<std::string>> table;
    const auto base = path.parent_path();
    for (const auto& [query, refs] : doc.items()) {
        auto& out = table[query];
        for (const auto& r : refs) {
            auto ref = r.get<std::string>();
            const bool url = ref.find("://") != std::string::npos;
            if (!url && std::filesystem::path(ref).is_relative()) ref = (base / ref).lexically_normal().string();
            out.push_back(std::move(ref));
        }
    }
    return FixtureImageSearch(std::move(table));
}

std::vector<std::string> FixtureImageSearch::search_images(const std::string& query, std::size_t n) const {
    std::vector<std::string> out;
    const auto it = table_.find(query);
    if (it == table_.end()) return out;
    std::set<std::string> seen;
    for (const auto& ref : it->second) {
        if (out.size() >= n) break;
        if (seen.insert(ref).second) out.push_back(ref);
    }
    return out;
}

std::string CachingLlm::complete(const std::string& prompt) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(prompt); it != cache_.end()) return it->second;
    }
    auto reply = inner_->complete(prompt);
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(prompt, std::move(reply)).first->second;
}

EmbeddingVector CachingEmbedder::cached(const std::string& key, const std::function<EmbeddingVector()>& compute) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto v = compute();
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(v)).first->second;
}

EmbeddingVector CachingEmbedder::embed_text(const std::string& text) const {
    return cached("t:" + text, [&] { return inner_->embed_text(text); });
}

EmbeddingVector CachingEmbedder::embed_image(const std::string& reference) const {
    return cached("i:" + reference, [&] { return inner_->embed_image(reference); });
}

std::vector<std::string> CachingImageSearch::search_images(const std::string& query, std::size_t n) const {
    const auto key = std::make_pair(query, n);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto refs = inner_->search_images(query, n);
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(refs)).first->second;
}

}  // namespace vidsearch
