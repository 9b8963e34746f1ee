#include "vidsearch/ocr_refine.hpp"

#include <charconv>
#include <fstream>

#include "vidsearch/errors.hpp"
#include "vidsearch/jsonl.hpp"
#include "vidsearch/parallel.hpp"
#include "vidsearch/unicode.hpp"

namespace vidsearch {

std::string strip_diacritics(std::string_view text) { return unicode::strip_marks(text); }

OcrEntry make_ocr_entry(FrameKey key, std::string text_raw, double confidence) {
    if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgument("OCR confidence outside [0, 1]");
    OcrEntry e;
    e.key = std::move(key);
    e.text_nonaccent = strip_diacritics(text_raw);
    e.text_raw = std::move(text_raw);
    e.confidence = confidence;
    return e;
}

std::string build_refine_prompt(std::span<const OcrEntry> batch) {
    std::string prompt;
    prompt += kTaskPrefix;
    prompt += task::kRefineOcr;
    prompt +=
        "\nThe numbered lines are Vietnamese OCR output with accents removed. For each line, restore the "
        "Vietnamese diacritics, correct spelling and drop OCR noise. Reply with exactly one line per item, "
        "keeping its number: \"N. <corrected text>\". Do not add commentary.\n### input\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        prompt += std::to_string(i + 1) + ". " + unicode::normalize_space(batch[i].text_nonaccent) + "\n";
    }
    return prompt;
}

std::map<std::size_t, std::string> parse_numbered_reply(std::string_view reply) {
    std::map<std::size_t, std::string> items;
    std::size_t pos = 0;
    while (pos < reply.size()) {
        auto nl = reply.find('\n', pos);
        if (nl == std::string_view::npos) nl = reply.size();
        auto line = std::string_view(reply).substr(pos, nl - pos);
        pos = nl + 1;
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string_view::npos) continue;
        line.remove_prefix(first);
        std::size_t number = 0;
        const auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), number);
        if (ec != std::errc{} || end == line.data() + line.size() || (*end != '.' && *end != ')')) continue;
        const auto text = unicode::trim(std::string_view(end + 1, line.data() + line.size() - end - 1));
        if (number == 0 || text.empty()) continue;
        items.try_emplace(number, text);
    }
    return items;
}

RefineResult refine_batch(std::vector<OcrEntry> entries, const LlmClient& llm, const RefineOptions& options) {
    if (options.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    RefineResult result;
    const std::size_t batches = (entries.size() + options.batch_size - 1) / options.batch_size;
    std::vector<std::optional<BatchFailure>> failures(batches);
    std::vector<std::size_t> unparsed(batches, 0);

    parallel_for(batches, options.parallelism, [&](std::size_t b) {
        const auto first = b * options.batch_size;
        const auto count = std::min(options.batch_size, entries.size() - first);
        const std::span<OcrEntry> batch(entries.data() + first, count);
        std::map<std::size_t, std::string> reply;
        try {
            reply = parse_numbered_reply(llm.complete(build_refine_prompt(batch)));
        } catch (const std::exception& e) {
            failures[b] = BatchFailure{b, first, count, e.what()};
        }
        for (std::size_t i = 0; i < count; ++i) {
            auto it = reply.find(i + 1);
            if (it != reply.end()) {
                batch[i].text_refined = it->second;
            } else {
                batch[i].text_refined = batch[i].text_nonaccent;
                if (!failures[b]) ++unparsed[b];
            }
        }
    });

    result.llm_calls = batches;
    for (std::size_t b = 0; b < batches; ++b) {
        if (failures[b]) result.failures.push_back(*failures[b]);
        result.unparsed_items += unparsed[b];
    }
    result.entries = std::move(entries);
    return result;
}

RefineResult refine_ocr_file(const std::filesystem::path& in, const std::filesystem::path& out, const LlmClient& llm,
                             const RefineOptions& options) {
    std::vector<Json> records;
    std::vector<OcrEntry> entries;
    for_each_jsonl(in, [&](const Json& j, std::size_t) {
        FrameKey key({j.at("group_id").get<std::string>(), j.at("video_id").get<std::string>()},
                     j.at("frame_id").get<std::int64_t>());
        entries.push_back(make_ocr_entry(std::move(key), j.at("text_raw").get<std::string>(),
                                         j.value("confidence", 1.0)));
        records.push_back(j);
    });
    auto result = refine_batch(std::move(entries), llm, options);
    std::ofstream os(out);
    if (!os) throw Error("cannot write " + out.string());
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i]["text_nonaccent"] = result.entries[i].text_nonaccent;
        records[i]["text_refined"] = *result.entries[i].text_refined;
        os << records[i].dump() << '\n';
    }
    return result;
}

}  // namespace vidsearch
