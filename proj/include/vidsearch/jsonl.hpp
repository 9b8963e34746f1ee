#pragma once

// Line-delimited JSON record reading shared by the ingestion paths.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "vidsearch/errors.hpp"

namespace vidsearch {

using Json = nlohmann::json;

/// Calls `on_record(record, line_number)` for every non-blank line. Parse and
/// schema errors are rethrown as ParseError prefixed with "<file>:<line>".
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const Json&, std::size_t)>& on_record) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            on_record(Json::parse(line), line_no);
        } catch (const Json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace vidsearch
