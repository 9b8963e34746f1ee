#pragma once

// UTF-8 helpers backed by ICU. All strings are UTF-8 encoded std::string.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vidsearch::unicode {

std::string nfc(std::string_view text);
std::string nfd(std::string_view text);
std::string to_lower(std::string_view text);
std::string case_fold(std::string_view text);

/// Removes combining marks after canonical decomposition and maps đ/Đ to d/D.
/// The result is recomposed so characters without marks (e.g. Hangul) survive.
std::string strip_marks(std::string_view text);

/// Case- and accent-insensitive key: strip_marks + case fold + typographic
/// apostrophes mapped to '\''.
std::string fold_key(std::string_view text);

/// fold_key applied code point by code point to NFC input. `origin[i]` is the
/// byte offset in the NFC input of the code point that produced folded byte i;
/// origin has one extra trailing entry equal to the input length.
struct FoldedText {
    std::string nfc_text;
    std::string folded;
    std::vector<std::size_t> origin;
};
FoldedText fold_with_offsets(std::string_view text);

/// A token with its byte range [begin, end) in the source string.
struct Token {
    std::string text;  // lowercased
    std::size_t begin;
    std::size_t end;
};

/// Lowercased tokens split on whitespace and punctuation.
std::vector<Token> tokenize(std::string_view text);

/// Collapses runs of whitespace to one ASCII space and trims both ends.
std::string normalize_space(std::string_view text);

std::string trim(std::string_view text);

/// Whether the code point ending at / starting at `offset` is a letter or digit.
bool word_char_before(std::string_view text, std::size_t offset);
bool word_char_after(std::string_view text, std::size_t offset);

}  // namespace vidsearch::unicode
