#include "vidsearch/unicode.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstdint>

#include "vidsearch/errors.hpp"

namespace vidsearch::unicode {
namespace {

icu::UnicodeString from_utf8(std::string_view text) {
    return icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

std::string to_utf8(const icu::UnicodeString& s) {
    std::string out;
    s.toUTF8String(out);
    return out;
}

const icu::Normalizer2& nfc_instance() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    return *n;
}

const icu::Normalizer2& nfd_instance() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFD normalizer unavailable");
    return *n;
}

icu::UnicodeString normalize(const icu::Normalizer2& n, const icu::UnicodeString& s) {
    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString out = n.normalize(s, status);
    if (U_FAILURE(status)) throw Error("ICU normalization failed");
    return out;
}

bool is_mark(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0; }

bool is_separator(UChar32 c) {
    return c < 0 || u_isUWhiteSpace(c) || u_ispunct(c) || u_iscntrl(c);
}

bool is_word(UChar32 c) { return c >= 0 && (u_isalnum(c) || is_mark(c)); }

icu::UnicodeString strip_marks_u(const icu::UnicodeString& input) {
    icu::UnicodeString decomposed = normalize(nfd_instance(), input);
    icu::UnicodeString kept;
    for (int32_t i = 0; i < decomposed.length();) {
        UChar32 c = decomposed.char32At(i);
        i += U16_LENGTH(c);
        if (is_mark(c)) continue;
        if (c == 0x0111) c = 'd';
        if (c == 0x0110) c = 'D';
        kept.append(c);
    }
    return normalize(nfc_instance(), kept);
}

std::string fold_code_point(UChar32 c) {
    if (c == 0x2019 || c == 0x2018 || c == 0x02BC || c == 0x0060) return "'";
    icu::UnicodeString s(c);
    s = strip_marks_u(s);
    s.foldCase();
    return to_utf8(s);
}

}  // namespace

std::string nfc(std::string_view text) { return to_utf8(normalize(nfc_instance(), from_utf8(text))); }

std::string nfd(std::string_view text) { return to_utf8(normalize(nfd_instance(), from_utf8(text))); }

std::string to_lower(std::string_view text) {
    icu::UnicodeString s = from_utf8(text);
    s.toLower(icu::Locale::getRoot());
    return to_utf8(s);
}

std::string case_fold(std::string_view text) {
    icu::UnicodeString s = from_utf8(text);
    s.foldCase();
    return to_utf8(s);
}

std::string strip_marks(std::string_view text) { return to_utf8(strip_marks_u(from_utf8(text))); }

FoldedText fold_with_offsets(std::string_view text) {
    FoldedText out;
    out.nfc_text = nfc(text);
    const std::string& src = out.nfc_text;
    const auto* bytes = reinterpret_cast<const uint8_t*>(src.data());
    const auto length = static_cast<int32_t>(src.size());
    for (int32_t i = 0; i < length;) {
        const int32_t start = i;
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        const std::string piece = c < 0 ? std::string(src.substr(start, i - start)) : fold_code_point(c);
        out.folded += piece;
        out.origin.insert(out.origin.end(), piece.size(), static_cast<std::size_t>(start));
    }
    out.origin.push_back(src.size());
    return out;
}

std::string fold_key(std::string_view text) { return fold_with_offsets(text).folded; }

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t token_start = -1;
    auto flush = [&](int32_t end) {
        if (token_start < 0) return;
        const auto begin = static_cast<std::size_t>(token_start);
        const auto stop = static_cast<std::size_t>(end);
        tokens.push_back({nfc(to_lower(text.substr(begin, stop - begin))), begin, stop});
        token_start = -1;
    };
    for (int32_t i = 0; i < length;) {
        const int32_t start = i;
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        if (is_separator(c)) {
            flush(start);
        } else if (token_start < 0) {
            token_start = start;
        }
    }
    flush(length);
    return tokens;
}

std::string trim(std::string_view text) {
    const auto* ws = " \t\r\n\f\v";
    const auto first = text.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(ws);
    return std::string(text.substr(first, last - first + 1));
}

std::string normalize_space(std::string_view text) {
    std::string out;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    bool pending_space = false;
    for (int32_t i = 0; i < length;) {
        const int32_t start = i;
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        if (c >= 0 && u_isUWhiteSpace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out.append(text.substr(start, i - start));
    }
    return out;
}

bool word_char_before(std::string_view text, std::size_t offset) {
    if (offset == 0 || offset > text.size()) return false;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    auto i = static_cast<int32_t>(offset);
    UChar32 c;
    U8_PREV(bytes, 0, i, c);
    return is_word(c);
}

bool word_char_after(std::string_view text, std::size_t offset) {
    if (offset >= text.size()) return false;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    auto i = static_cast<int32_t>(offset);
    UChar32 c;
    U8_NEXT(bytes, i, static_cast<int32_t>(text.size()), c);
    return is_word(c);
}

}  // namespace vidsearch::unicode
