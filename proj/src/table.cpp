#include "tqa/table.hpp"

#include <charconv>
#include <cstring>

#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include "tqa/errors.hpp"

namespace tqa {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && is_ascii_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_ascii_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool pure_ascii(std::string_view s) {
    for (unsigned char c : s) {
        if (c >= 128) return false;
    }
    return true;
}

std::optional<std::string> nfc(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const UNormalizer2* norm = unorm2_getNFCInstance(&status);
    if (U_FAILURE(status)) return std::nullopt;

    std::vector<UChar> u16(s.size() + 1);
    int32_t u16_len = 0;
    status = U_ZERO_ERROR;
    u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16_len, s.data(),
                  static_cast<int32_t>(s.size()), &status);
    if (U_FAILURE(status)) return std::nullopt;

    std::vector<UChar> out(static_cast<size_t>(u16_len) * 3 + 16);
    status = U_ZERO_ERROR;
    const int32_t out_len =
        unorm2_normalize(norm, u16.data(), u16_len, out.data(), static_cast<int32_t>(out.size()), &status);
    if (U_FAILURE(status)) return std::nullopt;

    std::string result(static_cast<size_t>(out_len) * 4 + 16, '\0');
    int32_t result_len = 0;
    status = U_ZERO_ERROR;
    u_strToUTF8(result.data(), static_cast<int32_t>(result.size()), &result_len, out.data(),
                out_len, &status);
    if (U_FAILURE(status)) return std::nullopt;
    result.resize(static_cast<size_t>(result_len));
    return result;
}

} // namespace

std::string normalize_text(std::string_view s) {
    const std::string_view t = trim(s);
    if (pure_ascii(t)) return std::string(t); // ASCII is NFC already
    if (auto n = nfc(t)) return std::string(trim(*n));
    return std::string(t);
}

std::optional<double> parse_number(std::string_view s) {
    std::string_view t = trim(s);
    if (t.empty()) return std::nullopt;
    if (t.front() == '+') t.remove_prefix(1); // from_chars takes '-' but not '+'
    if (t.empty()) return std::nullopt;
    // Restrict to plain decimal syntax: from_chars would also take inf/nan.
    for (size_t i = 0; i < t.size(); ++i) {
        const char c = t[i];
        const bool ok = (c >= '0' && c <= '9') || c == '.' || c == 'e' || c == 'E' ||
                        ((c == '-' || c == '+') && i > 0 &&
                         (t[i - 1] == 'e' || t[i - 1] == 'E')) ||
                        (c == '-' && i == 0);
        if (!ok) return std::nullopt;
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return value;
}

void Table::validate(const std::string& context) const {
    if (headers.empty()) throw DataError(context + ": table has no columns");
    if (rows.empty()) throw DataError(context + ": table has no rows");
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != headers.size()) {
            throw DataError(context + ": row " + std::to_string(i) + " has " +
                            std::to_string(rows[i].size()) + " cells, expected " +
                            std::to_string(headers.size()));
        }
    }
}

} // namespace tqa
