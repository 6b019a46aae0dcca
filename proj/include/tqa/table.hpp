#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tqa {

// A rectangular table: rows[i].size() == headers.size() for every i, and both
// dimensions are at least 1. Cell and header texts are stored normalized
// (NFC, surrounding whitespace removed).
struct Table {
    std::string table_id;
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;

    size_t n_cols() const { return headers.size(); }
    size_t n_rows() const { return rows.size(); }
    size_t n_cells() const { return n_rows() * n_cols(); }

    const std::string& cell(size_t index) const { return rows[index / n_cols()][index % n_cols()]; }

    void validate(const std::string& context) const;
};

// Unicode NFC normalization plus removal of surrounding ASCII whitespace.
// Invalid UTF-8 is left as-is (still trimmed).
std::string normalize_text(std::string_view s);

// Full-string numeric parse of the trimmed input: optional sign, decimal
// digits, optional fraction and exponent. Anything else (including empty,
// partial parses, hex) yields nullopt.
std::optional<double> parse_number(std::string_view s);

} // namespace tqa
