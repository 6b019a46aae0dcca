#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tqa/table.hpp"

namespace tqa {

enum class Aggregation : uint8_t { none, max, min, count, sum, avg };
enum class Comparator : uint8_t { eq, gt, lt };

struct Condition {
    int column = 0;
    Comparator comparator = Comparator::eq;
    std::string value; // normalized text
};

struct SourceQuery {
    int select_column = 0;
    Aggregation aggregation = Aggregation::none;
    std::vector<Condition> conditions;
};

// One question joined to its table, straight out of the source files.
struct SourceRecord {
    Table table;
    std::string question;
    SourceQuery query;
};

// A supervised example: the answer is one cell, indexed row-major.
struct Example {
    Table table;
    std::string question;
    size_t answer_index = 0;
    std::string answer_text;
};

struct IngestStats {
    size_t total = 0;
    size_t rejected_filter = 0;  // multi-condition or aggregated queries
    size_t rejected_resolve = 0; // no unique matching cell
    size_t accepted = 0;
};

// Reads the two source streams (tables, then queries; one JSON object per
// line) and joins queries to tables. Malformed lines and dangling table
// references raise DataError naming the stream and line number. Output
// preserves query order.
std::vector<SourceRecord> parse_wikisql(std::istream& tables, const std::string& tables_name,
                                        std::istream& queries, const std::string& queries_name);

// Keeps exactly the queries a cell-pointer model can answer: one condition,
// no aggregation.
bool filter_single_condition(const SourceQuery& query);

// Applies the single condition to the table. Returns the row-major index and
// text of the selected cell when exactly one row matches; nullopt otherwise.
// GT/LT compare numerically and bail out (nullopt) if the condition value or
// any scanned cell fails to parse as a number.
std::optional<std::pair<size_t, std::string>> resolve_answer_cell(const Table& table,
                                                                  const SourceQuery& query);

std::pair<std::vector<Example>, IngestStats> build_dataset(const std::vector<SourceRecord>& records);

// One variant of the example with rows shuffled by the seed and the answer
// index moved along with its row.
Example shuffle_rows_augment(const Example& example, uint64_t permutation_seed);

// Originals in order, then `copies` row-shuffled variants per example
// (grouped by source example). Deterministic in `seed`.
std::vector<Example> augment_corpus(const std::vector<Example>& examples, size_t copies,
                                    uint64_t seed);

// Dataset JSONL: one object per line with keys table_id, headers, rows,
// question, answer_index, answer_text.
void write_dataset(std::ostream& out, const std::vector<Example>& examples);
std::vector<Example> read_dataset(std::istream& in, const std::string& name);

void write_stats(std::ostream& out, const IngestStats& stats);

} // namespace tqa
