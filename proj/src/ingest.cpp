#include "tqa/ingest.hpp"

#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "tqa/errors.hpp"
#include "tqa/rng.hpp"

namespace tqa {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& name, size_t line, const std::string& what) {
    throw DataError(name + ":" + std::to_string(line) + ": " + what);
}

json parse_line(const std::string& text, const std::string& name, size_t line) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(name, line, std::string("invalid JSON: ") + e.what());
    }
}

// WikiSQL stores numeric cells and condition values as JSON numbers; their
// text form is the JSON serialization of that number.
std::string scalar_to_text(const json& v, const std::string& name, size_t line,
                           const char* what) {
    switch (v.type()) {
    case json::value_t::string:
        return v.get<std::string>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
    case json::value_t::number_float:
    case json::value_t::boolean:
        return v.dump();
    case json::value_t::null:
        return "";
    default:
        fail(name, line, std::string(what) + " must be a JSON scalar, got " + v.dump());
    }
}

Aggregation aggregation_from_code(int code, const std::string& name, size_t line) {
    switch (code) {
    case 0: return Aggregation::none;
    case 1: return Aggregation::max;
    case 2: return Aggregation::min;
    case 3: return Aggregation::count;
    case 4: return Aggregation::sum;
    case 5: return Aggregation::avg;
    default: fail(name, line, "unknown aggregation code " + std::to_string(code));
    }
}

Comparator comparator_from_code(int code, const std::string& name, size_t line) {
    switch (code) {
    case 0: return Comparator::eq;
    case 1: return Comparator::gt;
    case 2: return Comparator::lt;
    default: fail(name, line, "unknown comparator code " + std::to_string(code));
    }
}

const json& require(const json& obj, const char* key, const std::string& name, size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(name, line, std::string("missing key '") + key + "'");
    return *it;
}

} // namespace

std::vector<SourceRecord> parse_wikisql(std::istream& tables, const std::string& tables_name,
                                        std::istream& queries, const std::string& queries_name) {
    std::unordered_map<std::string, Table> by_id;
    std::string line;
    size_t line_no = 0;
    while (std::getline(tables, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(line, tables_name, line_no);
        if (!j.is_object()) fail(tables_name, line_no, "expected a JSON object");
        Table t;
        t.table_id = require(j, "id", tables_name, line_no).get<std::string>();
        for (const auto& h : require(j, "header", tables_name, line_no)) {
            t.headers.push_back(normalize_text(scalar_to_text(h, tables_name, line_no, "header")));
        }
        for (const auto& row : require(j, "rows", tables_name, line_no)) {
            std::vector<std::string> cells;
            for (const auto& c : row) {
                cells.push_back(normalize_text(scalar_to_text(c, tables_name, line_no, "cell")));
            }
            t.rows.push_back(std::move(cells));
        }
        t.validate(tables_name + ":" + std::to_string(line_no) + ": table '" + t.table_id + "'");
        if (!by_id.emplace(t.table_id, std::move(t)).second) {
            fail(tables_name, line_no, "duplicate table id '" + j.at("id").get<std::string>() + "'");
        }
    }

    std::vector<SourceRecord> records;
    line_no = 0;
    while (std::getline(queries, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(line, queries_name, line_no);
        if (!j.is_object()) fail(queries_name, line_no, "expected a JSON object");
        const std::string table_id = require(j, "table_id", queries_name, line_no).get<std::string>();
        auto table_it = by_id.find(table_id);
        if (table_it == by_id.end()) {
            fail(queries_name, line_no, "query references unknown table '" + table_id + "'");
        }
        SourceRecord rec;
        rec.table = table_it->second;
        rec.question =
            normalize_text(require(j, "question", queries_name, line_no).get<std::string>());
        const json& sql = require(j, "sql", queries_name, line_no);
        rec.query.select_column = require(sql, "sel", queries_name, line_no).get<int>();
        rec.query.aggregation = aggregation_from_code(
            require(sql, "agg", queries_name, line_no).get<int>(), queries_name, line_no);
        for (const auto& cond : require(sql, "conds", queries_name, line_no)) {
            if (!cond.is_array() || cond.size() != 3) {
                fail(queries_name, line_no, "condition must be [column, comparator, value]");
            }
            Condition c;
            c.column = cond[0].get<int>();
            c.comparator = comparator_from_code(cond[1].get<int>(), queries_name, line_no);
            c.value = normalize_text(scalar_to_text(cond[2], queries_name, line_no, "condition value"));
            if (c.column < 0 || static_cast<size_t>(c.column) >= rec.table.n_cols()) {
                fail(queries_name, line_no,
                     "condition column " + std::to_string(c.column) + " out of range for table '" +
                         table_id + "' with " + std::to_string(rec.table.n_cols()) + " columns");
            }
            rec.query.conditions.push_back(std::move(c));
        }
        if (rec.query.select_column < 0 ||
            static_cast<size_t>(rec.query.select_column) >= rec.table.n_cols()) {
            fail(queries_name, line_no,
                 "select column " + std::to_string(rec.query.select_column) +
                     " out of range for table '" + table_id + "' with " +
                     std::to_string(rec.table.n_cols()) + " columns");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

bool filter_single_condition(const SourceQuery& query) {
    return query.conditions.size() == 1 && query.aggregation == Aggregation::none;
}

std::optional<std::pair<size_t, std::string>> resolve_answer_cell(const Table& table,
                                                                  const SourceQuery& query) {
    if (!filter_single_condition(query)) return std::nullopt;
    const Condition& cond = query.conditions[0];
    const size_t col = static_cast<size_t>(cond.column);
    const size_t sel = static_cast<size_t>(query.select_column);
    if (col >= table.n_cols() || sel >= table.n_cols()) return std::nullopt;

    std::optional<double> cond_number;
    if (cond.comparator != Comparator::eq) {
        cond_number = parse_number(cond.value);
        if (!cond_number) return std::nullopt; // numeric comparison against non-number
    }

    size_t matches = 0;
    size_t match_row = 0;
    for (size_t r = 0; r < table.n_rows(); ++r) {
        const std::string& cell = table.rows[r][col];
        bool hit = false;
        if (cond.comparator == Comparator::eq) {
            hit = cell == cond.value;
        } else {
            const std::optional<double> cell_number = parse_number(cell);
            if (!cell_number) return std::nullopt; // column not numeric throughout
            hit = cond.comparator == Comparator::gt ? *cell_number > *cond_number
                                                    : *cell_number < *cond_number;
        }
        if (hit) {
            ++matches;
            match_row = r;
        }
    }
    if (matches != 1) return std::nullopt;
    const size_t index = match_row * table.n_cols() + sel;
    return std::make_pair(index, table.rows[match_row][sel]);
}

std::pair<std::vector<Example>, IngestStats> build_dataset(
    const std::vector<SourceRecord>& records) {
    std::vector<Example> out;
    IngestStats stats;
    stats.total = records.size();
    for (const SourceRecord& rec : records) {
        if (!filter_single_condition(rec.query)) {
            ++stats.rejected_filter;
            continue;
        }
        auto resolved = resolve_answer_cell(rec.table, rec.query);
        if (!resolved) {
            ++stats.rejected_resolve;
            continue;
        }
        ++stats.accepted;
        Example ex;
        ex.table = rec.table;
        ex.question = rec.question;
        ex.answer_index = resolved->first;
        ex.answer_text = resolved->second;
        out.push_back(std::move(ex));
    }
    return {std::move(out), stats};
}

Example shuffle_rows_augment(const Example& example, uint64_t permutation_seed) {
    const size_t r = example.table.n_rows();
    const size_t m = example.table.n_cols();
    Rng rng(permutation_seed);
    const std::vector<size_t> perm = rng.permutation(r);

    Example out;
    out.table.table_id = example.table.table_id;
    out.table.headers = example.table.headers;
    out.table.rows.resize(r);
    const size_t old_row = example.answer_index / m;
    size_t new_row = 0;
    for (size_t p = 0; p < r; ++p) {
        out.table.rows[p] = example.table.rows[perm[p]];
        if (perm[p] == old_row) new_row = p;
    }
    out.question = example.question;
    out.answer_index = new_row * m + example.answer_index % m;
    out.answer_text = example.answer_text;
    return out;
}

std::vector<Example> augment_corpus(const std::vector<Example>& examples, size_t copies,
                                    uint64_t seed) {
    std::vector<Example> out = examples;
    out.reserve(examples.size() * (copies + 1));
    for (size_t i = 0; i < examples.size(); ++i) {
        for (size_t c = 1; c <= copies; ++c) {
            out.push_back(shuffle_rows_augment(examples[i], mix_seed(seed, i, c)));
        }
    }
    return out;
}

void write_dataset(std::ostream& out, const std::vector<Example>& examples) {
    for (const Example& ex : examples) {
        ordered_json j;
        j["table_id"] = ex.table.table_id;
        j["headers"] = ex.table.headers;
        j["rows"] = ex.table.rows;
        j["question"] = ex.question;
        j["answer_index"] = ex.answer_index;
        j["answer_text"] = ex.answer_text;
        out << j.dump() << '\n';
    }
}

std::vector<Example> read_dataset(std::istream& in, const std::string& name) {
    std::vector<Example> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(line, name, line_no);
        Example ex;
        try {
            ex.table.table_id = j.at("table_id").get<std::string>();
            ex.table.headers = j.at("headers").get<std::vector<std::string>>();
            ex.table.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
            ex.question = j.at("question").get<std::string>();
            ex.answer_index = j.at("answer_index").get<size_t>();
            ex.answer_text = j.at("answer_text").get<std::string>();
        } catch (const json::exception& e) {
            fail(name, line_no, std::string("bad example record: ") + e.what());
        }
        ex.table.validate(name + ":" + std::to_string(line_no));
        if (ex.answer_index >= ex.table.n_cells()) {
            fail(name, line_no,
                 "answer_index " + std::to_string(ex.answer_index) + " out of range for " +
                     std::to_string(ex.table.n_cells()) + " cells");
        }
        if (ex.table.cell(ex.answer_index) != ex.answer_text) {
            fail(name, line_no, "answer_text does not match the cell at answer_index");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

void write_stats(std::ostream& out, const IngestStats& stats) {
    ordered_json j;
    j["total"] = stats.total;
    j["rejected_filter"] = stats.rejected_filter;
    j["rejected_resolve"] = stats.rejected_resolve;
    j["accepted"] = stats.accepted;
    out << j.dump(2) << '\n';
}

} // namespace tqa
