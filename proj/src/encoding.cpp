#include "tqa/encoding.hpp"

#include "tqa/errors.hpp"

namespace tqa {

namespace {

std::vector<int32_t> bag_of(const std::string& text, const Vocab& vocab) {
    std::vector<int32_t> ids = vocab.encode(tokenize(text));
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    return ids;
}

} // namespace

std::optional<EncodedInput> encode_table_question(const Table& table, const std::string& question,
                                                  const Vocab& vocab, size_t max_len) {
    table.validate("encode: table '" + table.table_id + "'");
    const size_t m = table.n_cols();
    const size_t r = table.n_rows();
    const std::vector<std::string> qwords = tokenize(question);
    const size_t len = 1 + m + r * m + 1 + qwords.size() + 1;
    if (len > max_len) return std::nullopt;

    EncodedInput enc;
    enc.items.reserve(len);
    enc.cell_positions.resize(r * m);

    enc.items.push_back({ItemKind::cls, 0, {Vocab::kCls}});
    for (size_t j = 0; j < m; ++j) {
        enc.items.push_back({ItemKind::header, static_cast<int32_t>(j), bag_of(table.headers[j], vocab)});
    }
    for (size_t k = 0; k < r * m; ++k) {
        enc.cell_positions[k] = static_cast<int32_t>(enc.items.size());
        enc.items.push_back({ItemKind::cell, static_cast<int32_t>(k), bag_of(table.cell(k), vocab)});
    }
    const size_t first_sep = enc.items.size();
    enc.items.push_back({ItemKind::sep, 0, {Vocab::kSep}});
    for (size_t w = 0; w < qwords.size(); ++w) {
        enc.items.push_back({ItemKind::qword, static_cast<int32_t>(w), {vocab.id(qwords[w])}});
    }
    enc.items.push_back({ItemKind::sep, 1, {Vocab::kSep}});

    enc.position_ids.resize(len);
    enc.segment_ids.resize(len);
    for (size_t i = 0; i < len; ++i) {
        enc.position_ids[i] = static_cast<int32_t>(i);
        enc.segment_ids[i] = i <= first_sep ? 0 : 1;
    }
    return enc;
}

size_t target_position(const EncodedInput& encoded, size_t answer_index) {
    if (answer_index >= encoded.cell_positions.size()) {
        throw DataError("target_position: answer cell " + std::to_string(answer_index) +
                        " not present in an encoding with " +
                        std::to_string(encoded.cell_positions.size()) + " cells");
    }
    return static_cast<size_t>(encoded.cell_positions[answer_index]);
}

Vocab build_vocab(const std::vector<Example>& examples, size_t min_freq) {
    std::vector<std::vector<std::string>> seqs;
    for (const Example& ex : examples) {
        seqs.push_back(tokenize(ex.question));
        for (const std::string& h : ex.table.headers) seqs.push_back(tokenize(h));
        for (const auto& row : ex.table.rows) {
            for (const std::string& c : row) seqs.push_back(tokenize(c));
        }
    }
    return Vocab::build(seqs, min_freq);
}

} // namespace tqa
