#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tqa/ingest.hpp"
#include "tqa/table.hpp"
#include "tqa/text.hpp"

namespace tqa {

enum class ItemKind : uint8_t { cls, header, cell, sep, qword };

// One sequence position. Headers and cells carry a bag of token ids (their
// tokenized text); [CLS]/[SEP]/question words carry exactly one id.
struct InputItem {
    ItemKind kind;
    int32_t index; // header: column j; cell: row-major cell k; qword: word position; else 0
    std::vector<int32_t> token_ids;
};

struct EncodedInput {
    std::vector<InputItem> items;
    std::vector<int32_t> position_ids; // 0..len-1
    std::vector<int32_t> segment_ids;  // 0 through the first [SEP], then 1
    std::vector<int32_t> cell_positions; // cell k -> its sequence position

    size_t length() const { return items.size(); }
};

// Layout: [CLS], one item per header, one item per cell in row-major order,
// [SEP], one item per question word, [SEP]. Empty texts encode as a single
// [UNK]. Returns nullopt when the sequence would exceed max_len.
std::optional<EncodedInput> encode_table_question(const Table& table, const std::string& question,
                                                  const Vocab& vocab, size_t max_len);

inline std::optional<EncodedInput> encode_example(const Example& example, const Vocab& vocab,
                                                  size_t max_len) {
    return encode_table_question(example.table, example.question, vocab, max_len);
}

// Sequence position of the answer cell; throws if the cell index is missing.
size_t target_position(const EncodedInput& encoded, size_t answer_index);

// Vocabulary over every question, header, and cell text in the corpus.
Vocab build_vocab(const std::vector<Example>& examples, size_t min_freq);

} // namespace tqa
