#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tqa/ingest.hpp"
#include "tqa/model.hpp"
#include "tqa/text.hpp"
#include "tqa/training.hpp"

namespace tqa {

struct Prediction {
    size_t example = 0;   // index into the evaluated dataset
    size_t cell = 0;      // predicted cell, row-major
    bool index_match = false;
    bool word_match = false; // predicted text equals gold text (normalized)
};

struct EvalReport {
    size_t n_examples = 0;
    size_t n_index_correct = 0;
    size_t n_word_correct = 0;
    size_t n_skipped = 0; // did not fit max_len
    double index_accuracy = 0.0;
    double word_accuracy = 0.0;
    std::vector<Prediction> predictions;
};

// Scores predicted cells against gold cells. Word accuracy credits any cell
// whose normalized text equals the gold answer text; index accuracy requires
// the exact cell. An empty prediction set is an error, not 0.
EvalReport word_match_accuracy(const std::vector<Example>& examples,
                               const std::vector<std::pair<size_t, size_t>>& predicted_cells);

// Runs the model over a dataset and scores it.
EvalReport evaluate_model(const std::vector<Example>& examples, const Params& params,
                          const ModelConfig& cfg, const Vocab& vocab);

struct SynthConfig {
    size_t n_tables = 100;
    size_t n_rows = 4;
    size_t n_cols = 3;
    size_t word_pool = 120;        // distinct value words to draw from
    uint64_t seed = 0;
    double duplicate_value_rate = 0.1; // chance a table repeats one value text elsewhere
    double key_decoy_rate = 0.0;       // chance the queried key also appears in a non-key column
};

// Key/value lookup tables with questions of the form
// "what is <header> where <key header> is <key>". Column 0 holds distinct
// keys; the answer is the queried column in the key's row. Deterministic in
// the seed. key_decoy_rate plants the queried key text in another column of a
// different row, which only position information can disambiguate from.
std::vector<Example> generate_synthetic(const SynthConfig& cfg);

struct DatasetSpec {
    std::string path;   // dataset JSONL; empty selects synthetic generation
    SynthConfig synth;
    size_t augment_copies = 0;
    uint64_t augment_seed = 0;
    size_t take = 0;    // keep only the first `take` examples when nonzero
};

struct ExperimentRun {
    std::string name;
    DatasetSpec data;
    ModelConfig model;
    TrainConfig train;
    size_t vocab_min_freq = 1;
};

struct ExperimentManifest {
    DatasetSpec test_data;
    std::vector<ExperimentRun> runs;
};

struct ExperimentRow {
    std::string name;
    size_t train_examples = 0;
    double test_word_accuracy = 0.0;
    double test_index_accuracy = 0.0;
    double final_train_accuracy = 0.0;
};

struct ExperimentResults {
    std::vector<ExperimentRow> rows;
};

std::vector<Example> load_dataset_spec(const DatasetSpec& spec);

// Trains each run on its own data and vocabulary, evaluates all runs on the
// shared test set, and reports one row per run. Deterministic given the
// manifest seeds.
ExperimentResults run_experiment(const ExperimentManifest& manifest, std::ostream* progress);

ExperimentManifest parse_manifest(std::istream& in, const std::string& name);
void write_results_table(std::ostream& out, const ExperimentResults& results);
void write_results_jsonl(std::ostream& out, const ExperimentResults& results);

} // namespace tqa
