#include "tqa/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tqa/encoding.hpp"
#include "tqa/errors.hpp"
#include "tqa/rng.hpp"

namespace tqa {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

} // namespace

EvalReport word_match_accuracy(const std::vector<Example>& examples,
                               const std::vector<std::pair<size_t, size_t>>& predicted_cells) {
    if (predicted_cells.empty()) {
        throw DataError("word_match_accuracy: no predictions to score");
    }
    EvalReport report;
    for (const auto& [ei, cell] : predicted_cells) {
        if (ei >= examples.size()) {
            throw DataError("word_match_accuracy: example index " + std::to_string(ei) +
                            " out of range");
        }
        const Example& ex = examples[ei];
        if (cell >= ex.table.n_cells()) {
            throw DataError("word_match_accuracy: predicted cell " + std::to_string(cell) +
                            " out of range for example " + std::to_string(ei));
        }
        Prediction p;
        p.example = ei;
        p.cell = cell;
        p.index_match = cell == ex.answer_index;
        p.word_match = normalize_text(ex.table.cell(cell)) == normalize_text(ex.answer_text);
        report.n_index_correct += p.index_match ? 1 : 0;
        report.n_word_correct += p.word_match ? 1 : 0;
        report.predictions.push_back(p);
    }
    report.n_examples = predicted_cells.size();
    report.index_accuracy =
        static_cast<double>(report.n_index_correct) / static_cast<double>(report.n_examples);
    report.word_accuracy =
        static_cast<double>(report.n_word_correct) / static_cast<double>(report.n_examples);
    return report;
}

EvalReport evaluate_model(const std::vector<Example>& examples, const Params& params,
                          const ModelConfig& cfg, const Vocab& vocab) {
    std::vector<std::pair<size_t, size_t>> predicted;
    size_t skipped = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        const auto enc = encode_example(examples[i], vocab, static_cast<size_t>(cfg.max_len));
        if (!enc) {
            ++skipped;
            continue;
        }
        const PointerOutput<float> out = pointer_forward(params, cfg, *enc);
        predicted.emplace_back(i, out.best_cell);
    }
    if (predicted.empty()) {
        throw DataError("evaluate_model: every example exceeded max_len");
    }
    EvalReport report = word_match_accuracy(examples, predicted);
    report.n_skipped = skipped;
    return report;
}

namespace {

// Pronounceable, distinct, single-token words: values are two syllables,
// headers three, so the two pools never collide.
constexpr const char* kConsonants = "bcdfghjklmnpqrstvwz";
constexpr const char* kVowels = "aeiou";
constexpr size_t kSyllables = 19 * 5;

std::string syllable(size_t k) {
    std::string s;
    s.push_back(kConsonants[k / 5]);
    s.push_back(kVowels[k % 5]);
    return s;
}

std::string value_word(size_t i) { return syllable(i % kSyllables) + syllable((i / kSyllables) % kSyllables); }

std::string header_word(size_t j) {
    return syllable(j % kSyllables) + syllable((j / kSyllables) % kSyllables) + syllable(j % kSyllables);
}

} // namespace

std::vector<Example> generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_rows < 2 || cfg.n_cols < 2) {
        throw DataError("generate_synthetic: need at least 2 rows and 2 columns");
    }
    if (cfg.word_pool < cfg.n_rows) {
        throw DataError("generate_synthetic: word pool smaller than the number of rows");
    }
    if (cfg.word_pool > kSyllables * kSyllables) {
        throw DataError("generate_synthetic: word pool exceeds the distinct-word supply");
    }
    std::vector<Example> out;
    out.reserve(cfg.n_tables);
    for (size_t t = 0; t < cfg.n_tables; ++t) {
        Rng rng(mix_seed(cfg.seed, 0x5f, t));
        Example ex;
        ex.table.table_id = "synth-" + std::to_string(t);
        for (size_t j = 0; j < cfg.n_cols; ++j) ex.table.headers.push_back(header_word(j));

        std::vector<size_t> pool_order = rng.permutation(cfg.word_pool);
        ex.table.rows.assign(cfg.n_rows, std::vector<std::string>(cfg.n_cols));
        for (size_t r = 0; r < cfg.n_rows; ++r) {
            ex.table.rows[r][0] = value_word(pool_order[r]); // distinct keys
            for (size_t c = 1; c < cfg.n_cols; ++c) {
                ex.table.rows[r][c] = value_word(rng.below(cfg.word_pool));
            }
        }
        const size_t n_value_cells = cfg.n_rows * (cfg.n_cols - 1);
        if (rng.uniform() < cfg.duplicate_value_rate && n_value_cells >= 2) {
            // Flat indices over non-key cells; the destination draw skips the
            // source so the copy always lands somewhere else and the table is
            // guaranteed to contain a repeated value.
            const size_t src = rng.below(n_value_cells);
            size_t dst = rng.below(n_value_cells - 1);
            if (dst >= src) ++dst;
            ex.table.rows[dst / (cfg.n_cols - 1)][1 + dst % (cfg.n_cols - 1)] =
                ex.table.rows[src / (cfg.n_cols - 1)][1 + src % (cfg.n_cols - 1)];
        }

        const size_t key_row = rng.below(cfg.n_rows);
        const size_t target_col = 1 + rng.below(cfg.n_cols - 1);
        if (rng.uniform() < cfg.key_decoy_rate) {
            size_t decoy_row = rng.below(cfg.n_rows - 1);
            if (decoy_row >= key_row) ++decoy_row; // any row but the key's
            const size_t decoy_col = 1 + rng.below(cfg.n_cols - 1);
            ex.table.rows[decoy_row][decoy_col] = ex.table.rows[key_row][0];
        }

        ex.question = "what is " + ex.table.headers[target_col] + " where " + ex.table.headers[0] +
                      " is " + ex.table.rows[key_row][0];
        ex.answer_index = key_row * cfg.n_cols + target_col;
        ex.answer_text = ex.table.rows[key_row][target_col];
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Example> load_dataset_spec(const DatasetSpec& spec) {
    std::vector<Example> data;
    if (!spec.path.empty()) {
        std::ifstream in(spec.path);
        if (!in) throw DataError(spec.path + ": cannot open dataset");
        data = read_dataset(in, spec.path);
    } else {
        data = generate_synthetic(spec.synth);
    }
    if (spec.take > 0 && spec.take < data.size()) data.resize(spec.take);
    if (spec.augment_copies > 0) data = augment_corpus(data, spec.augment_copies, spec.augment_seed);
    return data;
}

ExperimentResults run_experiment(const ExperimentManifest& manifest, std::ostream* progress) {
    const std::vector<Example> test_set = load_dataset_spec(manifest.test_data);
    if (test_set.empty()) throw DataError("experiment: empty test set");

    ExperimentResults results;
    for (const ExperimentRun& run : manifest.runs) {
        const std::vector<Example> train_set = load_dataset_spec(run.data);
        if (train_set.empty()) throw DataError("experiment: run '" + run.name + "' has no data");
        const Vocab vocab = build_vocab(train_set, run.vocab_min_freq);
        ModelConfig model_cfg = run.model;
        model_cfg.vocab_size = static_cast<int>(vocab.size());
        if (progress) {
            *progress << "run " << run.name << ": " << train_set.size() << " examples, vocab "
                      << vocab.size() << ", " << run.train.epochs << " epochs" << std::endl;
        }
        const TrainResult trained = train(train_set, vocab, model_cfg, run.train);
        const EvalReport report = evaluate_model(test_set, trained.params, model_cfg, vocab);

        ExperimentRow row;
        row.name = run.name;
        row.train_examples = train_set.size();
        row.test_word_accuracy = report.word_accuracy;
        row.test_index_accuracy = report.index_accuracy;
        row.final_train_accuracy = trained.log.empty() ? 0.0 : trained.log.back().train_accuracy;
        if (progress) {
            *progress << "run " << run.name << ": test word accuracy " << std::fixed
                      << std::setprecision(4) << row.test_word_accuracy << ", index accuracy "
                      << row.test_index_accuracy << std::endl;
        }
        results.rows.push_back(std::move(row));
    }
    return results;
}

namespace {

DatasetSpec parse_dataset_spec(const json& j, const std::string& where) {
    DatasetSpec spec;
    if (!j.is_object()) throw DataError(where + ": dataset spec must be an object");
    spec.path = j.value("path", std::string());
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        spec.synth.n_tables = s.value("n_tables", spec.synth.n_tables);
        spec.synth.n_rows = s.value("rows", spec.synth.n_rows);
        spec.synth.n_cols = s.value("cols", spec.synth.n_cols);
        spec.synth.word_pool = s.value("word_pool", spec.synth.word_pool);
        spec.synth.seed = s.value("seed", spec.synth.seed);
        spec.synth.duplicate_value_rate =
            s.value("duplicate_value_rate", spec.synth.duplicate_value_rate);
        spec.synth.key_decoy_rate = s.value("key_decoy_rate", spec.synth.key_decoy_rate);
    } else if (spec.path.empty()) {
        throw DataError(where + ": dataset spec needs either 'path' or 'synthetic'");
    }
    spec.augment_copies = j.value("augment_copies", spec.augment_copies);
    spec.augment_seed = j.value("augment_seed", spec.augment_seed);
    spec.take = j.value("take", spec.take);
    return spec;
}

ModelConfig parse_model_config(const json& j) {
    ModelConfig cfg;
    cfg.d_model = j.value("d_model", cfg.d_model);
    cfg.n_layers = j.value("n_layers", cfg.n_layers);
    cfg.n_heads = j.value("n_heads", cfg.n_heads);
    cfg.d_ff = j.value("d_ff", cfg.d_ff);
    cfg.max_len = j.value("max_len", cfg.max_len);
    cfg.use_position_embeddings = j.value("use_position_embeddings", cfg.use_position_embeddings);
    cfg.use_segment_embeddings = j.value("use_segment_embeddings", cfg.use_segment_embeddings);
    return cfg;
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.freeze_first_k = j.value("freeze_first_k", cfg.freeze_first_k);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.record_wallclock = j.value("record_wallclock", cfg.record_wallclock);
    return cfg;
}

} // namespace

ExperimentManifest parse_manifest(std::istream& in, const std::string& name) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(name + ": invalid JSON: " + e.what());
    }
    ExperimentManifest manifest;
    if (!j.contains("test_data")) throw DataError(name + ": manifest needs 'test_data'");
    manifest.test_data = parse_dataset_spec(j.at("test_data"), name + ": test_data");
    if (!j.contains("runs") || !j.at("runs").is_array() || j.at("runs").empty()) {
        throw DataError(name + ": manifest needs a non-empty 'runs' array");
    }
    for (const json& r : j.at("runs")) {
        ExperimentRun run;
        run.name = r.value("name", "run" + std::to_string(manifest.runs.size()));
        if (!r.contains("data")) throw DataError(name + ": run '" + run.name + "' needs 'data'");
        run.data = parse_dataset_spec(r.at("data"), name + ": run '" + run.name + "'");
        run.model = parse_model_config(r.value("model", json::object()));
        run.train = parse_train_config(r.value("train", json::object()));
        run.vocab_min_freq = r.value("vocab_min_freq", run.vocab_min_freq);
        manifest.runs.push_back(std::move(run));
    }
    return manifest;
}

void write_results_table(std::ostream& out, const ExperimentResults& results) {
    size_t name_w = 4;
    for (const auto& row : results.rows) name_w = std::max(name_w, row.name.size());
    out << std::left << std::setw(static_cast<int>(name_w + 2)) << "run" << std::right
        << std::setw(10) << "examples" << std::setw(12) << "word_acc" << std::setw(12)
        << "index_acc" << std::setw(12) << "train_acc" << '\n';
    for (const auto& row : results.rows) {
        out << std::left << std::setw(static_cast<int>(name_w + 2)) << row.name << std::right
            << std::setw(10) << row.train_examples << std::fixed << std::setprecision(4)
            << std::setw(12) << row.test_word_accuracy << std::setw(12)
            << row.test_index_accuracy << std::setw(12) << row.final_train_accuracy << '\n';
    }
}

void write_results_jsonl(std::ostream& out, const ExperimentResults& results) {
    for (const auto& row : results.rows) {
        ordered_json j;
        j["run"] = row.name;
        j["train_examples"] = row.train_examples;
        j["test_word_accuracy"] = row.test_word_accuracy;
        j["test_index_accuracy"] = row.test_index_accuracy;
        j["final_train_accuracy"] = row.final_train_accuracy;
        out << j.dump() << '\n';
    }
}

} // namespace tqa
