#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tqa/checkpoint.hpp"
#include "tqa/encoding.hpp"
#include "tqa/errors.hpp"
#include "tqa/evaluation.hpp"
#include "tqa/ingest.hpp"
#include "tqa/kernels.hpp"
#include "tqa/model.hpp"
#include "tqa/table.hpp"
#include "tqa/text.hpp"
#include "tqa/training.hpp"

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tqa::DataError(path + ": cannot open");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw tqa::DataError(path + ": cannot open for writing");
    return out;
}

std::vector<tqa::Example> load_examples(const std::string& path) {
    auto in = open_in(path);
    return tqa::read_dataset(in, path);
}

tqa::Vocab load_vocab(const std::string& path) {
    auto in = open_in(path);
    return tqa::Vocab::load(in, path);
}

std::string scalar_text(const json& v, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number() || v.is_boolean()) return v.dump();
    if (v.is_null()) return "";
    throw tqa::DataError(where + ": cell must be a JSON scalar, got " + v.dump());
}

struct IngestArgs {
    std::string tables, queries, out, stats;
};

void run_ingest(const IngestArgs& a) {
    auto tables_in = open_in(a.tables);
    auto queries_in = open_in(a.queries);
    const auto records = tqa::parse_wikisql(tables_in, a.tables, queries_in, a.queries);
    auto [examples, stats] = tqa::build_dataset(records);
    auto out = open_out(a.out);
    tqa::write_dataset(out, examples);
    if (!a.stats.empty()) {
        auto stats_out = open_out(a.stats);
        tqa::write_stats(stats_out, stats);
    }
    std::cout << "queries: " << stats.total << "\n"
              << "rejected (multi-condition or aggregated): " << stats.rejected_filter << "\n"
              << "rejected (no unique answer cell): " << stats.rejected_resolve << "\n"
              << "accepted: " << stats.accepted << "\n";
}

struct SynthArgs {
    tqa::SynthConfig cfg;
    std::string out;
};

void run_synth(const SynthArgs& a) {
    const auto examples = tqa::generate_synthetic(a.cfg);
    auto out = open_out(a.out);
    tqa::write_dataset(out, examples);
    std::cout << "wrote " << examples.size() << " synthetic examples to " << a.out << "\n";
}

struct AugmentArgs {
    std::string data, out;
    size_t copies = 1;
    uint64_t seed = 0;
};

void run_augment(const AugmentArgs& a) {
    const auto examples = load_examples(a.data);
    const auto augmented = tqa::augment_corpus(examples, a.copies, a.seed);
    auto out = open_out(a.out);
    tqa::write_dataset(out, augmented);
    std::cout << "wrote " << augmented.size() << " examples (" << examples.size()
              << " originals x " << (a.copies + 1) << ")\n";
}

struct EncodeArgs {
    std::string data, vocab;
    size_t index = 0;
    size_t max_len = 256;
};

void run_encode(const EncodeArgs& a) {
    const auto examples = load_examples(a.data);
    if (a.index >= examples.size()) {
        throw tqa::DataError(a.data + ": example index " + std::to_string(a.index) +
                             " out of range (" + std::to_string(examples.size()) + " examples)");
    }
    const tqa::Vocab vocab = a.vocab.empty() ? tqa::build_vocab(examples, 1) : load_vocab(a.vocab);
    const auto enc = tqa::encode_example(examples[a.index], vocab, a.max_len);
    if (!enc) {
        std::cout << "example " << a.index << " exceeds max_len " << a.max_len << "\n";
        return;
    }
    const tqa::Example& ex = examples[a.index];
    std::cout << "question: " << ex.question << "\n";
    std::cout << std::left << std::setw(5) << "pos" << std::setw(8) << "kind" << std::setw(6)
              << "idx" << std::setw(4) << "seg" << "tokens\n";
    const char* kinds[] = {"CLS", "HEADER", "CELL", "SEP", "QWORD"};
    for (size_t i = 0; i < enc->items.size(); ++i) {
        const tqa::InputItem& item = enc->items[i];
        std::cout << std::left << std::setw(5) << i << std::setw(8)
                  << kinds[static_cast<size_t>(item.kind)] << std::setw(6) << item.index
                  << std::setw(4) << enc->segment_ids[i];
        for (size_t k = 0; k < item.token_ids.size(); ++k) {
            std::cout << (k ? " " : "") << vocab.token(item.token_ids[k]) << "("
                      << item.token_ids[k] << ")";
        }
        std::cout << "\n";
    }
    std::cout << "answer cell " << ex.answer_index << " at position "
              << tqa::target_position(*enc, ex.answer_index) << ": " << ex.answer_text << "\n";
}

struct TrainArgs {
    std::string data, out, vocab_out, metrics;
    bool save_every_epoch = false;
    bool no_wallclock = false;
    bool no_positions = false;
    bool no_segments = false;
    size_t min_freq = 1;
    tqa::ModelConfig model;
    tqa::TrainConfig train;
};

void run_train(const TrainArgs& a) {
    const auto examples = load_examples(a.data);
    if (examples.empty()) throw tqa::DataError(a.data + ": dataset is empty");
    const tqa::Vocab vocab = tqa::build_vocab(examples, a.min_freq);

    tqa::ModelConfig model_cfg = a.model;
    model_cfg.vocab_size = static_cast<int>(vocab.size());
    model_cfg.use_position_embeddings = !a.no_positions;
    model_cfg.use_segment_embeddings = !a.no_segments;
    tqa::TrainConfig train_cfg = a.train;
    train_cfg.record_wallclock = !a.no_wallclock;

    const std::string vocab_path = a.vocab_out.empty() ? a.out + ".vocab" : a.vocab_out;
    {
        auto vout = open_out(vocab_path);
        vocab.save(vout);
    }

    std::ofstream metrics_out;
    if (!a.metrics.empty()) {
        metrics_out = open_out(a.metrics);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const tqa::TrainResult result = tqa::train(
        examples, vocab, model_cfg, train_cfg,
        [&](const tqa::EpochMetrics& m, const tqa::Params& params) {
            std::cout << "epoch " << m.epoch << ": loss " << std::fixed << std::setprecision(4)
                      << m.mean_loss << ", train accuracy " << m.train_accuracy << "\n";
            if (metrics_out.is_open()) metrics_out << tqa::metrics_to_json(m) << "\n";
            if (a.save_every_epoch) {
                tqa::save_checkpoint_file(a.out, params, model_cfg, vocab.digest());
            }
        });
    tqa::save_checkpoint_file(a.out, result.params, model_cfg, vocab.digest());
    std::cout << "saved checkpoint to " << a.out << " (vocab " << vocab_path << ", "
              << result.skipped_examples << " examples skipped";
    if (!a.no_wallclock) {
        std::cout << ", "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                  << "s";
    }
    std::cout << ")\n";
}

struct EvalArgs {
    std::string data, checkpoint, vocab, out;
};

void run_eval(const EvalArgs& a) {
    const auto examples = load_examples(a.data);
    const tqa::Vocab vocab = load_vocab(a.vocab);
    const tqa::LoadedCheckpoint ckpt = tqa::load_checkpoint_file(a.checkpoint, vocab.digest());
    const tqa::EvalReport report = tqa::evaluate_model(examples, ckpt.params, ckpt.config, vocab);
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        for (const tqa::Prediction& p : report.predictions) {
            const tqa::Example& ex = examples[p.example];
            ordered_json j;
            j["example"] = p.example;
            j["predicted_cell"] = p.cell;
            j["predicted_text"] = ex.table.cell(p.cell);
            j["gold_cell"] = ex.answer_index;
            j["gold_text"] = ex.answer_text;
            j["index_match"] = p.index_match;
            j["word_match"] = p.word_match;
            out << j.dump() << "\n";
        }
    }
    std::cout << "examples: " << report.n_examples << " (skipped " << report.n_skipped << ")\n"
              << std::fixed << std::setprecision(4)
              << "word accuracy:  " << report.word_accuracy << "\n"
              << "index accuracy: " << report.index_accuracy << "\n";
}

struct AskArgs {
    std::string checkpoint, vocab, table, question;
    size_t top = 3;
};

void run_ask(const AskArgs& a) {
    const tqa::Vocab vocab = load_vocab(a.vocab);
    const tqa::LoadedCheckpoint ckpt = tqa::load_checkpoint_file(a.checkpoint, vocab.digest());

    auto in = open_in(a.table);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw tqa::DataError(a.table + ": invalid JSON: " + e.what());
    }
    tqa::Table table;
    table.table_id = j.value("id", std::string("table"));
    if (!j.contains("headers") || !j.contains("rows")) {
        throw tqa::DataError(a.table + ": table JSON needs 'headers' and 'rows'");
    }
    for (const auto& h : j.at("headers")) {
        table.headers.push_back(tqa::normalize_text(scalar_text(h, a.table)));
    }
    for (const auto& row : j.at("rows")) {
        std::vector<std::string> cells;
        for (const auto& c : row) cells.push_back(tqa::normalize_text(scalar_text(c, a.table)));
        table.rows.push_back(std::move(cells));
    }
    table.validate(a.table);

    const auto enc = tqa::encode_table_question(table, tqa::normalize_text(a.question), vocab,
                                                static_cast<size_t>(ckpt.config.max_len));
    if (!enc) {
        throw tqa::DataError(a.table + ": table plus question exceeds the model max_len " +
                             std::to_string(ckpt.config.max_len));
    }
    const auto out = tqa::pointer_forward(ckpt.params, ckpt.config, *enc);

    std::vector<size_t> order(out.cell_probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return out.cell_probs[x] > out.cell_probs[y]; });
    const size_t m = table.n_cols();
    std::cout << "answer: " << table.cell(out.best_cell) << "\n";
    for (size_t i = 0; i < std::min(a.top, order.size()); ++i) {
        const size_t cell = order[i];
        std::cout << "  " << std::fixed << std::setprecision(4) << out.cell_probs[cell] << "  ["
                  << cell / m << "," << cell % m << "] " << table.headers[cell % m] << " = "
                  << table.cell(cell) << "\n";
    }
}

struct GradCheckArgs {
    double eps = 1e-3;
    double threshold = 1e-4;
    uint64_t seed = 16;
};

void run_gradcheck(const GradCheckArgs& a) {
    tqa::Example ex;
    ex.table.table_id = "gradcheck";
    ex.table.headers = {"name", "score"};
    ex.table.rows = {{"ada", "3"}, {"grace", "5"}};
    ex.question = "what is score where name is grace ?";
    ex.answer_index = 3;
    ex.answer_text = "5";

    tqa::ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_len = 64;
    const auto report = tqa::model_grad_check(cfg, ex, a.seed, a.eps);
    std::cout << "checked " << report.checked_groups << " parameter groups\n"
              << "max relative error " << std::scientific << std::setprecision(3)
              << report.max_rel_err << " (group " << report.worst_group << ", entry "
              << report.worst_entry << ": analytic " << report.analytic << ", numeric "
              << report.numeric << ")\n";
    if (!(report.max_rel_err < a.threshold)) {
        throw tqa::NumericError("gradient check failed: " + std::to_string(report.max_rel_err) +
                                " >= " + std::to_string(a.threshold));
    }
}

struct ExperimentArgs {
    std::string manifest, out;
};

void run_experiment_cmd(const ExperimentArgs& a) {
    auto in = open_in(a.manifest);
    const tqa::ExperimentManifest manifest = tqa::parse_manifest(in, a.manifest);
    const tqa::ExperimentResults results = tqa::run_experiment(manifest, &std::cout);
    tqa::write_results_table(std::cout, results);
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        tqa::write_results_jsonl(out, results);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SQL-free table question answering: ingest, train, evaluate, ask"};
    app.require_subcommand(1);

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Build a dataset from source tables and queries");
    ingest->add_option("--tables", ingest_args.tables, "tables JSONL")->required();
    ingest->add_option("--queries", ingest_args.queries, "queries JSONL")->required();
    ingest->add_option("--out", ingest_args.out, "output dataset JSONL")->required();
    ingest->add_option("--stats", ingest_args.stats, "write ingest statistics JSON here");
    ingest->callback([&] { run_ingest(ingest_args); });

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic lookup-table dataset");
    synth->add_option("--tables", synth_args.cfg.n_tables, "number of tables")->required();
    synth->add_option("--rows", synth_args.cfg.n_rows, "rows per table");
    synth->add_option("--cols", synth_args.cfg.n_cols, "columns per table");
    synth->add_option("--word-pool", synth_args.cfg.word_pool, "distinct value words");
    synth->add_option("--seed", synth_args.cfg.seed, "generator seed");
    synth->add_option("--duplicate-value-rate", synth_args.cfg.duplicate_value_rate,
                      "chance a table repeats a value text");
    synth->add_option("--key-decoy-rate", synth_args.cfg.key_decoy_rate,
                      "chance the queried key also appears in another column");
    synth->add_option("--out", synth_args.out, "output dataset JSONL")->required();
    synth->callback([&] { run_synth(synth_args); });

    AugmentArgs augment_args;
    auto* augment = app.add_subcommand("augment", "Grow a dataset by shuffling table rows");
    augment->add_option("--data", augment_args.data, "input dataset JSONL")->required();
    augment->add_option("--copies", augment_args.copies, "shuffled variants per example")
        ->required();
    augment->add_option("--seed", augment_args.seed, "permutation seed");
    augment->add_option("--out", augment_args.out, "output dataset JSONL")->required();
    augment->callback([&] { run_augment(augment_args); });

    EncodeArgs encode_args;
    auto* encode = app.add_subcommand("encode", "Show the encoded sequence for one example");
    encode->add_option("--data", encode_args.data, "dataset JSONL")->required();
    encode->add_option("--index", encode_args.index, "example index");
    encode->add_option("--vocab", encode_args.vocab, "vocabulary file (default: built from data)");
    encode->add_option("--max-len", encode_args.max_len, "sequence length limit");
    encode->callback([&] { run_encode(encode_args); });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a pointer model on a dataset");
    train->set_config("--config", "", "flat key=value file; command-line flags win");
    train->add_option("--data", train_args.data, "training dataset JSONL")->required();
    train->add_option("--out", train_args.out, "checkpoint output path")->required();
    train->add_option("--vocab-out", train_args.vocab_out,
                      "vocabulary output path (default: <out>.vocab)");
    train->add_option("--metrics", train_args.metrics, "per-epoch metrics JSONL");
    train->add_option("--lr", train_args.train.learning_rate, "Adam learning rate");
    train->add_option("--batch-size", train_args.train.batch_size, "examples per batch");
    train->add_option("--epochs", train_args.train.epochs, "training epochs");
    train->add_option("--seed", train_args.train.seed, "run seed");
    train->add_option("--freeze-first-k", train_args.train.freeze_first_k,
                      "freeze the lowest k encoder layers (and the embeddings)");
    train->add_option("--d-model", train_args.model.d_model, "hidden width");
    train->add_option("--layers", train_args.model.n_layers, "encoder layers");
    train->add_option("--heads", train_args.model.n_heads, "attention heads");
    train->add_option("--d-ff", train_args.model.d_ff, "feed-forward width");
    train->add_option("--max-len", train_args.model.max_len, "sequence length limit");
    train->add_option("--min-freq", train_args.min_freq, "vocabulary frequency cutoff");
    train->add_flag("--no-position-embeddings", train_args.no_positions,
                    "drop position information");
    train->add_flag("--no-segment-embeddings", train_args.no_segments,
                    "drop segment information");
    train->add_flag("--save-every-epoch", train_args.save_every_epoch,
                    "rewrite the checkpoint after every epoch");
    train->add_flag("--no-wallclock", train_args.no_wallclock,
                    "write 0.0 wallclock for byte-reproducible metrics");
    train->callback([&] { run_train(train_args); });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    eval->add_option("--data", eval_args.data, "dataset JSONL")->required();
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")->required();
    eval->add_option("--vocab", eval_args.vocab, "vocabulary file")->required();
    eval->add_option("--out", eval_args.out, "per-example predictions JSONL");
    eval->callback([&] { run_eval(eval_args); });

    AskArgs ask_args;
    auto* ask = app.add_subcommand("ask", "Answer one question about one table");
    ask->add_option("--checkpoint", ask_args.checkpoint, "checkpoint path")->required();
    ask->add_option("--vocab", ask_args.vocab, "vocabulary file")->required();
    ask->add_option("--table", ask_args.table, "table JSON ({headers, rows})")->required();
    ask->add_option("--question", ask_args.question, "question text")->required();
    ask->add_option("--top", ask_args.top, "how many candidate cells to show");
    ask->callback([&] { run_ask(ask_args); });

    GradCheckArgs gradcheck_args;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gradcheck->add_option("--eps", gradcheck_args.eps, "central-difference step");
    gradcheck->add_option("--threshold", gradcheck_args.threshold, "maximum relative error");
    gradcheck->add_option("--seed", gradcheck_args.seed, "parameter init seed");
    gradcheck->callback([&] { run_gradcheck(gradcheck_args); });

    ExperimentArgs experiment_args;
    auto* experiment = app.add_subcommand("experiment", "Train and compare several runs");
    experiment->add_option("--manifest", experiment_args.manifest, "experiment manifest JSON")
        ->required();
    experiment->add_option("--out", experiment_args.out, "results JSONL");
    experiment->callback([&] { run_experiment_cmd(experiment_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const tqa::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const tqa::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tqa::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
