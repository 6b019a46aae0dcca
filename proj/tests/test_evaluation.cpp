#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tqa/encoding.hpp"
#include "tqa/errors.hpp"
#include "tqa/evaluation.hpp"
#include "tqa/ingest.hpp"

using namespace tqa;

namespace {

Example duplicate_text_example() {
    // "7" appears twice; only cell 3 (row 1, column score) is the gold cell.
    Example ex;
    ex.table.table_id = "dup";
    ex.table.headers = {"name", "score"};
    ex.table.rows = {{"7", "1"}, {"grace", "7"}};
    ex.question = "what is score where name is grace";
    ex.answer_index = 3;
    ex.answer_text = "7";
    return ex;
}

} // namespace

TEST_CASE("word match credits text duplicates, index match does not") {
    const Example ex = duplicate_text_example();

    // Predicting cell 0 ("7" in the wrong place): right words, wrong cell.
    auto report = word_match_accuracy({ex}, {{0, 0}});
    CHECK(report.n_examples == 1);
    CHECK(report.n_word_correct == 1);
    CHECK(report.n_index_correct == 0);
    CHECK(report.word_accuracy == doctest::Approx(1.0));
    CHECK(report.index_accuracy == doctest::Approx(0.0));
    CHECK(report.predictions[0].word_match);
    CHECK_FALSE(report.predictions[0].index_match);

    // Predicting the gold cell: both credit.
    report = word_match_accuracy({ex}, {{0, 3}});
    CHECK(report.n_word_correct == 1);
    CHECK(report.n_index_correct == 1);

    // Predicting an unrelated cell: neither.
    report = word_match_accuracy({ex}, {{0, 1}});
    CHECK(report.n_word_correct == 0);
    CHECK(report.n_index_correct == 0);

    // Index match always implies word match.
    CHECK(report.word_accuracy >= report.index_accuracy);
}

TEST_CASE("word matching compares normalized text") {
    Example ex;
    ex.table.table_id = "norm";
    ex.table.headers = {"a"};
    ex.table.rows = {{"Caf\xC3\xA9"}, {"x"}}; // precomposed é in the table
    ex.question = "q";
    ex.answer_index = 1;
    ex.answer_text = "x";
    // Gold text in decomposed form: same after NFC.
    Example ex2 = ex;
    ex2.answer_index = 0;
    ex2.answer_text = "Cafe\xCC\x81";

    const auto report = word_match_accuracy({ex2}, {{0, 0}});
    CHECK(report.n_word_correct == 1);
    CHECK(report.n_index_correct == 1);
}

TEST_CASE("word_match_accuracy validates its inputs") {
    const Example ex = duplicate_text_example();
    CHECK_THROWS_AS(word_match_accuracy({}, {}), DataError);
    CHECK_THROWS_AS(word_match_accuracy({ex}, {}), DataError);
    CHECK_THROWS_AS(word_match_accuracy({ex}, {{1, 0}}), DataError);  // example out of range
    CHECK_THROWS_AS(word_match_accuracy({ex}, {{0, 99}}), DataError); // cell out of range
}

TEST_CASE("synthetic examples resolve through the ingest pipeline") {
    SynthConfig sc;
    sc.n_tables = 40;
    sc.n_rows = 4;
    sc.n_cols = 3;
    sc.word_pool = 50;
    sc.seed = 9;
    sc.duplicate_value_rate = 0.3;
    const auto examples = generate_synthetic(sc);
    REQUIRE(examples.size() == 40);

    for (const auto& ex : examples) {
        CHECK(ex.table.n_rows() == 4);
        CHECK(ex.table.n_cols() == 3);
        CHECK(ex.table.cell(ex.answer_index) == ex.answer_text);
        CHECK_FALSE(ex.answer_text.empty());

        // Column 0 keys are distinct.
        std::set<std::string> keys;
        for (const auto& row : ex.table.rows) keys.insert(row[0]);
        CHECK(keys.size() == ex.table.n_rows());

        // The question follows the "what is <col> where <key col> is <key>"
        // shape and the equivalent WikiSQL query resolves to the same cell.
        const auto words = tokenize(ex.question);
        REQUIRE(words.size() == 7);
        CHECK(words[0] == "what");
        CHECK(words[1] == "is");
        CHECK(words[3] == "where");
        CHECK(words[5] == "is");

        const size_t target_col = ex.answer_index % ex.table.n_cols();
        CHECK(words[2] == ex.table.headers[target_col]);
        CHECK(words[4] == ex.table.headers[0]);
        const std::string key = words[6];
        CHECK(ex.table.rows[ex.answer_index / ex.table.n_cols()][0] == key);

        SourceQuery q;
        q.select_column = static_cast<int>(target_col);
        q.aggregation = Aggregation::none;
        q.conditions = {Condition{0, Comparator::eq, key}};
        const auto resolved = resolve_answer_cell(ex.table, q);
        REQUIRE(resolved.has_value());
        CHECK(resolved->first == ex.answer_index);
        CHECK(resolved->second == ex.answer_text);
    }

    // Deterministic in the seed.
    const auto again = generate_synthetic(sc);
    REQUIRE(again.size() == examples.size());
    for (size_t i = 0; i < examples.size(); ++i) {
        CHECK(again[i].table.rows == examples[i].table.rows);
        CHECK(again[i].question == examples[i].question);
        CHECK(again[i].answer_index == examples[i].answer_index);
    }
    SynthConfig other = sc;
    other.seed = 10;
    const auto different = generate_synthetic(other);
    bool diff = false;
    for (size_t i = 0; i < examples.size(); ++i) {
        diff = diff || different[i].table.rows != examples[i].table.rows;
    }
    CHECK(diff);
}

TEST_CASE("duplicate_value_rate plants repeated cell text") {
    SynthConfig sc;
    sc.n_tables = 60;
    sc.n_rows = 4;
    sc.n_cols = 3;
    sc.word_pool = 60;
    sc.seed = 2;
    sc.duplicate_value_rate = 1.0;
    const auto examples = generate_synthetic(sc);
    size_t with_dup = 0;
    for (const auto& ex : examples) {
        std::vector<std::string> values; // non-key cells
        for (const auto& row : ex.table.rows) {
            for (size_t j = 1; j < row.size(); ++j) values.push_back(row[j]);
        }
        std::sort(values.begin(), values.end());
        with_dup += std::adjacent_find(values.begin(), values.end()) != values.end() ? 1 : 0;
    }
    CHECK(with_dup == examples.size());

    sc.duplicate_value_rate = 0.0;
    sc.word_pool = 600;
    size_t without = 0;
    for (const auto& ex : generate_synthetic(sc)) {
        std::vector<std::string> values;
        for (const auto& row : ex.table.rows) {
            for (size_t j = 1; j < row.size(); ++j) values.push_back(row[j]);
        }
        std::sort(values.begin(), values.end());
        without += std::adjacent_find(values.begin(), values.end()) != values.end() ? 1 : 0;
    }
    // With the lever off, only birthday collisions among the 8 independently
    // drawn value cells remain: about C(8,2)/600 ~ 4.7% of tables, so ~3 of 60
    // in expectation. Allow generous slack while still separating the regimes.
    CHECK(without <= 10);
}

TEST_CASE("key_decoy_rate plants the queried key in another row") {
    SynthConfig sc;
    sc.n_tables = 30;
    sc.n_rows = 4;
    sc.n_cols = 3;
    sc.word_pool = 40;
    sc.seed = 4;
    sc.duplicate_value_rate = 0.0;
    sc.key_decoy_rate = 1.0;
    const auto examples = generate_synthetic(sc);
    for (const auto& ex : examples) {
        const std::string key = tokenize(ex.question).back();
        const size_t key_row = ex.answer_index / ex.table.n_cols();
        // The planted copy always lands in a row other than the key's own, so
        // a positionless model has two rows matching the condition word. The
        // value cells are drawn from the same pool, so the key may *also* show
        // up elsewhere by chance; only the off-row occurrence is guaranteed.
        bool off_row = false;
        for (size_t i = 0; i < ex.table.n_rows(); ++i) {
            for (size_t j = 1; j < ex.table.n_cols(); ++j) {
                off_row = off_row || (i != key_row && ex.table.rows[i][j] == key);
            }
        }
        CHECK(off_row);
    }

    sc.key_decoy_rate = 0.0;
    sc.word_pool = 600;
    size_t natural = 0;
    for (const auto& ex : generate_synthetic(sc)) {
        const std::string key = tokenize(ex.question).back();
        bool found = false;
        for (const auto& row : ex.table.rows) {
            for (size_t j = 1; j < row.size(); ++j) found = found || row[j] == key;
        }
        natural += found ? 1 : 0;
    }
    // ~1.3% of tables hit the key by chance at this pool size; bound loosely.
    CHECK(natural <= 5);
}

TEST_CASE("generate_synthetic validates its configuration") {
    SynthConfig sc;
    sc.n_tables = 1;
    sc.n_rows = 1; // need at least two rows for a lookup to be nontrivial
    CHECK_THROWS_AS(generate_synthetic(sc), DataError);
    sc.n_rows = 4;
    sc.n_cols = 1;
    CHECK_THROWS_AS(generate_synthetic(sc), DataError);
    sc.n_cols = 3;
    sc.word_pool = 2; // fewer words than rows: keys cannot be distinct
    CHECK_THROWS_AS(generate_synthetic(sc), DataError);
}

TEST_CASE("evaluate_model scores a trained model and skips oversized examples") {
    SynthConfig sc;
    sc.n_tables = 16;
    sc.n_rows = 3;
    sc.n_cols = 3;
    sc.word_pool = 24;
    sc.seed = 12;
    sc.duplicate_value_rate = 0.0;
    auto examples = generate_synthetic(sc);
    const Vocab vocab = build_vocab(examples, 1);

    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_len = 64;
    cfg.vocab_size = static_cast<int>(vocab.size());

    TrainConfig tc;
    tc.learning_rate =  2e-3;
    tc.batch_size = 4;
    tc.epochs = 60;
    tc.record_wallclock = false;
    const TrainResult trained = train(examples, vocab, cfg, tc);

    auto report = evaluate_model(examples, trained.params, cfg, vocab);
    CHECK(report.n_examples == 16);
    CHECK(report.n_skipped == 0);
    CHECK(report.index_accuracy == doctest::Approx(1.0)); // memorized
    CHECK(report.word_accuracy == doctest::Approx(1.0));
    CHECK(report.predictions.size() == 16);

    // An oversized example is skipped and counted, not scored.
    auto with_big = examples;
    std::string big;
    for (int i = 0; i < 80; ++i) big += "pad ";
    with_big[0].question = big;
    report = evaluate_model(with_big, trained.params, cfg, vocab);
    CHECK(report.n_skipped == 1);
    CHECK(report.n_examples == 15);

    // All skipped: error.
    std::vector<Example> none(with_big.begin(), with_big.begin() + 1);
    CHECK_THROWS_AS(evaluate_model(none, trained.params, cfg, vocab), DataError);
}

TEST_CASE("manifest parsing fills defaults and nested fields") {
    const std::string text = R"({
      "test_data": {"synthetic": {"n_tables": 30, "rows": 3, "cols": 3, "word_pool": 40, "seed": 99}},
      "runs": [
        {
          "name": "small",
          "data": {"synthetic": {"n_tables": 8, "rows": 3, "cols": 3, "word_pool": 40, "seed": 1},
                   "augment_copies": 2, "augment_seed": 5},
          "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 64},
          "train": {"learning_rate": 0.002, "batch_size": 4, "epochs": 5, "seed": 3}
        },
        {
          "name": "from_file",
          "data": {"path": "some.jsonl", "take": 10},
          "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 64,
                    "use_position_embeddings": false},
          "train": {"epochs": 2}
        }
      ]
    })";
    std::istringstream in(text);
    const ExperimentManifest m = parse_manifest(in, "manifest");
    CHECK(m.test_data.synth.n_tables == 30);
    CHECK(m.test_data.synth.seed == 99);
    CHECK(m.test_data.path.empty());
    REQUIRE(m.runs.size() == 2);
    CHECK(m.runs[0].name == "small");
    CHECK(m.runs[0].data.augment_copies == 2);
    CHECK(m.runs[0].data.augment_seed == 5);
    CHECK(m.runs[0].model.d_model == 16);
    CHECK(m.runs[0].model.use_position_embeddings); // default on
    CHECK(m.runs[0].train.learning_rate == doctest::Approx(0.002));
    CHECK(m.runs[0].train.epochs == 5);
    CHECK(m.runs[1].data.path == "some.jsonl");
    CHECK(m.runs[1].data.take == 10);
    CHECK_FALSE(m.runs[1].model.use_position_embeddings);
    CHECK(m.runs[1].train.epochs == 2);

    std::istringstream bad("{oops");
    CHECK_THROWS_AS(parse_manifest(bad, "bad"), DataError);
}

TEST_CASE("load_dataset_spec supports take and augmentation") {
    DatasetSpec spec;
    spec.synth.n_tables = 6;
    spec.synth.n_rows = 3;
    spec.synth.n_cols = 3;
    spec.synth.word_pool = 30;
    spec.synth.seed = 7;
    const auto base = load_dataset_spec(spec);
    CHECK(base.size() == 6);

    spec.take = 4;
    CHECK(load_dataset_spec(spec).size() == 4);

    spec.take = 0;
    spec.augment_copies = 2;
    spec.augment_seed = 3;
    const auto augmented = load_dataset_spec(spec);
    CHECK(augmented.size() == 6 * 3);
    for (size_t i = 0; i < 6; ++i) CHECK(augmented[i].question == base[i].question);
}

TEST_CASE("run_experiment produces one scored row per run") {
    ExperimentManifest m;
    m.test_data.synth.n_tables = 20;
    m.test_data.synth.n_rows = 3;
    m.test_data.synth.n_cols = 3;
    m.test_data.synth.word_pool = 30;
    m.test_data.synth.seed = 100;
    m.test_data.synth.duplicate_value_rate = 0.0;

    ExperimentRun run;
    run.name = "tiny";
    run.data.synth = m.test_data.synth;
    run.data.synth.seed = 101;
    run.data.synth.n_tables = 12;
    run.model.d_model = 16;
    run.model.n_layers = 1;
    run.model.n_heads = 2;
    run.model.d_ff = 32;
    run.model.max_len = 64;
    run.train.learning_rate = 2e-3;
    run.train.batch_size = 4;
    run.train.epochs = 30;
    run.train.record_wallclock = false;
    m.runs = {run};

    std::ostringstream progress;
    const ExperimentResults results = run_experiment(m, &progress);
    REQUIRE(results.rows.size() == 1);
    CHECK(results.rows[0].name == "tiny");
    CHECK(results.rows[0].train_examples == 12);
    CHECK(results.rows[0].final_train_accuracy > 0.9);
    CHECK(results.rows[0].test_word_accuracy >= results.rows[0].test_index_accuracy);
    CHECK_FALSE(progress.str().empty());

    std::ostringstream table;
    write_results_table(table, results);
    CHECK(table.str().find("tiny") != std::string::npos);
    std::ostringstream jsonl;
    write_results_jsonl(jsonl, results);
    CHECK(jsonl.str().find("\"run\":\"tiny\"") != std::string::npos);
}
