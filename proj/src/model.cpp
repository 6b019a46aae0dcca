#include "tqa/model.hpp"

#include "tqa/numerics.hpp"

namespace tqa {

std::set<std::string> trainable_set(const ModelConfig& cfg, int freeze_first_k) {
    cfg.validate();
    if (freeze_first_k < 0 || freeze_first_k > cfg.n_layers) {
        throw ShapeError("trainable_set: freeze_first_k " + std::to_string(freeze_first_k) +
                         " out of range for " + std::to_string(cfg.n_layers) + " layers");
    }
    std::set<std::string> out;
    const auto groups = allocate_params<float>(cfg).group_list();
    for (const auto& [name, mat] : groups) {
        (void)mat;
        if (name.rfind("layer", 0) == 0) {
            const size_t dot = name.find('.');
            const int idx = std::stoi(name.substr(5, dot - 5));
            if (idx <= freeze_first_k) continue;
        } else if (name.find("embeddings") != std::string::npos) {
            // Embeddings feed the frozen stack, so they freeze with it.
            if (freeze_first_k > 0) continue;
        }
        out.insert(name);
    }
    return out;
}

ModelGradCheckReport model_grad_check(const ModelConfig& cfg, const Example& example,
                                      uint64_t seed, double fd_eps, int freeze_first_k) {
    const Vocab vocab = Vocab::build(
        {tokenize(example.question),
         [&] {
             std::vector<std::string> all;
             for (const auto& h : example.table.headers) {
                 for (auto& t : tokenize(h)) all.push_back(std::move(t));
             }
             for (const auto& row : example.table.rows) {
                 for (const auto& c : row) {
                     for (auto& t : tokenize(c)) all.push_back(std::move(t));
                 }
             }
             return all;
         }()},
        1);
    ModelConfig local = cfg;
    local.vocab_size = static_cast<int>(vocab.size());
    local.validate();
    const auto enc = encode_example(example, vocab, static_cast<size_t>(local.max_len));
    if (!enc) throw DataError("model_grad_check: example does not fit max_len");
    const size_t target = target_position(*enc, example.answer_index);

    ParamsT<double> params = init_params<double>(local, seed, kGradCheckWeightStddev);
    const std::set<std::string> trainable = trainable_set(local, freeze_first_k);

    // Flatten the trainable groups; the closure writes candidate values back
    // into a full parameter struct before each evaluation.
    std::vector<std::string> names;
    std::vector<Mat<double>> flat;
    params.for_each_group([&](const std::string& name, Mat<double>& m) {
        if (trainable.count(name)) {
            names.push_back(name);
            flat.push_back(m);
        }
    });

    auto eval = [&](const std::vector<Mat<double>>& values,
                    std::vector<Mat<double>>* grads) -> double {
        ParamsT<double> local_params = params;
        {
            size_t at = 0;
            local_params.for_each_group([&](const std::string& name, Mat<double>& m) {
                if (trainable.count(name)) m = values[at++];
            });
        }
        Tape<double> tape;
        if (!grads) {
            const GraphRefs<double> refs =
                build_pointer_graph<double>(tape, local_params, local, *enc, nullptr);
            return tape.scalar(tape.neg_log_pick(refs.probs, target, kLogFloor));
        }
        Gradients<double> sinks = make_gradients<double>(local, trainable);
        const GraphRefs<double> refs =
            build_pointer_graph<double>(tape, local_params, local, *enc, &sinks);
        const auto loss = tape.neg_log_pick(refs.probs, target, kLogFloor);
        tape.backward(loss, 1.0);
        grads->clear();
        sinks.mats.for_each_group([&](const std::string& name, Mat<double>& m) {
            if (trainable.count(name)) grads->push_back(m);
        });
        return tape.scalar(loss);
    };

    const numerics::GradCheckResult res = numerics::grad_check(eval, flat, fd_eps);
    ModelGradCheckReport report;
    report.max_rel_err = res.max_rel_err;
    report.worst_group = names.empty() ? "" : names[res.worst_param];
    report.worst_entry = res.worst_entry;
    report.analytic = res.analytic;
    report.numeric = res.numeric;
    report.checked_groups = names.size();
    return report;
}

} // namespace tqa
