#include "tqa/training.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "tqa/encoding.hpp"
#include "tqa/kernels.hpp"

namespace tqa {

AdamState make_adam_state(const ModelConfig& cfg, const std::set<std::string>& trainable) {
    AdamState state;
    const Params shapes = allocate_params<float>(cfg);
    shapes.for_each_group([&](const std::string& name, const Mat<float>& m) {
        if (!trainable.count(name)) return;
        AdamState::Slot slot;
        slot.name = name;
        slot.m1 = Mat<float>(m.rows(), m.cols());
        slot.m2 = Mat<float>(m.rows(), m.cols());
        state.slots.push_back(std::move(slot));
    });
    return state;
}

void adam_step(Params& params, const Gradients<float>& grads, AdamState& state,
               const TrainConfig& cfg) {
    ++state.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    kernels::AdamKernelArgs args;
    args.lr = static_cast<float>(cfg.learning_rate);
    args.beta1 = static_cast<float>(b1);
    args.beta2 = static_cast<float>(b2);
    args.eps = static_cast<float>(cfg.adam_eps);
    args.inv_corr1 = static_cast<float>(1.0 / (1.0 - std::pow(b1, static_cast<double>(state.step))));
    args.inv_corr2 = static_cast<float>(1.0 / (1.0 - std::pow(b2, static_cast<double>(state.step))));

    auto param_groups = params.group_list();
    auto grad_groups = grads.mats.group_list();
    size_t slot_at = 0;
    for (size_t i = 0; i < param_groups.size(); ++i) {
        const std::string& name = param_groups[i].first;
        if (!grads.live.count(name)) continue;
        if (slot_at >= state.slots.size() || state.slots[slot_at].name != name) {
            throw ShapeError("adam_step: state slot mismatch at group " + name);
        }
        AdamState::Slot& slot = state.slots[slot_at++];
        Mat<float>& p = *param_groups[i].second;
        const Mat<float>& g = *grad_groups[i].second;
        if (!p.same_shape(g) || !p.same_shape(slot.m1)) {
            throw ShapeError("adam_step: shape mismatch for group " + name);
        }
        kernels::adam_update(p.data(), g.data(), slot.m1.data(), slot.m2.data(), p.size(), args);
    }
    if (slot_at != state.slots.size()) {
        throw ShapeError("adam_step: gradient set does not cover the optimizer state");
    }
}

std::vector<std::vector<size_t>> make_batches(size_t n_examples, size_t batch_size,
                                              uint64_t epoch_seed) {
    if (batch_size == 0) throw ShapeError("make_batches: batch_size must be positive");
    Rng rng(epoch_seed);
    std::vector<size_t> order = rng.permutation(n_examples);
    std::vector<std::vector<size_t>> batches;
    for (size_t at = 0; at < order.size(); at += batch_size) {
        const size_t end = std::min(order.size(), at + batch_size);
        batches.emplace_back(order.begin() + at, order.begin() + end);
    }
    return batches;
}

std::string metrics_to_json(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["mean_loss"] = m.mean_loss;
    j["train_accuracy"] = m.train_accuracy;
    j["skipped_examples"] = m.skipped_examples;
    j["wallclock_seconds"] = m.wallclock_seconds;
    return j.dump();
}

TrainResult train(const std::vector<Example>& examples, const Vocab& vocab,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const EpochCallback& on_epoch) {
    model_cfg.validate();
    if (train_cfg.batch_size <= 0) throw ShapeError("train: batch_size must be positive");
    if (train_cfg.epochs <= 0) throw ShapeError("train: epochs must be positive");

    // Encode once; epochs reuse the encodings.
    struct Prepared {
        EncodedInput enc;
        size_t target = 0;
        size_t source = 0;
    };
    std::vector<Prepared> prepared;
    size_t skipped = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        auto enc = encode_example(examples[i], vocab, static_cast<size_t>(model_cfg.max_len));
        if (!enc) {
            ++skipped;
            continue;
        }
        Prepared p;
        p.target = target_position(*enc, examples[i].answer_index);
        p.enc = std::move(*enc);
        p.source = i;
        prepared.push_back(std::move(p));
    }
    if (prepared.empty()) throw DataError("train: no examples fit within max_len");

    TrainResult result;
    result.skipped_examples = skipped;
    result.params = init_params<float>(model_cfg, mix_seed(train_cfg.seed, 1));
    const std::set<std::string> trainable = trainable_set(model_cfg, train_cfg.freeze_first_k);
    Gradients<float> grads = make_gradients<float>(model_cfg, trainable);
    AdamState adam = make_adam_state(model_cfg, trainable);

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto batches =
            make_batches(prepared.size(), static_cast<size_t>(train_cfg.batch_size),
                         mix_seed(train_cfg.seed, 2, static_cast<uint64_t>(epoch)));
        double loss_sum = 0.0;
        size_t seen = 0;
        size_t correct = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const std::vector<size_t>& batch = batches[bi];
            grads.zero();
            const float inv_b = 1.0f / static_cast<float>(batch.size());
            for (const size_t pi : batch) {
                const Prepared& ex = prepared[pi];
                Tape<float> tape;
                const GraphRefs<float> refs =
                    build_pointer_graph<float>(tape, result.params, model_cfg, ex.enc, &grads);
                const auto loss_id =
                    tape.neg_log_pick(refs.probs, ex.target, static_cast<float>(kLogFloor));
                const float loss = tape.scalar(loss_id);
                if (!std::isfinite(loss)) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(bi) + ", example " +
                                       std::to_string(ex.source));
                }
                loss_sum += static_cast<double>(loss);
                const Mat<float>& probs = tape.value(refs.probs);
                size_t best = 0;
                float best_p = -1.0f;
                for (int32_t pos : ex.enc.cell_positions) {
                    if (probs[static_cast<size_t>(pos)] > best_p) {
                        best_p = probs[static_cast<size_t>(pos)];
                        best = static_cast<size_t>(pos);
                    }
                }
                if (best == ex.target) ++correct;
                ++seen;
                tape.backward(loss_id, inv_b);
            }
            adam_step(result.params, grads, adam, train_cfg);
        }
        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.mean_loss = loss_sum / static_cast<double>(seen);
        metrics.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        metrics.skipped_examples = skipped;
        if (train_cfg.record_wallclock) {
            metrics.wallclock_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        result.log.push_back(metrics);
        if (on_epoch) on_epoch(metrics, result.params);
    }
    return result;
}

} // namespace tqa
