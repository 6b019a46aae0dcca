#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tqa/ingest.hpp"
#include "tqa/model.hpp"
#include "tqa/text.hpp"

namespace tqa {

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 16;
    int epochs = 3;
    uint64_t seed = 0;
    int freeze_first_k = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool record_wallclock = true; // off for byte-reproducible metrics logs
};

// First and second moments for every trainable group plus the shared step
// counter. Slots follow parameter-group order.
struct AdamState {
    struct Slot {
        std::string name;
        Mat<float> m1;
        Mat<float> m2;
    };
    int64_t step = 0;
    std::vector<Slot> slots;
};

AdamState make_adam_state(const ModelConfig& cfg, const std::set<std::string>& trainable);

// One Adam update over the trainable groups. Gradients for frozen groups are
// ignored; a zero gradient with zero moments leaves a parameter unchanged.
void adam_step(Params& params, const Gradients<float>& grads, AdamState& state,
               const TrainConfig& cfg);

// Deterministic shuffled batches of example indices; the final short batch is
// kept.
std::vector<std::vector<size_t>> make_batches(size_t n_examples, size_t batch_size,
                                              uint64_t epoch_seed);

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    size_t skipped_examples = 0;
    double wallclock_seconds = 0.0;
};

std::string metrics_to_json(const EpochMetrics& m);

struct TrainResult {
    Params params;
    std::vector<EpochMetrics> log;
    size_t skipped_examples = 0;
};

// Called after each epoch; gives streaming consumers (metrics files,
// per-epoch checkpoints) a hook without tying the loop to any file layout.
using EpochCallback = std::function<void(const EpochMetrics&, const Params&)>;

// Full training run: encode once, then epochs of shuffled minibatches with
// batch-averaged pointer loss under Adam. Examples longer than max_len are
// skipped (counted). A non-finite loss aborts with NumericError naming the
// epoch, batch, and example.
TrainResult train(const std::vector<Example>& examples, const Vocab& vocab,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const EpochCallback& on_epoch = nullptr);

} // namespace tqa
