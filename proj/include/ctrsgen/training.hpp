#pragma once

// Teacher-forced MLE training: per-epoch seeded shuffle, gradient
// accumulation over batch_size instances, global-norm clipping, one Adam
// step per batch, validation after every epoch, early stopping on patience,
// best-checkpoint tracking.

#include <functional>
#include <vector>

#include "ctrsgen/checkpoint.hpp"
#include "ctrsgen/config.hpp"
#include "ctrsgen/corpus.hpp"

namespace ctrsgen {

struct EpochMetrics {
    int epoch = 0;            // 1-based
    double train_loss = 0.0;  // mean per-instance teacher-forced NLL
    double valid_loss = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<EpochMetrics> metrics;
    bool best_updated = false;  // false when resuming never beat the stored best
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Fresh training run. Parameter init and per-epoch shuffling draw from one
// RNG stream seeded with train_config.seed, so the whole trajectory is a
// function of config plus data. Throws on a non-finite loss, naming the
// epoch, optimizer step, and instance. A non-empty embedding_path seeds the
// embedding rows of known tokens from that file before the first epoch.
TrainResult train(const std::vector<EncodedQuadruple>& train_set,
                  const std::vector<EncodedQuadruple>& valid_set, const ModelConfig& model_config,
                  const TrainConfig& train_config, const LengthCaps& caps, const Vocabulary& vocab,
                  const EpochCallback& on_epoch = nullptr,
                  const std::string& embedding_path = std::string());

// Continues an interrupted run from its last checkpoint; with the same data
// and config this reproduces the uninterrupted run's trajectory exactly.
// Training continues until train_config.epochs (total, not additional).
TrainResult resume_training(const Checkpoint& last, const std::vector<EncodedQuadruple>& train_set,
                            const std::vector<EncodedQuadruple>& valid_set,
                            const EpochCallback& on_epoch = nullptr);

// Mean teacher-forced NLL over a set with fixed parameters.
double mean_nll(ModelParams<float>& params, const std::vector<EncodedQuadruple>& instances);

}  // namespace ctrsgen
