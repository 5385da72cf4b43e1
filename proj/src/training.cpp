#include "ctrsgen/training.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctrsgen/decoder.hpp"
#include "ctrsgen/encoders.hpp"
#include "ctrsgen/optim.hpp"

namespace ctrsgen {

double mean_nll(ModelParams<float>& params, const std::vector<EncodedQuadruple>& instances) {
    if (instances.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double total = 0.0;
    for (const auto& inst : instances) {
        EncoderOutputs<float> enc = encode_instance(params, inst);
        total += static_cast<double>(teacher_forced_loss(params, enc, inst.target_ids).item());
    }
    return total / static_cast<double>(instances.size());
}

namespace {

Checkpoint snapshot(ModelParams<float>& params, const AdamState<float>& adam,
                    const TrainConfig& train_config, const LengthCaps& caps,
                    const Vocabulary& vocab, int epoch, const Rng& rng, double best_valid_loss) {
    Checkpoint ckpt;
    ckpt.model_config = params.config;
    ckpt.train_config = train_config;
    ckpt.caps = caps;
    ckpt.vocab = vocab;
    ckpt.params = params.cast<float>();  // deep copy, detached from the live tensors
    ckpt.adam = adam;
    ckpt.has_optimizer = true;
    ckpt.epoch = epoch;
    ckpt.global_step = adam.step;
    ckpt.rng_state = rng.state();
    ckpt.best_valid_loss = best_valid_loss;
    return ckpt;
}

TrainResult run_epochs(ModelParams<float>& params, AdamState<float>& adam, Rng& rng,
                       int start_epoch, double best_valid_loss,
                       const std::vector<EncodedQuadruple>& train_set,
                       const std::vector<EncodedQuadruple>& valid_set,
                       const TrainConfig& train_config, const LengthCaps& caps,
                       const Vocabulary& vocab, const EpochCallback& on_epoch) {
    if (train_set.empty()) {
        throw std::invalid_argument("train: empty training split");
    }
    for (const auto& inst : train_set) {
        if (inst.target_ids.size() < 2) {
            throw std::invalid_argument("train: instance with empty target");
        }
    }
    std::vector<TensorT<float>*> param_list = params.param_list();
    if (adam.m.empty()) {
        adam.init(param_list);
    }

    TrainResult result;
    int epochs_since_best = 0;
    for (int epoch = start_epoch; epoch < train_config.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), cursor + static_cast<std::size_t>(train_config.batch_size));
            const float inv_batch = 1.0f / static_cast<float>(batch_end - cursor);
            for (auto* p : param_list) p->zero_grad();
            for (; cursor < batch_end; ++cursor) {
                const std::size_t idx = order[cursor];
                const EncodedQuadruple& inst = train_set[idx];
                EncoderOutputs<float> enc = encode_instance(params, inst);
                TensorT<float> loss = teacher_forced_loss(params, enc, inst.target_ids);
                const float value = loss.item();
                if (!std::isfinite(value)) {
                    throw std::runtime_error(
                        "training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                        ", optimizer step " + std::to_string(adam.step + 1) + ", instance " +
                        std::to_string(idx));
                }
                loss_sum += static_cast<double>(value);
                backward(scalar_scale(loss, inv_batch));
            }
            clip_global_norm(param_list, static_cast<double>(train_config.clip_norm));
            adam_step(param_list, adam, train_config.lr, train_config.adam_beta1,
                      train_config.adam_beta2, train_config.adam_eps);
        }

        EpochMetrics metrics;
        metrics.epoch = epoch + 1;
        metrics.train_loss = loss_sum / static_cast<double>(train_set.size());
        metrics.valid_loss = mean_nll(params, valid_set);
        result.metrics.push_back(metrics);
        if (on_epoch) on_epoch(metrics);

        const bool improved =
            std::isfinite(metrics.valid_loss) && metrics.valid_loss < best_valid_loss;
        if (improved) {
            best_valid_loss = metrics.valid_loss;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        result.last = snapshot(params, adam, train_config, caps, vocab, epoch + 1, rng,
                               best_valid_loss);
        if (improved) {
            result.best = result.last;
            result.best_updated = true;
        }
        if (!valid_set.empty() && epochs_since_best >= train_config.patience) {
            break;
        }
    }
    if (result.metrics.empty()) {
        // Nothing left to do (already at the requested epoch count).
        result.last = snapshot(params, adam, train_config, caps, vocab, start_epoch, rng,
                               best_valid_loss);
    }
    if (!result.best_updated) {
        // No validation split, or no epoch improved on the stored best; the
        // freshest state stands in so callers always get a usable model.
        result.best = result.last;
        result.best_updated = valid_set.empty();
    }
    return result;
}

}  // namespace

TrainResult train(const std::vector<EncodedQuadruple>& train_set,
                  const std::vector<EncodedQuadruple>& valid_set, const ModelConfig& model_config,
                  const TrainConfig& train_config, const LengthCaps& caps, const Vocabulary& vocab,
                  const EpochCallback& on_epoch, const std::string& embedding_path) {
    if (model_config.vocab_size != vocab.size()) {
        throw std::invalid_argument("train: model vocab_size does not match the vocabulary");
    }
    Rng rng(train_config.seed);
    ModelParams<float> params;
    params.init(model_config, rng);
    if (!embedding_path.empty()) {
        load_embedding_file(embedding_path, params.embedding, [&](const std::string& token) {
            auto it = vocab.token_to_id.find(token);
            return it == vocab.token_to_id.end() ? -1 : it->second;
        });
    }
    AdamState<float> adam;
    return run_epochs(params, adam, rng, 0, std::numeric_limits<double>::infinity(), train_set,
                      valid_set, train_config, caps, vocab, on_epoch);
}

TrainResult resume_training(const Checkpoint& last, const std::vector<EncodedQuadruple>& train_set,
                            const std::vector<EncodedQuadruple>& valid_set,
                            const EpochCallback& on_epoch) {
    Checkpoint working = last;
    // Tensor handles share storage under plain struct copy; detach so the
    // caller's checkpoint stays untouched while this run updates weights.
    working.params = working.params.cast<float>();
    Rng rng(0);
    rng.set_state(working.rng_state);
    return run_epochs(working.params, working.adam, rng, working.epoch, working.best_valid_loss,
                      train_set, valid_set, working.train_config, working.caps, working.vocab,
                      on_epoch);
}

}  // namespace ctrsgen
