#pragma once

// Checkpoint container and its binary file format:
//   "CGEN" | u32 format version | u64 metadata length | JSON metadata |
//   float32 parameter blobs in manifest order | optimizer moment blobs
// The JSON carries configs, vocabulary, tensor manifest, counters, and the
// training RNG state. Multi-byte values are little-endian; save/load/save
// is byte-identical.

#include <cstdint>
#include <limits>
#include <string>

#include "ctrsgen/config.hpp"
#include "ctrsgen/corpus.hpp"
#include "ctrsgen/model.hpp"
#include "ctrsgen/optim.hpp"

namespace ctrsgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig model_config;
    TrainConfig train_config;
    LengthCaps caps;
    Vocabulary vocab;
    ModelParams<float> params;
    AdamState<float> adam;
    bool has_optimizer = false;
    int epoch = 0;               // completed training epochs
    std::int64_t global_step = 0;  // optimizer steps taken
    std::string rng_state;       // training RNG, serialized
    double best_valid_loss = std::numeric_limits<double>::infinity();
};

// Non-const because enumerating the parameters hands out mutable views.
void save_checkpoint(Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctrsgen
