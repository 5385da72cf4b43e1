#pragma once

// Architecture and optimization settings. The field initializers are the
// canonical defaults; the CLI and the acceptance checks both read them from
// here.

#include <cstdint>

namespace ctrsgen {

struct ModelConfig {
    int hidden = 256;          // per-direction GRU width; encoder states are twice this
    int embedding_dim = 300;
    int vocab_size = 0;        // filled from the vocabulary
    float init_range = 0.1f;   // uniform [-init_range, init_range]
    float lambda_contrast = 0.5f;
    bool share_query_encoder = false;        // query reuses the document word encoder
    bool untie_irrelevant_encoders = false;  // separate weights for the irrelevant pipeline

    int state_size() const { return 2 * hidden; }  // decoder hidden = encoder state width
};

struct TrainConfig {
    float lr = 0.0005f;
    int batch_size = 16;
    float clip_norm = 5.0f;
    int epochs = 20;
    int patience = 5;  // epochs without validation improvement before stopping
    std::uint64_t seed = 1;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
};

}  // namespace ctrsgen
