#pragma once

// Model architecture config and the full parameter set: shared embedding
// table, the encoder GRU stacks, every attention matrix, and the decoder
// with its output projection. Parameters enumerate in a fixed order so the
// optimizer and the checkpoint manifest stay aligned.

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrsgen/config.hpp"
#include "ctrsgen/gru.hpp"
#include "ctrsgen/rng.hpp"
#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

template <class S>
struct ModelParams {
    ModelConfig config;

    TensorT<S> embedding;  // [vocab, emb]

    GruCell<S> query_word_fwd, query_word_bwd;  // present unless share_query_encoder
    GruCell<S> word_fwd, word_bwd;              // word level, documents
    GruCell<S> sent_fwd, sent_bwd;              // sentence level, over word-level states
    GruCell<S> irr_word_fwd, irr_word_bwd;      // present only when untied
    GruCell<S> irr_sent_fwd, irr_sent_bwd;

    TensorT<S> enc_attn_bilinear;  // query-aware sentence weighting

    TensorT<S> init_from_query, init_from_mega;  // decoder start state

    TensorT<S> query_attn_bilinear;  // decoder attention over query words

    TensorT<S> rel_attn_sent, rel_attn_ctx, rel_attn_state, rel_attn_v;  // additive sentence attention

    TensorT<S> sim_decoder;     // sentence vs decoder-state similarity
    TensorT<S> sim_irrelevant;  // sentence vs irrelevant-sentence similarity

    GruCell<S> dec_cell;  // input: prev-token embedding + both context vectors

    TensorT<S> out_hidden_w, out_hidden_b;  // readout to state_size with tanh
    TensorT<S> out_proj_w, out_proj_b;      // affine to vocabulary

    void init(const ModelConfig& cfg, Rng& rng) {
        config = cfg;
        const int h = cfg.hidden;
        const int e = cfg.embedding_dim;
        const int d = cfg.state_size();
        const S r = static_cast<S>(cfg.init_range);
        if (cfg.vocab_size < 4) {
            throw std::invalid_argument("model init: vocab_size must cover the special tokens");
        }
        embedding = TensorT<S>::uniform({cfg.vocab_size, e}, -r, r, rng);
        if (!cfg.share_query_encoder) {
            query_word_fwd.init(e, h, r, rng);
            query_word_bwd.init(e, h, r, rng);
        }
        word_fwd.init(e, h, r, rng);
        word_bwd.init(e, h, r, rng);
        sent_fwd.init(d, h, r, rng);
        sent_bwd.init(d, h, r, rng);
        if (cfg.untie_irrelevant_encoders) {
            irr_word_fwd.init(e, h, r, rng);
            irr_word_bwd.init(e, h, r, rng);
            irr_sent_fwd.init(d, h, r, rng);
            irr_sent_bwd.init(d, h, r, rng);
        }
        enc_attn_bilinear = TensorT<S>::uniform({d, d}, -r, r, rng);
        init_from_query = TensorT<S>::uniform({d, d}, -r, r, rng);
        init_from_mega = TensorT<S>::uniform({d, d}, -r, r, rng);
        query_attn_bilinear = TensorT<S>::uniform({d, d}, -r, r, rng);
        rel_attn_sent = TensorT<S>::uniform({d, d}, -r, r, rng);
        rel_attn_ctx = TensorT<S>::uniform({d, d}, -r, r, rng);
        rel_attn_state = TensorT<S>::uniform({d, d}, -r, r, rng);
        rel_attn_v = TensorT<S>::uniform({d}, -r, r, rng);
        sim_decoder = TensorT<S>::uniform({d, d}, -r, r, rng);
        sim_irrelevant = TensorT<S>::uniform({d, d}, -r, r, rng);
        dec_cell.init(e + 2 * d, d, r, rng);
        out_hidden_w = TensorT<S>::uniform({e + 3 * d, d}, -r, r, rng);
        out_hidden_b = TensorT<S>::zeros({d}, true);
        out_proj_w = TensorT<S>::uniform({d, cfg.vocab_size}, -r, r, rng);
        out_proj_b = TensorT<S>::zeros({cfg.vocab_size}, true);
    }

    // Encoders used for the irrelevant pipeline (shared with the relevant one
    // unless untied).
    const GruCell<S>& irr_word_fwd_cell() const {
        return config.untie_irrelevant_encoders ? irr_word_fwd : word_fwd;
    }
    const GruCell<S>& irr_word_bwd_cell() const {
        return config.untie_irrelevant_encoders ? irr_word_bwd : word_bwd;
    }
    const GruCell<S>& irr_sent_fwd_cell() const {
        return config.untie_irrelevant_encoders ? irr_sent_fwd : sent_fwd;
    }
    const GruCell<S>& irr_sent_bwd_cell() const {
        return config.untie_irrelevant_encoders ? irr_sent_bwd : sent_bwd;
    }
    const GruCell<S>& query_word_fwd_cell() const {
        return config.share_query_encoder ? word_fwd : query_word_fwd;
    }
    const GruCell<S>& query_word_bwd_cell() const {
        return config.share_query_encoder ? word_bwd : query_word_bwd;
    }

    // Stable enumeration; checkpoint manifests and optimizer slots rely on
    // this order never changing for a given config.
    void for_each_param(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
        fn("embedding", embedding);
        if (!config.share_query_encoder) {
            query_word_fwd.for_each_param("query_word_fwd", fn);
            query_word_bwd.for_each_param("query_word_bwd", fn);
        }
        word_fwd.for_each_param("word_fwd", fn);
        word_bwd.for_each_param("word_bwd", fn);
        sent_fwd.for_each_param("sent_fwd", fn);
        sent_bwd.for_each_param("sent_bwd", fn);
        if (config.untie_irrelevant_encoders) {
            irr_word_fwd.for_each_param("irr_word_fwd", fn);
            irr_word_bwd.for_each_param("irr_word_bwd", fn);
            irr_sent_fwd.for_each_param("irr_sent_fwd", fn);
            irr_sent_bwd.for_each_param("irr_sent_bwd", fn);
        }
        fn("enc_attn_bilinear", enc_attn_bilinear);
        fn("init_from_query", init_from_query);
        fn("init_from_mega", init_from_mega);
        fn("query_attn_bilinear", query_attn_bilinear);
        fn("rel_attn_sent", rel_attn_sent);
        fn("rel_attn_ctx", rel_attn_ctx);
        fn("rel_attn_state", rel_attn_state);
        fn("rel_attn_v", rel_attn_v);
        fn("sim_decoder", sim_decoder);
        fn("sim_irrelevant", sim_irrelevant);
        dec_cell.for_each_param("dec_cell", fn);
        fn("out_hidden_w", out_hidden_w);
        fn("out_hidden_b", out_hidden_b);
        fn("out_proj_w", out_proj_w);
        fn("out_proj_b", out_proj_b);
    }

    std::vector<TensorT<S>*> param_list() {
        std::vector<TensorT<S>*> out;
        for_each_param([&](const std::string&, TensorT<S>& t) { out.push_back(&t); });
        return out;
    }

    std::vector<std::string> param_names() {
        std::vector<std::string> out;
        for_each_param([&](const std::string& name, TensorT<S>&) { out.push_back(name); });
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for_each_param([&](const std::string&, TensorT<S>& t) { n += t.size(); });
        return n;
    }

    // Same structure and values at another precision, for finite-difference work.
    template <class S2>
    ModelParams<S2> cast() {
        ModelParams<S2> other;
        Rng throwaway(0);
        ModelConfig cfg = config;
        other.init(cfg, throwaway);
        std::vector<TensorT<S>*> mine = param_list();
        std::vector<TensorT<S2>*> theirs = other.param_list();
        for (std::size_t i = 0; i < mine.size(); ++i) {
            auto& dst = theirs[i]->mutable_value();
            const auto& src = mine[i]->value();
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<S2>(src[j]);
        }
        return other;
    }
};

// Reads "token v1 v2 ... vD" lines and overwrites the embedding rows of the
// ids present in resolve; rows for unknown tokens keep their random init.
// Returns the number of rows loaded.
template <class S>
int load_embedding_file(const std::string& path, TensorT<S>& embedding,
                        const std::function<int(const std::string&)>& resolve) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open embedding file: " + path);
    }
    const int dim = embedding.dim(1);
    std::string line;
    int line_no = 0;
    int loaded = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string token;
        is >> token;
        const int id = resolve(token);
        std::vector<double> values;
        double v;
        while (is >> v) values.push_back(v);
        if (static_cast<int>(values.size()) != dim) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(dim) + " values, got " +
                                     std::to_string(values.size()));
        }
        if (id < 0) continue;
        auto& data = embedding.mutable_value();
        for (int j = 0; j < dim; ++j) {
            data[static_cast<std::size_t>(id) * dim + j] = static_cast<S>(values[static_cast<std::size_t>(j)]);
        }
        ++loaded;
    }
    return loaded;
}

}  // namespace ctrsgen
