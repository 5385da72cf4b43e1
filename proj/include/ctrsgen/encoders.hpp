#pragma once

// Hidden-state production for one instance: query word states plus query
// representation, word-then-sentence encoding of the relevant mega-document
// with query-aware sentence weighting, and per-document encoding of the
// irrelevant sentences.

#include <stdexcept>
#include <vector>

#include "ctrsgen/corpus.hpp"
#include "ctrsgen/gru.hpp"
#include "ctrsgen/model.hpp"
#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

template <class S>
struct EncoderOutputs {
    TensorT<S> query_states;  // [C, 2H], one row per query token
    TensorT<S> query_repr;    // [2H]
    TensorT<S> mega_states;   // [U, 2H], one row per mega-document sentence
    TensorT<S> gamma;         // [U], query-aware sentence weights
    TensorT<S> mega_repr;     // [2H], gamma-weighted sentence states
    TensorT<S> irr_states;    // [total irrelevant sentences, 2H]; undefined when none
    std::vector<int> irr_doc_offsets;
    int query_len = 0;
    int mega_count = 0;
    int irr_count = 0;
};

// Bidirectional scan over the rows of a [T, in] matrix from zero initial
// states. Returns per-step states [T, 2H] and the final state [2H] built
// from the forward scan's last state and the backward scan's first.
template <class S>
std::pair<TensorT<S>, TensorT<S>> bigru_sequence(const GruCell<S>& fwd, const GruCell<S>& bwd,
                                                 const TensorT<S>& inputs) {
    detail::require_rank(inputs, 2, "bigru_sequence");
    const int t_len = inputs.dim(0);
    if (t_len == 0) {
        throw std::invalid_argument("bigru_sequence: empty sequence");
    }
    std::vector<TensorT<S>> fwd_states(static_cast<std::size_t>(t_len));
    std::vector<TensorT<S>> bwd_states(static_cast<std::size_t>(t_len));
    TensorT<S> h = TensorT<S>::zeros({fwd.hidden_dim});
    for (int t = 0; t < t_len; ++t) {
        h = fwd.step(row(inputs, t), h);
        fwd_states[static_cast<std::size_t>(t)] = h;
    }
    TensorT<S> fwd_final = h;
    h = TensorT<S>::zeros({bwd.hidden_dim});
    for (int t = t_len - 1; t >= 0; --t) {
        h = bwd.step(row(inputs, t), h);
        bwd_states[static_cast<std::size_t>(t)] = h;
    }
    TensorT<S> bwd_final = h;
    TensorT<S> states = hconcat(stack_rows(fwd_states), stack_rows(bwd_states));
    TensorT<S> final_state = concat<S>({fwd_final, bwd_final});
    return {states, final_state};
}

// Word-level encoding of a padded sentence block: all sentences advance in
// lockstep, one embedded column per step, with padded positions carrying
// their state through. Returns the per-sentence final states [rows, 2H].
template <class S>
TensorT<S> bigru_block_finals(const GruCell<S>& fwd, const GruCell<S>& bwd,
                              const TensorT<S>& embedding, const std::vector<int>& ids,
                              const std::vector<float>& mask, int rows, int cols) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("bigru_block_finals: empty sentence block");
    }
    std::vector<std::vector<int>> col_ids(static_cast<std::size_t>(cols),
                                          std::vector<int>(static_cast<std::size_t>(rows)));
    std::vector<std::vector<S>> col_mask(static_cast<std::size_t>(cols),
                                         std::vector<S>(static_cast<std::size_t>(rows)));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            col_ids[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
                ids[static_cast<std::size_t>(r) * cols + c];
            col_mask[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
                static_cast<S>(mask[static_cast<std::size_t>(r) * cols + c]);
        }
    }
    TensorT<S> hf = TensorT<S>::zeros({rows, fwd.hidden_dim});
    for (int c = 0; c < cols; ++c) {
        TensorT<S> x = embed_rows(embedding, col_ids[static_cast<std::size_t>(c)]);
        hf = fwd.step_rows(x, hf, col_mask[static_cast<std::size_t>(c)]);
    }
    TensorT<S> hb = TensorT<S>::zeros({rows, bwd.hidden_dim});
    for (int c = cols - 1; c >= 0; --c) {
        TensorT<S> x = embed_rows(embedding, col_ids[static_cast<std::size_t>(c)]);
        hb = bwd.step_rows(x, hb, col_mask[static_cast<std::size_t>(c)]);
    }
    return hconcat(hf, hb);
}

// Query token states and representation.
template <class S>
std::pair<TensorT<S>, TensorT<S>> encode_query(ModelParams<S>& params,
                                               const std::vector<int>& query_ids) {
    if (query_ids.empty()) {
        throw std::invalid_argument("encode_query: empty query");
    }
    TensorT<S> inputs = embed_rows(params.embedding, query_ids);
    return bigru_sequence(params.query_word_fwd_cell(), params.query_word_bwd_cell(), inputs);
}

// Sentence states of the relevant mega-document plus the query-aware
// weighting and the weighted representation.
template <class S>
void encode_relevant(ModelParams<S>& params, const EncodedQuadruple& enc,
                     const TensorT<S>& query_repr, EncoderOutputs<S>& out) {
    if (enc.mega_rows == 0) {
        throw std::invalid_argument("encode_relevant: instance has no relevant sentences");
    }
    TensorT<S> word_finals = bigru_block_finals(params.word_fwd, params.word_bwd, params.embedding,
                                                enc.mega_ids, enc.mega_mask, enc.mega_rows,
                                                enc.mega_cols);
    auto [sent_states, sent_final] = bigru_sequence(params.sent_fwd, params.sent_bwd, word_finals);
    (void)sent_final;
    out.mega_states = sent_states;
    TensorT<S> scores = matmul(sent_states, matmul(query_repr, params.enc_attn_bilinear));
    out.gamma = masked_softmax(scores, std::vector<S>(static_cast<std::size_t>(enc.mega_rows), S(1)));
    out.mega_repr = matmul(out.gamma, sent_states);
    out.mega_count = enc.mega_rows;
}

// Sentence states for each irrelevant document, encoded independently: the
// word level runs over all sentences at once (no cross-sentence state), the
// sentence level runs per document.
template <class S>
void encode_irrelevant(ModelParams<S>& params, const EncodedQuadruple& enc,
                       EncoderOutputs<S>& out) {
    out.irr_doc_offsets = enc.irr_doc_offsets;
    out.irr_count = enc.irr_rows;
    if (enc.irr_rows == 0) {
        return;
    }
    TensorT<S> word_finals =
        bigru_block_finals(params.irr_word_fwd_cell(), params.irr_word_bwd_cell(), params.embedding,
                           enc.irr_ids, enc.irr_mask, enc.irr_rows, enc.irr_cols);
    std::vector<TensorT<S>> doc_states;
    for (int n = 0; n + 1 < static_cast<int>(enc.irr_doc_offsets.size()); ++n) {
        const int r0 = enc.irr_doc_offsets[static_cast<std::size_t>(n)];
        const int r1 = enc.irr_doc_offsets[static_cast<std::size_t>(n) + 1];
        auto [states, final_state] =
            bigru_sequence(params.irr_sent_fwd_cell(), params.irr_sent_bwd_cell(),
                           row_slice(word_finals, r0, r1));
        (void)final_state;
        doc_states.push_back(states);
    }
    if (doc_states.size() == 1) {
        out.irr_states = doc_states[0];
    } else {
        // Stack the per-document blocks back into one [total, 2H] matrix.
        std::vector<TensorT<S>> rows;
        for (const auto& block : doc_states) {
            for (int r = 0; r < block.dim(0); ++r) rows.push_back(row(block, r));
        }
        out.irr_states = stack_rows(rows);
    }
}

template <class S>
EncoderOutputs<S> encode_instance(ModelParams<S>& params, const EncodedQuadruple& enc) {
    EncoderOutputs<S> out;
    auto [query_states, query_repr] = encode_query(params, enc.query_ids);
    out.query_states = query_states;
    out.query_repr = query_repr;
    out.query_len = static_cast<int>(enc.query_ids.size());
    encode_relevant(params, enc, query_repr, out);
    encode_irrelevant(params, enc, out);
    return out;
}

}  // namespace ctrsgen
