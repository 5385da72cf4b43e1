#pragma once

// Token-by-token description generation. Each step attends over the query
// words and over the mega-document sentences, scores every relevant sentence
// against the irrelevant sentences to build the contrast distribution, and
// feeds both context vectors through a GRU and a readout to a distribution
// over the vocabulary.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ctrsgen/corpus.hpp"
#include "ctrsgen/encoders.hpp"
#include "ctrsgen/model.hpp"
#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

// Attention distributions of one decode step, as plain values for export
// and for normalization checks.
template <class S>
struct StepRecord {
    std::vector<S> alpha_q;  // over query tokens
    std::vector<S> alpha_r;  // over mega-document sentences
    std::vector<S> beta;     // contrast distribution over the same sentences
};

template <class S>
struct StepContexts {
    TensorT<S> alpha_q, query_ctx;  // [C], [2H]
    TensorT<S> alpha_r;             // [U]
    TensorT<S> beta;                // [U]
    TensorT<S> doc_ctx;             // [2H]
};

// h_0 from the query and mega-document representations.
template <class S>
TensorT<S> init_decoder_state(ModelParams<S>& params, const EncoderOutputs<S>& enc) {
    return add(matmul(enc.query_repr, params.init_from_query),
               matmul(enc.mega_repr, params.init_from_mega));
}

// Bilinear attention over query token states against the previous decoder
// state; context is the weighted sum of those states.
template <class S>
std::pair<TensorT<S>, TensorT<S>> query_context(ModelParams<S>& params,
                                                const EncoderOutputs<S>& enc,
                                                const TensorT<S>& h_prev) {
    TensorT<S> scores = matmul(matmul(enc.query_states, params.query_attn_bilinear), h_prev);
    TensorT<S> alpha =
        masked_softmax(scores, std::vector<S>(static_cast<std::size_t>(enc.query_len), S(1)));
    return {alpha, matmul(alpha, enc.query_states)};
}

// Additive attention over mega-document sentences, conditioned on the query
// context and the previous decoder state.
template <class S>
TensorT<S> relevant_attention(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                              const TensorT<S>& query_ctx, const TensorT<S>& h_prev) {
    TensorT<S> pre = add_rowvec(add_rowvec(matmul(enc.mega_states, params.rel_attn_sent),
                                           matmul(query_ctx, params.rel_attn_ctx)),
                                matmul(h_prev, params.rel_attn_state));
    TensorT<S> scores = matmul(tanh(pre), params.rel_attn_v);
    return masked_softmax(scores, std::vector<S>(static_cast<std::size_t>(enc.mega_count), S(1)));
}

// Contrast distribution over mega-document sentences: reward similarity to
// the decoder state, penalize the best similarity to any irrelevant
// sentence. With no irrelevant sentences, or with the balance entirely on
// the decoder-state term, the penalty is dropped.
template <class S>
std::pair<TensorT<S>, TensorT<S>> contrast_scores(ModelParams<S>& params,
                                                  const EncoderOutputs<S>& enc,
                                                  const TensorT<S>& h_prev) {
    const S lambda = static_cast<S>(params.config.lambda_contrast);
    TensorT<S> sim_dec = matmul(matmul(enc.mega_states, params.sim_decoder), h_prev);
    TensorT<S> beta_hat;
    if (enc.irr_count == 0 || lambda == S(1)) {
        beta_hat = scalar_scale(sim_dec, lambda);
    } else {
        // Per relevant sentence: normalized similarity across every
        // irrelevant sentence, then the maximum of that row.
        TensorT<S> raw = matmul(matmul(enc.mega_states, params.sim_irrelevant),
                                transpose(enc.irr_states));
        TensorT<S> sim_irr = masked_softmax_rows(
            tanh(raw), std::vector<S>(static_cast<std::size_t>(enc.irr_count), S(1)));
        TensorT<S> max_sim = max_over_axis(sim_irr);
        beta_hat = sub(scalar_scale(sim_dec, lambda), scalar_scale(max_sim, S(1) - lambda));
    }
    TensorT<S> beta =
        masked_softmax(beta_hat, std::vector<S>(static_cast<std::size_t>(enc.mega_count), S(1)));
    return {beta_hat, beta};
}

// Context vector from the elementwise product of sentence attention and
// contrast weights; the product is used as-is, without renormalization.
template <class S>
TensorT<S> doc_context(const TensorT<S>& alpha_r, const TensorT<S>& beta,
                       const TensorT<S>& mega_states) {
    return matmul(mul(beta, alpha_r), mega_states);
}

template <class S>
StepContexts<S> attention_step(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                               const TensorT<S>& h_prev) {
    StepContexts<S> out;
    auto [alpha_q, query_ctx] = query_context(params, enc, h_prev);
    out.alpha_q = alpha_q;
    out.query_ctx = query_ctx;
    out.alpha_r = relevant_attention(params, enc, query_ctx, h_prev);
    auto [beta_hat, beta] = contrast_scores(params, enc, h_prev);
    (void)beta_hat;
    out.beta = beta;
    out.doc_ctx = doc_context(out.alpha_r, out.beta, enc.mega_states);
    return out;
}

template <class S>
struct DecodeStepResult {
    TensorT<S> h;             // next decoder state
    TensorT<S> distribution;  // over the vocabulary, sums to 1
    StepContexts<S> contexts;
};

template <class S>
DecodeStepResult<S> decode_step(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                                const TensorT<S>& h_prev, int prev_token_id) {
    DecodeStepResult<S> out;
    TensorT<S> prev_emb = embed_row(params.embedding, prev_token_id);
    out.contexts = attention_step(params, enc, h_prev);
    TensorT<S> gru_in = concat<S>({prev_emb, out.contexts.query_ctx, out.contexts.doc_ctx});
    out.h = params.dec_cell.step(gru_in, h_prev);
    TensorT<S> readout_in = concat<S>({prev_emb, out.h, out.contexts.query_ctx, out.contexts.doc_ctx});
    TensorT<S> hidden = tanh(add(matmul(readout_in, params.out_hidden_w), params.out_hidden_b));
    TensorT<S> logits = add(matmul(hidden, params.out_proj_w), params.out_proj_b);
    out.distribution = masked_softmax(
        logits, std::vector<S>(static_cast<std::size_t>(params.config.vocab_size), S(1)));
    return out;
}

template <class S>
StepRecord<S> record_of(const StepContexts<S>& ctx) {
    StepRecord<S> rec;
    rec.alpha_q = ctx.alpha_q.value();
    rec.alpha_r = ctx.alpha_r.value();
    rec.beta = ctx.beta.value();
    return rec;
}

// Mean negative log-probability of the targets under the per-step
// distributions; probabilities are floored at 1e-12 inside the log.
template <class S>
TensorT<S> nll_from_distributions(const std::vector<TensorT<S>>& distributions,
                                  const std::vector<int>& targets) {
    if (distributions.empty() || distributions.size() != targets.size()) {
        throw std::invalid_argument("nll: need one distribution per target position");
    }
    std::vector<TensorT<S>> terms;
    terms.reserve(distributions.size());
    for (std::size_t i = 0; i < distributions.size(); ++i) {
        TensorT<S> p = pick(distributions[i], targets[i]);
        terms.push_back(scalar_scale(log_floored(p, S(1e-12)), S(-1)));
    }
    return scalar_scale(add_n(terms), S(1) / static_cast<S>(terms.size()));
}

// Teacher-forced loss over one instance: each step consumes the gold
// previous token, and every position after BOS (EOS included) is scored.
template <class S>
TensorT<S> teacher_forced_loss(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                               const std::vector<int>& target_ids,
                               std::vector<StepRecord<S>>* records = nullptr) {
    if (target_ids.size() < 2) {
        throw std::invalid_argument("teacher_forced_loss: target must hold BOS and EOS");
    }
    TensorT<S> h = init_decoder_state(params, enc);
    std::vector<TensorT<S>> dists;
    std::vector<int> targets;
    for (std::size_t z = 1; z < target_ids.size(); ++z) {
        DecodeStepResult<S> step = decode_step(params, enc, h, target_ids[z - 1]);
        dists.push_back(step.distribution);
        targets.push_back(target_ids[z]);
        if (records) records->push_back(record_of(step.contexts));
        h = step.h;
    }
    return nll_from_distributions(dists, targets);
}

struct GenerateOptions {
    int max_len = 60;
    int beam_width = 1;  // 1 selects greedy decoding
};

template <class S>
struct GenerationResult {
    std::vector<int> token_ids;         // emitted tokens, BOS/EOS excluded
    std::vector<StepRecord<S>> steps;   // one record per executed decode step
};

namespace detail {

template <class S>
int argmax_lowest_id(const std::vector<S>& values) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(values.size()); ++j) {
        if (values[static_cast<std::size_t>(j)] > values[static_cast<std::size_t>(best)]) best = j;
    }
    return best;
}

}  // namespace detail

template <class S>
GenerationResult<S> generate_greedy(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                                    const GenerateOptions& opt) {
    GenerationResult<S> out;
    TensorT<S> h = init_decoder_state(params, enc);
    int prev = Vocabulary::kBos;
    while (static_cast<int>(out.token_ids.size()) < opt.max_len) {
        DecodeStepResult<S> step = decode_step(params, enc, h, prev);
        out.steps.push_back(record_of(step.contexts));
        const int id = detail::argmax_lowest_id(step.distribution.value());
        if (id == Vocabulary::kEos) break;
        out.token_ids.push_back(id);
        h = step.h;
        prev = id;
    }
    return out;
}

template <class S>
GenerationResult<S> generate_beam(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                                  const GenerateOptions& opt) {
    struct Hyp {
        TensorT<S> h;
        int prev = Vocabulary::kBos;
        std::vector<int> tokens;
        std::vector<StepRecord<S>> steps;
        double log_prob = 0.0;
        bool done = false;

        double normalized() const {
            return log_prob / std::max<double>(1.0, static_cast<double>(tokens.size()));
        }
    };
    const int width = std::max(1, opt.beam_width);
    std::vector<Hyp> beam(1);
    beam[0].h = init_decoder_state(params, enc);
    for (int round = 0; round < opt.max_len; ++round) {
        bool any_live = false;
        for (const auto& hyp : beam) any_live = any_live || !hyp.done;
        if (!any_live) break;
        struct Candidate {
            double norm_score;
            int parent;
            int token;
            double log_prob;
        };
        std::vector<Candidate> candidates;
        std::vector<DecodeStepResult<S>> expansions(beam.size());
        for (int b = 0; b < static_cast<int>(beam.size()); ++b) {
            Hyp& hyp = beam[static_cast<std::size_t>(b)];
            if (hyp.done) {
                candidates.push_back({hyp.normalized(), b, -1, hyp.log_prob});
                continue;
            }
            expansions[static_cast<std::size_t>(b)] = decode_step(params, enc, hyp.h, hyp.prev);
            const auto& dist = expansions[static_cast<std::size_t>(b)].distribution.value();
            // Top `width` tokens of this hypothesis, probability descending,
            // ties to the lower id.
            std::vector<int> ids(dist.size());
            for (std::size_t j = 0; j < ids.size(); ++j) ids[j] = static_cast<int>(j);
            const int take = std::min<int>(width, static_cast<int>(ids.size()));
            std::partial_sort(ids.begin(), ids.begin() + take, ids.end(), [&](int x, int y) {
                if (dist[static_cast<std::size_t>(x)] != dist[static_cast<std::size_t>(y)])
                    return dist[static_cast<std::size_t>(x)] > dist[static_cast<std::size_t>(y)];
                return x < y;
            });
            for (int k = 0; k < take; ++k) {
                const int tok = ids[static_cast<std::size_t>(k)];
                const double lp =
                    hyp.log_prob +
                    std::log(std::max<double>(static_cast<double>(dist[static_cast<std::size_t>(tok)]),
                                              1e-300));
                const double len = std::max<double>(
                    1.0, static_cast<double>(hyp.tokens.size() + (tok == Vocabulary::kEos ? 0 : 1)));
                candidates.push_back({lp / len, b, tok, lp});
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.norm_score != b.norm_score) return a.norm_score > b.norm_score;
            if (a.parent != b.parent) return a.parent < b.parent;
            return a.token < b.token;
        });
        if (static_cast<int>(candidates.size()) > width) {
            candidates.resize(static_cast<std::size_t>(width));
        }
        std::vector<Hyp> next;
        next.reserve(candidates.size());
        for (const auto& cand : candidates) {
            Hyp hyp = beam[static_cast<std::size_t>(cand.parent)];
            if (cand.token < 0) {
                next.push_back(std::move(hyp));  // already finished, carried through
                continue;
            }
            const auto& exp = expansions[static_cast<std::size_t>(cand.parent)];
            hyp.steps.push_back(record_of(exp.contexts));
            hyp.log_prob = cand.log_prob;
            if (cand.token == Vocabulary::kEos) {
                hyp.done = true;
            } else {
                hyp.tokens.push_back(cand.token);
                hyp.h = exp.h;
                hyp.prev = cand.token;
            }
            next.push_back(std::move(hyp));
        }
        beam = std::move(next);
    }
    int best = 0;
    for (int b = 1; b < static_cast<int>(beam.size()); ++b) {
        if (beam[static_cast<std::size_t>(b)].normalized() >
            beam[static_cast<std::size_t>(best)].normalized())
            best = b;
    }
    GenerationResult<S> out;
    out.token_ids = std::move(beam[static_cast<std::size_t>(best)].tokens);
    out.steps = std::move(beam[static_cast<std::size_t>(best)].steps);
    return out;
}

template <class S>
GenerationResult<S> generate(ModelParams<S>& params, const EncoderOutputs<S>& enc,
                             const GenerateOptions& opt) {
    if (opt.max_len < 1) {
        throw std::invalid_argument("generate: max_len must be at least 1");
    }
    if (opt.beam_width <= 1) {
        return generate_greedy(params, enc, opt);
    }
    return generate_beam(params, enc, opt);
}

}  // namespace ctrsgen
