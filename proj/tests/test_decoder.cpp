#include <cmath>
#include <vector>

#include "doctest.h"

#include "ctrsgen/decoder.hpp"
#include "ctrsgen/encoders.hpp"

using namespace ctrsgen;

namespace {

ModelConfig tiny_config(float lambda = 0.5f) {
    ModelConfig cfg;
    cfg.hidden = 2;
    cfg.embedding_dim = 3;
    cfg.vocab_size = 12;
    cfg.lambda_contrast = lambda;
    return cfg;
}

ModelParams<double> tiny_params(std::uint64_t seed, float lambda = 0.5f) {
    ModelParams<double> params;
    Rng rng(seed);
    params.init(tiny_config(lambda), rng);
    return params;
}

void set_zero(TensorD& t) { t.mutable_value().assign(t.size(), 0.0); }

void set_identity(TensorD& t) {
    REQUIRE(t.rank() == 2);
    REQUIRE(t.dim(0) == t.dim(1));
    set_zero(t);
    for (int i = 0; i < t.dim(0); ++i) {
        t.mutable_value()[static_cast<std::size_t>(i) * t.dim(1) + i] = 1.0;
    }
}

// Plain-loop evaluation of states * W * h, the shape shared by the bilinear
// attention and similarity scores.
std::vector<double> hand_bilinear(const TensorD& states, const TensorD& w,
                                  const TensorD& h) {
    std::vector<double> out(static_cast<std::size_t>(states.dim(0)), 0.0);
    for (int u = 0; u < states.dim(0); ++u) {
        for (int k = 0; k < w.dim(1); ++k) {
            double wk = 0.0;
            for (int j = 0; j < w.dim(0); ++j) wk += states.at(u, j) * w.at(j, k);
            out[static_cast<std::size_t>(u)] += wk * h.at(k);
        }
    }
    return out;
}

std::vector<double> hand_softmax(std::vector<double> scores) {
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double total = 0.0;
    for (double& s : scores) {
        s = std::exp(s - m);
        total += s;
    }
    for (double& s : scores) s /= total;
    return scores;
}

}  // namespace

TEST_CASE("the initial decoder state is the mapped sum of both representations") {
    ModelParams<double> params = tiny_params(1);
    EncodedQuadruple enc = make_encoded({4, 5}, {{6, 7}, {8}}, {}, {9});
    EncoderOutputs<double> out = encode_instance(params, enc);

    SUBCASE("identity query map with a zero document map copies the query") {
        set_identity(params.init_from_query);
        set_zero(params.init_from_mega);
        TensorD h0 = init_decoder_state(params, out);
        CHECK(h0.value() == out.query_repr.value());
    }
    SUBCASE("all-zero maps give the zero state") {
        set_zero(params.init_from_query);
        set_zero(params.init_from_mega);
        TensorD h0 = init_decoder_state(params, out);
        for (double v : h0.value()) CHECK(v == 0.0);
    }
    SUBCASE("random maps match explicit matrix arithmetic") {
        TensorD h0 = init_decoder_state(params, out);
        for (int j = 0; j < h0.dim(0); ++j) {
            double expect = 0.0;
            for (int p = 0; p < 4; ++p) {
                expect += out.query_repr.at(p) * params.init_from_query.at(p, j);
                expect += out.mega_repr.at(p) * params.init_from_mega.at(p, j);
            }
            CHECK(h0.at(j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("query attention collapses, flattens, and matches hand softmax") {
    ModelParams<double> params = tiny_params(2);
    Rng rng(20);
    TensorD h_prev = TensorD::uniform({4}, -1.0, 1.0, rng, false);

    SUBCASE("a single query token takes all the weight") {
        EncodedQuadruple enc = make_encoded({5}, {{6}}, {}, {7});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha, ctx] = query_context(params, out, h_prev);
        CHECK(alpha.at(0) == 1.0);
        std::vector<double> state_row;
        for (int j = 0; j < 4; ++j) state_row.push_back(out.query_states.at(0, j));
        CHECK(ctx.value() == state_row);
    }
    SUBCASE("a zero bilinear matrix spreads weight uniformly") {
        set_zero(params.query_attn_bilinear);
        EncodedQuadruple enc = make_encoded({5, 6, 7}, {{8}}, {}, {9});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha, ctx] = query_context(params, out, h_prev);
        for (int c = 0; c < 3; ++c) CHECK(alpha.at(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("two tokens match the hand-computed softmax") {
        EncodedQuadruple enc = make_encoded({5, 6}, {{8}}, {}, {9});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha, ctx] = query_context(params, out, h_prev);
        std::vector<double> expect =
            hand_softmax(hand_bilinear(out.query_states, params.query_attn_bilinear, h_prev));
        CHECK(alpha.at(0) == doctest::Approx(expect[0]).epsilon(1e-12));
        CHECK(alpha.at(1) == doctest::Approx(expect[1]).epsilon(1e-12));
    }
}

TEST_CASE("sentence attention collapses, flattens, and matches hand computation") {
    ModelParams<double> params = tiny_params(3);
    Rng rng(30);
    TensorD h_prev = TensorD::uniform({4}, -1.0, 1.0, rng, false);

    SUBCASE("one sentence takes all the weight") {
        EncodedQuadruple enc = make_encoded({5}, {{6, 7}}, {}, {8});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha_q, query_ctx] = query_context(params, out, h_prev);
        (void)alpha_q;
        TensorD alpha_r = relevant_attention(params, out, query_ctx, h_prev);
        CHECK(alpha_r.at(0) == 1.0);
    }
    SUBCASE("a zero score vector spreads weight uniformly") {
        set_zero(params.rel_attn_v);
        EncodedQuadruple enc = make_encoded({5}, {{6}, {7}, {8}, {9}}, {}, {10});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha_q, query_ctx] = query_context(params, out, h_prev);
        (void)alpha_q;
        TensorD alpha_r = relevant_attention(params, out, query_ctx, h_prev);
        for (int u = 0; u < 4; ++u) CHECK(alpha_r.at(u) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("three sentences match the additive-attention arithmetic") {
        EncodedQuadruple enc = make_encoded({5, 6}, {{6, 7}, {8}, {9, 10}}, {}, {11});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [alpha_q, query_ctx] = query_context(params, out, h_prev);
        (void)alpha_q;
        TensorD alpha_r = relevant_attention(params, out, query_ctx, h_prev);

        std::vector<double> scores;
        for (int u = 0; u < 3; ++u) {
            double score = 0.0;
            for (int k = 0; k < 4; ++k) {
                double pre = 0.0;
                for (int j = 0; j < 4; ++j) {
                    pre += out.mega_states.at(u, j) * params.rel_attn_sent.at(j, k);
                    pre += query_ctx.at(j) * params.rel_attn_ctx.at(j, k);
                    pre += h_prev.at(j) * params.rel_attn_state.at(j, k);
                }
                score += std::tanh(pre) * params.rel_attn_v.at(k);
            }
            scores.push_back(score);
        }
        std::vector<double> expect = hand_softmax(scores);
        for (int u = 0; u < 3; ++u) {
            CHECK(alpha_r.at(u) == doctest::Approx(expect[static_cast<std::size_t>(u)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("contrast scores follow the declared empty-set and balance rules") {
    Rng rng(40);
    TensorD h_prev = TensorD::uniform({4}, -1.0, 1.0, rng, false);

    SUBCASE("no irrelevant sentences leaves only the scaled decoder term") {
        ModelParams<double> params = tiny_params(4, 0.5f);
        EncodedQuadruple enc = make_encoded({5}, {{6, 7}, {8}}, {}, {9});
        EncoderOutputs<double> out = encode_instance(params, enc);
        auto [beta_hat, beta] = contrast_scores(params, out, h_prev);
        std::vector<double> sim = hand_bilinear(out.mega_states, params.sim_decoder, h_prev);
        for (int u = 0; u < 2; ++u) {
            CHECK(beta_hat.at(u) ==
                  doctest::Approx(0.5 * sim[static_cast<std::size_t>(u)]).epsilon(1e-12));
        }
        double total = beta.at(0) + beta.at(1);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("full balance on the decoder term ignores irrelevant content") {
        ModelParams<double> params = tiny_params(4, 1.0f);
        EncodedQuadruple with = make_encoded({5}, {{6, 7}, {8}}, {{{9, 10}, {11}}}, {9});
        EncodedQuadruple without = make_encoded({5}, {{6, 7}, {8}}, {}, {9});
        auto [bh_with, b_with] = contrast_scores(params, encode_instance(params, with), h_prev);
        auto [bh_without, b_without] =
            contrast_scores(params, encode_instance(params, without), h_prev);
        CHECK(bh_with.value() == bh_without.value());
        CHECK(b_with.value() == b_without.value());
    }
    SUBCASE("a single irrelevant sentence has normalized similarity exactly one") {
        ModelParams<double> params = tiny_params(4, 0.5f);
        EncodedQuadruple enc = make_encoded({5}, {{6, 7}, {8}}, {{{9, 10}}}, {9});
        EncoderOutputs<double> out = encode_instance(params, enc);
        REQUIRE(out.irr_count == 1);
        auto [beta_hat, beta] = contrast_scores(params, out, h_prev);
        std::vector<double> sim = hand_bilinear(out.mega_states, params.sim_decoder, h_prev);
        for (int u = 0; u < 2; ++u) {
            // the max over the softmax-normalized row of one entry is 1
            CHECK(beta_hat.at(u) ==
                  doctest::Approx(0.5 * sim[static_cast<std::size_t>(u)] - 0.5).epsilon(1e-12));
        }
    }
    SUBCASE("lowering one raw score strictly lowers its normalized share") {
        TensorD a = TensorD::from({2}, {0.3, -0.2});
        TensorD b = TensorD::from({2}, {0.3 - 0.4, -0.2});
        const std::vector<double> ones{1.0, 1.0};
        TensorD sa = masked_softmax(a, ones);
        TensorD sb = masked_softmax(b, ones);
        CHECK(sb.at(0) < sa.at(0));
        CHECK(sb.at(1) > sa.at(1));
    }
}

TEST_CASE("the document context weights states by the unrenormalized product") {
    ModelParams<double> params = tiny_params(5);
    Rng rng(50);
    TensorD h_prev = TensorD::uniform({4}, -1.0, 1.0, rng, false);

    SUBCASE("one sentence passes through unchanged") {
        EncodedQuadruple enc = make_encoded({5}, {{6, 7}}, {}, {8});
        EncoderOutputs<double> out = encode_instance(params, enc);
        StepContexts<double> ctx = attention_step(params, out, h_prev);
        std::vector<double> state_row;
        for (int j = 0; j < 4; ++j) state_row.push_back(out.mega_states.at(0, j));
        CHECK(ctx.doc_ctx.value() == state_row);
    }
    SUBCASE("hand-set weights reproduce the weighted sum") {
        EncodedQuadruple enc = make_encoded({5}, {{6}, {7}}, {}, {8});
        EncoderOutputs<double> out = encode_instance(params, enc);
        TensorD alpha = TensorD::from({2}, {0.75, 0.25});
        TensorD beta = TensorD::from({2}, {0.4, 0.6});
        TensorD ctx = doc_context(alpha, beta, out.mega_states);
        for (int j = 0; j < 4; ++j) {
            const double expect =
                0.4 * 0.75 * out.mega_states.at(0, j) + 0.6 * 0.25 * out.mega_states.at(1, j);
            CHECK(ctx.at(j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("uniform contrast weights scale the attention average") {
        EncodedQuadruple enc = make_encoded({5}, {{6}, {7}}, {}, {8});
        EncoderOutputs<double> out = encode_instance(params, enc);
        TensorD alpha = TensorD::from({2}, {0.3, 0.7});
        TensorD beta = TensorD::from({2}, {0.5, 0.5});
        TensorD ctx = doc_context(alpha, beta, out.mega_states);
        for (int j = 0; j < 4; ++j) {
            const double expect =
                0.5 * (0.3 * out.mega_states.at(0, j) + 0.7 * out.mega_states.at(1, j));
            CHECK(ctx.at(j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("decode steps emit proper distributions deterministically") {
    ModelParams<double> params = tiny_params(6);
    EncodedQuadruple enc = make_encoded({4, 5}, {{6, 7}, {8}}, {{{9}}}, {10, 11});
    EncoderOutputs<double> out = encode_instance(params, enc);
    TensorD h0 = init_decoder_state(params, out);

    DecodeStepResult<double> first = decode_step(params, out, h0, Vocabulary::kBos);
    REQUIRE(first.distribution.dim(0) == 12);
    double total = 0.0;
    for (int i = 0; i < 12; ++i) {
        CHECK(first.distribution.at(i) > 0.0);  // softmax keeps full support
        total += first.distribution.at(i);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));

    DecodeStepResult<double> again = decode_step(params, out, h0, Vocabulary::kBos);
    CHECK(first.distribution.value() == again.distribution.value());
    CHECK(first.h.value() == again.h.value());

    CHECK_THROWS_AS(decode_step(params, out, h0, 99), std::invalid_argument);
    CHECK_THROWS_AS(decode_step(params, out, h0, -1), std::invalid_argument);
}

TEST_CASE("the mean negative log likelihood matches closed forms") {
    SUBCASE("uniform distributions cost log of the vocabulary size") {
        std::vector<TensorD> dists{TensorD::filled({8}, 0.125)};
        TensorD loss = nll_from_distributions(dists, std::vector<int>{3});
        CHECK(loss.item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));
    }
    SUBCASE("certain predictions cost zero") {
        std::vector<TensorD> dists{TensorD::from({4}, {0.0, 1.0, 0.0, 0.0}),
                                   TensorD::from({4}, {0.0, 0.0, 0.0, 1.0})};
        TensorD loss = nll_from_distributions(dists, std::vector<int>{1, 3});
        CHECK(loss.item() == 0.0);
    }
    SUBCASE("two positions average their log costs") {
        std::vector<TensorD> dists{TensorD::from({2}, {0.5, 0.5}),
                                   TensorD::from({4}, {0.25, 0.25, 0.25, 0.25})};
        TensorD loss = nll_from_distributions(dists, std::vector<int>{0, 2});
        CHECK(loss.item() ==
              doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));
    }
    SUBCASE("a distribution count mismatch is rejected") {
        std::vector<TensorD> dists{TensorD::from({2}, {0.5, 0.5})};
        CHECK_THROWS_AS(nll_from_distributions(dists, std::vector<int>{0, 1}),
                        std::invalid_argument);
        CHECK_THROWS_AS(nll_from_distributions(std::vector<TensorD>{}, std::vector<int>{}),
                        std::invalid_argument);
    }
}

TEST_CASE("teacher forcing records one normalized attention row per step") {
    ModelParams<double> params = tiny_params(7);
    EncodedQuadruple enc = make_encoded({4, 5, 6}, {{7, 8}, {9}}, {{{10}, {11}}}, {7, 9, 11});
    EncoderOutputs<double> out = encode_instance(params, enc);
    std::vector<StepRecord<double>> records;
    TensorD loss = teacher_forced_loss(params, out, enc.target_ids, &records);
    CHECK(std::isfinite(loss.item()));
    REQUIRE(records.size() == enc.target_ids.size() - 1);
    for (const auto& rec : records) {
        REQUIRE(rec.alpha_q.size() == 3);
        REQUIRE(rec.alpha_r.size() == 2);
        REQUIRE(rec.beta.size() == 2);
        double sq = 0.0, sr = 0.0, sb = 0.0;
        for (double v : rec.alpha_q) sq += v;
        for (double v : rec.alpha_r) sr += v;
        for (double v : rec.beta) sb += v;
        CHECK(sq == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(sr == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(sb == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("generation respects caps, strategies, and determinism") {
    ModelParams<double> params = tiny_params(8);
    EncodedQuadruple enc = make_encoded({4, 5}, {{6, 7}, {8, 9}}, {}, {10});
    EncoderOutputs<double> out = encode_instance(params, enc);

    SUBCASE("a cap of one emits at most one token") {
        GenerateOptions opt;
        opt.max_len = 1;
        GenerationResult<double> result = generate(params, out, opt);
        CHECK(result.token_ids.size() <= 1);
    }
    SUBCASE("a non-positive cap is rejected") {
        GenerateOptions opt;
        opt.max_len = 0;
        CHECK_THROWS_AS(generate(params, out, opt), std::invalid_argument);
    }
    SUBCASE("beam width one reproduces greedy decoding") {
        for (std::uint64_t seed = 21; seed < 26; ++seed) {
            ModelParams<double> p = tiny_params(seed);
            EncoderOutputs<double> o = encode_instance(p, enc);
            GenerateOptions greedy_opt;
            greedy_opt.max_len = 6;
            greedy_opt.beam_width = 1;
            GenerateOptions beam_opt;
            beam_opt.max_len = 6;
            beam_opt.beam_width = 1;
            GenerationResult<double> greedy = generate_greedy(p, o, greedy_opt);
            GenerationResult<double> beam = generate_beam(p, o, beam_opt);
            CHECK(greedy.token_ids == beam.token_ids);
        }
    }
    SUBCASE("identical calls generate identical sequences") {
        GenerateOptions opt;
        opt.max_len = 8;
        GenerationResult<double> a = generate(params, out, opt);
        GenerationResult<double> b = generate(params, out, opt);
        CHECK(a.token_ids == b.token_ids);
        CHECK(a.steps.size() == b.steps.size());
    }
    SUBCASE("wider beams still emit tokens within the cap") {
        GenerateOptions opt;
        opt.max_len = 5;
        opt.beam_width = 3;
        GenerationResult<double> result = generate(params, out, opt);
        CHECK(result.token_ids.size() <= 5);
        for (int id : result.token_ids) {
            CHECK(id >= 0);
            CHECK(id < 12);
            CHECK(id != Vocabulary::kBos);
            CHECK(id != Vocabulary::kEos);
        }
    }
}

TEST_CASE("generation with the balance fully on relevance ignores irrelevant docs") {
    ModelParams<double> params = tiny_params(9, 1.0f);
    EncodedQuadruple with = make_encoded({4, 5}, {{6, 7}, {8}}, {{{9, 10}}, {{11}}}, {6});
    EncodedQuadruple without = make_encoded({4, 5}, {{6, 7}, {8}}, {}, {6});
    GenerateOptions opt;
    opt.max_len = 8;
    GenerationResult<double> a = generate(params, encode_instance(params, with), opt);
    GenerationResult<double> b = generate(params, encode_instance(params, without), opt);
    CHECK(a.token_ids == b.token_ids);
}
