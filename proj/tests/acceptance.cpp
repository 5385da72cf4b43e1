// Acceptance gate for the shipped guarantees. Each check prints exactly one
// [PASS]/[FAIL] line with its measured numbers and pinned tolerances; the
// process exits nonzero if any check fails. Run through ctest or directly.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ctrsgen/checkpoint.hpp"
#include "ctrsgen/corpus.hpp"
#include "ctrsgen/decoder.hpp"
#include "ctrsgen/encoders.hpp"
#include "ctrsgen/grad_check.hpp"
#include "ctrsgen/model.hpp"
#include "ctrsgen/pipeline.hpp"
#include "ctrsgen/rng.hpp"
#include "ctrsgen/rouge.hpp"
#include "ctrsgen/training.hpp"

namespace fs = std::filesystem;
using namespace ctrsgen;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), pattern, a, b);
    return buf;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    fs::path dir = fs::temp_directory_path() / "ctrsgen_acceptance";
    fs::create_directories(dir);
    return dir;
}

// Random encoded instance over ids [4, vocab): 1-4 query tokens, 1-5 mega
// sentences, optional irrelevant documents, 2-6 description tokens.
struct InstanceParts {
    std::vector<int> query;
    std::vector<std::vector<int>> mega;
    std::vector<std::vector<std::vector<int>>> irr;
    std::vector<int> description;
};

InstanceParts random_parts(Rng& rng, int vocab, int min_irr_docs, int max_irr_docs) {
    auto seq = [&](int lo, int hi) {
        std::vector<int> ids(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
        for (auto& id : ids) id = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 4)));
        return ids;
    };
    InstanceParts parts;
    parts.query = seq(1, 4);
    const int u = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < u; ++i) parts.mega.push_back(seq(1, 6));
    const int docs =
        min_irr_docs + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_irr_docs - min_irr_docs + 1)));
    for (int n = 0; n < docs; ++n) {
        std::vector<std::vector<int>> doc;
        const int sents = 1 + static_cast<int>(rng.below(3));
        for (int t = 0; t < sents; ++t) doc.push_back(seq(1, 5));
        parts.irr.push_back(doc);
    }
    parts.description = seq(2, 6);
    return parts;
}

EncodedQuadruple to_encoded(const InstanceParts& parts, bool keep_irrelevant) {
    return make_encoded(parts.query, parts.mega,
                        keep_irrelevant ? parts.irr
                                        : std::vector<std::vector<std::vector<int>>>{},
                        parts.description);
}

// Shared 8-instance synthetic corpus: fixed description scaffold with one
// distinguishing content word per instance, drawn from query and documents.
std::vector<Quadruple> overfit_corpus() {
    static const char* topics[] = {"amber", "basalt", "cobalt", "dune",
                                   "ember", "fjord",  "garnet", "harbor"};
    std::vector<Quadruple> corpus;
    for (int i = 0; i < 8; ++i) {
        const std::string w = topics[i];
        const std::string other = topics[(i + 3) % 8];
        Quadruple q;
        q.query = {"describe", w};
        q.relevant_docs = {{{"the", w, "appears", "here"},
                            {"many", "people", "like", "the", w}}};
        if (i % 2 == 0) {
            q.irrelevant_docs = {{{"nothing", "about", other, "here"}}};
        }
        q.description = {"this", "query", "seeks", "facts", "about", "the", w, "topic"};
        corpus.push_back(q);
    }
    return corpus;
}

// 1) Finite differences confirm every backward rule and the full
//    per-instance loss, in double precision, within the minute budget.
Outcome check_gradient_soundness() {
    const auto start = std::chrono::steady_clock::now();
    GradCheckSummary summary = run_grad_check(1);
    const double elapsed = seconds_since(start);
    Outcome out;
    out.ok = summary.ok && elapsed < 60.0;
    out.detail = fmt("worst rel err %.3e (tolerance 1e-05), ", summary.worst) +
                 fmt("%.1fs (limit 60s), ", elapsed) +
                 std::to_string(summary.checks.size()) + " checks";
    return out;
}

// 2) Every attention distribution is a proper distribution at every decode
//    step of 100 random instances: sums within 1e-5 of one, no negative
//    entries, and exactly one weight per real (unpadded) position.
Outcome check_attention_normalization() {
    const int vocab = 30;
    ModelConfig mc;
    mc.hidden = 8;
    mc.embedding_dim = 6;
    mc.vocab_size = vocab;
    Rng rng(11);
    ModelParams<float> params;
    params.init(mc, rng);

    double worst = 0.0;
    int instances = 0, steps = 0;
    auto audit = [&](const std::vector<float>& dist, int expected_size) {
        if (static_cast<int>(dist.size()) != expected_size) {
            throw std::runtime_error("distribution covers padded or missing positions");
        }
        double sum = 0.0;
        for (float v : dist) {
            if (v < 0.0f) throw std::runtime_error("negative attention weight");
            sum += static_cast<double>(v);
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    };

    for (int i = 0; i < 100; ++i) {
        EncodedQuadruple enc = to_encoded(random_parts(rng, vocab, 0, 2), true);
        EncoderOutputs<float> outputs = encode_instance(params, enc);
        audit(outputs.gamma.value(), enc.mega_rows);
        std::vector<StepRecord<float>> records;
        teacher_forced_loss<float>(params, outputs, enc.target_ids, &records);
        for (const auto& rec : records) {
            audit(rec.alpha_q, static_cast<int>(enc.query_ids.size()));
            audit(rec.alpha_r, enc.mega_rows);
            audit(rec.beta, enc.mega_rows);
            ++steps;
        }
        ++instances;
    }
    Outcome out;
    out.ok = worst < 1e-5;
    out.detail = std::to_string(instances) + " instances, " + std::to_string(steps) +
                 " steps, " + fmt("max |sum-1| %.3e (tolerance 1e-05)", worst);
    return out;
}

// 3) The model memorizes an 8-instance corpus at stock optimization
//    settings: mean per-token NLL under 0.1 and at least 6 of 8 exact
//    greedy reproductions after 300 epochs, inside ten minutes.
Outcome check_overfit_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<Quadruple> corpus = overfit_corpus();
    Vocabulary vocab = build_vocabulary(corpus, 60, true);
    LengthCaps caps;
    std::vector<EncodedQuadruple> train_set;
    for (const auto& q : corpus) train_set.push_back(encode_quadruple(q, vocab, caps));

    ModelConfig mc;
    mc.hidden = 32;
    mc.vocab_size = vocab.size();
    TrainConfig tc;
    tc.epochs = 300;
    TrainResult result = train(train_set, {}, mc, tc, caps, vocab);

    const double nll = mean_nll(result.last.params, train_set);
    int exact = 0;
    for (const auto& enc : train_set) {
        EncoderOutputs<float> outputs = encode_instance(result.last.params, enc);
        GenerateOptions gen;
        gen.max_len = 12;
        GenerationResult<float> gen_out = generate(result.last.params, outputs, gen);
        std::vector<int> reference(enc.target_ids.begin() + 1, enc.target_ids.end() - 1);
        if (gen_out.token_ids == reference) ++exact;
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.ok = nll < 0.1 && exact >= 6 && elapsed < 600.0;
    out.detail = fmt("mean NLL %.4f (tolerance 0.1), ", nll) + std::to_string(exact) +
                 "/8 exact greedy matches (need 6), " + fmt("%.1fs (limit 600s)", elapsed);
    return out;
}

// 4) A relevant sentence that duplicates an irrelevant sentence is pushed
//    below its non-duplicated neighbor in the contrast distribution. The
//    decoder-similarity matrix is zeroed so both sentences enter with equal
//    relevance terms, and the irrelevant-similarity matrix projects onto the
//    forward half of the state. With tied encoders and both sequences at
//    position zero, the duplicated sentence's forward state is bit-identical
//    in the relevant run and the singleton irrelevant document, so its
//    self-similarity is tanh of a scaled squared norm: a guaranteed peak.
Outcome check_contrast_penalty() {
    const std::vector<int> sent_a = {4, 5, 6, 4};
    const std::vector<int> sent_b = {7, 8, 9, 5};
    const std::vector<int> sent_d = {10, 11, 10, 6};
    EncodedQuadruple enc = make_encoded({4, 7}, {sent_a, sent_b},
                                        {{sent_a}, {sent_d}}, {4, 5});

    ModelConfig mc;
    mc.hidden = 6;
    mc.embedding_dim = 5;
    mc.vocab_size = 12;
    mc.lambda_contrast = 0.5f;
    mc.init_range = 0.5f;
    Rng rng(7);
    ModelParams<float> params;
    params.init(mc, rng);
    for (auto& v : params.sim_decoder.mutable_value()) v = 0.0f;
    const int d = mc.state_size();
    // The scale lifts the small-state dot products out of tanh's flat
    // near-zero region without saturating the self-match.
    const float scale = 20.0f;
    for (auto& v : params.sim_irrelevant.mutable_value()) v = 0.0f;
    for (int i = 0; i < mc.hidden; ++i) {
        params.sim_irrelevant.mutable_value()[i * d + i] = scale;
    }

    EncoderOutputs<float> outputs = encode_instance(params, enc);
    const std::vector<float>& mega = outputs.mega_states.value();
    const std::vector<float>& irr = outputs.irr_states.value();
    auto sim = [&](int u, int t) {
        double dot = 0.0;
        for (int k = 0; k < mc.hidden; ++k) {
            dot += static_cast<double>(scale) * static_cast<double>(mega[u * d + k]) *
                   static_cast<double>(irr[t * d + k]);
        }
        return std::tanh(dot);
    };
    // Construction precondition: the duplicated sentence's similarity
    // profile over the irrelevant sentences is strictly more peaked.
    const double gap_dup = std::abs(sim(0, 0) - sim(0, 1));
    const double gap_other = std::abs(sim(1, 0) - sim(1, 1));

    TensorT<float> h0 = init_decoder_state(params, outputs);
    auto [beta_hat, beta] = contrast_scores(params, outputs, h0);
    const std::vector<float>& b = beta.value();

    Outcome out;
    out.ok = gap_dup > gap_other && b.size() == 2 && b[0] < b[1];
    out.detail = fmt("beta duplicated %.6f < ", b[0]) + fmt("beta other %.6f; ", b[1]) +
                 fmt("similarity peaks %.4f vs %.4f", gap_dup, gap_other);
    return out;
}

// 5) With the contrast balance entirely on the decoder-similarity term,
//    generation ignores irrelevant documents: token-identical output with
//    them supplied or stripped, over 20 random instances.
Outcome check_full_relevance_invariance() {
    const int vocab = 30;
    ModelConfig mc;
    mc.hidden = 8;
    mc.embedding_dim = 6;
    mc.vocab_size = vocab;
    mc.lambda_contrast = 1.0f;
    Rng rng(23);
    ModelParams<float> params;
    params.init(mc, rng);

    int identical = 0;
    for (int i = 0; i < 20; ++i) {
        InstanceParts parts = random_parts(rng, vocab, 1, 3);
        EncodedQuadruple with_irr = to_encoded(parts, true);
        EncodedQuadruple without_irr = to_encoded(parts, false);
        GenerateOptions gen;
        gen.max_len = 12;
        EncoderOutputs<float> enc_with = encode_instance(params, with_irr);
        EncoderOutputs<float> enc_without = encode_instance(params, without_irr);
        GenerationResult<float> a = generate(params, enc_with, gen);
        GenerationResult<float> b = generate(params, enc_without, gen);
        if (a.token_ids == b.token_ids) ++identical;
    }
    Outcome out;
    out.ok = identical == 20;
    out.detail = std::to_string(identical) + "/20 instances token-identical";
    return out;
}

// 6) Instances with no irrelevant documents train and decode cleanly.
Outcome check_no_irrelevant_robustness() {
    Rng rng(31);
    const int vocab = 24;
    std::vector<EncodedQuadruple> train_set;
    for (int i = 0; i < 6; ++i) train_set.push_back(to_encoded(random_parts(rng, vocab, 0, 0), true));
    Vocabulary vocab_table = Vocabulary::from_tokens(
        {"t04", "t05", "t06", "t07", "t08", "t09", "t10", "t11", "t12", "t13",
         "t14", "t15", "t16", "t17", "t18", "t19", "t20", "t21", "t22", "t23"},
        vocab);
    ModelConfig mc;
    mc.hidden = 6;
    mc.embedding_dim = 5;
    mc.vocab_size = vocab_table.size();
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 3;
    tc.lr = 0.01f;
    TrainResult result = train(train_set, {}, mc, tc, LengthCaps{}, vocab_table);

    int decoded = 0;
    for (const auto& enc : train_set) {
        EncoderOutputs<float> outputs = encode_instance(result.last.params, enc);
        GenerateOptions gen;
        gen.max_len = 8;
        GenerationResult<float> g = generate(result.last.params, outputs, gen);
        if (static_cast<int>(g.token_ids.size()) <= gen.max_len) ++decoded;
    }
    Outcome out;
    out.ok = decoded == 6;
    out.detail = "6 instances trained 2 epochs and decoded, " + std::to_string(decoded) +
                 "/6 generations within bounds";
    return out;
}

// 7) Recall-oriented overlap scores match six hand-computed values.
Outcome check_rouge_hand_values() {
    using Toks = std::vector<std::string>;
    struct Case {
        double got, want;
        const char* label;
    };
    const Toks cat_sat = {"the", "cat", "sat"};
    const Toks cat_ran = {"the", "cat", "ran"};
    std::vector<Case> cases = {
        {rouge_n(cat_sat, cat_sat, 1), 1.0, "unigram identity"},
        {rouge_n({"a", "b"}, {"a", "c"}, 1), 0.5, "unigram half overlap"},
        {rouge_n(cat_sat, cat_ran, 2), 0.5, "bigram half overlap"},
        {rouge_l(cat_sat, cat_sat), 1.0, "subsequence identity"},
        {rouge_l({"a", "b", "c"}, {"a", "c"}), 1.0, "subsequence full cover"},
        {rouge_n({"x", "y"}, {"p", "q"}, 1), 0.0, "disjoint"},
    };
    double worst = 0.0;
    for (const auto& c : cases) worst = std::max(worst, std::abs(c.got - c.want));
    Outcome out;
    out.ok = worst < 1e-9;
    out.detail = fmt("6 hand values, max deviation %.3e (tolerance 1e-09)", worst);
    return out;
}

// 8) Same seed and config, run twice: bit-identical checkpoint files; and a
//    load/save round trip reproduces the file byte for byte.
Outcome check_determinism() {
    std::vector<Quadruple> corpus = overfit_corpus();
    Vocabulary vocab = build_vocabulary(corpus, 60, true);
    LengthCaps caps;
    std::vector<EncodedQuadruple> train_set;
    for (const auto& q : corpus) train_set.push_back(encode_quadruple(q, vocab, caps));
    ModelConfig mc;
    mc.hidden = 8;
    mc.embedding_dim = 10;
    mc.vocab_size = vocab.size();
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 77;

    const fs::path dir = work_dir();
    const std::string path_a = (dir / "det_a.bin").string();
    const std::string path_b = (dir / "det_b.bin").string();
    const std::string path_c = (dir / "det_roundtrip.bin").string();

    TrainResult run_a = train(train_set, {}, mc, tc, caps, vocab);
    TrainResult run_b = train(train_set, {}, mc, tc, caps, vocab);
    save_checkpoint(run_a.last, path_a);
    save_checkpoint(run_b.last, path_b);
    const bool reruns_match = file_bytes(path_a) == file_bytes(path_b);

    Checkpoint reloaded = load_checkpoint(path_a);
    save_checkpoint(reloaded, path_c);
    const bool roundtrip_matches = file_bytes(path_a) == file_bytes(path_c);

    Outcome out;
    out.ok = reruns_match && roundtrip_matches;
    out.detail = std::string("rerun checkpoints ") +
                 (reruns_match ? "bit-identical" : "DIFFER") + ", round trip " +
                 (roundtrip_matches ? "byte-identical" : "DIFFERS");
    return out;
}

// 9) The zero-flag configuration is exactly the stock recipe.
Outcome check_default_config() {
    ModelConfig mc;
    TrainConfig tc;
    PrepOptions prep;
    struct Expect {
        bool ok;
        const char* label;
    };
    std::vector<Expect> expects = {
        {tc.lr == 0.0005f, "lr 0.0005"},
        {tc.batch_size == 16, "batch 16"},
        {tc.clip_norm == 5.0f, "clip 5"},
        {mc.hidden == 256, "hidden 256"},
        {mc.embedding_dim == 300, "embedding 300"},
        {mc.lambda_contrast == 0.5f, "lambda 0.5"},
        {mc.init_range == 0.1f, "init range 0.1"},
        {prep.vocab_size == 120000, "vocab cap 120000"},
        {tc.adam_beta1 == 0.9f && tc.adam_beta2 == 0.999f && tc.adam_eps == 1e-8f, "adam moments"},
    };
    Outcome out;
    out.ok = true;
    std::string bad;
    for (const auto& e : expects) {
        if (!e.ok) {
            out.ok = false;
            bad += std::string(bad.empty() ? "" : ", ") + e.label;
        }
    }
    out.detail = out.ok ? "all 9 stock settings match" : ("mismatch: " + bad);
    return out;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"gradient-soundness", check_gradient_soundness},
        {"attention-normalization", check_attention_normalization},
        {"overfit-oracle", check_overfit_oracle},
        {"contrast-penalty", check_contrast_penalty},
        {"full-relevance-invariance", check_full_relevance_invariance},
        {"no-irrelevant-robustness", check_no_irrelevant_robustness},
        {"rouge-hand-values", check_rouge_hand_values},
        {"determinism", check_determinism},
        {"default-config", check_default_config},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.ok = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %-26s %s\n", out.ok ? "PASS" : "FAIL", c.name, out.detail.c_str());
        std::fflush(stdout);
        if (!out.ok) ++failures;
    }
    if (failures > 0) {
        std::printf("%d of %zu acceptance checks failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu acceptance checks passed\n", criteria.size());
    return 0;
}
