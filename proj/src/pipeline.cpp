#include "ctrsgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ctrsgen/encoders.hpp"
#include "ctrsgen/grad_check.hpp"
#include "ctrsgen/rouge.hpp"

namespace ctrsgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string joined(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// A [section] header followed by key = value lines in insertion order;
// readable back through the top-level --config flag.
void write_config_file(const std::string& path, const std::string& section,
                       const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write config file: " + path);
    }
    out << "[" << section << "]\n";
    for (const auto& [key, value] : entries) {
        out << key << " = " << value << "\n";
    }
}

void append_caps(std::vector<std::pair<std::string, std::string>>& entries,
                 const LengthCaps& caps) {
    entries.emplace_back("cap-query-tokens", std::to_string(caps.query_tokens));
    entries.emplace_back("cap-sentence-tokens", std::to_string(caps.sentence_tokens));
    entries.emplace_back("cap-mega-sentences", std::to_string(caps.mega_sentences));
    entries.emplace_back("cap-doc-sentences", std::to_string(caps.doc_sentences));
    entries.emplace_back("cap-target-tokens", std::to_string(caps.target_tokens));
}

void check_caps(const LengthCaps& caps) {
    if (caps.query_tokens < 1 || caps.sentence_tokens < 1 || caps.mega_sentences < 1 ||
        caps.doc_sentences < 1 || caps.target_tokens < 1) {
        throw std::invalid_argument("length caps must all be positive");
    }
}

json quad_to_json(const Quadruple& q) {
    json j;
    j["query"] = joined(q.query);
    json rel = json::array();
    for (const auto& doc : q.relevant_docs) {
        json sents = json::array();
        for (const auto& sent : doc) sents.push_back(joined(sent));
        rel.push_back(std::move(sents));
    }
    j["relevant"] = std::move(rel);
    json irr = json::array();
    for (const auto& doc : q.irrelevant_docs) {
        json sents = json::array();
        for (const auto& sent : doc) sents.push_back(joined(sent));
        irr.push_back(std::move(sents));
    }
    j["irrelevant"] = std::move(irr);
    j["description"] = joined(q.description);
    if (!q.meta.empty()) j["meta"] = q.meta;
    return j;
}

void write_raw_split(const std::vector<Quadruple>& quads, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write split file: " + path);
    }
    for (const auto& q : quads) out << quad_to_json(q).dump() << "\n";
}

void write_encoded_split(const std::vector<Quadruple>& quads, const Vocabulary& vocab,
                         const LengthCaps& caps, const std::string& path) {
    std::vector<EncodedQuadruple> encoded;
    encoded.reserve(quads.size());
    for (const auto& q : quads) encoded.push_back(encode_quadruple(q, vocab, caps));
    save_encoded(encoded, path);
}

}  // namespace

PrepSummary run_prep(const PrepOptions& opt) {
    check_caps(opt.caps);
    if (opt.vocab_size < 1) {
        throw std::invalid_argument("prep: vocab size must be at least 1");
    }
    std::vector<Quadruple> corpus = load_corpus(opt.input);
    const int n = static_cast<int>(corpus.size());
    int train_n = opt.train_size;
    const int valid_n = std::max(0, opt.valid_size);
    const int test_n = std::max(0, opt.test_size);
    if (train_n < 0) {
        train_n = n - valid_n - test_n;
        if (train_n < 0) {
            throw std::invalid_argument("prep: valid+test sizes exceed the corpus of " +
                                        std::to_string(n));
        }
    }
    CorpusSplits splits = split_corpus(corpus, opt.seed, train_n, valid_n, test_n);
    Vocabulary vocab = build_vocabulary(corpus, opt.vocab_size, opt.vocab_includes_description);

    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    vocab.save((dir / "vocab.txt").string());
    write_raw_split(splits.train, (dir / "train.jsonl").string());
    write_raw_split(splits.valid, (dir / "valid.jsonl").string());
    write_raw_split(splits.test, (dir / "test.jsonl").string());
    write_encoded_split(splits.train, vocab, opt.caps, (dir / "train.encoded.jsonl").string());
    write_encoded_split(splits.valid, vocab, opt.caps, (dir / "valid.encoded.jsonl").string());
    write_encoded_split(splits.test, vocab, opt.caps, (dir / "test.encoded.jsonl").string());

    CorpusStats stats = corpus_stats(corpus);
    json stats_json{{"query_count", stats.query_count},
                    {"avg_query_tokens", stats.avg_query_tokens},
                    {"avg_relevant_docs", stats.avg_relevant_docs},
                    {"avg_irrelevant_docs", stats.avg_irrelevant_docs},
                    {"avg_description_tokens", stats.avg_description_tokens},
                    {"without_irrelevant", stats.without_irrelevant},
                    {"vocab_tokens", vocab.size()},
                    {"splits", json{{"train", train_n}, {"valid", valid_n}, {"test", test_n}}}};
    {
        std::ofstream out((dir / "stats.json").string());
        if (!out) {
            throw std::runtime_error("cannot write stats file");
        }
        out << stats_json.dump(2) << "\n";
    }

    std::vector<std::pair<std::string, std::string>> entries{
        {"vocab-size", std::to_string(opt.vocab_size)},
        {"train-size", std::to_string(train_n)},
        {"valid-size", std::to_string(valid_n)},
        {"test-size", std::to_string(test_n)},
        {"seed", std::to_string(opt.seed)},
        {"vocab-include-description", opt.vocab_includes_description ? "true" : "false"}};
    append_caps(entries, opt.caps);
    write_config_file((dir / "prep.config").string(), "prep", entries);

    PrepSummary summary;
    summary.stats = stats;
    summary.vocab_tokens = vocab.size();
    summary.train_count = train_n;
    summary.valid_count = valid_n;
    summary.test_count = test_n;
    return summary;
}

TrainRunSummary run_train(const TrainRunOptions& opt) {
    check_caps(opt.caps);
    if (opt.model.lambda_contrast < 0.0f || opt.model.lambda_contrast > 1.0f) {
        throw std::invalid_argument("train: lambda must lie in [0, 1]");
    }
    if (opt.config.batch_size < 1 || opt.config.epochs < 0 || opt.config.lr <= 0.0f ||
        opt.config.clip_norm <= 0.0f) {
        throw std::invalid_argument("train: batch size, epochs, lr, and clip norm must be positive");
    }
    std::vector<EncodedQuadruple> train_set = load_encoded(opt.train_path);
    std::vector<EncodedQuadruple> valid_set;
    if (!opt.valid_path.empty()) {
        valid_set = load_encoded(opt.valid_path);
    }

    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    const std::string loss_path = (dir / "loss.tsv").string();
    const bool resuming = !opt.resume_path.empty();
    std::ofstream loss_out(loss_path, resuming ? std::ios::app : std::ios::trunc);
    if (!loss_out) {
        throw std::runtime_error("cannot write loss log: " + loss_path);
    }
    if (!resuming) {
        loss_out << "epoch\ttrain_loss\tvalid_loss\n";
    }
    auto on_epoch = [&](const EpochMetrics& m) {
        loss_out << m.epoch << "\t" << num(m.train_loss) << "\t"
                 << (std::isfinite(m.valid_loss) ? num(m.valid_loss) : "-") << "\n";
        loss_out.flush();
    };

    TrainResult result;
    if (resuming) {
        Checkpoint base = load_checkpoint(opt.resume_path);
        if (opt.override_epochs > 0) {
            base.train_config.epochs = opt.override_epochs;
        }
        result = resume_training(base, train_set, valid_set, on_epoch);
    } else {
        Vocabulary vocab = Vocabulary::load(opt.vocab_path);
        ModelConfig mc = opt.model;
        mc.vocab_size = vocab.size();
        result = train(train_set, valid_set, mc, opt.config, opt.caps, vocab, on_epoch,
                       opt.embedding_path);
    }

    TrainRunSummary summary;
    summary.metrics = result.metrics;
    summary.last_path = (dir / "checkpoint.last.bin").string();
    save_checkpoint(result.last, summary.last_path);
    summary.best_path = (dir / "checkpoint.bin").string();
    if (result.best_updated || !resuming) {
        save_checkpoint(result.best, summary.best_path);
    }

    const ModelConfig& mc = result.last.model_config;
    const TrainConfig& tc = result.last.train_config;
    std::vector<std::pair<std::string, std::string>> entries{
        {"lr", num(tc.lr)},
        {"batch-size", std::to_string(tc.batch_size)},
        {"clip-norm", num(tc.clip_norm)},
        {"epochs", std::to_string(tc.epochs)},
        {"patience", std::to_string(tc.patience)},
        {"seed", std::to_string(tc.seed)},
        {"adam-beta1", num(tc.adam_beta1)},
        {"adam-beta2", num(tc.adam_beta2)},
        {"adam-eps", num(tc.adam_eps)},
        {"hidden", std::to_string(mc.hidden)},
        {"embedding-dim", std::to_string(mc.embedding_dim)},
        {"init-range", num(mc.init_range)},
        {"lambda", num(mc.lambda_contrast)},
        {"share-query-encoder", mc.share_query_encoder ? "true" : "false"},
        {"untie-irrelevant-encoders", mc.untie_irrelevant_encoders ? "true" : "false"},
        {"vocab-tokens", std::to_string(mc.vocab_size)}};
    append_caps(entries, result.last.caps);
    write_config_file((dir / "train.config").string(), "train", entries);
    return summary;
}

int run_generate(const GenerateRunOptions& opt) {
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    std::vector<Quadruple> corpus = load_corpus(opt.input_path);
    GenerateOptions gen = opt.gen;
    if (gen.max_len <= 0) gen.max_len = ckpt.caps.target_tokens;
    std::ofstream out(opt.output_path);
    if (!out) {
        throw std::runtime_error("cannot write output file: " + opt.output_path);
    }
    int index = 0;
    for (const auto& quad : corpus) {
        EncodedQuadruple enc = encode_quadruple(quad, ckpt.vocab, ckpt.caps);
        EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
        GenerationResult<float> result = generate(ckpt.params, outputs, gen);
        std::vector<std::string> tokens;
        tokens.reserve(result.token_ids.size());
        for (int id : result.token_ids) tokens.push_back(ckpt.vocab.token_of(id));
        out << json{{"index", index}, {"generated", joined(tokens)}}.dump() << "\n";
        ++index;
    }
    return index;
}

RougeReport run_eval(const EvalRunOptions& opt) {
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    std::vector<Quadruple> corpus = load_corpus(opt.input_path);
    GenerateOptions gen = opt.gen;
    if (gen.max_len <= 0) gen.max_len = ckpt.caps.target_tokens;
    int threads = opt.threads;
    if (threads <= 0) {
        threads = 1;
        if (const char* env = std::getenv("CTRSGEN_THREADS")) {
            threads = std::max(1, std::atoi(env));
        }
    }
    RougeReport report = evaluate_corpus(ckpt, corpus, gen, threads);
    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    write_report_json(report, (dir / "report.json").string());
    write_report_tsv(report, (dir / "report.tsv").string());
    std::vector<std::pair<std::string, std::string>> entries{
        {"checkpoint", opt.checkpoint_path},
        {"input", opt.input_path},
        {"strategy", gen.beam_width <= 1 ? "greedy" : "beam"},
        {"beam-width", std::to_string(gen.beam_width)},
        {"max-len", std::to_string(gen.max_len)},
        {"threads", std::to_string(threads)}};
    write_config_file((dir / "eval.config").string(), "eval", entries);
    return report;
}

int run_inspect_attention(const InspectRunOptions& opt) {
    Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    std::vector<Quadruple> corpus = load_corpus(opt.input_path);
    GenerateOptions gen = opt.gen;
    if (gen.max_len <= 0) gen.max_len = ckpt.caps.target_tokens;
    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    int index = 0;
    for (const auto& quad : corpus) {
        EncodedQuadruple enc = encode_quadruple(quad, ckpt.vocab, ckpt.caps);
        EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
        GenerationResult<float> result = generate(ckpt.params, outputs, gen);
        char name[40];
        std::snprintf(name, sizeof(name), "attention_%04d.tsv", index);
        std::ofstream out((dir / name).string());
        if (!out) {
            throw std::runtime_error("cannot write attention dump in " + opt.out_dir);
        }
        out << "step\tsentence_index\talpha_r\tbeta\tproduct\n";
        for (std::size_t step = 0; step < result.steps.size(); ++step) {
            const StepRecord<float>& rec = result.steps[step];
            for (std::size_t u = 0; u < rec.alpha_r.size(); ++u) {
                char row[128];
                std::snprintf(row, sizeof(row), "%zu\t%zu\t%.9g\t%.9g\t%.9g\n", step, u,
                              static_cast<double>(rec.alpha_r[u]), static_cast<double>(rec.beta[u]),
                              static_cast<double>(rec.alpha_r[u]) * static_cast<double>(rec.beta[u]));
                out << row;
            }
        }
        ++index;
    }
    return index;
}

GradCheckSummary run_grad_check(std::uint64_t seed) {
    GradCheckSummary summary;
    Rng rng(seed);
    auto leaf = [&](std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
        return TensorD::uniform(std::move(shape), lo, hi, rng, true);
    };
    auto fixed = [&](std::vector<int> shape) {
        return TensorD::uniform(std::move(shape), -1.0, 1.0, rng, false);
    };
    auto record = [&](const std::string& name, const GradCheckReport& r) {
        summary.checks.emplace_back(name, r.max_rel_error);
        summary.worst = std::max(summary.worst, r.max_rel_error);
    };
    using Leaves = std::vector<std::pair<std::string, TensorD>>;

    {
        auto x = leaf({4}), y = leaf({4}), w = fixed({4});
        record("add", grad_check([&] { return sum(mul(add(x, y), w)); }, Leaves{{"x", x}, {"y", y}}));
        record("sub", grad_check([&] { return sum(mul(sub(x, y), w)); }, Leaves{{"x", x}, {"y", y}}));
        record("mul", grad_check([&] { return sum(mul(mul(x, y), w)); }, Leaves{{"x", x}, {"y", y}}));
        record("scalar_scale",
               grad_check([&] { return sum(mul(scalar_scale(x, 1.7), w)); }, Leaves{{"x", x}}));
        record("tanh", grad_check([&] { return sum(mul(tanh(x), w)); }, Leaves{{"x", x}}));
        record("sigmoid", grad_check([&] { return sum(mul(sigmoid(x), w)); }, Leaves{{"x", x}}));
    }
    {
        auto x = leaf({4}, 0.4, 2.0);
        auto w = fixed({4});
        record("log_floored",
               grad_check([&] { return sum(mul(log_floored(x, 1e-12), w)); }, Leaves{{"x", x}}));
    }
    {
        auto a = leaf({2, 3}), b = leaf({3, 2}), w = fixed({2, 2});
        record("matmul_mat_mat",
               grad_check([&] { return sum(mul(matmul(a, b), w)); }, Leaves{{"a", a}, {"b", b}}));
    }
    {
        auto a = leaf({3, 2}), v = leaf({2}), w = fixed({3});
        record("matmul_mat_vec",
               grad_check([&] { return sum(mul(matmul(a, v), w)); }, Leaves{{"a", a}, {"v", v}}));
    }
    {
        auto v = leaf({3}), a = leaf({3, 2}), w = fixed({2});
        record("matmul_vec_mat",
               grad_check([&] { return sum(mul(matmul(v, a), w)); }, Leaves{{"v", v}, {"a", a}}));
    }
    {
        auto x = leaf({5}), y = leaf({5});
        record("matmul_dot", grad_check([&] { return matmul(x, y); }, Leaves{{"x", x}, {"y", y}}));
    }
    {
        auto a = leaf({2, 3}), w = fixed({3, 2});
        record("transpose",
               grad_check([&] { return sum(mul(transpose(a), w)); }, Leaves{{"a", a}}));
    }
    {
        auto x = leaf({3}), y = leaf({2}), w = fixed({5});
        record("concat", grad_check([&] { return sum(mul(concat<double>({x, y}), w)); },
                                    Leaves{{"x", x}, {"y", y}}));
    }
    {
        auto x = leaf({3}), y = leaf({3}), w = fixed({2, 3});
        record("stack_rows", grad_check([&] { return sum(mul(stack_rows<double>({x, y}), w)); },
                                        Leaves{{"x", x}, {"y", y}}));
    }
    {
        auto a = leaf({2, 2}), b = leaf({2, 3}), w = fixed({2, 5});
        record("hconcat",
               grad_check([&] { return sum(mul(hconcat(a, b), w)); }, Leaves{{"a", a}, {"b", b}}));
    }
    {
        auto a = leaf({3, 4}), w = fixed({4}), w2 = fixed({2, 4});
        record("row", grad_check([&] { return sum(mul(row(a, 1), w)); }, Leaves{{"a", a}}));
        record("row_slice",
               grad_check([&] { return sum(mul(row_slice(a, 1, 3), w2)); }, Leaves{{"a", a}}));
    }
    {
        auto a = leaf({3, 4}), v = leaf({4}), w = fixed({3, 4});
        record("add_rowvec",
               grad_check([&] { return sum(mul(add_rowvec(a, v), w)); }, Leaves{{"a", a}, {"v", v}}));
        auto b = leaf({3, 4});
        const std::vector<double> mask{1.0, 0.0, 1.0};
        record("mask_lerp_rows",
               grad_check([&] { return sum(mul(mask_lerp_rows(a, b, mask), w)); },
                          Leaves{{"a", a}, {"b", b}}));
    }
    {
        auto x = leaf({5}), w = fixed({5});
        const std::vector<double> mask{1.0, 1.0, 0.0, 1.0, 1.0};
        record("masked_softmax",
               grad_check([&] { return sum(mul(masked_softmax(x, mask), w)); }, Leaves{{"x", x}}));
    }
    {
        auto x = leaf({3, 4}), w = fixed({3, 4});
        const std::vector<double> mask{1.0, 0.0, 1.0, 1.0};
        record("masked_softmax_rows",
               grad_check([&] { return sum(mul(masked_softmax_rows(x, mask), w)); },
                          Leaves{{"x", x}}));
    }
    {
        auto table = leaf({6, 3});
        auto w = fixed({3, 3});
        const std::vector<int> ids{2, 0, 2};  // repeated id exercises gradient accumulation
        record("embedding_lookup",
               grad_check([&] { return sum(mul(embed_rows(table, ids), w)); },
                          Leaves{{"table", table}}));
    }
    {
        auto x = leaf({5});
        record("max_over_axis_vec", grad_check([&] { return max_over_axis(x); }, Leaves{{"x", x}}));
        auto a = leaf({3, 4}), w = fixed({3});
        record("max_over_axis_rows",
               grad_check([&] { return sum(mul(max_over_axis(a), w)); }, Leaves{{"a", a}}));
    }
    {
        auto x = leaf({4});
        record("pick", grad_check([&] { return pick(x, 2); }, Leaves{{"x", x}}));
        record("sum", grad_check([&] { return sum(x); }, Leaves{{"x", x}}));
    }
    {
        GruCell<double> cell;
        cell.init(3, 2, 0.5, rng);
        auto x = leaf({3}), h = leaf({2}), w = fixed({2});
        Leaves leaves{{"x", x}, {"h", h}};
        cell.for_each_param("cell", [&](const std::string& name, TensorD& t) {
            leaves.emplace_back(name, t);
        });
        record("gru_step",
               grad_check([&] { return sum(mul(cell.step(x, h), w)); }, leaves));
    }
    {
        GruCell<double> cell;
        cell.init(3, 2, 0.5, rng);
        auto x = leaf({3, 3}), h = leaf({3, 2}), w = fixed({3, 2});
        const std::vector<double> mask{1.0, 0.0, 1.0};
        Leaves leaves{{"x", x}, {"h", h}};
        cell.for_each_param("cell", [&](const std::string& name, TensorD& t) {
            leaves.emplace_back(name, t);
        });
        record("gru_step_rows",
               grad_check([&] { return sum(mul(cell.step_rows(x, h, mask), w)); }, leaves));
    }
    {
        GruCell<double> fwd, bwd;
        fwd.init(2, 2, 0.5, rng);
        bwd.init(2, 2, 0.5, rng);
        auto x = leaf({3, 2});
        auto w_states = fixed({3, 4}), w_final = fixed({4});
        Leaves leaves{{"x", x}};
        fwd.for_each_param("fwd", [&](const std::string& name, TensorD& t) {
            leaves.emplace_back(name, t);
        });
        bwd.for_each_param("bwd", [&](const std::string& name, TensorD& t) {
            leaves.emplace_back(name, t);
        });
        record("bigru_sequence", grad_check(
                                     [&] {
                                         auto [states, final_state] = bigru_sequence(fwd, bwd, x);
                                         return add(sum(mul(states, w_states)),
                                                    sum(mul(final_state, w_final)));
                                     },
                                     leaves));
    }
    record("full_instance_loss", grad_check_full_model(seed));

    summary.ok = summary.worst < 1e-5;
    return summary;
}

}  // namespace ctrsgen
