#pragma once

// End-to-end runs behind the CLI subcommands, reusable from the language
// bindings: prep, train, generate, eval, attention inspection, and the
// gradient self-check. Every run writes its effective settings next to its
// artifacts.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctrsgen/config.hpp"
#include "ctrsgen/corpus.hpp"
#include "ctrsgen/decoder.hpp"
#include "ctrsgen/evaluate.hpp"
#include "ctrsgen/training.hpp"

namespace ctrsgen {

struct PrepOptions {
    std::string input;
    std::string out_dir;
    int vocab_size = 120000;
    int train_size = -1;  // -1: everything the other two splits leave over
    int valid_size = 0;
    int test_size = 0;
    std::uint64_t seed = 1;
    LengthCaps caps;
    bool vocab_includes_description = true;
};

struct PrepSummary {
    CorpusStats stats;
    int vocab_tokens = 0;  // specials included
    int train_count = 0, valid_count = 0, test_count = 0;
};

// Writes vocab.txt, {train,valid,test}.jsonl, {train,valid,test}.encoded.jsonl,
// stats.json, and prep.config into out_dir.
PrepSummary run_prep(const PrepOptions& opt);

struct TrainRunOptions {
    std::string train_path, valid_path, vocab_path, out_dir;
    std::string resume_path;     // continue from this checkpoint when set
    std::string embedding_path;  // optional pretrained embedding file
    ModelConfig model;
    TrainConfig config;
    LengthCaps caps;
    int override_epochs = -1;  // on resume: raise the stored total epoch count
};

struct TrainRunSummary {
    std::vector<EpochMetrics> metrics;
    std::string best_path, last_path;
};

// Writes checkpoint.bin (best by validation loss), checkpoint.last.bin,
// loss.tsv, and train.config into out_dir.
TrainRunSummary run_train(const TrainRunOptions& opt);

struct GenerateRunOptions {
    std::string checkpoint_path, input_path, output_path;
    GenerateOptions gen;  // max_len <= 0 selects the checkpoint's target cap
};

// One JSONL line {"index", "generated"} per input instance; returns the count.
int run_generate(const GenerateRunOptions& opt);

struct EvalRunOptions {
    std::string checkpoint_path, input_path, out_dir;
    GenerateOptions gen;
    int threads = 0;  // 0: CTRSGEN_THREADS environment variable, else 1
};

// Writes report.json, report.tsv, and eval.config into out_dir.
RougeReport run_eval(const EvalRunOptions& opt);

struct InspectRunOptions {
    std::string checkpoint_path, input_path, out_dir;
    GenerateOptions gen;
};

// One attention_NNNN.tsv per instance (step, sentence_index, alpha_r, beta,
// product); returns the instance count.
int run_inspect_attention(const InspectRunOptions& opt);

struct GradCheckSummary {
    std::vector<std::pair<std::string, double>> checks;  // name -> max relative error
    double worst = 0.0;
    bool ok = false;  // every check below 1e-5
};

// Finite-difference verification of each primitive's backward rule and of
// the whole per-instance loss, in double precision.
GradCheckSummary run_grad_check(std::uint64_t seed);

}  // namespace ctrsgen
