// Command line front end: prep, train, generate, eval, inspect-attention,
// and grad-check, all thin wrappers over the pipeline runs.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "ctrsgen/pipeline.hpp"

namespace {

void add_cap_flags(CLI::App* cmd, ctrsgen::LengthCaps& caps) {
    cmd->add_option("--cap-query-tokens", caps.query_tokens, "Maximum query tokens kept");
    cmd->add_option("--cap-sentence-tokens", caps.sentence_tokens, "Maximum tokens per sentence");
    cmd->add_option("--cap-mega-sentences", caps.mega_sentences,
                    "Maximum sentences in the concatenated relevant document");
    cmd->add_option("--cap-doc-sentences", caps.doc_sentences,
                    "Maximum sentences kept per irrelevant document");
    cmd->add_option("--cap-target-tokens", caps.target_tokens, "Maximum description tokens kept");
}

struct GenFlags {
    std::string strategy = "greedy";
    int beam_width = 4;
    int max_len = 0;
};

void add_gen_flags(CLI::App* cmd, GenFlags& flags) {
    cmd->add_option("--strategy", flags.strategy, "Decoding strategy")
        ->check(CLI::IsMember({"greedy", "beam"}));
    cmd->add_option("--beam-width", flags.beam_width, "Beam width for --strategy beam")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--max-len", flags.max_len,
                    "Maximum generated tokens (0: the checkpoint's target cap)");
}

ctrsgen::GenerateOptions resolve_gen(const GenFlags& flags) {
    ctrsgen::GenerateOptions gen;
    gen.max_len = flags.max_len;
    gen.beam_width = flags.strategy == "greedy" ? 1 : flags.beam_width;
    return gen;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive query intent description generator"};
    app.require_subcommand(1);
    app.allow_config_extras(true);
    app.set_config("--config", "",
                   "Configuration file; keys live under a [subcommand] section");

    ctrsgen::PrepOptions prep;
    CLI::App* prep_cmd = app.add_subcommand("prep", "Split, encode, and index a corpus");
    prep_cmd->add_option("--input", prep.input, "Corpus JSONL file")->required();
    prep_cmd->add_option("--out-dir", prep.out_dir, "Output directory")->required();
    prep_cmd->add_option("--vocab-size", prep.vocab_size, "Vocabulary cap, specials included");
    prep_cmd->add_option("--train-size", prep.train_size,
                         "Training instances (-1: all not held out)");
    prep_cmd->add_option("--valid-size", prep.valid_size, "Validation instances");
    prep_cmd->add_option("--test-size", prep.test_size, "Test instances");
    prep_cmd->add_option("--seed", prep.seed, "Shuffle seed");
    prep_cmd->add_flag("--vocab-include-description,!--no-vocab-include-description",
                       prep.vocab_includes_description,
                       "Count description tokens when building the vocabulary");
    add_cap_flags(prep_cmd, prep.caps);

    ctrsgen::TrainRunOptions train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--train", train.train_path, "Encoded training set")->required();
    train_cmd->add_option("--valid", train.valid_path, "Encoded validation set");
    train_cmd->add_option("--vocab", train.vocab_path, "Vocabulary file (fresh runs)");
    train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
    train_cmd->add_option("--resume", train.resume_path, "Checkpoint to continue from");
    train_cmd->add_option("--embedding-file", train.embedding_path,
                          "Pretrained embedding file (token then values per line)");
    train_cmd->add_option("--lr", train.config.lr, "Adam learning rate");
    train_cmd->add_option("--batch-size", train.config.batch_size, "Instances per update");
    train_cmd->add_option("--clip-norm", train.config.clip_norm, "Global gradient norm cap");
    train_cmd->add_option("--epochs", train.config.epochs, "Epochs to run");
    train_cmd->add_option("--patience", train.config.patience,
                          "Non-improving validation epochs before stopping");
    train_cmd->add_option("--seed", train.config.seed, "Initialization and shuffle seed");
    train_cmd->add_option("--adam-beta1", train.config.adam_beta1, "Adam first-moment decay");
    train_cmd->add_option("--adam-beta2", train.config.adam_beta2, "Adam second-moment decay");
    train_cmd->add_option("--adam-eps", train.config.adam_eps, "Adam denominator epsilon");
    train_cmd->add_option("--hidden", train.model.hidden, "GRU hidden units per direction");
    train_cmd->add_option("--embedding-dim", train.model.embedding_dim, "Word embedding width");
    train_cmd->add_option("--init-range", train.model.init_range,
                          "Uniform initialization half-width");
    train_cmd->add_option("--lambda", train.model.lambda_contrast,
                          "Relevance weight in the contrast score");
    train_cmd->add_flag("--share-query-encoder", train.model.share_query_encoder,
                        "Reuse the relevant word encoder for the query");
    train_cmd->add_flag("--untie-irrelevant-encoders", train.model.untie_irrelevant_encoders,
                        "Give irrelevant documents their own encoder weights");
    train_cmd->add_option("--override-epochs", train.override_epochs,
                          "On resume: new total epoch count");
    add_cap_flags(train_cmd, train.caps);

    ctrsgen::GenerateRunOptions gen;
    GenFlags gen_flags;
    CLI::App* gen_cmd = app.add_subcommand("generate", "Write descriptions for a corpus");
    gen_cmd->add_option("--checkpoint", gen.checkpoint_path, "Model checkpoint")->required();
    gen_cmd->add_option("--input", gen.input_path, "Corpus JSONL file")->required();
    gen_cmd->add_option("--output", gen.output_path, "Output JSONL file")->required();
    add_gen_flags(gen_cmd, gen_flags);

    ctrsgen::EvalRunOptions eval;
    GenFlags eval_flags;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score generations against references");
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Model checkpoint")->required();
    eval_cmd->add_option("--input", eval.input_path, "Corpus JSONL file")->required();
    eval_cmd->add_option("--out-dir", eval.out_dir, "Output directory")->required();
    eval_cmd->add_option("--threads", eval.threads,
                         "Worker threads (0: the CTRSGEN_THREADS environment variable)");
    add_gen_flags(eval_cmd, eval_flags);

    ctrsgen::InspectRunOptions inspect;
    GenFlags inspect_flags;
    CLI::App* inspect_cmd =
        app.add_subcommand("inspect-attention", "Dump per-step sentence attention");
    inspect_cmd->add_option("--checkpoint", inspect.checkpoint_path, "Model checkpoint")->required();
    inspect_cmd->add_option("--input", inspect.input_path, "Corpus JSONL file")->required();
    inspect_cmd->add_option("--out-dir", inspect.out_dir, "Output directory")->required();
    add_gen_flags(inspect_cmd, inspect_flags);

    std::uint64_t check_seed = 1;
    CLI::App* check_cmd =
        app.add_subcommand("grad-check", "Verify analytic gradients against finite differences");
    check_cmd->add_option("--seed", check_seed, "Seed for the checked points");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep_cmd->parsed()) {
            ctrsgen::PrepSummary s = ctrsgen::run_prep(prep);
            std::printf("prep: %d instances -> train %d, valid %d, test %d; vocab %d tokens\n",
                        s.stats.query_count, s.train_count, s.valid_count, s.test_count,
                        s.vocab_tokens);
        } else if (train_cmd->parsed()) {
            if (train.resume_path.empty() && train.vocab_path.empty()) {
                throw std::runtime_error("train: --vocab is required unless resuming");
            }
            ctrsgen::TrainRunSummary s = ctrsgen::run_train(train);
            double last_train = s.metrics.empty() ? 0.0 : s.metrics.back().train_loss;
            std::printf("train: %zu epochs this run, final train loss %.6f\n", s.metrics.size(),
                        last_train);
            std::printf("train: best checkpoint %s\n", s.best_path.c_str());
        } else if (gen_cmd->parsed()) {
            gen.gen = resolve_gen(gen_flags);
            int n = ctrsgen::run_generate(gen);
            std::printf("generate: wrote %d descriptions to %s\n", n, gen.output_path.c_str());
        } else if (eval_cmd->parsed()) {
            eval.gen = resolve_gen(eval_flags);
            ctrsgen::RougeReport report = ctrsgen::run_eval(eval);
            std::printf("eval: %zu instances, rouge1 %.4f rouge2 %.4f rougeL %.4f\n",
                        report.per_instance.size(), report.overall.rouge1, report.overall.rouge2,
                        report.overall.rougeL);
        } else if (inspect_cmd->parsed()) {
            inspect.gen = resolve_gen(inspect_flags);
            int n = ctrsgen::run_inspect_attention(inspect);
            std::printf("inspect-attention: wrote %d dumps to %s\n", n, inspect.out_dir.c_str());
        } else if (check_cmd->parsed()) {
            ctrsgen::GradCheckSummary s = ctrsgen::run_grad_check(check_seed);
            for (const auto& [name, err] : s.checks) {
                std::printf("%-24s %.3e\n", name.c_str(), err);
            }
            std::printf("worst %.3e against threshold 1e-05: %s\n", s.worst,
                        s.ok ? "PASS" : "FAIL");
            return s.ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
