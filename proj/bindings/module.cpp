// Python bindings for the main operations: text preprocessing, overlap
// metrics, the softmax primitive, corpus prep, training, the gradient
// self-check, and a loaded-model handle for generation and scoring.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "ctrsgen/encoders.hpp"
#include "ctrsgen/pipeline.hpp"
#include "ctrsgen/rouge.hpp"

namespace py = pybind11;
using namespace ctrsgen;

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

Document preprocess_doc(const std::vector<std::string>& sentences) {
    Document doc;
    for (const auto& sent : sentences) {
        TokenSeq tokens = preprocess_text(sent);
        if (!tokens.empty()) doc.push_back(std::move(tokens));
    }
    return doc;
}

// A checkpoint opened for inference from Python.
struct PyModel {
    Checkpoint ckpt;

    explicit PyModel(const std::string& path) : ckpt(load_checkpoint(path)) {}

    EncodedQuadruple encode(const std::string& query,
                            const std::vector<std::vector<std::string>>& relevant,
                            const std::vector<std::vector<std::string>>& irrelevant,
                            const std::string& description) const {
        Quadruple quad;
        quad.query = preprocess_text(query);
        for (const auto& doc : relevant) {
            Document d = preprocess_doc(doc);
            if (!d.empty()) quad.relevant_docs.push_back(std::move(d));
        }
        for (const auto& doc : irrelevant) {
            Document d = preprocess_doc(doc);
            if (!d.empty()) quad.irrelevant_docs.push_back(std::move(d));
        }
        quad.description = preprocess_text(description.empty() ? "placeholder" : description);
        if (quad.relevant_docs.empty()) {
            throw std::invalid_argument("at least one non-empty relevant document is required");
        }
        return encode_quadruple(quad, ckpt.vocab, ckpt.caps);
    }

    std::string describe(const std::string& query,
                         const std::vector<std::vector<std::string>>& relevant,
                         const std::vector<std::vector<std::string>>& irrelevant, int beam_width,
                         int max_len) {
        EncodedQuadruple enc = encode(query, relevant, irrelevant, "");
        EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
        GenerateOptions gen;
        gen.beam_width = beam_width;
        gen.max_len = max_len > 0 ? max_len : ckpt.caps.target_tokens;
        GenerationResult<float> result = generate(ckpt.params, outputs, gen);
        std::vector<std::string> tokens;
        for (int id : result.token_ids) tokens.push_back(ckpt.vocab.token_of(id));
        return join_tokens(tokens);
    }

    double nll(const std::string& query, const std::vector<std::vector<std::string>>& relevant,
               const std::vector<std::vector<std::string>>& irrelevant,
               const std::string& description) {
        if (description.empty()) {
            throw std::invalid_argument("nll needs a non-empty description");
        }
        EncodedQuadruple enc = encode(query, relevant, irrelevant, description);
        EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
        TensorT<float> loss = teacher_forced_loss<float>(ckpt.params, outputs, enc.target_ids, nullptr);
        return static_cast<double>(loss.item());
    }

    py::dict attention(const std::string& query,
                       const std::vector<std::vector<std::string>>& relevant,
                       const std::vector<std::vector<std::string>>& irrelevant, int max_len) {
        EncodedQuadruple enc = encode(query, relevant, irrelevant, "");
        EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
        GenerateOptions gen;
        gen.max_len = max_len > 0 ? max_len : ckpt.caps.target_tokens;
        GenerationResult<float> result = generate(ckpt.params, outputs, gen);
        std::vector<std::string> tokens;
        for (int id : result.token_ids) tokens.push_back(ckpt.vocab.token_of(id));
        std::vector<std::vector<float>> alpha_r, beta;
        for (const auto& step : result.steps) {
            alpha_r.push_back(step.alpha_r);
            beta.push_back(step.beta);
        }
        py::dict out;
        out["tokens"] = tokens;
        out["alpha_r"] = alpha_r;
        out["beta"] = beta;
        return out;
    }

    int vocab_size() const { return ckpt.vocab.size(); }
    int hidden() const { return ckpt.model_config.hidden; }
    int embedding_dim() const { return ckpt.model_config.embedding_dim; }
    float lambda_contrast() const { return ckpt.model_config.lambda_contrast; }
    int epoch() const { return ckpt.epoch; }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Contrastive query intent description generation";

    m.def("preprocess_text", &preprocess_text, py::arg("text"),
          "Lowercase, split on whitespace, and keep tokens containing a letter");

    m.def("rouge_n", &rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"),
          "N-gram overlap recall against the reference");
    m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"),
          "Longest common subsequence recall against the reference");

    m.def(
        "masked_softmax",
        [](const std::vector<double>& values, const std::vector<double>& mask) {
            TensorD x = TensorD::from({static_cast<int>(values.size())}, values);
            TensorD y = masked_softmax(x, mask);
            return y.value();
        },
        py::arg("values"), py::arg("mask"),
        "Softmax over the positions with mask 1; masked positions get exactly 0");

    m.def(
        "prep",
        [](const std::string& input, const std::string& out_dir, int vocab_size, int train_size,
           int valid_size, int test_size, std::uint64_t seed) {
            PrepOptions opt;
            opt.input = input;
            opt.out_dir = out_dir;
            opt.vocab_size = vocab_size;
            opt.train_size = train_size;
            opt.valid_size = valid_size;
            opt.test_size = test_size;
            opt.seed = seed;
            PrepSummary s = run_prep(opt);
            py::dict out;
            out["queries"] = s.stats.query_count;
            out["vocab_tokens"] = s.vocab_tokens;
            out["train"] = s.train_count;
            out["valid"] = s.valid_count;
            out["test"] = s.test_count;
            return out;
        },
        py::arg("input"), py::arg("out_dir"), py::arg("vocab_size") = 120000,
        py::arg("train_size") = -1, py::arg("valid_size") = 0, py::arg("test_size") = 0,
        py::arg("seed") = 1, "Split, encode, and index a corpus into out_dir");

    m.def(
        "train",
        [](const std::string& train_path, const std::string& vocab_path,
           const std::string& out_dir, const std::string& valid_path, int epochs, int hidden,
           int embedding_dim, float lr, int batch_size, float lambda_contrast, std::uint64_t seed) {
            TrainRunOptions opt;
            opt.train_path = train_path;
            opt.vocab_path = vocab_path;
            opt.out_dir = out_dir;
            opt.valid_path = valid_path;
            opt.config.epochs = epochs;
            opt.model.hidden = hidden;
            opt.model.embedding_dim = embedding_dim;
            opt.config.lr = lr;
            opt.config.batch_size = batch_size;
            opt.model.lambda_contrast = lambda_contrast;
            opt.config.seed = seed;
            TrainRunSummary s = run_train(opt);
            std::vector<py::dict> metrics;
            for (const auto& m_ : s.metrics) {
                py::dict row;
                row["epoch"] = m_.epoch;
                row["train_loss"] = m_.train_loss;
                row["valid_loss"] = m_.valid_loss;
                metrics.push_back(row);
            }
            py::dict out;
            out["metrics"] = metrics;
            out["best_checkpoint"] = s.best_path;
            out["last_checkpoint"] = s.last_path;
            return out;
        },
        py::arg("train"), py::arg("vocab"), py::arg("out_dir"), py::arg("valid") = std::string(),
        py::arg("epochs") = 20, py::arg("hidden") = 256, py::arg("embedding_dim") = 300,
        py::arg("lr") = 0.0005f, py::arg("batch_size") = 16, py::arg("lambda_contrast") = 0.5f,
        py::arg("seed") = 1, "Train a model and write checkpoints into out_dir");

    m.def(
        "grad_check",
        [](std::uint64_t seed) {
            GradCheckSummary s = run_grad_check(seed);
            py::dict checks;
            for (const auto& [name, err] : s.checks) checks[py::str(name)] = err;
            py::dict out;
            out["checks"] = checks;
            out["worst"] = s.worst;
            out["ok"] = s.ok;
            return out;
        },
        py::arg("seed") = 1, "Finite-difference verification of every backward rule");

    py::class_<PyModel>(m, "Model", "A trained checkpoint opened for inference")
        .def(py::init<const std::string&>(), py::arg("path"))
        .def("describe", &PyModel::describe, py::arg("query"), py::arg("relevant"),
             py::arg("irrelevant") = std::vector<std::vector<std::string>>{},
             py::arg("beam_width") = 1, py::arg("max_len") = 0,
             "Generate a description for a query given sentence lists per document")
        .def("nll", &PyModel::nll, py::arg("query"), py::arg("relevant"), py::arg("irrelevant"),
             py::arg("description"), "Mean negative log likelihood of a reference description")
        .def("attention", &PyModel::attention, py::arg("query"), py::arg("relevant"),
             py::arg("irrelevant") = std::vector<std::vector<std::string>>{},
             py::arg("max_len") = 0, "Generated tokens with per-step sentence attention weights")
        .def_property_readonly("vocab_size", &PyModel::vocab_size)
        .def_property_readonly("hidden", &PyModel::hidden)
        .def_property_readonly("embedding_dim", &PyModel::embedding_dim)
        .def_property_readonly("lambda_contrast", &PyModel::lambda_contrast)
        .def_property_readonly("epoch", &PyModel::epoch);
}
