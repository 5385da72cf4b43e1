#include "ctrsgen/evaluate.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "ctrsgen/encoders.hpp"
#include "ctrsgen/rouge.hpp"

namespace ctrsgen {

using nlohmann::json;

std::string sentence_count_bin(int count) {
    if (count < 40) return "<40";
    if (count < 80) return "40-80";
    if (count < 120) return "80-120";
    if (count < 160) return "120-160";
    if (count < 200) return "160-200";
    if (count < 240) return "200-240";
    return ">240";
}

namespace {

InstanceScore score_instance(Checkpoint& ckpt, const Quadruple& quad, int index,
                             const GenerateOptions& opt) {
    InstanceScore score;
    score.index = index;
    EncodedQuadruple enc = encode_quadruple(quad, ckpt.vocab, ckpt.caps);
    EncoderOutputs<float> outputs = encode_instance(ckpt.params, enc);
    GenerationResult<float> gen = generate(ckpt.params, outputs, opt);
    score.generated.reserve(gen.token_ids.size());
    for (int id : gen.token_ids) score.generated.push_back(ckpt.vocab.token_of(id));
    const TokenSeq& ref = quad.description;
    score.rouge1 = ref.size() >= 1 ? rouge_n(score.generated, ref, 1) : 0.0;
    score.rouge2 = ref.size() >= 2 ? rouge_n(score.generated, ref, 2) : 0.0;
    score.rougeL = ref.empty() ? 0.0 : rouge_l(score.generated, ref);
    auto it = quad.meta.find("query_type");
    score.query_type = it == quad.meta.end() ? "unknown" : it->second;
    score.has_irrelevant = !quad.irrelevant_docs.empty();
    score.sentence_count = enc.source_sentence_count;
    return score;
}

void accumulate(SliceScore& slice, const InstanceScore& s) {
    ++slice.count;
    slice.rouge1 += s.rouge1;
    slice.rouge2 += s.rouge2;
    slice.rougeL += s.rougeL;
}

void finalize(SliceScore& slice) {
    if (slice.count == 0) return;
    slice.rouge1 /= slice.count;
    slice.rouge2 /= slice.count;
    slice.rougeL /= slice.count;
}

}  // namespace

RougeReport evaluate_corpus(Checkpoint& ckpt, const std::vector<Quadruple>& instances,
                            const GenerateOptions& opt, int threads) {
    const int n = static_cast<int>(instances.size());
    RougeReport report;
    report.per_instance.resize(static_cast<std::size_t>(n));
    const int workers = std::max(1, std::min(threads, n));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            report.per_instance[static_cast<std::size_t>(i)] =
                score_instance(ckpt, instances[static_cast<std::size_t>(i)], i, opt);
        }
    } else {
        // Generation only reads the frozen parameters, so instances can run
        // in parallel; results land by index, keeping output order stable.
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                try {
                    for (int i = w; i < n; i += workers) {
                        report.per_instance[static_cast<std::size_t>(i)] =
                            score_instance(ckpt, instances[static_cast<std::size_t>(i)], i, opt);
                    }
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }

    for (const auto& s : report.per_instance) {
        accumulate(report.overall, s);
        accumulate(report.slices["query_type"][s.query_type], s);
        accumulate(report.slices["irrelevant"][s.has_irrelevant ? "with" : "without"], s);
        accumulate(report.slices["sentence_bins"][sentence_count_bin(s.sentence_count)], s);
    }
    finalize(report.overall);
    for (auto& [key, by_label] : report.slices) {
        for (auto& [label, slice] : by_label) finalize(slice);
    }
    return report;
}

namespace {

json slice_to_json(const SliceScore& s) {
    return json{{"count", s.count},
                {"rouge1_recall", s.rouge1},
                {"rouge2_recall", s.rouge2},
                {"rougeL_recall", s.rougeL}};
}

std::string joined(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

void write_report_json(const RougeReport& report, const std::string& path) {
    json j;
    j["overall"] = slice_to_json(report.overall);
    json slices = json::object();
    for (const auto& [key, by_label] : report.slices) {
        json group = json::object();
        for (const auto& [label, slice] : by_label) {
            group[label] = slice_to_json(slice);
        }
        slices[key] = std::move(group);
    }
    j["slices"] = std::move(slices);
    json per_instance = json::array();
    for (const auto& s : report.per_instance) {
        per_instance.push_back(json{{"index", s.index},
                                    {"rouge1_recall", s.rouge1},
                                    {"rouge2_recall", s.rouge2},
                                    {"rougeL_recall", s.rougeL},
                                    {"query_type", s.query_type},
                                    {"irrelevant", s.has_irrelevant ? "with" : "without"},
                                    {"sentence_bin", sentence_count_bin(s.sentence_count)},
                                    {"generated", joined(s.generated)}});
    }
    j["per_instance"] = std::move(per_instance);
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write report file: " + path);
    }
    out << j.dump(2) << "\n";
}

void write_report_tsv(const RougeReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write report file: " + path);
    }
    auto line = [&](const std::string& key, const std::string& label, const SliceScore& s) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%d\t%.6f\t%.6f\t%.6f\n", key.c_str(),
                      label.c_str(), s.count, s.rouge1, s.rouge2, s.rougeL);
        out << buf;
    };
    out << "slice_key\tslice\tcount\trouge1_recall\trouge2_recall\trougeL_recall\n";
    line("overall", "all", report.overall);
    for (const auto& [key, by_label] : report.slices) {
        for (const auto& [label, slice] : by_label) {
            line(key, label, slice);
        }
    }
}

}  // namespace ctrsgen
