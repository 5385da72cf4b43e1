#pragma once

// Corpus-level scoring: greedy (or beam) generation for every instance,
// ROUGE recall against the reference description, and breakdowns by query
// type, irrelevant-document presence, and mega-document sentence count.

#include <map>
#include <string>
#include <vector>

#include "ctrsgen/checkpoint.hpp"
#include "ctrsgen/corpus.hpp"
#include "ctrsgen/decoder.hpp"

namespace ctrsgen {

struct InstanceScore {
    int index = 0;
    double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
    std::string query_type;  // "question", "keyword", or "unknown"
    bool has_irrelevant = false;
    int sentence_count = 0;  // mega-document sentences before truncation
    std::vector<std::string> generated;
};

struct SliceScore {
    int count = 0;
    double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;  // arithmetic means
};

struct RougeReport {
    SliceScore overall;
    // slicing key -> slice label -> scores; each key partitions the corpus.
    std::map<std::string, std::map<std::string, SliceScore>> slices;
    std::vector<InstanceScore> per_instance;
};

std::string sentence_count_bin(int count);

// Result order follows the input order regardless of thread count. Instances
// whose reference is too short for a metric score 0 on that metric.
RougeReport evaluate_corpus(Checkpoint& ckpt, const std::vector<Quadruple>& instances,
                            const GenerateOptions& opt, int threads = 1);

void write_report_json(const RougeReport& report, const std::string& path);
void write_report_tsv(const RougeReport& report, const std::string& path);

}  // namespace ctrsgen
