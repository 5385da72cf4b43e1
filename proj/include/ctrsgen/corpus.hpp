#pragma once

// Corpus loading and indexing: quadruple instances (query, relevant docs,
// irrelevant docs, description), vocabulary construction, and conversion to
// padded id blocks ready for the encoders.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctrsgen {

using TokenSeq = std::vector<std::string>;
using Sentence = std::vector<std::string>;
using Document = std::vector<Sentence>;

struct Quadruple {
    TokenSeq query;
    std::vector<Document> relevant_docs;    // at least one document
    std::vector<Document> irrelevant_docs;  // may be empty
    TokenSeq description;
    std::map<std::string, std::string> meta;
};

// Lowercase, split on whitespace, drop tokens with no ASCII letter.
TokenSeq preprocess_text(const std::string& raw);

// JSONL reader; one quadruple per line, already preprocessed. Throws on
// malformed lines (message carries the line number) and on instances left
// with no relevant document after preprocessing.
std::vector<Quadruple> load_corpus(const std::string& path);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;  // position = id, specials first
    int max_size = 0;

    int size() const { return static_cast<int>(id_to_token.size()); }
    int id_of(const std::string& token) const;  // kUnk when absent
    const std::string& token_of(int id) const;  // throws when out of range

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
    static Vocabulary from_tokens(const std::vector<std::string>& non_special_tokens, int max_size);
};

// Most frequent max_size tokens across queries, documents and descriptions,
// ties broken lexicographically. Specials take the four lowest ids.
Vocabulary build_vocabulary(const std::vector<Quadruple>& corpus, int max_size,
                            bool include_description = true);

struct LengthCaps {
    int query_tokens = 20;
    int sentence_tokens = 50;
    int mega_sentences = 240;
    int doc_sentences = 240;  // per irrelevant document
    int target_tokens = 60;
};

// One instance in id space. Sentence blocks are padded row-major rectangles;
// the masks carry 1 on real tokens and 0 on exactly the padded positions.
struct EncodedQuadruple {
    std::vector<int> query_ids;  // single unpadded sequence, length >= 1

    int mega_rows = 0;  // sentence count U of the concatenated relevant docs
    int mega_cols = 0;
    std::vector<int> mega_ids;     // U x mega_cols
    std::vector<float> mega_mask;  // U x mega_cols

    int irr_rows = 0;  // sentences across all irrelevant documents
    int irr_cols = 0;
    std::vector<int> irr_ids;
    std::vector<float> irr_mask;
    std::vector<int> irr_doc_offsets;  // doc n owns rows [off[n], off[n+1]); length N+1

    std::vector<int> target_ids;  // BOS ... EOS

    std::map<std::string, std::string> meta;
    int source_sentence_count = 0;  // mega sentences before truncation

    int irrelevant_doc_count() const {
        return irr_doc_offsets.empty() ? 0 : static_cast<int>(irr_doc_offsets.size()) - 1;
    }
    int mega_sentence_len(int u) const;  // real token count of mega row u
    int irr_sentence_len(int r) const;
};

// Maps tokens to ids (unknowns to kUnk), truncates to the caps, pads the
// sentence blocks, wraps the target in BOS/EOS. Throws if the query is empty.
EncodedQuadruple encode_quadruple(const Quadruple& quad, const Vocabulary& vocab,
                                  const LengthCaps& caps);

// Assembles an instance directly from ragged id lists; the description ids
// get wrapped in BOS/EOS here. For tests and synthetic corpora.
EncodedQuadruple make_encoded(const std::vector<int>& query_ids,
                              const std::vector<std::vector<int>>& mega_sentences,
                              const std::vector<std::vector<std::vector<int>>>& irrelevant_docs,
                              const std::vector<int>& description_ids);

// Deterministic shuffle under the seed, then a partition by the given sizes.
struct CorpusSplits {
    std::vector<Quadruple> train, valid, test;
};
CorpusSplits split_corpus(const std::vector<Quadruple>& corpus, std::uint64_t seed, int train_size,
                          int valid_size, int test_size);

// Encoded instances round-trip through JSONL so prep output feeds train/eval.
void save_encoded(const std::vector<EncodedQuadruple>& instances, const std::string& path);
std::vector<EncodedQuadruple> load_encoded(const std::string& path);

struct CorpusStats {
    int query_count = 0;
    double avg_query_tokens = 0;
    double avg_relevant_docs = 0;
    double avg_irrelevant_docs = 0;
    double avg_description_tokens = 0;
    int without_irrelevant = 0;
};
CorpusStats corpus_stats(const std::vector<Quadruple>& corpus);

}  // namespace ctrsgen
