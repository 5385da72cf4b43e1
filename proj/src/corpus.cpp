#include "ctrsgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ctrsgen/rng.hpp"

namespace ctrsgen {

using nlohmann::json;

TokenSeq preprocess_text(const std::string& raw) {
    TokenSeq out;
    std::string tok;
    auto flush = [&]() {
        if (tok.empty()) return;
        bool has_letter = false;
        for (char& ch : tok) {
            unsigned char u = static_cast<unsigned char>(ch);
            if (u >= 'A' && u <= 'Z') {
                ch = static_cast<char>(u - 'A' + 'a');
                has_letter = true;
            } else if (u >= 'a' && u <= 'z') {
                has_letter = true;
            }
        }
        if (has_letter) out.push_back(tok);
        tok.clear();
    };
    for (char ch : raw) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            tok.push_back(ch);
        }
    }
    flush();
    return out;
}

namespace {

// Preprocess each sentence; empty sentences and empty documents are dropped
// so every surviving sentence has at least one token.
std::vector<Document> preprocess_docs(const json& docs_json, const char* field, int line_no) {
    if (!docs_json.is_array()) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": \"" + field +
                                 "\" must be an array of documents");
    }
    std::vector<Document> docs;
    for (const auto& doc_json : docs_json) {
        if (!doc_json.is_array()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": each document in \"" +
                                     field + "\" must be an array of sentence strings");
        }
        Document doc;
        for (const auto& sent_json : doc_json) {
            if (!sent_json.is_string()) {
                throw std::runtime_error("line " + std::to_string(line_no) + ": sentence in \"" +
                                         field + "\" is not a string");
            }
            Sentence sent = preprocess_text(sent_json.get<std::string>());
            if (!sent.empty()) doc.push_back(std::move(sent));
        }
        if (!doc.empty()) docs.push_back(std::move(doc));
    }
    return docs;
}

}  // namespace

std::vector<Quadruple> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open corpus file: " + path);
    }
    std::vector<Quadruple> corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("query") || !j.contains("relevant") ||
            !j.contains("description")) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": expected object with query/relevant/description");
        }
        Quadruple q;
        try {
            q.query = preprocess_text(j.at("query").get<std::string>());
            q.relevant_docs = preprocess_docs(j.at("relevant"), "relevant", line_no);
            if (j.contains("irrelevant")) {
                q.irrelevant_docs = preprocess_docs(j.at("irrelevant"), "irrelevant", line_no);
            }
            q.description = preprocess_text(j.at("description").get<std::string>());
            if (j.contains("meta")) {
                for (const auto& [key, val] : j.at("meta").items()) {
                    q.meta[key] = val.get<std::string>();
                }
            }
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (q.relevant_docs.empty()) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": instance has no relevant document after preprocessing");
        }
        corpus.push_back(std::move(q));
    }
    return corpus;
}

namespace {

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> specials = {"<pad>", "<unk>", "<bos>", "<eos>"};
    return specials;
}

}  // namespace

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range (size " +
                                std::to_string(size()) + ")");
    }
    return id_to_token[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& non_special_tokens,
                                   int max_size) {
    Vocabulary v;
    v.max_size = max_size;
    v.id_to_token = special_tokens();
    for (const auto& tok : non_special_tokens) {
        v.id_to_token.push_back(tok);
    }
    for (int i = 0; i < v.size(); ++i) {
        v.token_to_id[v.id_to_token[static_cast<std::size_t>(i)]] = i;
    }
    if (v.token_to_id.size() != v.id_to_token.size()) {
        throw std::runtime_error("vocabulary: duplicate tokens in input list");
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write vocabulary file: " + path);
    }
    for (const auto& tok : id_to_token) {
        out << tok << "\n";
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open vocabulary file: " + path);
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    const auto& specials = special_tokens();
    if (tokens.size() < specials.size() ||
        !std::equal(specials.begin(), specials.end(), tokens.begin())) {
        throw std::runtime_error("vocabulary file " + path +
                                 " does not start with the four special tokens");
    }
    return from_tokens({tokens.begin() + static_cast<long>(specials.size()), tokens.end()},
                       static_cast<int>(tokens.size() - specials.size()));
}

Vocabulary build_vocabulary(const std::vector<Quadruple>& corpus, int max_size,
                            bool include_description) {
    if (corpus.empty()) {
        throw std::invalid_argument("build_vocabulary: empty corpus");
    }
    if (max_size < 1) {
        throw std::invalid_argument("build_vocabulary: max_size must be at least 1");
    }
    std::unordered_map<std::string, std::int64_t> counts;
    auto count_seq = [&](const TokenSeq& seq) {
        for (const auto& tok : seq) ++counts[tok];
    };
    for (const auto& q : corpus) {
        count_seq(q.query);
        for (const auto& doc : q.relevant_docs)
            for (const auto& sent : doc) count_seq(sent);
        for (const auto& doc : q.irrelevant_docs)
            for (const auto& sent : doc) count_seq(sent);
        if (include_description) count_seq(q.description);
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > max_size) {
        ranked.resize(static_cast<std::size_t>(max_size));
    }
    std::vector<std::string> kept;
    kept.reserve(ranked.size());
    for (auto& [tok, count] : ranked) kept.push_back(std::move(tok));
    return Vocabulary::from_tokens(kept, max_size);
}

int EncodedQuadruple::mega_sentence_len(int u) const {
    int len = 0;
    for (int c = 0; c < mega_cols; ++c) {
        if (mega_mask[static_cast<std::size_t>(u) * mega_cols + c] == 1.0f) ++len;
    }
    return len;
}

int EncodedQuadruple::irr_sentence_len(int r) const {
    int len = 0;
    for (int c = 0; c < irr_cols; ++c) {
        if (irr_mask[static_cast<std::size_t>(r) * irr_cols + c] == 1.0f) ++len;
    }
    return len;
}

namespace {

std::vector<int> to_ids(const TokenSeq& tokens, const Vocabulary& vocab, int cap) {
    std::vector<int> ids;
    const int n = std::min<int>(static_cast<int>(tokens.size()), cap);
    ids.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids.push_back(vocab.id_of(tokens[static_cast<std::size_t>(i)]));
    return ids;
}

// Pack ragged id sentences into a PAD-filled rectangle with a 0/1 mask.
void pack_block(const std::vector<std::vector<int>>& sentences, int& rows, int& cols,
                std::vector<int>& ids, std::vector<float>& mask) {
    rows = static_cast<int>(sentences.size());
    cols = 0;
    for (const auto& s : sentences) cols = std::max(cols, static_cast<int>(s.size()));
    ids.assign(static_cast<std::size_t>(rows) * cols, Vocabulary::kPad);
    mask.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
    for (int r = 0; r < rows; ++r) {
        const auto& s = sentences[static_cast<std::size_t>(r)];
        for (std::size_t c = 0; c < s.size(); ++c) {
            ids[static_cast<std::size_t>(r) * cols + c] = s[c];
            mask[static_cast<std::size_t>(r) * cols + c] = 1.0f;
        }
    }
}

}  // namespace

EncodedQuadruple encode_quadruple(const Quadruple& quad, const Vocabulary& vocab,
                                  const LengthCaps& caps) {
    EncodedQuadruple enc;
    enc.query_ids = to_ids(quad.query, vocab, caps.query_tokens);
    if (enc.query_ids.empty()) {
        throw std::invalid_argument("encode_quadruple: query empty after preprocessing/truncation");
    }

    std::vector<std::vector<int>> mega;
    for (const auto& doc : quad.relevant_docs) {
        for (const auto& sent : doc) {
            mega.push_back(to_ids(sent, vocab, caps.sentence_tokens));
        }
    }
    enc.source_sentence_count = static_cast<int>(mega.size());
    if (static_cast<int>(mega.size()) > caps.mega_sentences) {
        mega.resize(static_cast<std::size_t>(caps.mega_sentences));
    }
    pack_block(mega, enc.mega_rows, enc.mega_cols, enc.mega_ids, enc.mega_mask);

    std::vector<std::vector<int>> irr;
    enc.irr_doc_offsets.clear();
    if (!quad.irrelevant_docs.empty()) {
        enc.irr_doc_offsets.push_back(0);
        for (const auto& doc : quad.irrelevant_docs) {
            int taken = 0;
            for (const auto& sent : doc) {
                if (taken == caps.doc_sentences) break;
                irr.push_back(to_ids(sent, vocab, caps.sentence_tokens));
                ++taken;
            }
            enc.irr_doc_offsets.push_back(static_cast<int>(irr.size()));
        }
    }
    pack_block(irr, enc.irr_rows, enc.irr_cols, enc.irr_ids, enc.irr_mask);

    enc.target_ids.push_back(Vocabulary::kBos);
    for (int id : to_ids(quad.description, vocab, caps.target_tokens)) {
        enc.target_ids.push_back(id);
    }
    enc.target_ids.push_back(Vocabulary::kEos);

    enc.meta = quad.meta;
    return enc;
}

EncodedQuadruple make_encoded(const std::vector<int>& query_ids,
                              const std::vector<std::vector<int>>& mega_sentences,
                              const std::vector<std::vector<std::vector<int>>>& irrelevant_docs,
                              const std::vector<int>& description_ids) {
    if (query_ids.empty()) {
        throw std::invalid_argument("make_encoded: empty query");
    }
    if (mega_sentences.empty()) {
        throw std::invalid_argument("make_encoded: no relevant sentences");
    }
    EncodedQuadruple enc;
    enc.query_ids = query_ids;
    pack_block(mega_sentences, enc.mega_rows, enc.mega_cols, enc.mega_ids, enc.mega_mask);
    enc.source_sentence_count = enc.mega_rows;
    std::vector<std::vector<int>> irr;
    if (!irrelevant_docs.empty()) {
        enc.irr_doc_offsets.push_back(0);
        for (const auto& doc : irrelevant_docs) {
            for (const auto& sent : doc) irr.push_back(sent);
            enc.irr_doc_offsets.push_back(static_cast<int>(irr.size()));
        }
    }
    pack_block(irr, enc.irr_rows, enc.irr_cols, enc.irr_ids, enc.irr_mask);
    enc.target_ids.push_back(Vocabulary::kBos);
    for (int id : description_ids) enc.target_ids.push_back(id);
    enc.target_ids.push_back(Vocabulary::kEos);
    return enc;
}

CorpusSplits split_corpus(const std::vector<Quadruple>& corpus, std::uint64_t seed, int train_size,
                          int valid_size, int test_size) {
    if (train_size < 0 || valid_size < 0 || test_size < 0) {
        throw std::invalid_argument("split_corpus: negative split size");
    }
    const std::int64_t want =
        std::int64_t(train_size) + std::int64_t(valid_size) + std::int64_t(test_size);
    if (want > static_cast<std::int64_t>(corpus.size())) {
        throw std::invalid_argument("split_corpus: requested " + std::to_string(want) +
                                    " instances but corpus has " + std::to_string(corpus.size()));
    }
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    CorpusSplits splits;
    std::size_t pos = 0;
    auto take = [&](int n) {
        std::vector<Quadruple> part;
        part.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) part.push_back(corpus[order[pos++]]);
        return part;
    };
    splits.train = take(train_size);
    splits.valid = take(valid_size);
    splits.test = take(test_size);
    return splits;
}

namespace {

// Ragged view of one padded sentence block, for serialization.
json block_to_json(int rows, int cols, const std::vector<int>& ids, const std::vector<float>& mask) {
    json out = json::array();
    for (int r = 0; r < rows; ++r) {
        json sent = json::array();
        for (int c = 0; c < cols; ++c) {
            if (mask[static_cast<std::size_t>(r) * cols + c] == 1.0f) {
                sent.push_back(ids[static_cast<std::size_t>(r) * cols + c]);
            }
        }
        out.push_back(std::move(sent));
    }
    return out;
}

std::vector<std::vector<int>> block_from_json(const json& j) {
    std::vector<std::vector<int>> sentences;
    for (const auto& sent : j) {
        sentences.push_back(sent.get<std::vector<int>>());
    }
    return sentences;
}

}  // namespace

void save_encoded(const std::vector<EncodedQuadruple>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write encoded file: " + path);
    }
    for (const auto& e : instances) {
        json j;
        j["query"] = e.query_ids;
        j["mega"] = block_to_json(e.mega_rows, e.mega_cols, e.mega_ids, e.mega_mask);
        json irr_docs = json::array();
        for (int n = 0; n < e.irrelevant_doc_count(); ++n) {
            json doc = json::array();
            for (int r = e.irr_doc_offsets[static_cast<std::size_t>(n)];
                 r < e.irr_doc_offsets[static_cast<std::size_t>(n) + 1]; ++r) {
                json sent = json::array();
                for (int c = 0; c < e.irr_cols; ++c) {
                    if (e.irr_mask[static_cast<std::size_t>(r) * e.irr_cols + c] == 1.0f) {
                        sent.push_back(e.irr_ids[static_cast<std::size_t>(r) * e.irr_cols + c]);
                    }
                }
                doc.push_back(std::move(sent));
            }
            irr_docs.push_back(std::move(doc));
        }
        j["irrelevant"] = std::move(irr_docs);
        j["target"] = e.target_ids;
        j["meta"] = e.meta;
        j["source_sentences"] = e.source_sentence_count;
        out << j.dump() << "\n";
    }
}

std::vector<EncodedQuadruple> load_encoded(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open encoded file: " + path);
    }
    std::vector<EncodedQuadruple> instances;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
            EncodedQuadruple e;
            e.query_ids = j.at("query").get<std::vector<int>>();
            pack_block(block_from_json(j.at("mega")), e.mega_rows, e.mega_cols, e.mega_ids,
                       e.mega_mask);
            std::vector<std::vector<int>> irr;
            const auto& irr_docs = j.at("irrelevant");
            if (!irr_docs.empty()) {
                e.irr_doc_offsets.push_back(0);
                for (const auto& doc : irr_docs) {
                    for (const auto& sent : doc) {
                        irr.push_back(sent.get<std::vector<int>>());
                    }
                    e.irr_doc_offsets.push_back(static_cast<int>(irr.size()));
                }
            }
            pack_block(irr, e.irr_rows, e.irr_cols, e.irr_ids, e.irr_mask);
            e.target_ids = j.at("target").get<std::vector<int>>();
            if (j.contains("meta")) {
                for (const auto& [key, val] : j.at("meta").items()) {
                    e.meta[key] = val.get<std::string>();
                }
            }
            e.source_sentence_count = j.value("source_sentences", e.mega_rows);
            instances.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return instances;
}

CorpusStats corpus_stats(const std::vector<Quadruple>& corpus) {
    CorpusStats s;
    s.query_count = static_cast<int>(corpus.size());
    if (corpus.empty()) return s;
    double query_tokens = 0, rel_docs = 0, irr_docs = 0, desc_tokens = 0;
    for (const auto& q : corpus) {
        query_tokens += static_cast<double>(q.query.size());
        rel_docs += static_cast<double>(q.relevant_docs.size());
        irr_docs += static_cast<double>(q.irrelevant_docs.size());
        desc_tokens += static_cast<double>(q.description.size());
        if (q.irrelevant_docs.empty()) ++s.without_irrelevant;
    }
    const double n = static_cast<double>(corpus.size());
    s.avg_query_tokens = query_tokens / n;
    s.avg_relevant_docs = rel_docs / n;
    s.avg_irrelevant_docs = irr_docs / n;
    s.avg_description_tokens = desc_tokens / n;
    return s;
}

}  // namespace ctrsgen
