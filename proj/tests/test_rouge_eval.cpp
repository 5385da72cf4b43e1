#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

#include "ctrsgen/evaluate.hpp"
#include "ctrsgen/rouge.hpp"
#include "ctrsgen/training.hpp"

using namespace ctrsgen;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> words) {
    return std::vector<std::string>(words.begin(), words.end());
}

}  // namespace

TEST_CASE("n-gram recall matches the hand-computed values") {
    CHECK(rouge_n(toks({"the", "cat"}), toks({"the", "cat"}), 1) == 1.0);
    CHECK(rouge_n(toks({"a", "b"}), toks({"a", "c"}), 1) == 0.5);
    CHECK(rouge_n(toks({"the", "cat", "sat"}), toks({"the", "cat", "ran"}), 2) == 0.5);
}

TEST_CASE("subsequence recall matches the hand-computed values") {
    CHECK(rouge_l(toks({"a", "b", "c"}), toks({"a", "b", "c"})) == 1.0);
    CHECK(rouge_l(toks({"a", "b", "c"}), toks({"a", "c"})) == 1.0);
    CHECK(rouge_l(toks({"x", "y"}), toks({"a", "b"})) == 0.0);
}

TEST_CASE("overlap counting is clipped multiset counting") {
    CHECK(rouge_n(toks({"a", "a", "a"}), toks({"a", "a", "b"}), 1) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rouge_n(toks({"a"}), toks({"a", "a", "a"}), 1) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("degenerate references are rejected") {
    CHECK_THROWS_AS(rouge_n(toks({"a"}), toks({"a"}), 2), std::invalid_argument);
    CHECK_THROWS_AS(rouge_n(toks({"a"}), toks({}), 1), std::invalid_argument);
    CHECK_THROWS_AS(rouge_n(toks({"a"}), toks({"a"}), 0), std::invalid_argument);
    CHECK_THROWS_AS(rouge_l(toks({"a"}), toks({})), std::invalid_argument);
}

TEST_CASE("unigram recall ignores candidate order; subsequence recall does not") {
    CHECK(rouge_n(toks({"c", "a", "b"}), toks({"a", "b", "c"}), 1) ==
          rouge_n(toks({"a", "b", "c"}), toks({"a", "b", "c"}), 1));
    CHECK(rouge_l(toks({"b", "a"}), toks({"a", "b"})) == 0.5);
    CHECK(rouge_l(toks({"a", "b"}), toks({"a", "b"})) == 1.0);
}

TEST_CASE("adding a newly matching token never lowers unigram recall") {
    std::vector<std::string> cand = toks({"a"});
    std::vector<std::string> ref = toks({"a", "b", "c"});
    double base = rouge_n(cand, ref, 1);
    cand.push_back("b");
    double better = rouge_n(cand, ref, 1);
    CHECK(better >= base);
    CHECK(better == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sentence-count bins tile the axis without gaps") {
    CHECK(sentence_count_bin(0) == "<40");
    CHECK(sentence_count_bin(39) == "<40");
    CHECK(sentence_count_bin(40) == "40-80");
    CHECK(sentence_count_bin(119) == "80-120");
    CHECK(sentence_count_bin(120) == "120-160");
    CHECK(sentence_count_bin(239) == "200-240");
    CHECK(sentence_count_bin(240) == ">240");
    CHECK(sentence_count_bin(999) == ">240");
}

TEST_CASE("corpus evaluation slices partition the instances") {
    Vocabulary vocab = Vocabulary::from_tokens({"aa", "bb", "cc", "dd"}, 10);
    std::vector<EncodedQuadruple> data{
        make_encoded({4, 5}, {{6, 7}}, {}, {6, 7}),
        make_encoded({6}, {{4, 5}}, {}, {5}),
    };
    ModelConfig model;
    model.hidden = 2;
    model.embedding_dim = 3;
    model.vocab_size = vocab.size();
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;
    TrainResult trained = train(data, {}, model, tc, LengthCaps{}, vocab);

    auto quad = [&](const std::string& query, const std::string& type, bool with_irrelevant) {
        Quadruple q;
        q.query = preprocess_text(query);
        q.relevant_docs = {{preprocess_text("aa bb"), preprocess_text("cc")}};
        if (with_irrelevant) q.irrelevant_docs = {{preprocess_text("dd dd")}};
        q.description = preprocess_text("bb cc");
        if (!type.empty()) q.meta["query_type"] = type;
        return q;
    };
    std::vector<Quadruple> corpus{quad("aa bb", "question", true),
                                  quad("cc", "question", false),
                                  quad("dd", "keyword", true)};

    GenerateOptions opt;
    opt.max_len = 5;
    RougeReport report = evaluate_corpus(trained.last, corpus, opt, 1);

    REQUIRE(report.per_instance.size() == 3);
    CHECK(report.overall.count == 3);
    CHECK(report.slices.at("query_type").at("question").count == 2);
    CHECK(report.slices.at("query_type").at("keyword").count == 1);
    CHECK(report.slices.at("irrelevant").at("with").count == 2);
    CHECK(report.slices.at("irrelevant").at("without").count == 1);
    for (const auto& [key, groups] : report.slices) {
        int total = 0;
        for (const auto& [label, slice] : groups) total += slice.count;
        INFO("slice key ", key);
        CHECK(total == 3);
    }
    for (const auto& s : report.per_instance) {
        CHECK(s.rouge1 >= 0.0);
        CHECK(s.rouge1 <= 1.0);
        CHECK(s.rouge2 >= 0.0);
        CHECK(s.rouge2 <= 1.0);
        CHECK(s.rougeL >= 0.0);
        CHECK(s.rougeL <= 1.0);
    }

    RougeReport threaded = evaluate_corpus(trained.last, corpus, opt, 3);
    REQUIRE(threaded.per_instance.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(threaded.per_instance[i].rouge1 == report.per_instance[i].rouge1);
        CHECK(threaded.per_instance[i].rouge2 == report.per_instance[i].rouge2);
        CHECK(threaded.per_instance[i].rougeL == report.per_instance[i].rougeL);
        CHECK(threaded.per_instance[i].generated == report.per_instance[i].generated);
    }
    CHECK(threaded.overall.rouge1 == report.overall.rouge1);

    const std::string json_path =
        (std::filesystem::temp_directory_path() / "ctrsgen_report.json").string();
    const std::string tsv_path =
        (std::filesystem::temp_directory_path() / "ctrsgen_report.tsv").string();
    write_report_json(report, json_path);
    write_report_tsv(report, tsv_path);
    CHECK(std::filesystem::file_size(json_path) > 0);
    CHECK(std::filesystem::file_size(tsv_path) > 0);
}

TEST_CASE("identical candidate and reference score perfect across instances") {
    InstanceScore s;
    s.rouge1 = rouge_n(toks({"aa", "bb"}), toks({"aa", "bb"}), 1);
    s.rouge2 = rouge_n(toks({"aa", "bb"}), toks({"aa", "bb"}), 2);
    s.rougeL = rouge_l(toks({"aa", "bb"}), toks({"aa", "bb"}));
    CHECK(s.rouge1 == 1.0);
    CHECK(s.rouge2 == 1.0);
    CHECK(s.rougeL == 1.0);
}
