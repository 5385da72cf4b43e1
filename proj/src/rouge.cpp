#include "ctrsgen/rouge.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace ctrsgen {

namespace {

// n-gram multiset as joined keys; \x1f cannot appear in whitespace-split tokens.
std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::unordered_map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int j = 1; j < n; ++j) {
            key += '\x1f';
            key += tokens[i + static_cast<std::size_t>(j)];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

double rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               int n) {
    if (n < 1) {
        throw std::invalid_argument("rouge_n: n must be at least 1");
    }
    if (static_cast<int>(reference.size()) < n) {
        throw std::invalid_argument("rouge_n: reference has " + std::to_string(reference.size()) +
                                    " tokens, fewer than n=" + std::to_string(n));
    }
    const auto ref_counts = ngram_counts(reference, n);
    const auto cand_counts = ngram_counts(candidate, n);
    long long overlap = 0;
    long long ref_total = 0;
    for (const auto& [gram, count] : ref_counts) {
        ref_total += count;
        auto it = cand_counts.find(gram);
        if (it != cand_counts.end()) {
            overlap += std::min(count, it->second);
        }
    }
    return static_cast<double>(overlap) / static_cast<double>(ref_total);
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
    if (reference.empty()) {
        throw std::invalid_argument("rouge_l: empty reference");
    }
    const std::size_t m = candidate.size();
    const std::size_t r = reference.size();
    // One-row LCS table; prev holds row i-1.
    std::vector<int> prev(r + 1, 0), cur(r + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= r; ++j) {
            if (candidate[i - 1] == reference[j - 1]) {
                cur[j] = prev[j - 1] + 1;
            } else {
                cur[j] = std::max(prev[j], cur[j - 1]);
            }
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[r]) / static_cast<double>(r);
}

}  // namespace ctrsgen
