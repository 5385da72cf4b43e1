#pragma once

// ROUGE recall metrics: clipped multiset n-gram overlap over the reference
// n-gram count, and longest-common-subsequence length over the reference
// length.

#include <string>
#include <vector>

namespace ctrsgen {

// Throws when the reference has fewer than n tokens.
double rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               int n);

// Throws when the reference is empty.
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

}  // namespace ctrsgen
