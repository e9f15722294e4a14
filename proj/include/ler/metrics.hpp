#pragma once

// Line accuracy and normalized edit distance over class-id sequences.

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ler {

/// Levenshtein distance, O(|a|*|b|) time, O(|b|) memory.
template <typename Symbol>
std::size_t edit_distance(std::span<const Symbol> a, std::span<const Symbol> b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  return edit_distance<int>(std::span<const int>(a), std::span<const int>(b));
}

/// Symbols before the first occurrence of `pad`.
inline std::vector<int> strip_pad(std::span<const int> seq, int pad = 0) {
  const auto end = std::find(seq.begin(), seq.end(), pad);
  return {seq.begin(), end};
}

struct SampleResult {
  std::vector<int> prediction;
  std::vector<int> label;
  std::size_t distance = 0;
};

struct EvalResult {
  double lacc = 0.0;
  double ned = 0.0;
  std::size_t count = 0;
  std::vector<SampleResult> samples;
};

/// LACC = mean of exact matches; NED = 1 - mean(ED / max(len_pred, len_label)).
/// Sequences are compared as given (strip padding beforehand). An
/// empty-vs-empty pair counts as distance 0.
inline EvalResult evaluate(const std::vector<std::vector<int>>& predictions,
                           const std::vector<std::vector<int>>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  EvalResult r;
  r.count = labels.size();
  if (r.count == 0) return r;
  double exact = 0.0;
  double normalized = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SampleResult s{predictions[i], labels[i], edit_distance(predictions[i], labels[i])};
    const std::size_t maxlen = std::max(s.prediction.size(), s.label.size());
    if (s.distance == 0) exact += 1.0;
    if (maxlen > 0) normalized += static_cast<double>(s.distance) / static_cast<double>(maxlen);
    r.samples.push_back(std::move(s));
  }
  r.lacc = exact / static_cast<double>(r.count);
  r.ned = 1.0 - normalized / static_cast<double>(r.count);
  return r;
}

}  // namespace ler
