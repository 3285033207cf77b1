#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "infune/dataset.hpp"

namespace infune {

/// Decodes UTF-8 into code points; invalid bytes map to U+FFFD.
std::u32string utf8_decode(std::string_view s);

/// Edit distance (unit-cost insert/delete/substitute) over code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - lev(a, b) / max(|a|, |b|); 0 when either string is empty.
double name_similarity(std::string_view a, std::string_view b);

/// Sparse L2-normalized term-weight vector: (term id, weight), sorted by term id.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

double sparse_dot(const SparseVector& a, const SparseVector& b);

/// TF-IDF over a combined corpus: tf = 1 + ln(count), idf = ln((1 + N) / (1 + df)) + 1,
/// rows L2-normalized. Empty documents give empty vectors.
class TfidfVectorizer {
 public:
  explicit TfidfVectorizer(const std::vector<const Document*>& corpus);

  SparseVector transform(const Document& doc) const;
  std::size_t vocabulary_size() const { return vocab_.size(); }
  double idf(std::string_view term) const;

 private:
  std::unordered_map<std::string, std::size_t> vocab_;
  std::vector<double> idf_;
};

}  // namespace infune
