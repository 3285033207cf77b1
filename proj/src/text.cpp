#include "infune/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace infune {

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1, cp = c;
    } else if ((c >> 5) == 0x6) {
      len = 2, cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      len = 3, cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      len = 4, cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::size_t up = row[j + 1];
      row[j + 1] = std::min({up + 1, row[j] + 1, diag + (a[i] == b[j] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_decode(a), utf8_decode(b));
}

double name_similarity(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0.0;
  const auto ua = utf8_decode(a), ub = utf8_decode(b);
  const double longest = static_cast<double>(std::max(ua.size(), ub.size()));
  return 1.0 - static_cast<double>(levenshtein(ua, ub)) / longest;
}

double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  auto ia = a.begin(), ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      s += ia->second * ib->second;
      ++ia, ++ib;
    }
  }
  return s;
}

TfidfVectorizer::TfidfVectorizer(const std::vector<const Document*>& corpus) {
  // Vocabulary ids in lexicographic order keep the mapping independent of corpus order.
  std::map<std::string, std::size_t> df;
  for (const Document* doc : corpus) {
    std::vector<std::string> terms(doc->begin(), doc->end());
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[t];
  }
  const double n_docs = static_cast<double>(corpus.size());
  for (auto& [term, count] : df) {
    vocab_.emplace(term, idf_.size());
    idf_.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(count))) + 1.0);
  }
}

double TfidfVectorizer::idf(std::string_view term) const {
  auto it = vocab_.find(std::string(term));
  return it == vocab_.end() ? 0.0 : idf_[it->second];
}

SparseVector TfidfVectorizer::transform(const Document& doc) const {
  std::map<std::size_t, double> counts;
  for (const auto& t : doc) {
    if (auto it = vocab_.find(t); it != vocab_.end()) counts[it->second] += 1.0;
  }
  SparseVector v;
  double norm2 = 0.0;
  for (auto [id, c] : counts) {
    const double w = (1.0 + std::log(c)) * idf_[id];
    v.emplace_back(id, w);
    norm2 += w * w;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& e : v) e.second *= inv;
  }
  return v;
}

}  // namespace infune
