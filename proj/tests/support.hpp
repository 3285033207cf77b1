#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>
#include <string>

#include "infune/rng.hpp"
#include "infune/tensor.hpp"

namespace infune::check {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // parameter with the largest error
  std::size_t entries = 0;
};

/// Compares the gradients accumulated by `loss(true)` against central finite
/// differences of `loss(false)` for every entry of every parameter. Errors are
/// measured per parameter tensor as |analytic - numeric| / max(|analytic|, |numeric|),
/// falling back to the absolute difference when both norms are below `floor`.
inline GradCheck check_gradients(ParamStore& params, const std::function<double(bool)>& loss,
                                 double h = 1e-5, double floor = 1e-6) {
  params.zero_grad();
  loss(true);
  GradCheck out;
  for (ParamStore::Id id = 0; id < params.size(); ++id) {
    const Matrix analytic = params.grad(id);
    Matrix numeric = Matrix::Zero(analytic.rows(), analytic.cols());
    Matrix& w = params.value(id);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double saved = w(r, c);
        w(r, c) = saved + h;
        const double up = loss(false);
        w(r, c) = saved - h;
        const double down = loss(false);
        w(r, c) = saved;
        numeric(r, c) = (up - down) / (2.0 * h);
        ++out.entries;
      }
    const double scale = std::max(analytic.norm(), numeric.norm());
    const double diff = (analytic - numeric).norm();
    const double err = scale < floor ? diff : diff / scale;
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst = params.name(id);
    }
  }
  return out;
}

/// Closed-form expected hit-precision of a uniformly random ranking over n candidates.
inline double random_hit_precision(std::size_t n, std::size_t k) {
  double s = 0.0;
  for (std::size_t p = 1; p <= std::min(n, k); ++p) s += static_cast<double>(k - p + 1) / k;
  return s / static_cast<double>(n);
}

using SimMatrix = std::vector<std::vector<double>>;

struct Best {
  std::size_t size = 0;
  double weight = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// Maximum-cardinality, then maximum-weight matching by enumeration.
inline Best exhaustive_matching(const SimMatrix& s, double tau) {
  const std::size_t n = s.size(), m = n ? s[0].size() : 0;
  Best best;
  std::vector<char> used(m, 0);
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  std::function<void(std::size_t, double)> rec = [&](std::size_t a, double w) {
    if (a == n) {
      if (cur.size() > best.size || (cur.size() == best.size && w > best.weight + 1e-12))
        best = {cur.size(), w, cur};
      return;
    }
    rec(a + 1, w);
    for (std::size_t b = 0; b < m; ++b)
      if (!used[b] && s[a][b] >= tau) {
        used[b] = 1;
        cur.emplace_back(a, b);
        rec(a + 1, w + s[a][b]);
        cur.pop_back();
        used[b] = 0;
      }
  };
  rec(0, 0.0);
  std::sort(best.pairs.begin(), best.pairs.end());
  return best;
}

// A planted partial permutation with values in [0.6, 1]; other entries are either
// below tau or, between planted rows and columns, below both planted values they
// compete with. Greedy is optimal on such fixtures.
inline SimMatrix planted_fixture(std::size_t n, std::size_t m, Rng& rng, double tau) {
  SimMatrix s(n, std::vector<double>(m, 0.0));
  std::vector<std::size_t> cols(m);
  for (std::size_t k = 0; k < m; ++k) cols[k] = k;
  std::shuffle(cols.begin(), cols.end(), rng);
  const std::size_t planted = std::min(n, m) == 0 ? 0 : 1 + uniform_index(rng, std::min(n, m));
  std::vector<double> row_val(n, -1.0), col_val(m, -1.0);
  for (std::size_t a = 0; a < planted; ++a) {
    const double v = 0.6 + 0.4 * uniform01(rng);
    s[a][cols[a]] = v;
    row_val[a] = v;
    col_val[cols[a]] = v;
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (row_val[a] >= 0 && col_val[b] == row_val[a]) continue;
      const double cap = std::min(row_val[a], col_val[b]);
      if (cap > tau && uniform01(rng) < 0.5)
        s[a][b] = tau + (cap - tau) * uniform01(rng) * 0.99;
      else
        s[a][b] = tau * uniform01(rng) * 0.99;
    }
  return s;
}

}  // namespace infune::check
