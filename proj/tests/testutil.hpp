#pragma once

#include "langdiar/autodiff.hpp"
#include "langdiar/common.hpp"

#include <functional>
#include <vector>

namespace langdiar::testutil {

inline Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal() * scale;
  return m;
}

inline Mat random_binary(Rng& rng, int r, int c, double p = 0.5) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.bernoulli(p) ? 1.0 : 0.0;
  return m;
}

inline Mat random_prob(Rng& rng, int r, int c, double lo = 0.05, double hi = 0.95) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

struct GradCheckResult {
  int checked = 0;
  int passed = 0;
  double worst_rel = 0.0;
  double fraction() const { return checked ? static_cast<double>(passed) / checked : 1.0; }
};

// Central finite differences on a set of leaf matrices against analytic
// gradients produced by `eval`. `eval` must rebuild the graph from scratch on
// every call and return the scalar loss; when `grads` is non-null it must also
// fill one gradient matrix per input (same order).
inline GradCheckResult grad_check(std::vector<Mat>& inputs,
                                  const std::function<double(const std::vector<Mat>&,
                                                             std::vector<Mat>*)>& eval,
                                  double h = 1e-6, double rel_tol = 1e-3,
                                  double abs_floor = 1e-8, int max_per_input = -1,
                                  Rng* sampler = nullptr) {
  std::vector<Mat> analytic;
  eval(inputs, &analytic);
  GradCheckResult res;
  for (size_t k = 0; k < inputs.size(); ++k) {
    long n = inputs[k].size();
    std::vector<long> idx;
    for (long i = 0; i < n; ++i) idx.push_back(i);
    if (max_per_input > 0 && n > max_per_input && sampler) {
      sampler->shuffle(idx);
      idx.resize(max_per_input);
    }
    for (long i : idx) {
      double orig = inputs[k].data()[i];
      inputs[k].data()[i] = orig + h;
      double fp = eval(inputs, nullptr);
      inputs[k].data()[i] = orig - h;
      double fm = eval(inputs, nullptr);
      inputs[k].data()[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double an = analytic[k].data()[i];
      double denom = std::max({std::abs(fd), std::abs(an), abs_floor});
      double rel = std::abs(fd - an) / denom;
      if (std::abs(fd - an) <= abs_floor) rel = 0.0;
      res.checked++;
      if (rel <= rel_tol) res.passed++;
      res.worst_rel = std::max(res.worst_rel, rel);
    }
  }
  return res;
}

}  // namespace langdiar::testutil
