#include "langdiar/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace langdiar {

void LossWeights::validate() const {
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!nonneg(lambda_dia) || !nonneg(lambda_ovr) || !nonneg(lambda_act))
    fail("LossWeights: lambdas must be >= 0");
  if (!(gamma_d > 0) || !(gamma_o > 0)) fail("LossWeights: gammas must be > 0");
  if (!nonneg(alpha_d_embedded) || !nonneg(alpha_d_matrix) || !nonneg(alpha_d_vad) ||
      !nonneg(alpha_o_embedded) || !nonneg(beta_o_embedded) || !nonneg(alpha_o_other) ||
      !nonneg(beta_o_other))
    fail("LossWeights: per-role weights must be >= 0");
  if (!(eps > 0 && eps < 1e-3)) fail("LossWeights: eps out of range");
}

namespace {

void check_shapes(ad::Tape& t, ad::Var pred, const Mat& target, const char* op) {
  if (t.rows(pred) != target.rows() || t.cols(pred) != target.cols())
    fail(strfmt("%s: shape mismatch %dx%d vs %ldx%ld", op, t.rows(pred), t.cols(pred),
                target.rows(), target.cols()));
}

}  // namespace

ad::Var focal_dia_loss(ad::Tape& t, ad::Var pred, const Mat& target, double alpha,
                       double gamma, double eps) {
  check_shapes(t, pred, target, "focal_dia_loss");
  ad::Var p = t.clamp(pred, eps, 1.0 - eps);
  ad::Var one_m_p = t.one_minus(p);
  ad::Var m = t.constant(target);
  ad::Var one_m_m = t.constant((1.0 - target.array()).matrix());
  ad::Var pos = t.mul(t.mul(t.pow(one_m_p, gamma), m), t.log(p));
  ad::Var neg = t.mul(t.mul(t.pow(p, gamma), one_m_m), t.log(one_m_p));
  return t.scale(t.mean(t.add(pos, neg)), -alpha);
}

ad::Var focal_tversky_loss(ad::Tape& t, ad::Var pred, const Mat& target, double alpha_o,
                           double beta_o, double gamma_o, double eps) {
  check_shapes(t, pred, target, "focal_tversky_loss");
  ad::Var p = t.clamp(pred, 0.0, 1.0);
  ad::Var m = t.constant(target);
  ad::Var one_m_m = t.constant((1.0 - target.array()).matrix());
  ad::Var tp = t.sum(t.mul(p, m));
  ad::Var fp = t.sum(t.mul(p, one_m_m));
  ad::Var fn = t.sum(t.mul(t.one_minus(p), m));
  ad::Var denom = t.add_const(t.add(tp, t.add(t.scale(fp, alpha_o), t.scale(fn, beta_o))), eps);
  ad::Var index = t.div(tp, denom);
  // clamp keeps the gamma-power differentiable at a perfect overlap
  return t.pow(t.clamp(t.one_minus(index), eps, 1.0), gamma_o);
}

ad::Var bce_loss(ad::Tape& t, ad::Var pred, const Mat& target, double eps) {
  check_shapes(t, pred, target, "bce_loss");
  ad::Var p = t.clamp(pred, eps, 1.0 - eps);
  ad::Var m = t.constant(target);
  ad::Var one_m_m = t.constant((1.0 - target.array()).matrix());
  ad::Var ll = t.add(t.mul(m, t.log(p)), t.mul(one_m_m, t.log(t.one_minus(p))));
  return t.neg(t.mean(ll));
}

double focal_dia_loss(const Mat& pred, const Mat& target, double alpha, double gamma) {
  ad::Tape t;
  return t.val(focal_dia_loss(t, t.constant(pred), target, alpha, gamma))(0, 0);
}

double focal_tversky_loss(const Mat& pred, const Mat& target, double alpha_o, double beta_o,
                          double gamma_o) {
  ad::Tape t;
  return t.val(focal_tversky_loss(t, t.constant(pred), target, alpha_o, beta_o, gamma_o))(0, 0);
}

double activation_loss(const Vec& pred_c, const Vec& target_c) {
  if (pred_c.size() != target_c.size()) fail("activation_loss: shape mismatch");
  ad::Tape t;
  Mat p(pred_c.size(), 1), m(target_c.size(), 1);
  p.col(0) = pred_c;
  m.col(0) = target_c;
  return t.val(bce_loss(t, t.constant(p), m))(0, 0);
}

Mat pairwise_cost(const Mat& masks, const Vec& activities, const Mat& targets,
                  const std::vector<bool>& target_embedded, const LossWeights& w) {
  w.validate();
  long k = masks.rows(), c = targets.rows();
  if (activities.size() != k) fail("pairwise_cost: activities/masks mismatch");
  if (c > 0 && masks.cols() != targets.cols()) fail("pairwise_cost: frame-count mismatch");
  if (static_cast<long>(target_embedded.size()) != c)
    fail("pairwise_cost: role flags/target mismatch");

  Mat cost(k, c);
  Mat one(1, 1);
  one(0, 0) = 1.0;
  for (long q = 0; q < k; ++q) {
    Mat mask_row = masks.row(q);
    Mat act(1, 1);
    act(0, 0) = activities(q);
    for (long tc = 0; tc < c; ++tc) {
      bool emb = target_embedded[static_cast<size_t>(tc)];
      Mat target_row = targets.row(tc);
      double dia = focal_dia_loss(mask_row, target_row, w.eff_alpha_d(emb), w.eff_gamma_d());
      double ovr = focal_tversky_loss(mask_row, target_row, w.eff_alpha_o(emb),
                                      w.eff_beta_o(emb), w.eff_gamma_o());
      ad::Tape t;
      double act_term = t.val(bce_loss(t, t.constant(act), one))(0, 0);
      cost(q, tc) = w.lambda_dia * dia + w.lambda_ovr * ovr + w.lambda_act * act_term;
    }
  }
  if (!all_finite(cost)) fail("pairwise_cost: non-finite cost entry");
  return cost;
}

namespace {

// shortest-augmenting-path assignment for an n×m matrix with n <= m;
// returns row -> col
std::vector<int> solve_assignment(const Mat& a) {
  int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0), way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      int i0 = p[static_cast<size_t>(j0)], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        double cur = a(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

double assignment_total(const Mat& a, const std::vector<int>& row_to_col) {
  double s = 0.0;
  for (size_t i = 0; i < row_to_col.size(); ++i) s += a(static_cast<long>(i), row_to_col[i]);
  return s;
}

// Lexicographically smallest row->col vector among minimum-cost assignments:
// fix rows in order, trying columns in ascending index.
std::vector<int> lexicographic_refine(const Mat& a) {
  int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
  double best = assignment_total(a, solve_assignment(a));
  double tol = 1e-9 * std::max(1.0, std::abs(best));

  std::vector<int> chosen(static_cast<size_t>(n), -1);
  std::vector<char> used_col(static_cast<size_t>(m), 0);
  double fixed_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (used_col[static_cast<size_t>(j)]) continue;
      // remaining subproblem: rows i+1..n-1, free columns
      std::vector<int> free_cols;
      for (int jj = 0; jj < m; ++jj)
        if (!used_col[static_cast<size_t>(jj)] && jj != j) free_cols.push_back(jj);
      int rem_rows = n - i - 1;
      double rem_cost = 0.0;
      if (rem_rows > 0) {
        Mat sub(rem_rows, static_cast<long>(free_cols.size()));
        for (int r = 0; r < rem_rows; ++r)
          for (size_t cidx = 0; cidx < free_cols.size(); ++cidx)
            sub(r, static_cast<long>(cidx)) = a(i + 1 + r, free_cols[cidx]);
        rem_cost = assignment_total(sub, solve_assignment(sub));
      }
      if (fixed_cost + a(i, j) + rem_cost <= best + tol) {
        chosen[static_cast<size_t>(i)] = j;
        used_col[static_cast<size_t>(j)] = 1;
        fixed_cost += a(i, j);
        break;
      }
    }
    if (chosen[static_cast<size_t>(i)] < 0) fail("hungarian_match: refinement failed");
  }
  return chosen;
}

}  // namespace

Assignment hungarian_match(const Mat& cost) {
  if (!all_finite(cost)) fail("hungarian_match: non-finite cost entry");
  long k = cost.rows(), c = cost.cols();
  Assignment asg;
  if (k == 0 || c == 0) {
    for (long q = 0; q < k; ++q) asg.unmatched_queries.push_back(static_cast<int>(q));
    return asg;
  }

  if (c <= k) {
    // rows = targets: every target gets a query
    Mat a = cost.transpose();
    std::vector<int> target_to_query = lexicographic_refine(a);
    for (long tc = 0; tc < c; ++tc)
      asg.pairs.push_back({target_to_query[static_cast<size_t>(tc)], static_cast<int>(tc)});
  } else {
    // more targets than queries: every query gets a target
    std::vector<int> query_to_target = lexicographic_refine(cost);
    for (long q = 0; q < k; ++q)
      asg.pairs.push_back({static_cast<int>(q), query_to_target[static_cast<size_t>(q)]});
  }

  std::vector<char> matched(static_cast<size_t>(k), 0);
  for (auto& [q, tc] : asg.pairs) {
    matched[static_cast<size_t>(q)] = 1;
    asg.total_cost += cost(q, tc);
  }
  for (long q = 0; q < k; ++q)
    if (!matched[static_cast<size_t>(q)]) asg.unmatched_queries.push_back(static_cast<int>(q));
  std::sort(asg.pairs.begin(), asg.pairs.end(),
            [](auto& a, auto& b) { return a.second < b.second; });
  return asg;
}

ad::Var total_loss(ad::Tape& t, const std::vector<StepVars>& steps, const LabelMatrix& target,
                   const LanguageInventory& inventory, const LossWeights& w,
                   LossDiagnostics* diag) {
  w.validate();
  target.validate();
  if (steps.empty()) fail("total_loss: no decoder steps");

  long c = target.channels() - 1;  // language channels
  std::vector<bool> embedded;
  for (long ch = 1; ch <= c; ++ch)
    embedded.push_back(inventory.is_embedded(target.channel_roles[static_cast<size_t>(ch)]));
  Mat lang_targets = c > 0 ? Mat(target.values.bottomRows(c)) : Mat(0, target.frames());
  Mat vad_target = target.values.row(0);
  bool vad_active = vad_target.maxCoeff() > 0.5;

  if (diag) *diag = LossDiagnostics{};
  ad::Var total;
  for (const auto& step : steps) {
    long k = t.rows(step.masks);
    if (t.cols(step.masks) != target.frames())
      fail(strfmt("total_loss: prediction has %d frames, target %ld", t.cols(step.masks),
                  target.frames()));
    if (k - 1 < 0) fail("total_loss: need the VAD slot");

    // matching from current values, held constant under differentiation
    Mat mask_vals = t.val(step.masks);
    Mat act_vals = t.val(step.activities);
    Assignment asg;
    if (c > 0) {
      Mat lang_masks = mask_vals.bottomRows(k - 1);
      Vec lang_acts = act_vals.col(0).tail(k - 1);
      asg = hungarian_match(pairwise_cost(lang_masks, lang_acts, lang_targets, embedded, w));
    } else {
      for (int q = 0; q < k - 1; ++q) asg.unmatched_queries.push_back(q);
    }

    // diarization + overlap losses: mean over matched pairs, plus the fixed
    // VAD slot term
    ad::Var dia = focal_dia_loss(t, t.slice_rows(step.masks, 0, 1), vad_target,
                                 w.eff_alpha_d(false, true), w.eff_gamma_d(), w.eps);
    ad::Var ovr = focal_tversky_loss(t, t.slice_rows(step.masks, 0, 1), vad_target,
                                     w.eff_alpha_o(false), w.eff_beta_o(false), w.eff_gamma_o(),
                                     w.eps);
    if (!asg.pairs.empty()) {
      ad::Var dsum, osum;
      for (auto [q, tc] : asg.pairs) {
        bool emb = embedded[static_cast<size_t>(tc)];
        Mat target_row = lang_targets.row(tc);
        ad::Var mrow = t.slice_rows(step.masks, q + 1, 1);
        ad::Var dterm =
            focal_dia_loss(t, mrow, target_row, w.eff_alpha_d(emb), w.eff_gamma_d(), w.eps);
        ad::Var oterm = focal_tversky_loss(t, mrow, target_row, w.eff_alpha_o(emb),
                                           w.eff_beta_o(emb), w.eff_gamma_o(), w.eps);
        dsum = dsum.valid() ? t.add(dsum, dterm) : dterm;
        osum = osum.valid() ? t.add(osum, oterm) : oterm;
      }
      double inv = 1.0 / static_cast<double>(asg.pairs.size());
      dia = t.add(dia, t.scale(dsum, inv));
      ovr = t.add(ovr, t.scale(osum, inv));
    }

    // activation targets: VAD slot follows VAD activity; matched 1, else 0
    Mat act_target = Mat::Zero(k, 1);
    act_target(0, 0) = vad_active ? 1.0 : 0.0;
    for (auto [q, tc] : asg.pairs) {
      (void)tc;
      act_target(q + 1, 0) = 1.0;
    }
    ad::Var act = bce_loss(t, step.activities, act_target, w.eps);

    ad::Var step_total = t.add(t.add(t.scale(dia, w.lambda_dia), t.scale(ovr, w.lambda_ovr)),
                               t.scale(act, w.lambda_act));
    total = total.valid() ? t.add(total, step_total) : step_total;

    if (diag) {
      StepLossDiag d;
      d.dia = t.val(dia)(0, 0);
      d.ovr = t.val(ovr)(0, 0);
      d.act = t.val(act)(0, 0);
      d.total = t.val(step_total)(0, 0);
      d.assignment = asg.pairs;
      diag->steps.push_back(std::move(d));
    }
  }
  total = t.scale(total, 1.0 / static_cast<double>(steps.size()));

  if (diag) {
    for (const auto& s : diag->steps) {
      diag->dia += s.dia / static_cast<double>(diag->steps.size());
      diag->ovr += s.ovr / static_cast<double>(diag->steps.size());
      diag->act += s.act / static_cast<double>(diag->steps.size());
    }
    diag->total = t.val(total)(0, 0);
  }
  return total;
}

std::pair<double, LossDiagnostics> total_loss(const DiarizationPrediction& prediction,
                                              const LabelMatrix& target,
                                              const LanguageInventory& inventory,
                                              const LossWeights& w) {
  ad::Tape t;
  std::vector<StepVars> steps;
  for (const auto& st : prediction.per_step_states) {
    StepVars sv;
    sv.masks = t.constant(st.masks);
    Mat act(st.activities.size(), 1);
    act.col(0) = st.activities;
    sv.activities = t.constant(act);
    steps.push_back(sv);
  }
  LossDiagnostics diag;
  ad::Var root = total_loss(t, steps, target, inventory, w, &diag);
  return {t.val(root)(0, 0), diag};
}

}  // namespace langdiar
