#pragma once

#include "langdiar/core.hpp"
#include "langdiar/decoder.hpp"

#include <utility>
#include <vector>

namespace langdiar {

struct LossWeights {
  double lambda_dia = 1.0;
  double lambda_ovr = 1.0;
  double lambda_act = 1.0;
  double gamma_d = 0.25;
  double gamma_o = 0.75;
  double alpha_d_embedded = 3.0;
  double alpha_d_matrix = 1.0;
  double alpha_d_vad = 1.0;
  double alpha_o_embedded = 0.7;
  double beta_o_embedded = 0.3;
  double alpha_o_other = 0.5;
  double beta_o_other = 0.5;
  // ablation switches; off wires the exact degenerations (focal -> BCE,
  // focal Tversky -> 1 - soft Dice)
  bool use_focal = true;
  bool use_focal_tversky = true;
  double eps = 1e-7;

  void validate() const;
  double eff_gamma_d() const { return use_focal ? gamma_d : 0.0; }
  double eff_alpha_d(bool embedded, bool vad = false) const {
    if (!use_focal) return 1.0;
    return vad ? alpha_d_vad : (embedded ? alpha_d_embedded : alpha_d_matrix);
  }
  double eff_gamma_o() const { return use_focal_tversky ? gamma_o : 1.0; }
  double eff_alpha_o(bool embedded) const {
    return use_focal_tversky ? (embedded ? alpha_o_embedded : alpha_o_other) : 0.5;
  }
  double eff_beta_o(bool embedded) const {
    return use_focal_tversky ? (embedded ? beta_o_embedded : beta_o_other) : 0.5;
  }
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query_index, target_channel)
  std::vector<int> unmatched_queries;
  double total_cost = 0.0;
};

// ---- tape builders (the single formula source; training path) ----
// pred: probabilities in [0,1] (clamped internally); target: binary constants.
ad::Var focal_dia_loss(ad::Tape& t, ad::Var pred, const Mat& target, double alpha,
                       double gamma, double eps = 1e-7);
ad::Var focal_tversky_loss(ad::Tape& t, ad::Var pred, const Mat& target, double alpha_o,
                           double beta_o, double gamma_o, double eps = 1e-7);
ad::Var bce_loss(ad::Tape& t, ad::Var pred, const Mat& target, double eps = 1e-7);

// ---- value wrappers (spec-level scalar operations) ----
double focal_dia_loss(const Mat& pred, const Mat& target, double alpha, double gamma);
double focal_tversky_loss(const Mat& pred, const Mat& target, double alpha_o, double beta_o,
                          double gamma_o);
double activation_loss(const Vec& pred_c, const Vec& target_c);

// Cost of pairing each candidate query (rows) with each ground-truth language
// channel (cols); same formula as the training objective. target_embedded
// marks each target channel's role.
Mat pairwise_cost(const Mat& masks, const Vec& activities, const Mat& targets,
                  const std::vector<bool>& target_embedded, const LossWeights& w);

// Minimum-cost injective assignment (Jonker–Volgenant style shortest
// augmenting paths). Ties resolve to the lexicographically smallest
// assignment vector (by target channel). K >= C and K < C both allowed;
// min(K, C) pairs are produced.
Assignment hungarian_match(const Mat& cost);

struct StepLossDiag {
  double dia = 0.0;
  double ovr = 0.0;
  double act = 0.0;
  double total = 0.0;
  std::vector<std::pair<int, int>> assignment;
};

struct LossDiagnostics {
  std::vector<StepLossDiag> steps;
  double dia = 0.0, ovr = 0.0, act = 0.0, total = 0.0;
};

// Deep-supervised objective over all decoder steps. The target's channel 0 is
// VAD (matched to the reserved query slot 0); language channels are
// Hungarian-matched against slots 1..K-1 per step. Matching is computed from
// values and treated as constant under differentiation.
ad::Var total_loss(ad::Tape& t, const std::vector<StepVars>& steps, const LabelMatrix& target,
                   const LanguageInventory& inventory, const LossWeights& w,
                   LossDiagnostics* diag = nullptr);

// Value-level wrapper over per-step states (no parameter gradients).
std::pair<double, LossDiagnostics> total_loss(const DiarizationPrediction& prediction,
                                              const LabelMatrix& target,
                                              const LanguageInventory& inventory,
                                              const LossWeights& w);

}  // namespace langdiar
