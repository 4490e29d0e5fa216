#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vqc/assembler.h"
#include "vqc/chat.h"
#include "vqc/corpus.h"
#include "vqc/error.h"

namespace vqc {

enum class Choice { kFirst, kSecond, kTie };

std::string_view to_string(Choice c);
Choice choice_from_string(std::string_view s);

// A pair as presented: `first_id` shown as the first image.
struct ChoiceRecord {
  std::string first_id;
  std::string second_id;
  Choice choice = Choice::kTie;
  bool flagged = false;  // reply could not be mapped, or the client failed

  friend bool operator==(const ChoiceRecord&, const ChoiceRecord&) = default;
};

struct ImagePair {
  ImageRef first;
  ImageRef second;
  std::string dataset;  // optional grouping for per-dataset reports
};

// The forced-choice question put to the client, before interleaving.
std::string two_afc_question();

// Keyword rules: a reply naming exactly one of first/second picks it; a
// reply naming both picks the earlier mention; a reply naming neither but
// stating equal or similar quality is a tie. Anything else is a flagged tie.
Choice map_choice_text(std::string_view reply, bool* flagged);

// Two records per pair: (a, b) then (b, a).
std::vector<ChoiceRecord> run_2afc(ChatClient& client, const std::vector<ImagePair>& pairs,
                                   InterleaveFormat fmt, const CallOptions& options);

struct SwapConsistency {
  double raw = 0.0;
  double chance_corrected = 0.0;
  double expected_agreement = 0.0;  // p_e from the positional marginals
  std::size_t pairs = 0;
};

// Records must come in adjacent order-swapped pairs (either presentation
// may be stored first). A pair is consistent when both presentations name
// the same image, or both are ties. p_e = 2 * P(first) * P(second) + P(tie)^2
// over all records; chance_corrected = (raw - p_e) / (1 - p_e), and 1 when
// p_e = 1 and raw = 1.
SwapConsistency swap_consistency(const std::vector<ChoiceRecord>& records);

// c(i, j): times item i beat item j. t(i, j): ties, symmetric.
class PreferenceMatrix {
 public:
  explicit PreferenceMatrix(std::size_t n = 0);

  std::size_t size() const { return n_; }
  double wins(std::size_t i, std::size_t j) const { return c_[i * n_ + j]; }
  double ties(std::size_t i, std::size_t j) const { return t_[i * n_ + j]; }
  void add_win(std::size_t winner, std::size_t loser, double count = 1.0);
  void add_tie(std::size_t i, std::size_t j, double count = 1.0);

  // Items are indexed in order of first appearance; ids receives them.
  static PreferenceMatrix from_choices(const std::vector<ChoiceRecord>& records,
                                       std::vector<std::string>* ids);

 private:
  void check(std::size_t i, std::size_t j) const;
  std::size_t n_;
  std::vector<double> c_;
  std::vector<double> t_;
};

struct FitOptions {
  double prior_variance = 10.0;
  double tol = 1e-8;
  int max_iter = 500;
};

struct ScoreVector {
  std::vector<double> s;
  int iterations = 0;
  double gradient_max_norm = 0.0;
};

// Bradley-Terry log posterior:
//   sum_{i!=j} c_ij log sigma(s_i - s_j)
// + sum_{i<j} t_ij [log sigma(s_i - s_j) + log sigma(s_j - s_i)]
// - sum_i s_i^2 / (2 prior_variance)
double map_objective(const PreferenceMatrix& m, std::span<const double> s, double prior_variance);
std::vector<double> map_gradient(const PreferenceMatrix& m, std::span<const double> s,
                                 double prior_variance);

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& message, ScoreVector last)
      : Error(ErrorCode::kNonConvergence, message), last_(std::move(last)) {}
  const ScoreVector& last_iterate() const { return last_; }

 private:
  ScoreVector last_;
};

// Maximizes map_objective by damped Newton (falling back to gradient
// ascent when the Newton direction is unusable). Converged when the
// gradient max-norm drops below tol; otherwise throws NonConvergenceError.
ScoreVector fit_map_scores(const PreferenceMatrix& m, const FitOptions& options = {});

// Pearson linear correlation. Lengths must match and be >= 2; a constant
// input is an error.
double pearson(std::span<const double> x, std::span<const double> y);

// sum w_d v_d / sum w_d over matching keys; weights must be positive.
double weighted_average(const std::map<std::string, double>& values,
                        const std::map<std::string, double>& weights);

struct DatasetAgreement {
  std::size_t pairs = 0;
  std::size_t scored_images = 0;
  double rho = 0.0;
  SwapConsistency kappa;
  std::vector<std::string> ids;
  std::vector<double> scores;
};

struct TwoAfcReport {
  std::map<std::string, DatasetAgreement> datasets;
  double weighted_rho = 0.0;
  double weighted_kappa = 0.0;      // chance-corrected
  double weighted_kappa_raw = 0.0;
  std::size_t flagged = 0;

  std::string to_json() const;
};

// Splits records by pair dataset, fits scores per dataset, correlates them
// with MOS, and weights the per-dataset values by pair count. `records`
// holds the two presentations of pairs[k] at 2k and 2k + 1.
TwoAfcReport evaluate_2afc(const std::vector<ImagePair>& pairs,
                           const std::vector<ChoiceRecord>& records,
                           const std::unordered_map<std::string, double>& mos,
                           const FitOptions& options);

}  // namespace vqc
