#include "vqc/prefagg.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "json_codec.h"

#include "vqc/parallel.h"

namespace vqc {


std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::kFirst: return "first";
    case Choice::kSecond: return "second";
    case Choice::kTie: return "tie";
  }
  return "?";
}

Choice choice_from_string(std::string_view s) {
  if (s == "first") return Choice::kFirst;
  if (s == "second") return Choice::kSecond;
  if (s == "tie") return Choice::kTie;
  throw Error(ErrorCode::kInvalidArgument, "unknown choice '" + std::string(s) + "'");
}

std::string two_afc_question() {
  return "Which image has better quality? Answer with \"the first image\" or \"the second image\".";
}

namespace {

// Position of the first whole-word occurrence of any needle, or npos.
std::size_t first_word(const std::string& text, std::initializer_list<std::string_view> needles) {
  std::size_t best = std::string::npos;
  for (std::string_view needle : needles) {
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + 1)) {
      const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
      const std::size_t end = pos + needle.size();
      const bool right = end >= text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
      if (left && right) {
        best = std::min(best, pos);
        break;
      }
    }
  }
  return best;
}

}  // namespace

Choice map_choice_text(std::string_view reply, bool* flagged) {
  std::string low(reply);
  for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (flagged) *flagged = false;

  const std::size_t first = first_word(low, {"first", "1st", "image 1", "left"});
  const std::size_t second = first_word(low, {"second", "2nd", "image 2", "right"});
  const bool tie = first_word(low, {"similar", "same", "equal", "equally", "tie", "comparable",
                                    "identical", "neither", "indistinguishable"}) != std::string::npos;

  if (first != std::string::npos && second == std::string::npos) return Choice::kFirst;
  if (second != std::string::npos && first == std::string::npos) return Choice::kSecond;
  if (tie) return Choice::kTie;
  if (first != std::string::npos && second != std::string::npos)
    return first < second ? Choice::kFirst : Choice::kSecond;
  if (flagged) *flagged = true;
  return Choice::kTie;
}

std::vector<ChoiceRecord> run_2afc(ChatClient& client, const std::vector<ImagePair>& pairs,
                                   InterleaveFormat fmt, const CallOptions& options) {
  const std::string prompt = render_interleaved(2, two_afc_question(), fmt);
  return bounded_map<ChoiceRecord>(2 * pairs.size(), options.max_in_flight, [&](std::size_t k) {
    const ImagePair& p = pairs[k / 2];
    const bool swapped = k % 2 == 1;
    const ImageRef& a = swapped ? p.second : p.first;
    const ImageRef& b = swapped ? p.first : p.second;
    CallResult res = ask(client, "", {Turn{prompt, {a, b}}}, options);
    ChoiceRecord rec{a.id, b.id, Choice::kTie, true};
    if (res.text) rec.choice = map_choice_text(*res.text, &rec.flagged);
    return rec;
  });
}

SwapConsistency swap_consistency(const std::vector<ChoiceRecord>& records) {
  if (records.empty() || records.size() % 2 != 0)
    throw Error(ErrorCode::kInvalidArgument,
                "swap consistency needs order-swapped record pairs, got " +
                    std::to_string(records.size()) + " records");
  std::size_t consistent = 0, n_first = 0, n_second = 0, n_tie = 0;
  auto winner = [](const ChoiceRecord& r) -> std::string {
    switch (r.choice) {
      case Choice::kFirst: return r.first_id;
      case Choice::kSecond: return r.second_id;
      case Choice::kTie: return {};
    }
    return {};
  };
  for (std::size_t k = 0; k < records.size(); k += 2) {
    const ChoiceRecord& a = records[k];
    const ChoiceRecord& b = records[k + 1];
    if (a.first_id != b.second_id || a.second_id != b.first_id)
      throw Error(ErrorCode::kInvalidArgument, "records " + std::to_string(k) + " and " +
                                                   std::to_string(k + 1) +
                                                   " are not the same pair swapped");
    consistent += winner(a) == winner(b);
    for (const ChoiceRecord* r : {&a, &b}) {
      n_first += r->choice == Choice::kFirst;
      n_second += r->choice == Choice::kSecond;
      n_tie += r->choice == Choice::kTie;
    }
  }
  const double total = static_cast<double>(records.size());
  const double pf = n_first / total, ps = n_second / total, pt = n_tie / total;
  SwapConsistency out;
  out.pairs = records.size() / 2;
  out.raw = static_cast<double>(consistent) / static_cast<double>(out.pairs);
  out.expected_agreement = 2.0 * pf * ps + pt * pt;
  if (out.expected_agreement < 1.0)
    out.chance_corrected = (out.raw - out.expected_agreement) / (1.0 - out.expected_agreement);
  else
    out.chance_corrected = out.raw == 1.0 ? 1.0 : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

PreferenceMatrix::PreferenceMatrix(std::size_t n) : n_(n), c_(n * n, 0.0), t_(n * n, 0.0) {}

void PreferenceMatrix::check(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw Error(ErrorCode::kInvalidArgument, "preference index out of range");
  if (i == j) throw Error(ErrorCode::kInvalidArgument, "an item cannot be compared with itself");
}

void PreferenceMatrix::add_win(std::size_t winner, std::size_t loser, double count) {
  check(winner, loser);
  if (count < 0) throw Error(ErrorCode::kInvalidArgument, "negative count");
  c_[winner * n_ + loser] += count;
}

void PreferenceMatrix::add_tie(std::size_t i, std::size_t j, double count) {
  check(i, j);
  if (count < 0) throw Error(ErrorCode::kInvalidArgument, "negative count");
  t_[i * n_ + j] += count;
  t_[j * n_ + i] += count;
}

PreferenceMatrix PreferenceMatrix::from_choices(const std::vector<ChoiceRecord>& records,
                                                std::vector<std::string>* ids) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> order;
  auto idx = [&](const std::string& id) {
    auto [it, fresh] = index.emplace(id, order.size());
    if (fresh) order.push_back(id);
    return it->second;
  };
  for (const auto& r : records) {
    idx(r.first_id);
    idx(r.second_id);
  }
  PreferenceMatrix m(order.size());
  for (const auto& r : records) {
    const std::size_t a = index.at(r.first_id), b = index.at(r.second_id);
    switch (r.choice) {
      case Choice::kFirst: m.add_win(a, b); break;
      case Choice::kSecond: m.add_win(b, a); break;
      case Choice::kTie: m.add_tie(a, b); break;
    }
  }
  if (ids) *ids = std::move(order);
  return m;
}

namespace {

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct PairCounts {
  std::size_t i, j;
  double c_ij, c_ji, t;
};

std::vector<PairCounts> nonzero_pairs(const PreferenceMatrix& m) {
  std::vector<PairCounts> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      PairCounts p{i, j, m.wins(i, j), m.wins(j, i), m.ties(i, j)};
      if (p.c_ij + p.c_ji + p.t > 0) out.push_back(p);
    }
  return out;
}

double objective(const std::vector<PairCounts>& pairs, const Eigen::VectorXd& s, double v) {
  double L = -s.squaredNorm() / (2.0 * v);
  for (const auto& p : pairs) {
    const double d = s[static_cast<Eigen::Index>(p.i)] - s[static_cast<Eigen::Index>(p.j)];
    L += p.c_ij * log_sigmoid(d) + p.c_ji * log_sigmoid(-d) +
         p.t * (log_sigmoid(d) + log_sigmoid(-d));
  }
  return L;
}

Eigen::VectorXd gradient(const std::vector<PairCounts>& pairs, const Eigen::VectorXd& s, double v) {
  Eigen::VectorXd g = -s / v;
  for (const auto& p : pairs) {
    const auto i = static_cast<Eigen::Index>(p.i), j = static_cast<Eigen::Index>(p.j);
    const double sd = sigmoid(s[i] - s[j]);
    // d/dd of the pair's log-likelihood
    const double dd = p.c_ij * (1.0 - sd) - p.c_ji * sd + p.t * (1.0 - 2.0 * sd);
    g[i] += dd;
    g[j] -= dd;
  }
  return g;
}

Eigen::MatrixXd hessian(const std::vector<PairCounts>& pairs, const Eigen::VectorXd& s, double v) {
  const auto n = s.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n) * (-1.0 / v);
  for (const auto& p : pairs) {
    const auto i = static_cast<Eigen::Index>(p.i), j = static_cast<Eigen::Index>(p.j);
    const double sd = sigmoid(s[i] - s[j]);
    const double w = (p.c_ij + p.c_ji + 2.0 * p.t) * sd * (1.0 - sd);
    H(i, i) -= w;
    H(j, j) -= w;
    H(i, j) += w;
    H(j, i) += w;
  }
  return H;
}

}  // namespace

double map_objective(const PreferenceMatrix& m, std::span<const double> s, double prior_variance) {
  if (s.size() != m.size()) throw Error(ErrorCode::kInvalidArgument, "score vector size mismatch");
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  return objective(nonzero_pairs(m), v, prior_variance);
}

std::vector<double> map_gradient(const PreferenceMatrix& m, std::span<const double> s,
                                 double prior_variance) {
  if (s.size() != m.size()) throw Error(ErrorCode::kInvalidArgument, "score vector size mismatch");
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  Eigen::VectorXd g = gradient(nonzero_pairs(m), v, prior_variance);
  return std::vector<double>(g.data(), g.data() + g.size());
}

ScoreVector fit_map_scores(const PreferenceMatrix& m, const FitOptions& options) {
  if (!(options.prior_variance > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "prior variance must be positive");
  if (!(options.tol > 0.0) || options.max_iter < 1)
    throw Error(ErrorCode::kInvalidArgument, "tol must be positive and max_iter >= 1");

  const auto n = static_cast<Eigen::Index>(m.size());
  const auto pairs = nonzero_pairs(m);
  const double v = options.prior_variance;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  double L = objective(pairs, s, v);

  auto result = [&](int it, double gmax) {
    return ScoreVector{std::vector<double>(s.data(), s.data() + s.size()), it, gmax};
  };

  for (int it = 0; it <= options.max_iter; ++it) {
    const Eigen::VectorXd g = gradient(pairs, s, v);
    const double gmax = n ? g.cwiseAbs().maxCoeff() : 0.0;
    if (gmax < options.tol) return result(it, gmax);
    if (it == options.max_iter)
      throw NonConvergenceError("MAP fit did not converge in " + std::to_string(options.max_iter) +
                                    " iterations (gradient max-norm " + std::to_string(gmax) + ")",
                                result(it, gmax));

    // -H is positive definite because the prior adds 1/v to its diagonal.
    Eigen::VectorXd dir;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-hessian(pairs, s, v));
    if (ldlt.info() == Eigen::Success) dir = ldlt.solve(g);
    if (dir.size() != n || !dir.allFinite() || dir.dot(g) <= 0.0) dir = g;

    const double slope = dir.dot(g);
    // Near the optimum the expected gain drops below what the objective can
    // resolve; there a full step is judged by the gradient instead.
    if (0.5 * slope < 1e-11 * (1.0 + std::abs(L))) {
      const Eigen::VectorXd cand = s + dir;
      const Eigen::VectorXd gc = gradient(pairs, cand, v);
      if (gc.allFinite() && gc.cwiseAbs().maxCoeff() < gmax) {
        s = cand;
        L = objective(pairs, s, v);
        continue;
      }
    }

    // Backtracking with an Armijo condition.
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k) {
      const Eigen::VectorXd cand = s + step * dir;
      const double Lc = objective(pairs, cand, v);
      if (std::isfinite(Lc) && Lc >= L + 1e-4 * step * slope) {
        s = cand;
        L = Lc;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved)
      throw NonConvergenceError("MAP fit stalled with gradient max-norm " + std::to_string(gmax),
                                result(it, gmax));
  }
  return result(options.max_iter, 0.0);  // unreachable
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "pearson: length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::kInvalidArgument, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(ErrorCode::kDegenerate, "pearson: constant input has no correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double weighted_average(const std::map<std::string, double>& values,
                        const std::map<std::string, double>& weights) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "weighted average of nothing");
  if (values.size() != weights.size())
    throw Error(ErrorCode::kInvalidArgument, "values and weights have different keys");
  double num = 0.0, den = 0.0;
  for (const auto& [key, value] : values) {
    auto it = weights.find(key);
    if (it == weights.end()) throw Error(ErrorCode::kInvalidArgument, "no weight for '" + key + "'");
    if (!(it->second > 0.0)) throw Error(ErrorCode::kInvalidArgument, "weight for '" + key + "' must be positive");
    num += it->second * value;
    den += it->second;
  }
  return num / den;
}

// ---------------------------------------------------------------------------

TwoAfcReport evaluate_2afc(const std::vector<ImagePair>& pairs,
                           const std::vector<ChoiceRecord>& records,
                           const std::unordered_map<std::string, double>& mos,
                           const FitOptions& options) {
  if (records.size() != 2 * pairs.size())
    throw Error(ErrorCode::kInvalidArgument, "expected two records per pair");
  std::map<std::string, std::vector<ChoiceRecord>> by_dataset;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto& bucket = by_dataset[pairs[k].dataset];
    bucket.push_back(records[2 * k]);
    bucket.push_back(records[2 * k + 1]);
  }

  TwoAfcReport rep;
  for (const auto& r : records) rep.flagged += r.flagged;
  std::map<std::string, double> rho, kappa, kappa_raw, weight;
  for (const auto& [name, recs] : by_dataset) {
    DatasetAgreement d;
    d.pairs = recs.size() / 2;
    d.kappa = swap_consistency(recs);
    PreferenceMatrix m = PreferenceMatrix::from_choices(recs, &d.ids);
    d.scores = fit_map_scores(m, options).s;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < d.ids.size(); ++i)
      if (auto it = mos.find(d.ids[i]); it != mos.end()) {
        xs.push_back(d.scores[i]);
        ys.push_back(it->second);
      }
    d.scored_images = xs.size();
    d.rho = pearson(xs, ys);
    rho[name] = d.rho;
    kappa[name] = d.kappa.chance_corrected;
    kappa_raw[name] = d.kappa.raw;
    weight[name] = static_cast<double>(d.pairs);
    rep.datasets.emplace(name, std::move(d));
  }
  if (!rep.datasets.empty()) {
    rep.weighted_rho = weighted_average(rho, weight);
    rep.weighted_kappa = weighted_average(kappa, weight);
    rep.weighted_kappa_raw = weighted_average(kappa_raw, weight);
  }
  return rep;
}

std::string TwoAfcReport::to_json() const {
  json ds = json::object();
  for (const auto& [name, d] : datasets) {
    json scores = json::object();
    for (std::size_t i = 0; i < d.ids.size(); ++i) scores[d.ids[i]] = d.scores[i];
    ds[name.empty() ? "default" : name] =
        json{{"pairs", d.pairs},
             {"scored_images", d.scored_images},
             {"rho", d.rho},
             {"kappa", d.kappa.chance_corrected},
             {"kappa_raw", d.kappa.raw},
             {"kappa_expected_agreement", d.kappa.expected_agreement},
             {"scores", std::move(scores)}};
  }
  json j{{"datasets", std::move(ds)},
         {"weighted_rho", weighted_rho},
         {"weighted_kappa", weighted_kappa},
         {"weighted_kappa_raw", weighted_kappa_raw},
         {"flagged", flagged}};
  return j.dump(2);
}

}  // namespace vqc
