#include "autoprog/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace autoprog {

namespace {

void check_positive(const std::vector<CandidateResult>& results) {
  if (results.empty()) throw std::invalid_argument("no candidates to score");
  for (const auto& r : results) {
    if (!(r.loss > 0.0) || !(r.t > 0.0)) throw std::invalid_argument("candidate loss and runtime must be positive");
  }
}

}  // namespace

double balance_alpha(const std::vector<CandidateResult>& results) {
  check_positive(results);
  auto [lmin, lmax] = std::minmax_element(results.begin(), results.end(),
                                          [](const auto& a, const auto& b) { return a.loss < b.loss; });
  auto [tmin, tmax] = std::minmax_element(results.begin(), results.end(),
                                          [](const auto& a, const auto& b) { return a.t < b.t; });
  if (tmin->t == tmax->t) return 0.0;
  const double alpha = std::log(lmax->loss / lmin->loss) / std::log(tmax->t / tmin->t);
  return std::clamp(alpha, 0.0, 10.0);
}

double score_candidate(double loss, double t, double alpha) {
  if (!(loss > 0.0) || !(t > 0.0)) throw std::invalid_argument("candidate loss and runtime must be positive");
  return loss * std::pow(t, alpha);
}

std::size_t select_candidate(const std::vector<CandidateResult>& results, double alpha) {
  check_positive(results);
  std::vector<double> score;
  for (const auto& r : results) score.push_back(score_candidate(r.loss, r.t, alpha));
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const double tol = 1e-9 * std::max(std::abs(score[i]), std::abs(score[best]));
    if (score[i] < score[best] - tol) {
      best = i;
    } else if (std::abs(score[i] - score[best]) <= tol) {
      const auto& a = results[i];
      const auto& b = results[best];
      if (a.t < b.t || (a.t == b.t && a.params < b.params)) best = i;
    }
  }
  return best;
}

double adaptive_regularization(double progress, double min_value, double max_value) {
  if (min_value > max_value) throw std::invalid_argument("regularization min exceeds max");
  if (progress < 0.0 || progress > 1.0) throw std::invalid_argument("regularization progress outside [0, 1]");
  return min_value + progress * (max_value - min_value);
}

}  // namespace autoprog
