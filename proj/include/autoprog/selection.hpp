#pragma once

#include <cstddef>
#include <vector>

namespace autoprog {

struct CandidateResult {
  double loss = 0.0;
  double t = 0.0;
  std::size_t params = 0;
};

// ln(max L / min L) / ln(max T / min T), clamped to [0, 10]; 0 when every T
// is equal.
double balance_alpha(const std::vector<CandidateResult>& results);

// L * T^alpha.
double score_candidate(double loss, double t, double alpha);

// Smallest score. Scores within 1e-9 relative tie and fall to smaller T,
// then fewer parameters, then candidate order.
std::size_t select_candidate(const std::vector<CandidateResult>& results, double alpha);

// min + r * (max - min).
double adaptive_regularization(double progress, double min_value, double max_value);

}  // namespace autoprog
