#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "autoprog/autodiff.hpp"
#include "autoprog/tensor.hpp"

namespace autoprog {

using NamePredicate = std::function<bool(const std::string&)>;

// B x B Gram of per-sample gradient vectors restricted to `learnable`.
Tensor empirical_ntk(const std::vector<ad::GradientMap>& per_sample, const NamePredicate& learnable);

// Eigenvalues of a symmetric matrix, descending.
std::vector<double> symmetric_eigenvalues(const Tensor& matrix);

// lambda_max / max(lambda_min, eps * lambda_max); 1/eps when lambda_min <= 0.
double condition_number(const Tensor& gram, double eps = 1e-9);

// -sum over layers of log(sum over the layer's entries of E|g| / sigma|g|).
double zico(const std::vector<ad::GradientMap>& per_sample, const NamePredicate& learnable);

// Competition ranks from 1: equal values share the smaller rank.
std::vector<double> ascending_ranks(const std::vector<double>& values);

struct ProxyScores {
  double h_kappa = 0.0;
  double h_zico = 0.0;
  double t = 0.0;
};

// R = R(kappa)/2 + R(zico)/2 + R(T) per candidate.
std::vector<double> rank_scores(const std::vector<ProxyScores>& candidates);
// Smallest R; ties go to smaller T, then earlier candidate.
std::size_t ranked_vote(const std::vector<ProxyScores>& candidates);

}  // namespace autoprog
