#include "autoprog/proxies.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "autoprog/errors.hpp"
#include "autoprog/vit.hpp"

namespace autoprog {

namespace {

std::vector<std::string> learnable_names(const std::vector<ad::GradientMap>& per_sample, const NamePredicate& learnable) {
  if (per_sample.empty()) throw std::invalid_argument("no per-sample gradients");
  std::vector<std::string> names;
  for (const auto& [name, g] : per_sample.front()) {
    if (learnable(name)) names.push_back(name);
  }
  if (names.empty()) throw std::invalid_argument("learnable mask selects no parameters");
  for (const auto& gm : per_sample) {
    for (const auto& name : names) {
      auto it = gm.find(name);
      if (it == gm.end()) throw std::invalid_argument("per-sample gradients disagree on parameter " + name);
      if (!it->second.all_finite()) throw NonFiniteError("non-finite gradient in " + name);
    }
  }
  return names;
}

}  // namespace

Tensor empirical_ntk(const std::vector<ad::GradientMap>& per_sample, const NamePredicate& learnable) {
  const auto names = learnable_names(per_sample, learnable);
  const std::size_t b = per_sample.size();
  if (b < 2) throw std::invalid_argument("empirical NTK needs at least two samples");
  Tensor gram({b, b});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i; j < b; ++j) {
      double acc = 0.0;
      for (const auto& name : names) {
        const auto gi = per_sample[i].at(name).data();
        const auto gj = per_sample[j].at(name).data();
        for (std::size_t e = 0; e < gi.size(); ++e) acc += gi[e] * gj[e];
      }
      gram[i * b + j] = acc;
      gram[j * b + i] = acc;
    }
  }
  return gram;
}

std::vector<double> symmetric_eigenvalues(const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw ShapeError("eigenvalues need a square matrix, got " + shape_to_string(m.shape()));
  const auto n = static_cast<Eigen::Index>(m.dim(0));
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = m[static_cast<std::size_t>(i * n + j)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver did not converge");
  std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

double condition_number(const Tensor& gram, double eps) {
  const auto ev = symmetric_eigenvalues(gram);
  const double top = ev.front(), bottom = ev.back();
  if (!(top > 0.0)) throw std::invalid_argument("degenerate gram: largest eigenvalue is not positive");
  if (bottom <= 0.0) return 1.0 / eps;
  return top / std::max(bottom, eps * top);
}

double zico(const std::vector<ad::GradientMap>& per_sample, const NamePredicate& learnable) {
  const auto names = learnable_names(per_sample, learnable);
  if (per_sample.size() < 2) throw std::invalid_argument("ZiCo needs at least two gradient samples");
  const double count = static_cast<double>(per_sample.size());
  std::map<std::string, double> layer_sum;
  for (const auto& name : names) {
    const std::size_t size = per_sample.front().at(name).numel();
    double& acc = layer_sum[layer_of(name)];
    for (std::size_t e = 0; e < size; ++e) {
      double s = 0.0, s2 = 0.0;
      for (const auto& gm : per_sample) {
        const double a = std::abs(gm.at(name)[e]);
        s += a;
        s2 += a * a;
      }
      const double mean = s / count;
      const double var = std::max(s2 / count - mean * mean, 0.0);
      acc += mean / std::max(std::sqrt(var), 1e-8);
    }
  }
  double h = 0.0;
  for (const auto& [layer, v] : layer_sum) h -= std::log(std::max(v, 1e-8));
  return h;
}

std::vector<double> ascending_ranks(const std::vector<double>& values) {
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::size_t smaller = 0;
    for (double v : values) smaller += v < values[i] ? 1 : 0;
    ranks[i] = 1.0 + static_cast<double>(smaller);
  }
  return ranks;
}

std::vector<double> rank_scores(const std::vector<ProxyScores>& c) {
  std::vector<double> kappa, z, t;
  for (const auto& s : c) {
    kappa.push_back(s.h_kappa);
    z.push_back(s.h_zico);
    t.push_back(s.t);
  }
  const auto rk = ascending_ranks(kappa), rz = ascending_ranks(z), rt = ascending_ranks(t);
  std::vector<double> r(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) r[i] = 0.5 * rk[i] + 0.5 * rz[i] + rt[i];
  return r;
}

std::size_t ranked_vote(const std::vector<ProxyScores>& c) {
  if (c.empty()) throw std::invalid_argument("ranked vote needs at least one candidate");
  const auto r = rank_scores(c);
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (r[i] < r[best] || (r[i] == r[best] && c[i].t < c[best].t)) best = i;
  }
  return best;
}

}  // namespace autoprog
