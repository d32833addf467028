#include "autoprog/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "autoprog/errors.hpp"

namespace autoprog::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NonFiniteError(std::string("non-finite output in ") + op);
}

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

enum class Broadcast { Same, Suffix, Scalar };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::Same;
  if (shape_numel(b) == 1 && b.size() <= 1) return Broadcast::Scalar;
  if (b.size() < a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    return Broadcast::Suffix;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_to_string(b) + " onto " + shape_to_string(a));
}

std::size_t leading(const Shape& s, std::size_t trailing) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + trailing < s.size(); ++i) n *= s[i];
  return n;
}

// Sums g (shaped like a) down to b's element count under the broadcast rule.
void reduce_into(const Tensor& g, Tensor& gb, Broadcast kind) {
  const std::size_t nb = gb.numel();
  if (kind == Broadcast::Same) {
    for (std::size_t i = 0; i < nb; ++i) gb[i] += g[i];
  } else if (kind == Broadcast::Scalar) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) s += g[i];
    gb[0] += s;
  } else {
    for (std::size_t i = 0; i < g.numel(); ++i) gb[i % nb] += g[i];
  }
}

}  // namespace

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::logic_error("Var is not attached to a tape");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  if (consumed_) throw std::logic_error("tape already consumed");
  check_finite(value, "constant");
  value.set_requires_grad(false);
  nodes_.push_back(Node{std::move(value), Tensor(), false, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (consumed_) throw std::logic_error("tape already consumed");
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  check_finite(value, "parameter");
  nodes_.push_back(Node{value, Tensor(), false, value.requires_grad(), nullptr});
  params_.emplace(name, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (consumed_) throw std::logic_error("tape already consumed");
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::invalid_argument("op input recorded on another tape");
    needs = needs || nodes_[v.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor(), false, needs, needs ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (consumed_) throw std::logic_error("tape already consumed");
  if (loss.tape != this) throw std::invalid_argument("loss recorded on another tape");
  if (nodes_[loss.id].value.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_to_string(nodes_[loss.id].value.shape()));
  }
  consumed_ = true;
  if (nodes_[loss.id].needs_grad) {
    grad(loss.id).fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }
  GradientMap out;
  for (const auto& [name, id] : params_) {
    Node& n = nodes_[id];
    if (!n.needs_grad) continue;
    Tensor g = n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
    check_finite(g, "backward");
    out.emplace(name, std::move(g));
  }
  return out;
}

Var matmul(Var a, Var w) {
  check_same_tape(a, w, "matmul");
  const Shape& as = a.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 2 || as.empty() || as.back() != ws[0]) {
    throw ShapeError("matmul: " + shape_to_string(as) + " x " + shape_to_string(ws));
  }
  const std::size_t K = ws[0], N = ws[1], M = a.value().numel() / K;
  Shape os = as;
  os.back() = N;
  Tensor out(os);
  MapMat(out.data().data(), M, N).noalias() =
      ConstMapMat(a.value().data().data(), M, K) * ConstMapMat(w.value().data().data(), K, N);
  check_finite(out, "matmul");
  const std::size_t ai = a.id, wi = w.id;
  return a.tape->record(std::move(out), {a, w}, [ai, wi, M, K, N](Tape& t, const Tensor& g) {
    ConstMapMat G(g.data().data(), M, N);
    if (t.needs_grad(ai)) {
      MapMat(t.grad(ai).data().data(), M, K).noalias() += G * ConstMapMat(t.value(wi).data().data(), K, N).transpose();
    }
    if (t.needs_grad(wi)) {
      MapMat(t.grad(wi).data().data(), K, N).noalias() += ConstMapMat(t.value(ai).data().data(), M, K).transpose() * G;
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  check_same_tape(a, b, "bmm");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 3 || bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
    throw ShapeError("bmm: " + shape_to_string(as) + " x " + shape_to_string(bs));
  }
  const std::size_t r = as.size();
  const std::size_t M = as[r - 2], K = as[r - 1];
  const std::size_t N = transpose_b ? bs[r - 2] : bs[r - 1];
  const std::size_t Kb = transpose_b ? bs[r - 1] : bs[r - 2];
  if (Kb != K) throw ShapeError("bmm: inner dims " + shape_to_string(as) + " x " + shape_to_string(bs));
  const std::size_t G = leading(as, 2);
  Shape os = as;
  os[r - 1] = N;
  Tensor out(os);
  const double* ap = a.value().data().data();
  const double* bp = b.value().data().data();
  for (std::size_t g = 0; g < G; ++g) {
    ConstMapMat A(ap + g * M * K, M, K);
    MapMat O(out.data().data() + g * M * N, M, N);
    if (transpose_b) {
      O.noalias() = A * ConstMapMat(bp + g * N * K, N, K).transpose();
    } else {
      O.noalias() = A * ConstMapMat(bp + g * K * N, K, N);
    }
  }
  check_finite(out, "bmm");
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape& t, const Tensor& gout) {
    const double* avals = t.value(ai).data().data();
    const double* bvals = t.value(bi).data().data();
    const bool need_a = t.needs_grad(ai), need_b = t.needs_grad(bi);
    double* ga = need_a ? t.grad(ai).data().data() : nullptr;
    double* gb = need_b ? t.grad(bi).data().data() : nullptr;
    for (std::size_t g = 0; g < G; ++g) {
      ConstMapMat Gm(gout.data().data() + g * M * N, M, N);
      ConstMapMat A(avals + g * M * K, M, K);
      if (transpose_b) {
        ConstMapMat B(bvals + g * N * K, N, K);
        if (need_a) MapMat(ga + g * M * K, M, K).noalias() += Gm * B;
        if (need_b) MapMat(gb + g * N * K, N, K).noalias() += Gm.transpose() * A;
      } else {
        ConstMapMat B(bvals + g * K * N, K, N);
        if (need_a) MapMat(ga + g * M * K, M, K).noalias() += Gm * B.transpose();
        if (need_b) MapMat(gb + g * K * N, K, N).noalias() += A.transpose() * Gm;
      }
    }
  });
}

namespace {

template <typename Fwd>
Var binary(Var a, Var b, const char* op, Fwd f, int kind_of_op) {
  check_same_tape(a, b, op);
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.numel(), nb = bv.numel();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[kind == Broadcast::Same ? i : i % nb]);
  check_finite(out, op);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    // kind_of_op: 0 add, 1 sub, 2 mul
    if (kind_of_op == 2) {
      const Tensor& x = t.value(ai);
      const Tensor& y = t.value(bi);
      if (t.needs_grad(ai)) {
        Tensor& ga = t.grad(ai);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[kind == Broadcast::Same ? i : i % nb];
      }
      if (t.needs_grad(bi)) {
        Tensor prod(x.shape());
        for (std::size_t i = 0; i < n; ++i) prod[i] = g[i] * x[i];
        reduce_into(prod, t.grad(bi), kind);
      }
      return;
    }
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bi)) {
      if (kind_of_op == 1) {
        Tensor neg(g.shape());
        for (std::size_t i = 0; i < n; ++i) neg[i] = -g[i];
        reduce_into(neg, t.grad(bi), kind);
      } else {
        reduce_into(g, t.grad(bi), kind);
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, "add", [](double x, double y) { return x + y; }, 0); }
Var sub(Var a, Var b) { return binary(a, b, "sub", [](double x, double y) { return x - y; }, 1); }
Var mul(Var a, Var b) { return binary(a, b, "mul", [](double x, double y) { return x * y; }, 2); }

Var scale(Var a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * s;
  check_finite(out, "scale");
  const std::size_t ai = a.id;
  return a.tape->record(std::move(out), {a}, [ai, s](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  });
}

Var layer_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layer_norm needs rank >= 1");
  const std::size_t D = xv.shape().back(), R = xv.numel() / D;
  Tensor out(xv.shape());
  std::vector<double> inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = xv.data().data() + r * D;
    double mu = 0.0;
    for (std::size_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < D; ++j) out[r * D + j] = (row[j] - mu) * is;
  }
  check_finite(out, "layer_norm");
  const std::size_t xi = x.id;
  const std::size_t yi = x.tape->size();
  return x.tape->record(std::move(out), {x}, [xi, yi, D, R, inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(yi);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < R; ++r) {
      const double* gr = g.data().data() + r * D;
      const double* yr = yv.data().data() + r * D;
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        mg += gr[j];
        mgy += gr[j] * yr[j];
      }
      mg /= static_cast<double>(D);
      mgy /= static_cast<double>(D);
      for (std::size_t j = 0; j < D; ++j) gx[r * D + j] += inv_std[r] * (gr[j] - mg - yr[j] * mgy);
    }
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("softmax needs rank >= 1");
  const std::size_t D = xv.shape().back(), R = xv.numel() / D;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = xv.data().data() + r * D;
    double mx = row[0];
    for (std::size_t j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      out[r * D + j] = std::exp(row[j] - mx);
      s += out[r * D + j];
    }
    for (std::size_t j = 0; j < D; ++j) out[r * D + j] /= s;
  }
  check_finite(out, "softmax");
  const std::size_t xi = x.id;
  const std::size_t yi = x.tape->size();
  return x.tape->record(std::move(out), {x}, [xi, yi, D, R](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(yi);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < D; ++j) dot += g[r * D + j] * yv[r * D + j];
      for (std::size_t j = 0; j < D; ++j) gx[r * D + j] += yv[r * D + j] * (g[r * D + j] - dot);
    }
  });
}

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  check_finite(out, "gelu");
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double v = xv[i];
      const double d = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * c * std::exp(-0.5 * v * v);
      gx[i] += g[i] * d;
    }
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw ShapeError("reshape " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), x.value().storage());
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

namespace {

// Maps each output flat index to its input flat index under perm.
std::vector<std::size_t> permute_index(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape os(r);
  std::vector<std::size_t> st(r);
  for (std::size_t i = 0; i < r; ++i) {
    os[i] = in[perm[i]];
    st[i] = in_stride[perm[i]];
  }
  const std::size_t n = shape_numel(in);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      src += st[k];
      if (idx[k] < os[k]) break;
      src -= st[k] * os[k];
      idx[k] = 0;
    }
  }
  return map;
}

}  // namespace

Var permute(Var x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape os(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) os[i] = in[perm[i]];
  auto map = permute_index(in, perm);
  Tensor out(os);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = xv[map[o]];
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi, map = std::move(map)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += g[o];
  });
}

Var narrow(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = x.shape();
  if (axis >= in.size() || length == 0 || start + length > in[axis]) {
    throw ShapeError("narrow: out of range on " + shape_to_string(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t full = in[axis];
  Shape os = in;
  os[axis] = length;
  Tensor out(os);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data().data() + (o * full + start) * inner, length * inner, out.data().data() + o * length * inner);
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = g.data().data() + o * length * inner;
      double* dst = gx.data().data() + (o * full + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var mean_axis(Var x, std::size_t axis) {
  const Shape& in = x.shape();
  if (axis >= in.size()) throw ShapeError("mean_axis: axis out of range on " + shape_to_string(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t len = in[axis];
  Shape os;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (i != axis) os.push_back(in[i]);
  }
  Tensor out(os);
  const Tensor& xv = x.value();
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      const double* src = xv.data().data() + (o * len + k) * inner;
      double* dst = out.data().data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  check_finite(out, "mean_axis");
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < len; ++k) {
        double* dst = gx.data().data() + (o * len + k) * inner;
        const double* src = g.data().data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
      }
    }
  });
}

Var square(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * xv[i];
  check_finite(out, "square");
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < xv.numel(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(z.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t B = z.dim(0), C = z.dim(1);
  std::vector<double> probs(B * C);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= C) throw ShapeError("cross_entropy: label out of range");
    const double* row = z.data().data() + b * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    loss += lse - row[labels[b]];
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(row[c] - lse);
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(B));
  check_finite(out, "cross_entropy");
  const std::size_t zi = logits.id;
  return logits.tape->record(std::move(out), {logits}, [=, probs = std::move(probs)](Tape& t, const Tensor& g) {
    Tensor& gz = t.grad(zi);
    const double s = g[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        gz[b * C + c] += s * (probs[b * C + c] - (c == labels[b] ? 1.0 : 0.0));
      }
    }
  });
}

Var embedding(Var table, const std::vector<std::size_t>& indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2 || indices.empty()) throw ShapeError("embedding: table must be [V, d] and indices non-empty");
  const std::size_t V = tv.dim(0), D = tv.dim(1);
  Tensor out(Shape{indices.size(), D});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= V) throw ShapeError("embedding: index out of range");
    std::copy_n(tv.data().data() + indices[i] * D, D, out.data().data() + i * D);
  }
  const std::size_t ti = table.id;
  return table.tape->record(std::move(out), {table}, [ti, indices, D](Tape& t, const Tensor& g) {
    Tensor& gt = t.grad(ti);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      for (std::size_t j = 0; j < D; ++j) gt[indices[i] * D + j] += g[i * D + j];
    }
  });
}

Var scale_rows(Var x, const std::vector<double>& s) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.dim(0) != s.size()) throw ShapeError("scale_rows: leading dim mismatch");
  const std::size_t inner = xv.numel() / s.size();
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < s.size(); ++b) {
    for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] = xv[b * inner + i] * s[b];
  }
  check_finite(out, "scale_rows");
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi, s, inner](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(xi);
    for (std::size_t b = 0; b < s.size(); ++b) {
      for (std::size_t i = 0; i < inner; ++i) gx[b * inner + i] += g[b * inner + i] * s[b];
    }
  });
}

Var add_per_sample(Var x, Var c) {
  check_same_tape(x, c, "add_per_sample");
  const Shape& xs = x.shape();
  const Shape& cs = c.shape();
  if (xs.size() != 3 || cs.size() != 2 || xs[0] != cs[0] || xs[2] != cs[1]) {
    throw ShapeError("add_per_sample: " + shape_to_string(xs) + " + " + shape_to_string(cs));
  }
  const std::size_t B = xs[0], N = xs[1], D = xs[2];
  const Tensor& xv = x.value();
  const Tensor& cv = c.value();
  Tensor out(xs);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < D; ++d) out[(b * N + n) * D + d] = xv[(b * N + n) * D + d] + cv[b * D + d];
    }
  }
  check_finite(out, "add_per_sample");
  const std::size_t xi = x.id, ci = c.id;
  return x.tape->record(std::move(out), {x, c}, [=](Tape& t, const Tensor& g) {
    if (t.needs_grad(xi)) {
      Tensor& gx = t.grad(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(ci)) {
      Tensor& gc = t.grad(ci);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t d = 0; d < D; ++d) gc[b * D + d] += g[(b * N + n) * D + d];
        }
      }
    }
  });
}

namespace {

double eval_finite(const std::function<double(const TensorMap&)>& f, const TensorMap& p) {
  const double v = f(p);
  if (!std::isfinite(v)) throw NonFiniteError("finite difference: non-finite function value");
  return v;
}

}  // namespace

GradientMap finite_difference_gradient(const std::function<double(const TensorMap&)>& f, const TensorMap& params,
                                       double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite difference eps must be positive");
  TensorMap work = params;
  GradientMap out;
  for (auto& [name, tensor] : work) {
    Tensor g(tensor.shape(), 0.0);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + eps;
      const double up = eval_finite(f, work);
      tensor[i] = orig - eps;
      const double down = eval_finite(f, work);
      tensor[i] = orig;
      g[i] = (up - down) / (2.0 * eps);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

std::vector<double> finite_difference_at(const std::function<double(const TensorMap&)>& f, const TensorMap& params,
                                         const std::vector<Coordinate>& coords, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite difference eps must be positive");
  TensorMap work = params;
  std::vector<double> out;
  out.reserve(coords.size());
  for (const Coordinate& c : coords) {
    auto it = work.find(c.name);
    if (it == work.end() || c.index >= it->second.numel()) {
      throw std::invalid_argument("finite difference: unknown coordinate " + c.name);
    }
    double& slot = it->second[c.index];
    const double orig = slot;
    slot = orig + eps;
    const double up = eval_finite(f, work);
    slot = orig - eps;
    const double down = eval_finite(f, work);
    slot = orig;
    out.push_back((up - down) / (2.0 * eps));
  }
  return out;
}

std::vector<GradientMap> per_sample_gradients(std::size_t batch,
                                              const std::function<Var(Tape&, std::size_t)>& loss_of) {
  if (batch == 0) throw std::invalid_argument("per_sample_gradients: empty batch");
  std::vector<GradientMap> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Tape tape;
    Var loss = loss_of(tape, b);
    GradientMap g = tape.backward(loss);
    if (g.empty()) throw std::invalid_argument("per_sample_gradients: all parameters are frozen");
    out.push_back(std::move(g));
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace autoprog::ad
