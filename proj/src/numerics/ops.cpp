#include "emoalign/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "emoalign/errors.hpp"

namespace emoalign::numerics::ops {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const MatR>;
using Map = Eigen::Map<MatR>;
using NodePtr = std::shared_ptr<detail::Node>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::size_t rows_of(const Tensor& t) {
  require(t.rank() == 2, "expected a matrix, got " + shape_str(t.shape()));
  return t.dim(0);
}

std::size_t cols_of(const Tensor& t) {
  require(t.rank() == 2, "expected a matrix, got " + shape_str(t.shape()));
  return t.dim(1);
}

bool wants_grad(const std::vector<Tensor>& inputs) {
  if (!grad_recording_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

/// Wraps a forward result into a node, recording `backward` when needed.
Tensor make(Shape shape, std::vector<Real> value, const std::vector<Tensor>& inputs,
            std::function<void(detail::Node&)> backward) {
  check_finite(value, "forward");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (wants_grad(inputs)) {
    node->requires_grad = true;
    for (const auto& t : inputs) {
      if (t.defined()) node->inputs.push_back(t.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

detail::Node* input(detail::Node& self, std::size_t i) { return self.inputs[i].get(); }

bool needs(const detail::Node* n) { return n->requires_grad; }

MapC cmap(const Tensor& t) { return MapC(t.data().data(), rows_of(t), cols_of(t)); }

MapC cmap(const std::vector<Real>& v, std::size_t r, std::size_t c) { return MapC(v.data(), r, c); }

Map gmap(detail::Node* n, std::size_t r, std::size_t c) { return Map(n->grad_buffer().data(), r, c); }

Real gelu_value(Real x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Real gelu_grad(Real x) {
  const Real cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const Real pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = rows_of(a), k = cols_of(a), n = cols_of(b);
  require(rows_of(b) == k, "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<Real> out(m * n);
  Map(out.data(), m, n).noalias() = cmap(a) * cmap(b);
  return make({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto* na = input(self, 0);
    auto* nb = input(self, 1);
    MapC g = cmap(self.grad, m, n);
    if (needs(na)) gmap(na, m, k).noalias() += g * cmap(nb->value, k, n).transpose();
    if (needs(nb)) gmap(nb, k, n).noalias() += cmap(na->value, m, k).transpose() * g;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t m = rows_of(x), k = cols_of(x), n = cols_of(w);
  require(rows_of(w) == k, "linear: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == n, "linear: bias " + shape_str(bias.shape()) + " for width " + std::to_string(n));
  std::vector<Real> out(m * n);
  Map o(out.data(), m, n);
  o.noalias() = cmap(x) * cmap(w);
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> b(bias.data().data(), n);
    o.rowwise() += b;
  }
  return make({m, n}, std::move(out), {x, w, bias}, [m, k, n, has_bias](detail::Node& self) {
    auto* nx = input(self, 0);
    auto* nw = input(self, 1);
    MapC g = cmap(self.grad, m, n);
    if (needs(nx)) gmap(nx, m, k).noalias() += g * cmap(nw->value, k, n).transpose();
    if (needs(nw)) gmap(nw, k, n).noalias() += cmap(nx->value, m, k).transpose() * g;
    if (has_bias) {
      auto* nb = input(self, 2);
      if (needs(nb)) gmap(nb, 1, n) += g.colwise().sum();
    }
  });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op) {
  require(a.shape() == b.shape(), "elementwise op: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto av = a.data(), bv = b.data();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Binary::kAdd: out[i] = av[i] + bv[i]; break;
      case Binary::kSub: out[i] = av[i] - bv[i]; break;
      case Binary::kMul: out[i] = av[i] * bv[i]; break;
    }
  }
  return make(a.shape(), std::move(out), {a, b}, [op](detail::Node& self) {
    auto* na = input(self, 0);
    auto* nb = input(self, 1);
    const auto& g = self.grad;
    if (needs(na)) {
      auto& ga = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += op == Binary::kMul ? g[i] * nb->value[i] : g[i];
    }
    if (needs(nb)) {
      auto& gb = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] += op == Binary::kAdd ? g[i] : op == Binary::kSub ? -g[i] : g[i] * na->value[i];
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul); }

Tensor scale(const Tensor& a, Real c) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= c;
  return make(a.shape(), std::move(out), {a}, [c](detail::Node& self) {
    auto* na = input(self, 0);
    auto& ga = na->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, Real c) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += c;
  return make(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& gx = input(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  const std::size_t m = rows_of(a), n = cols_of(a);
  require(b.numel() == n, "add_row: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  std::vector<Real> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make({m, n}, std::move(out), {a, b}, [m, n](detail::Node& self) {
    auto* na = input(self, 0);
    auto* nb = input(self, 1);
    if (needs(na)) {
      auto& ga = na->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (needs(nb)) gmap(nb, 1, n) += cmap(self.grad, m, n).colwise().sum();
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<Real> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(xv[i]);
  return make(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto* nx = input(self, 0);
    auto& gx = nx->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * gelu_grad(nx->value[i]);
  });
}

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto* nx = input(self, 0);
    auto& gx = nx->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (nx->value[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const std::size_t m = rows_of(x), n = cols_of(x);
  require(gamma.numel() == n && beta.numel() == n, "layer_norm: affine parameters do not match width");
  std::vector<Real> out(m * n), xhat(m * n), rstd(m);
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    Real mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<Real>(n);
    Real var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Real>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make({m, n}, std::move(out), {x, gamma, beta},
              [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
                auto* nx = input(self, 0);
                auto* ng = input(self, 1);
                auto* nb = input(self, 2);
                const auto& g = self.grad;
                if (needs(ng) || needs(nb)) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      if (needs(ng)) ng->grad_buffer()[j] += g[i * n + j] * xhat[i * n + j];
                      if (needs(nb)) nb->grad_buffer()[j] += g[i * n + j];
                    }
                }
                if (needs(nx)) {
                  auto& gx = nx->grad_buffer();
                  const auto& gam = ng->value;
                  for (std::size_t i = 0; i < m; ++i) {
                    Real mean_dy = 0.0, mean_dy_xhat = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const Real dy = g[i * n + j] * gam[j];
                      mean_dy += dy;
                      mean_dy_xhat += dy * xhat[i * n + j];
                    }
                    mean_dy /= static_cast<Real>(n);
                    mean_dy_xhat /= static_cast<Real>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                      const Real dy = g[i * n + j] * gam[j];
                      gx[i * n + j] += rstd[i] * (dy - mean_dy - xhat[i * n + j] * mean_dy_xhat);
                    }
                  }
                }
              });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal) {
  const std::size_t n = rows_of(q), d = cols_of(q);
  require(k.shape() == q.shape() && v.shape() == q.shape(), "attention: q, k, v shapes differ");
  require(heads >= 1 && d % heads == 0, "attention: width " + std::to_string(d) + " not divisible by heads");
  const std::size_t dh = d / heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
  MapC Q = cmap(q), K = cmap(k), V = cmap(v);
  std::vector<Real> out(n * d);
  Map O(out.data(), n, d);
  std::vector<MatR> probs(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h * dh);
    MatR s = (Q.middleCols(off, dh) * K.middleCols(off, dh).transpose()) * inv_sqrt;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = causal ? i + 1 : n;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, s(i, j));
      Real z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s(i, j) = j < visible ? std::exp(s(i, j) - mx) : 0.0;
        z += s(i, j);
      }
      s.row(i) /= z;
    }
    O.middleCols(off, dh).noalias() = s * V.middleCols(off, dh);
    probs[h] = std::move(s);
  }
  return make({n, d}, std::move(out), {q, k, v},
              [n, d, dh, heads, inv_sqrt, probs = std::move(probs)](detail::Node& self) {
                auto* nq = input(self, 0);
                auto* nk = input(self, 1);
                auto* nv = input(self, 2);
                MapC G = cmap(self.grad, n, d);
                MapC Qv = cmap(nq->value, n, d), Kv = cmap(nk->value, n, d), Vv = cmap(nv->value, n, d);
                for (std::size_t h = 0; h < heads; ++h) {
                  const auto off = static_cast<Eigen::Index>(h * dh);
                  const MatR& p = probs[h];
                  auto gh = G.middleCols(off, dh);
                  if (needs(nv)) gmap(nv, n, d).middleCols(off, dh).noalias() += p.transpose() * gh;
                  if (!needs(nq) && !needs(nk)) continue;
                  MatR dp = gh * Vv.middleCols(off, dh).transpose();
                  MatR ds(n, n);
                  for (std::size_t i = 0; i < n; ++i) {
                    const Real dot = p.row(i).dot(dp.row(i));
                    for (std::size_t j = 0; j < n; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt;
                  }
                  if (needs(nq)) gmap(nq, n, d).middleCols(off, dh).noalias() += ds * Kv.middleCols(off, dh);
                  if (needs(nk)) gmap(nk, n, d).middleCols(off, dh).noalias() += ds.transpose() * Qv.middleCols(off, dh);
                }
              });
}

Tensor log_softmax(const Tensor& logits) {
  const std::size_t m = rows_of(logits), n = cols_of(logits);
  require(n >= 1, "log_softmax: empty rows");
  std::vector<Real> out(m * n);
  const auto lv = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = lv.data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const Real lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lz;
  }
  return make({m, n}, std::move(out), {logits}, [m, n](detail::Node& self) {
    auto& gx = input(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      Real gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gs;
    }
  });
}

Tensor softmax(const Tensor& logits) {
  const std::size_t m = rows_of(logits), n = cols_of(logits);
  require(n >= 1, "softmax: empty rows");
  std::vector<Real> out(m * n);
  const auto lv = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = lv.data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += out[i * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make({m, n}, std::move(out), {logits}, [m, n](detail::Node& self) {
    auto& gx = input(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      Real dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  const std::size_t vocab = rows_of(table), d = cols_of(table);
  std::vector<Real> out(ids.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  return make({ids.size(), d}, std::move(out), {table}, [ids, d](detail::Node& self) {
    auto& gt = input(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(ids[i]) * d + j] += self.grad[i * d + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t d = cols_of(parts.front());
  std::size_t total = 0;
  std::vector<std::size_t> counts;
  for (const auto& p : parts) {
    require(cols_of(p) == d, "concat_rows: width mismatch");
    counts.push_back(rows_of(p));
    total += counts.back();
  }
  std::vector<Real> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  // Inputs are recorded in order, so node->inputs[i] matches parts[i] only
  // when all parts are defined; concat never sees undefined tensors.
  return make({total, d}, std::move(out), parts, [counts, d](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < counts.size(); ++p) {
      auto* np = input(self, p);
      const std::size_t len = counts[p] * d;
      if (needs(np)) {
        auto& gp = np->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) gp[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = rows_of(x), d = cols_of(x);
  require(begin <= end && end <= m, "slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                                        ") outside " + std::to_string(m) + " rows");
  std::vector<Real> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                        x.data().begin() + static_cast<std::ptrdiff_t>(end * d));
  return make({end - begin, d}, std::move(out), {x}, [begin, d](detail::Node& self) {
    auto& gx = input(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[begin * d + i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  const std::size_t m = rows_of(x), n = cols_of(x);
  std::vector<Real> out(m * n);
  Map(out.data(), n, m) = cmap(x).transpose();
  return make({n, m}, std::move(out), {x}, [m, n](detail::Node& self) {
    gmap(input(self, 0), m, n) += cmap(self.grad, n, m).transpose();
  });
}

std::size_t conv1d_out_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw DimensionError("conv1d: stride must be at least 1");
  if (kernel == 0 || kernel > length + 2 * padding) {
    throw DimensionError("conv1d: kernel " + std::to_string(kernel) + " exceeds padded length " +
                         std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& input_t, const Tensor& weight, const Tensor& bias, std::size_t stride,
               std::size_t padding) {
  require(input_t.rank() == 2, "conv1d: input must be [C_in, L], got " + shape_str(input_t.shape()));
  require(weight.rank() == 3, "conv1d: weight must be [C_out, C_in, K], got " + shape_str(weight.shape()));
  const std::size_t cin = input_t.dim(0), len = input_t.dim(1);
  const std::size_t cout = weight.dim(0), kernel = weight.dim(2);
  require(weight.dim(1) == cin, "conv1d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                                    std::to_string(cin));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == cout, "conv1d: bias does not match output channels");
  const std::size_t lout = conv1d_out_length(len, kernel, stride, padding);
  const std::size_t ck = cin * kernel;

  // im2col: cols[c*K + t, o] = input[c, o*stride + t - padding].
  MatR cols = MatR::Zero(static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(lout));
  const auto iv = input_t.data();
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t t = 0; t < kernel; ++t)
      for (std::size_t o = 0; o < lout; ++o) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + t) - static_cast<std::ptrdiff_t>(padding);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) cols(c * kernel + t, o) = iv[c * len + pos];
      }
  std::vector<Real> out(cout * lout);
  Map o(out.data(), cout, lout);
  o.noalias() = MapC(weight.data().data(), cout, ck) * cols;
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> b(bias.data().data(), cout);
    o.colwise() += b;
  }
  return make({cout, lout}, std::move(out), {input_t, weight, bias},
              [cin, len, cout, kernel, lout, ck, stride, padding, has_bias, cols = std::move(cols)](detail::Node& self) {
                auto* ni = input(self, 0);
                auto* nw = input(self, 1);
                MapC g = cmap(self.grad, cout, lout);
                if (needs(nw)) gmap(nw, cout, ck).noalias() += g * cols.transpose();
                if (has_bias) {
                  auto* nb = input(self, 2);
                  if (needs(nb)) gmap(nb, cout, 1) += g.rowwise().sum();
                }
                if (needs(ni)) {
                  MatR dcols = cmap(nw->value, cout, ck).transpose() * g;
                  auto& gi = ni->grad_buffer();
                  for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t t = 0; t < kernel; ++t)
                      for (std::size_t o = 0; o < lout; ++o) {
                        const std::ptrdiff_t pos =
                            static_cast<std::ptrdiff_t>(o * stride + t) - static_cast<std::ptrdiff_t>(padding);
                        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) gi[c * len + pos] += dcols(c * kernel + t, o);
                      }
                }
              });
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t m = rows_of(x), n = cols_of(x);
  require(m >= 1, "mean_rows: no rows");
  std::vector<Real> out(n, 0.0);
  Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(out.data(), n) = cmap(x).colwise().sum() / static_cast<Real>(m);
  return make({1, n}, std::move(out), {x}, [m, n](detail::Node& self) {
    auto& gx = input(self, 0)->grad_buffer();
    const Real inv = 1.0 / static_cast<Real>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.grad[j] * inv;
  });
}

Tensor masked_add(const Tensor& base, const Tensor& delta, const std::vector<bool>& select) {
  const std::size_t m = rows_of(base), n = cols_of(base);
  require(delta.shape() == base.shape(), "masked_add: delta " + shape_str(delta.shape()) + " vs base " +
                                             shape_str(base.shape()));
  require(select.size() == m, "masked_add: mask length " + std::to_string(select.size()) + " for " +
                                  std::to_string(m) + " rows");
  std::vector<Real> out(base.data().begin(), base.data().end());
  const auto dv = delta.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (!select[i]) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += dv[i * n + j];
  }
  return make({m, n}, std::move(out), {base, delta}, [m, n, select](detail::Node& self) {
    auto* nb = input(self, 0);
    auto* nd = input(self, 1);
    if (needs(nb)) {
      auto& gb = nb->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i];
    }
    if (needs(nd)) {
      auto& gd = nd->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        if (!select[i]) continue;
        for (std::size_t j = 0; j < n; ++j) gd[i * n + j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor soft_cross_entropy(const Tensor& teacher_probs, const Tensor& student_log_probs) {
  const std::size_t m = rows_of(student_log_probs), n = cols_of(student_log_probs);
  require(teacher_probs.shape() == student_log_probs.shape(), "soft_cross_entropy: teacher " +
                                                                  shape_str(teacher_probs.shape()) + " vs student " +
                                                                  shape_str(student_log_probs.shape()));
  require(m >= 1, "soft_cross_entropy: no positions");
  const auto p = teacher_probs.data(), lq = student_log_probs.data();
  Real total = 0.0;
  for (std::size_t i = 0; i < m * n; ++i) {
    if (p[i] != 0.0) total -= p[i] * lq[i];
  }
  std::vector<Real> probs(p.begin(), p.end());
  return make({1}, {total / static_cast<Real>(m)}, {student_log_probs},
              [m, probs = std::move(probs)](detail::Node& self) {
                auto& g = input(self, 0)->grad_buffer();
                const Real scale_g = self.grad[0] / static_cast<Real>(m);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= scale_g * probs[i];
              });
}

Real mean_entropy(const Tensor& probs) {
  const std::size_t m = rows_of(probs);
  require(m >= 1, "mean_entropy: no positions");
  Real h = 0.0;
  for (Real p : probs.data()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / static_cast<Real>(m);
}

Tensor kl_divergence(const Tensor& teacher_probs, const Tensor& student_log_probs) {
  return add_scalar(soft_cross_entropy(teacher_probs, student_log_probs), -mean_entropy(teacher_probs));
}

Tensor nll(const Tensor& log_probs, const std::vector<int>& targets) {
  const std::size_t m = rows_of(log_probs), n = cols_of(log_probs);
  require(targets.size() == m, "nll: " + std::to_string(targets.size()) + " targets for " + std::to_string(m) + " rows");
  require(m >= 1, "nll: no positions");
  const auto lv = log_probs.data();
  Real total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw DimensionError("nll: target " + std::to_string(targets[i]) + " outside vocabulary");
    }
    total -= lv[i * n + static_cast<std::size_t>(targets[i])];
  }
  return make({1}, {total / static_cast<Real>(m)}, {log_probs}, [m, n, targets](detail::Node& self) {
    auto& g = input(self, 0)->grad_buffer();
    const Real scale_g = self.grad[0] / static_cast<Real>(m);
    for (std::size_t i = 0; i < m; ++i) g[i * n + static_cast<std::size_t>(targets[i])] -= scale_g;
  });
}

Tensor sum(const Tensor& x) {
  Real total = 0.0;
  for (Real v : x.data()) total += v;
  return make({1}, {total}, {x}, [](detail::Node& self) {
    auto& g = input(self, 0)->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<Real>& weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum: terms and weights differ in count");
  Real total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].numel() == 1, "weighted_sum: term " + std::to_string(i) + " is not a scalar");
    total += weights[i] * terms[i].item();
  }
  return make({1}, {total}, terms, [weights](detail::Node& self) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      auto* n = input(self, i);
      if (needs(n)) n->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace emoalign::numerics::ops
