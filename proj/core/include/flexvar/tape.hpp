#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flexvar/errors.hpp"
#include "flexvar/kernels.hpp"
#include "flexvar/tensor.hpp"

namespace flexvar {

// Per-row attention visibility: row t may attend to columns [0, limit[t]).
// Block-causal masks are always expressible this way because tokens are laid
// out scale-major; see model.hpp.
struct PrefixMask {
  std::vector<std::size_t> limit;
};

// Reverse-mode tape. Nodes are appended in creation order, which is a
// topological order by construction; backward() replays them once in reverse.
// Instantiated with float for training/inference and double for gradient
// checks.
template <typename T>
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {}, nullptr);
  }

  const Tensor<T>& value(Id id) const { return nodes_[check(id)].value; }
  Tensor<T>& mutable_value(Id id) { return nodes_[check(id)].value; }
  const Tensor<T>& grad(Id id) const { return nodes_[check(id)].grad; }
  bool requires_grad(Id id) const { return nodes_[check(id)].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  void require_same_shape(Id a, Id b, const char* op) const {
    if (value(a).shape != value(b).shape)
      throw std::invalid_argument(std::string(op) + ": operand shapes differ");
  }

  // ---- elementwise ----

  Id add(Id a, Id b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += value(b)[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [](Tape& t, Id self) {
      t.accumulate(t.parent(self, 0), t.nodes_[self].grad.data);
      t.accumulate(t.parent(self, 1), t.nodes_[self].grad.data);
    });
  }

  Id sub(Id a, Id b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= value(b)[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad.data;
      t.accumulate(t.parent(self, 0), g);
      t.accumulate_scaled(t.parent(self, 1), g, T(-1));
    });
  }

  Id mul(Id a, Id b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad.data;
      Id a = t.parent(self, 0), b = t.parent(self, 1);
      if (t.wants(a)) {
        auto& ga = t.grad_buf(a);
        const auto& vb = t.value(b).data;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (t.wants(b)) {
        auto& gb = t.grad_buf(b);
        const auto& va = t.value(a).data;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }

  Id scale(Id a, T s) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v *= s;
    return push(std::move(out), any_grad({a}), {a}, [s](Tape& t, Id self) {
      t.accumulate_scaled(t.parent(self, 0), t.nodes_[self].grad.data, s);
    });
  }

  Id gelu(Id a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data) v = kernels::gelu(v);
    return push(std::move(out), any_grad({a}), {a}, [](Tape& t, Id self) {
      Id a = t.parent(self, 0);
      if (!t.wants(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& va = t.value(a).data;
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * kernels::gelu_grad(va[i]);
    });
  }

  Id stopgrad(Id a) { return push(Tensor<T>(value(a)), false, {}, nullptr); }

  // ---- shape ----

  Id reshape(Id a, std::vector<std::size_t> shape) {
    if (Tensor<T>::count(shape) != value(a).size())
      throw std::invalid_argument("reshape: element count mismatch");
    Tensor<T> out(std::move(shape), value(a).data);
    return push(std::move(out), any_grad({a}), {a}, [](Tape& t, Id self) {
      t.accumulate(t.parent(self, 0), t.nodes_[self].grad.data);
    });
  }

  // C×h×w -> (h·w)×C, positions row-major.
  Id chw_to_nc(Id a) {
    const auto& v = value(a);
    if (v.rank() != 3) throw std::invalid_argument("chw_to_nc: expected rank 3");
    const std::size_t C = v.dim(0), n = v.dim(1) * v.dim(2);
    Tensor<T> out({n, C});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < n; ++p) out.data[p * C + c] = v.data[c * n + p];
    return push(std::move(out), any_grad({a}), {a}, [C, n](Tape& t, Id self) {
      Id a = t.parent(self, 0);
      if (!t.wants(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < n; ++p) ga[c * n + p] += g[p * C + c];
    });
  }

  Id nc_to_chw(Id a, std::size_t h, std::size_t w) {
    const auto& v = value(a);
    if (v.rank() != 2 || v.dim(0) != h * w) throw std::invalid_argument("nc_to_chw: bad shape");
    const std::size_t C = v.dim(1), n = h * w;
    Tensor<T> out({C, h, w});
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t c = 0; c < C; ++c) out.data[c * n + p] = v.data[p * C + c];
    return push(std::move(out), any_grad({a}), {a}, [C, n](Tape& t, Id self) {
      Id a = t.parent(self, 0);
      if (!t.wants(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t c = 0; c < C; ++c) ga[p * C + c] += g[c * n + p];
    });
  }

  Id slice_cols(Id a, std::size_t c0, std::size_t c1) {
    const auto& v = value(a);
    if (v.rank() != 2 || c1 > v.dim(1) || c0 >= c1)
      throw std::invalid_argument("slice_cols: bad range");
    const std::size_t n = v.dim(0), m = v.dim(1), mm = c1 - c0;
    Tensor<T> out({n, mm});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < mm; ++j) out.data[i * mm + j] = v.data[i * m + c0 + j];
    return push(std::move(out), any_grad({a}), {a}, [n, m, mm, c0](Tape& t, Id self) {
      Id a = t.parent(self, 0);
      if (!t.wants(a)) return;
      auto& ga = t.grad_buf(a);
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < mm; ++j) ga[i * m + c0 + j] += g[i * mm + j];
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const std::size_t n = value(parts[0]).dim(0);
    std::size_t m = 0;
    std::vector<std::size_t> widths;
    for (Id p : parts) {
      if (value(p).rank() != 2 || value(p).dim(0) != n)
        throw std::invalid_argument("concat_cols: row mismatch");
      widths.push_back(value(p).dim(1));
      m += widths.back();
    }
    Tensor<T> out({n, m});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& v = value(parts[k]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < widths[k]; ++j)
          out.data[i * m + off + j] = v.data[i * widths[k] + j];
      off += widths[k];
    }
    return push(std::move(out), any_grad(parts), parts, [n, m, widths](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad.data;
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        Id p = t.parent(self, k);
        if (t.wants(p)) {
          auto& gp = t.grad_buf(p);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              gp[i * widths[k] + j] += g[i * m + off + j];
        }
        off += widths[k];
      }
    });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const std::size_t m = value(parts[0]).dim(1);
    std::size_t n = 0;
    std::vector<std::size_t> rows;
    for (Id p : parts) {
      if (value(p).rank() != 2 || value(p).dim(1) != m)
        throw std::invalid_argument("concat_rows: col mismatch");
      rows.push_back(value(p).dim(0));
      n += rows.back();
    }
    Tensor<T> out({n, m});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& v = value(parts[k]);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + off * m);
      off += rows[k];
    }
    return push(std::move(out), any_grad(parts), parts, [m, rows](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad.data;
      std::size_t off = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        Id p = t.parent(self, k);
        if (t.wants(p)) {
          auto& gp = t.grad_buf(p);
          for (std::size_t i = 0; i < rows[k] * m; ++i) gp[i] += g[off * m + i];
        }
        off += rows[k];
      }
    });
  }

  // ---- linear algebra ----

  Id matmul(Id a, Id b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
      throw std::invalid_argument("matmul: shape mismatch");
    const std::size_t n = va.dim(0), k = va.dim(1), m = vb.dim(1);
    Tensor<T> out({n, m});
    kernels::matmul(va.data.data(), vb.data.data(), out.data.data(), n, k, m);
    return push(std::move(out), any_grad({a, b}), {a, b}, [n, k, m](Tape& t, Id self) {
      Id a = t.parent(self, 0), b = t.parent(self, 1);
      const auto& g = t.nodes_[self].grad.data;
      if (t.wants(a)) {
        // dA += dC * B^T
        auto& ga = t.grad_buf(a);
        const auto& vb = t.value(b).data;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p)
            ga[i * k + p] += kernels::dot(&g[i * m], &vb[p * m], m);
      }
      if (t.wants(b)) {
        // dB += A^T * dC
        auto& gb = t.grad_buf(b);
        const auto& va = t.value(a).data;
        for (std::size_t i = 0; i < n; ++i) {
          const T* arow = &va[i * k];
          const T* grow = &g[i * m];
          for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += av * grow[j];
          }
        }
      }
    });
  }

  // a[n,k] * b^T with b stored (m,k); used for attention scores.
  Id matmul_nt(Id a, Id b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
      throw std::invalid_argument("matmul_nt: shape mismatch");
    const std::size_t n = va.dim(0), k = va.dim(1), m = vb.dim(0);
    Tensor<T> out({n, m});
    kernels::matmul_bt(va.data.data(), vb.data.data(), out.data.data(), n, k, m);
    return push(std::move(out), any_grad({a, b}), {a, b}, [n, k, m](Tape& t, Id self) {
      Id a = t.parent(self, 0), b = t.parent(self, 1);
      const auto& g = t.nodes_[self].grad.data;
      if (t.wants(a)) {
        auto& ga = t.grad_buf(a);
        const auto& vb = t.value(b).data;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const T gv = g[i * m + j];
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gv * vb[j * k + p];
          }
      }
      if (t.wants(b)) {
        auto& gb = t.grad_buf(b);
        const auto& va = t.value(a).data;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const T gv = g[i * m + j];
            for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gv * va[i * k + p];
          }
      }
    });
  }

  Id add_bias(Id x, Id bias) {
    const auto& vx = value(x);
    const auto& vb = value(bias);
    if (vx.rank() != 2 || vb.rank() != 1 || vb.dim(0) != vx.dim(1))
      throw std::invalid_argument("add_bias: shape mismatch");
    const std::size_t n = vx.dim(0), m = vx.dim(1);
    Tensor<T> out = vx;
    kernels::add_row_bias(out.data.data(), vb.data.data(), n, m);
    return push(std::move(out), any_grad({x, bias}), {x, bias}, [n, m](Tape& t, Id self) {
      Id x = t.parent(self, 0), bias = t.parent(self, 1);
      const auto& g = t.nodes_[self].grad.data;
      t.accumulate(x, g);
      if (t.wants(bias)) {
        auto& gb = t.grad_buf(bias);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
      }
    });
  }

  Id linear(Id x, Id weight, Id bias) { return add_bias(matmul(x, weight), bias); }

  Id layer_norm(Id x, Id gamma, Id beta) {
    const auto& vx = value(x);
    if (vx.rank() != 2) throw std::invalid_argument("layer_norm: expected 2D input");
    const std::size_t n = vx.dim(0), m = vx.dim(1);
    if (value(gamma).size() != m || value(beta).size() != m)
      throw std::invalid_argument("layer_norm: affine shape mismatch");
    Tensor<T> out({n, m});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<std::size_t>{n, m});
    for (std::size_t i = 0; i < n; ++i)
      kernels::layer_norm_row(&vx.data[i * m], value(gamma).data.data(), value(beta).data.data(),
                              &out.data[i * m], &xhat->data[i * m], m);
    return push(std::move(out), any_grad({x, gamma, beta}), {x, gamma, beta},
                [n, m, xhat](Tape& t, Id self) {
                  Id x = t.parent(self, 0), gamma = t.parent(self, 1), beta = t.parent(self, 2);
                  const auto& g = t.nodes_[self].grad.data;
                  const auto& vg = t.value(gamma).data;
                  if (t.wants(gamma)) {
                    auto& gg = t.grad_buf(gamma);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j)
                        gg[j] += g[i * m + j] * xhat->data[i * m + j];
                  }
                  if (t.wants(beta)) {
                    auto& gb = t.grad_buf(beta);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                  }
                  if (t.wants(x)) {
                    auto& gx = t.grad_buf(x);
                    const auto& vx = t.value(x).data;
                    for (std::size_t i = 0; i < n; ++i) {
                      // Recompute 1/sigma for the row.
                      T mean = 0;
                      for (std::size_t j = 0; j < m; ++j) mean += vx[i * m + j];
                      mean /= static_cast<T>(m);
                      T var = 0;
                      for (std::size_t j = 0; j < m; ++j) {
                        const T d = vx[i * m + j] - mean;
                        var += d * d;
                      }
                      var /= static_cast<T>(m);
                      const T inv = T(1) / std::sqrt(var + static_cast<T>(kernels::kLayerNormEps));
                      T sum_h = 0, sum_hx = 0;
                      for (std::size_t j = 0; j < m; ++j) {
                        const T hj = g[i * m + j] * vg[j];
                        sum_h += hj;
                        sum_hx += hj * xhat->data[i * m + j];
                      }
                      const T inv_m = T(1) / static_cast<T>(m);
                      for (std::size_t j = 0; j < m; ++j) {
                        const T hj = g[i * m + j] * vg[j];
                        gx[i * m + j] +=
                            inv * (hj - inv_m * sum_h - xhat->data[i * m + j] * inv_m * sum_hx);
                      }
                    }
                  }
                });
  }

  // Row softmax over a per-row visible prefix; mask == nullptr means all
  // columns visible.
  Id softmax(Id x, const PrefixMask* mask = nullptr) {
    const auto& vx = value(x);
    if (vx.rank() != 2) throw std::invalid_argument("softmax: expected 2D input");
    const std::size_t n = vx.dim(0), m = vx.dim(1);
    if (mask && mask->limit.size() != n) throw std::invalid_argument("softmax: mask size");
    Tensor<T> out = vx;
    std::vector<std::size_t> limits(n, m);
    if (mask) limits = mask->limit;
    for (std::size_t i = 0; i < n; ++i) {
      if (limits[i] == 0 || limits[i] > m) throw std::invalid_argument("softmax: bad mask limit");
      kernels::softmax_prefix(&out.data[i * m], limits[i], m);
    }
    auto saved = std::make_shared<Tensor<T>>(out);
    auto lim = std::make_shared<std::vector<std::size_t>>(limits);
    return push(std::move(out), any_grad({x}), {x}, [n, m, saved, lim](Tape& t, Id self) {
      Id x = t.parent(self, 0);
      if (!t.wants(x)) return;
      auto& gx = t.grad_buf(x);
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t L = (*lim)[i];
        const T* p = &saved->data[i * m];
        const T* gi = &g[i * m];
        T dotv = 0;
        for (std::size_t j = 0; j < L; ++j) dotv += gi[j] * p[j];
        for (std::size_t j = 0; j < L; ++j) gx[i * m + j] += p[j] * (gi[j] - dotv);
      }
    });
  }

  Id embedding(Id table, std::vector<int> indices) {
    const auto& vt = value(table);
    if (vt.rank() != 2) throw std::invalid_argument("embedding: table must be 2D");
    const std::size_t V = vt.dim(0), C = vt.dim(1), n = indices.size();
    for (int ix : indices)
      if (ix < 0 || static_cast<std::size_t>(ix) >= V)
        throw std::invalid_argument("embedding: index out of range");
    Tensor<T> out({n, C});
    for (std::size_t i = 0; i < n; ++i)
      std::copy(&vt.data[indices[i] * C], &vt.data[indices[i] * C] + C, &out.data[i * C]);
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    return push(std::move(out), any_grad({table}), {table}, [C, idx](Tape& t, Id self) {
      Id table = t.parent(self, 0);
      if (!t.wants(table)) return;
      auto& gt = t.grad_buf(table);
      const auto& g = t.nodes_[self].grad.data;
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t c = 0; c < C; ++c) gt[(*idx)[i] * C + c] += g[i * C + c];
    });
  }

  // Mean over rows of (logsumexp(row) - logit[target]); natural log.
  Id cross_entropy(Id logits, std::vector<int> targets) {
    const auto& vl = value(logits);
    if (vl.rank() != 2 || targets.size() != vl.dim(0))
      throw std::invalid_argument("cross_entropy: shape mismatch");
    const std::size_t n = vl.dim(0), m = vl.dim(1);
    auto probs = std::make_shared<Tensor<T>>(vl);
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= m)
        throw std::invalid_argument("cross_entropy: target out of range");
      T* row = &probs->data[i * m];
      T mx = row[0];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
      T sum = 0;
      for (std::size_t j = 0; j < m; ++j) sum += std::exp(row[j] - mx);
      const T lse = mx + std::log(sum);
      loss += lse - row[targets[i]];
      for (std::size_t j = 0; j < m; ++j) row[j] = std::exp(row[j] - lse);
    }
    loss /= static_cast<T>(n);
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    return push(Tensor<T>({1}, {loss}), any_grad({logits}), {logits},
                [n, m, probs, tg](Tape& t, Id self) {
                  Id logits = t.parent(self, 0);
                  if (!t.wants(logits)) return;
                  auto& gl = t.grad_buf(logits);
                  const T g = t.nodes_[self].grad.data[0] / static_cast<T>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < m; ++j) gl[i * m + j] += g * probs->data[i * m + j];
                    gl[i * m + (*tg)[i]] -= g;
                  }
                });
  }

  Id bilinear_resize(Id x, std::size_t h2, std::size_t w2) {
    const auto& vx = value(x);
    if (vx.rank() != 3) throw std::invalid_argument("bilinear_resize: expected C×h×w");
    const std::size_t C = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
    Tensor<T> out = kernels::bilinear_resize(vx, h2, w2);
    return push(std::move(out), any_grad({x}), {x}, [C, h, w, h2, w2](Tape& t, Id self) {
      Id x = t.parent(self, 0);
      if (!t.wants(x)) return;
      kernels::bilinear_resize_chw_backward(t.nodes_[self].grad.data.data(),
                                            t.grad_buf(x).data(), C, h, w, h2, w2);
    });
  }

  // ---- reductions ----

  Id sum(Id a) {
    T s = 0;
    for (T v : value(a).data) s += v;
    return push(Tensor<T>({1}, {s}), any_grad({a}), {a}, [](Tape& t, Id self) {
      Id a = t.parent(self, 0);
      if (!t.wants(a)) return;
      auto& ga = t.grad_buf(a);
      const T g = t.nodes_[self].grad.data[0];
      for (auto& v : ga) v += g;
    });
  }

  // mean((a - b)^2)
  Id mse(Id a, Id b) {
    require_same_shape(a, b, "mse");
    const auto& va = value(a);
    const auto& vb = value(b);
    const std::size_t n = va.size();
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = va[i] - vb[i];
      s += d * d;
    }
    s /= static_cast<T>(n);
    return push(Tensor<T>({1}, {s}), any_grad({a, b}), {a, b}, [n](Tape& t, Id self) {
      Id a = t.parent(self, 0), b = t.parent(self, 1);
      const T g = t.nodes_[self].grad.data[0] * T(2) / static_cast<T>(n);
      const auto& va = t.value(a).data;
      const auto& vb = t.value(b).data;
      if (t.wants(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g * (va[i] - vb[i]);
      }
      if (t.wants(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g * (va[i] - vb[i]);
      }
    });
  }

  // ---- backward ----

  void backward(Id loss) {
    if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& node : nodes_) {
      node.grad = Tensor<T>::zeros(node.value.shape);
    }
    nodes_[loss].grad.data[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      auto& node = nodes_[id];
      if (node.backward && node.requires_grad) node.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<Id> parents;
    std::function<void(Tape&, Id)> backward;
  };

  Id push(Tensor<T> value, bool requires_grad, std::vector<Id> parents,
          std::function<void(Tape&, Id)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw std::invalid_argument("tape: bad node id");
    return id;
  }

  bool any_grad(const std::vector<Id>& ids) const {
    for (Id id : ids)
      if (nodes_[check(id)].requires_grad) return true;
    return false;
  }

  Id parent(Id self, std::size_t i) const { return nodes_[self].parents[i]; }
  bool wants(Id id) const { return nodes_[id].requires_grad; }
  std::vector<T>& grad_buf(Id id) { return nodes_[id].grad.data; }

  void accumulate(Id id, const std::vector<T>& g) {
    if (!wants(id)) return;
    auto& buf = grad_buf(id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }

  void accumulate_scaled(Id id, const std::vector<T>& g, T s) {
    if (!wants(id)) return;
    auto& buf = grad_buf(id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += s * g[i];
  }

  std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace flexvar
