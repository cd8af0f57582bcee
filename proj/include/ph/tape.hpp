#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/tensor.hpp"

namespace ph {

// Reverse-mode autodiff over a tape of eagerly evaluated ops.
//
// Nodes are appended in forward order, so the construction order is already a
// topological order; backward() runs the recorded closures in exact reverse.
// Leaves come in three flavors:
//   constant()  owned value, no gradient
//   frozen()    external tensor (caller keeps it alive), no gradient
//   param()     external trainable tensor; backward() accumulates into t.grad
template <class S>
class TapeT {
 public:
  struct Ref {
    std::uint32_t idx{0};
  };

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // ---- leaves ----

  Ref constant(TensorT<S> t) {
    Node n;
    n.local = std::move(t);
    return push(std::move(n));
  }

  Ref frozen(const TensorT<S>& t) {
    Node n;
    n.ext = &t;
    return push(std::move(n));
  }

  Ref param(TensorT<S>& t) {
    if (!t.requires_grad) {
      throw FrozenParameterError("cannot register frozen/non-trainable tensor as a parameter");
    }
    Node n;
    n.ext = &t;
    n.flush_target = &t;
    n.needs_grad = true;
    return push(std::move(n));
  }

  // ---- ops ----

  Ref matmul(Ref a, Ref b) {
    const TensorT<S>& va = val(a);
    const TensorT<S>& vb = val(b);
    if (va.shape.size() != 2 || vb.shape.size() != 2 || va.cols() != vb.rows()) {
      throw DimensionError("matmul shape mismatch: " + TensorT<S>::shape_string(va.shape) +
                           " x " + TensorT<S>::shape_string(vb.shape));
    }
    const std::size_t m = va.rows(), k = va.cols(), nn = vb.cols();
    Node n;
    n.local = TensorT<S>::zeros({m, nn});
    detail::mm_nn(va.data.data(), vb.data.data(), n.local.data.data(), m, k, nn);
    n.needs_grad = needs_grad(a) || needs_grad(b);
    if (n.needs_grad) {
      n.back = [this, a, b, m, k, nn](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        if (needs_grad(a)) {
          // dA = dC * B^T
          detail::mm_nt(g.data(), val(b).data.data(), grad_buf(a).data(), m, nn, k);
        }
        if (needs_grad(b)) {
          // dB = A^T * dC
          detail::mm_tn(val(a).data.data(), g.data(), grad_buf(b).data(), m, k, nn);
        }
      };
    }
    return push(std::move(n));
  }

  Ref transpose(Ref x) {
    const TensorT<S>& v = val(x);
    const std::size_t m = v.rows(), c = v.cols();
    Node n;
    n.local = TensorT<S>::zeros({c, m});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) n.local.data[j * m + i] = v.data[i * c + j];
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x, m, c](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * m + i];
      };
    }
    return push(std::move(n));
  }

  Ref add(Ref a, Ref b) {
    const TensorT<S>& va = val(a);
    const TensorT<S>& vb = val(b);
    if (va.shape != vb.shape) {
      throw DimensionError("add shape mismatch: " + TensorT<S>::shape_string(va.shape) +
                           " vs " + TensorT<S>::shape_string(vb.shape));
    }
    Node n;
    n.local = va;
    for (std::size_t i = 0; i < vb.size(); ++i) n.local.data[i] += vb.data[i];
    n.needs_grad = needs_grad(a) || needs_grad(b);
    if (n.needs_grad) {
      n.back = [this, a, b](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        if (needs_grad(a)) axpy(g, grad_buf(a));
        if (needs_grad(b)) axpy(g, grad_buf(b));
      };
    }
    return push(std::move(n));
  }

  // x: [m,d], bias: [d]; broadcast-add over rows.
  Ref add_row(Ref x, Ref bias) {
    const TensorT<S>& vx = val(x);
    const TensorT<S>& vb = val(bias);
    if (vx.shape.size() != 2 || vb.shape.size() != 1 || vx.cols() != vb.shape[0]) {
      throw DimensionError("add_row shape mismatch: " + TensorT<S>::shape_string(vx.shape) +
                           " vs " + TensorT<S>::shape_string(vb.shape));
    }
    const std::size_t m = vx.rows(), d = vx.cols();
    Node n;
    n.local = vx;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) n.local.data[i * d + j] += vb.data[j];
    n.needs_grad = needs_grad(x) || needs_grad(bias);
    if (n.needs_grad) {
      n.back = [this, x, bias, m, d](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        if (needs_grad(x)) axpy(g, grad_buf(x));
        if (needs_grad(bias)) {
          std::vector<S>& gb = grad_buf(bias);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
      };
    }
    return push(std::move(n));
  }

  Ref relu(Ref x) {
    const TensorT<S>& v = val(x);
    Node n;
    n.local = v;
    for (S& e : n.local.data)
      if (e < S(0)) e = S(0);
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        const TensorT<S>& v = val(x);
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (v.data[i] > S(0)) gx[i] += g[i];
      };
    }
    return push(std::move(n));
  }

  Ref scale(Ref x, S factor) {
    Node n;
    n.local = val(x);
    for (S& e : n.local.data) e *= factor;
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x, factor](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
      };
    }
    return push(std::move(n));
  }

  // Numerically stable softmax along `axis` (negative counts from the back).
  Ref softmax(Ref x, int axis = -1) {
    const TensorT<S>& v = val(x);
    const std::size_t rank = v.shape.size();
    if (rank == 0) throw DimensionError("softmax on rank-0 tensor");
    const int norm_axis = axis < 0 ? axis + static_cast<int>(rank) : axis;
    if (norm_axis < 0 || norm_axis >= static_cast<int>(rank)) {
      throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for rank " +
                           std::to_string(rank));
    }
    const std::size_t a = static_cast<std::size_t>(norm_axis);
    const std::size_t n = v.shape[a];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < a; ++i) outer *= v.shape[i];
    for (std::size_t i = a + 1; i < rank; ++i) inner *= v.shape[i];

    Node nd;
    nd.local = v;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        S* lane = nd.local.data.data() + o * n * inner + in;
        S mx = lane[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, lane[i * inner]);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double e = std::exp(static_cast<double>(lane[i * inner] - mx));
          lane[i * inner] = static_cast<S>(e);
          sum += e;
        }
        const double invsum = 1.0 / sum;
        for (std::size_t i = 0; i < n; ++i)
          lane[i * inner] = static_cast<S>(static_cast<double>(lane[i * inner]) * invsum);
      }
    }
    nd.needs_grad = needs_grad(x);
    if (nd.needs_grad) {
      nd.back = [this, x, n, outer, inner](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        const TensorT<S>& y = node_value(self);
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            S dot = S(0);
            for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * y.data[base + i * inner];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t k = base + i * inner;
              gx[k] += y.data[k] * (g[k] - dot);
            }
          }
        }
      };
    }
    return push(std::move(nd));
  }

  // Per-row normalization over the last axis of a [m,d] tensor, then affine.
  Ref layer_norm(Ref x, Ref gain, Ref bias, S eps) {
    const TensorT<S>& vx = val(x);
    const TensorT<S>& vg = val(gain);
    const TensorT<S>& vb = val(bias);
    if (vx.shape.size() != 2 || vg.shape.size() != 1 || vb.shape.size() != 1 ||
        vg.shape[0] != vx.cols() || vb.shape[0] != vx.cols()) {
      throw DimensionError("layer_norm shape mismatch: x=" + TensorT<S>::shape_string(vx.shape) +
                           " gain=" + TensorT<S>::shape_string(vg.shape) +
                           " bias=" + TensorT<S>::shape_string(vb.shape));
    }
    if (!(eps > S(0))) throw ConfigError("layer_norm eps must be positive");
    const std::size_t m = vx.rows(), d = vx.cols();

    auto xhat = std::make_shared<std::vector<S>>(m * d);
    auto inv_std = std::make_shared<std::vector<S>>(m);
    Node n;
    n.local = TensorT<S>::zeros({m, d});
    for (std::size_t i = 0; i < m; ++i) {
      const S* row = vx.data.data() + i * d;
      double mu = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += row[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = static_cast<double>(row[j]) - mu;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const S istd = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)[i] = istd;
      for (std::size_t j = 0; j < d; ++j) {
        const S xh = static_cast<S>((static_cast<double>(row[j]) - mu)) * istd;
        (*xhat)[i * d + j] = xh;
        n.local.data[i * d + j] = xh * vg.data[j] + vb.data[j];
      }
    }
    n.needs_grad = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
    if (n.needs_grad) {
      n.back = [this, x, gain, bias, m, d, xhat, inv_std](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        const TensorT<S>& vg = val(gain);
        for (std::size_t i = 0; i < m; ++i) {
          const S* grow = g.data() + i * d;
          const S* xh = xhat->data() + i * d;
          if (needs_grad(gain)) {
            std::vector<S>& gg = grad_buf(gain);
            for (std::size_t j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
          }
          if (needs_grad(bias)) {
            std::vector<S>& gb = grad_buf(bias);
            for (std::size_t j = 0; j < d; ++j) gb[j] += grow[j];
          }
          if (needs_grad(x)) {
            std::vector<S>& gx = grad_buf(x);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = static_cast<double>(grow[j]) * vg.data[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xh[j];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            const S istd = (*inv_std)[i];
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = static_cast<double>(grow[j]) * vg.data[j];
              gx[i * d + j] += static_cast<S>((dxh - mean_dxhat - xh[j] * mean_dxhat_xhat)) * istd;
            }
          }
        }
      };
    }
    return push(std::move(n));
  }

  // Inverted dropout: zero with probability p and scale survivors by 1/(1-p)
  // in training mode; identity in eval mode.
  Ref dropout(Ref x, double p, bool training, Rng* rng) {
    if (p < 0.0 || p >= 1.0) {
      throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p));
    }
    const TensorT<S>& v = val(x);
    Node n;
    if (!training || p == 0.0) {
      n.local = v;
      n.needs_grad = needs_grad(x);
      if (n.needs_grad) {
        n.back = [this, x](std::uint32_t self) { axpy(nodes_[self].grad, grad_buf(x)); };
      }
      return push(std::move(n));
    }
    if (rng == nullptr) throw ConfigError("dropout in training mode requires an rng");
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(v.size());
    n.local = v;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool keep = rng->next_double() >= p;
      (*mask)[i] = keep ? 1 : 0;
      n.local.data[i] = keep ? v.data[i] * keep_scale : S(0);
    }
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x, mask, keep_scale](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t i = 0; i < g.size(); ++i)
          if ((*mask)[i]) gx[i] += g[i] * keep_scale;
      };
    }
    return push(std::move(n));
  }

  // Gathers rows of an embedding table: table [V,d], ids -> [T,d].
  Ref embed_rows(Ref table, std::vector<int> ids) {
    const TensorT<S>& tv = val(table);
    if (tv.shape.size() != 2) throw DimensionError("embed_rows expects a [V,d] table");
    const std::size_t v = tv.rows(), d = tv.cols();
    for (const int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw DataError("token id " + std::to_string(id) + " outside table of " + std::to_string(v) + " rows");
      }
    }
    const std::size_t t = ids.size();
    Node n;
    n.local = TensorT<S>::zeros({t, d});
    for (std::size_t i = 0; i < t; ++i) {
      const S* src = tv.data.data() + static_cast<std::size_t>(ids[i]) * d;
      std::copy(src, src + d, n.local.data.data() + i * d);
    }
    n.needs_grad = needs_grad(table);
    if (n.needs_grad) {
      n.back = [this, table, ids = std::move(ids), d](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gt = grad_buf(table);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          S* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
          const S* src = g.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      };
    }
    return push(std::move(n));
  }

  Ref take_row(Ref x, std::size_t row) {
    const TensorT<S>& v = val(x);
    if (v.shape.size() != 2 || row >= v.rows()) {
      throw DimensionError("take_row " + std::to_string(row) + " from " + TensorT<S>::shape_string(v.shape));
    }
    const std::size_t d = v.cols();
    Node n;
    n.local = TensorT<S>::zeros({1, d});
    std::copy(v.data.data() + row * d, v.data.data() + (row + 1) * d, n.local.data.data());
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x, row, d](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t j = 0; j < d; ++j) gx[row * d + j] += g[j];
      };
    }
    return push(std::move(n));
  }

  // Stacks b refs of shape [1,c] into a [b,c] tensor.
  Ref stack_rows(std::vector<Ref> rows) {
    if (rows.empty()) throw DimensionError("stack_rows needs at least one row");
    const std::size_t c = val(rows[0]).cols();
    Node n;
    n.local = TensorT<S>::zeros({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const TensorT<S>& v = val(rows[i]);
      if (v.shape.size() != 2 || v.rows() != 1 || v.cols() != c) {
        throw DimensionError("stack_rows row " + std::to_string(i) + " has shape " +
                             TensorT<S>::shape_string(v.shape));
      }
      std::copy(v.data.begin(), v.data.end(), n.local.data.begin() + i * c);
      n.needs_grad = n.needs_grad || needs_grad(rows[i]);
    }
    if (n.needs_grad) {
      n.back = [this, rows = std::move(rows), c](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (!needs_grad(rows[i])) continue;
          std::vector<S>& gr = grad_buf(rows[i]);
          for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
        }
      };
    }
    return push(std::move(n));
  }

  // Columns [c0, c1) of a [m,n] tensor.
  Ref col_slice(Ref x, std::size_t c0, std::size_t c1) {
    const TensorT<S>& v = val(x);
    if (v.shape.size() != 2 || c0 >= c1 || c1 > v.cols()) {
      throw DimensionError("col_slice [" + std::to_string(c0) + "," + std::to_string(c1) +
                           ") of " + TensorT<S>::shape_string(v.shape));
    }
    const std::size_t m = v.rows(), n0 = v.cols(), w = c1 - c0;
    Node n;
    n.local = TensorT<S>::zeros({m, w});
    for (std::size_t i = 0; i < m; ++i)
      std::copy(v.data.data() + i * n0 + c0, v.data.data() + i * n0 + c1, n.local.data.data() + i * w);
    n.needs_grad = needs_grad(x);
    if (n.needs_grad) {
      n.back = [this, x, c0, m, n0, w](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::vector<S>& gx = grad_buf(x);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gx[i * n0 + c0 + j] += g[i * w + j];
      };
    }
    return push(std::move(n));
  }

  Ref col_concat(std::vector<Ref> parts) {
    if (parts.empty()) throw DimensionError("col_concat needs at least one part");
    const std::size_t m = val(parts[0]).rows();
    std::size_t total = 0;
    for (const Ref r : parts) {
      const TensorT<S>& v = val(r);
      if (v.shape.size() != 2 || v.rows() != m) {
        throw DimensionError("col_concat row mismatch at " + TensorT<S>::shape_string(v.shape));
      }
      total += v.cols();
    }
    Node n;
    n.local = TensorT<S>::zeros({m, total});
    std::size_t off = 0;
    for (const Ref r : parts) {
      const TensorT<S>& v = val(r);
      const std::size_t w = v.cols();
      for (std::size_t i = 0; i < m; ++i)
        std::copy(v.data.data() + i * w, v.data.data() + (i + 1) * w, n.local.data.data() + i * total + off);
      off += w;
      n.needs_grad = n.needs_grad || needs_grad(r);
    }
    if (n.needs_grad) {
      n.back = [this, parts = std::move(parts), m, total](std::uint32_t self) {
        const std::vector<S>& g = nodes_[self].grad;
        std::size_t off = 0;
        for (const Ref r : parts) {
          const std::size_t w = val(r).cols();
          if (needs_grad(r)) {
            std::vector<S>& gr = grad_buf(r);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < w; ++j) gr[i * w + j] += g[i * total + off + j];
          }
          off += w;
        }
      };
    }
    return push(std::move(n));
  }

  // Mean negative log-softmax of the target class over a [b,c] logit batch.
  // Gradient w.r.t. logits is (softmax - onehot)/b.
  Ref cross_entropy(Ref logits, std::vector<int> targets) {
    const TensorT<S>& v = val(logits);
    if (v.shape.size() != 2 || v.cols() < 2) {
      throw DimensionError("cross_entropy expects [b,c] logits with c >= 2, got " +
                           TensorT<S>::shape_string(v.shape));
    }
    const std::size_t b = v.rows(), c = v.cols();
    if (targets.size() != b) {
      throw DataError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                      std::to_string(b));
    }
    for (const int t : targets) {
      if (t < 0 || static_cast<std::size_t>(t) >= c) {
        throw DataError("cross_entropy target " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");
      }
    }
    auto probs = std::make_shared<std::vector<S>>(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const S* row = v.data.data() + i * c;
      double mx = static_cast<double>(row[0]);
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
      const double lse = std::log(sum) + mx;
      loss += lse - static_cast<double>(row[static_cast<std::size_t>(targets[i])]);
      for (std::size_t j = 0; j < c; ++j)
        (*probs)[i * c + j] = static_cast<S>(std::exp(static_cast<double>(row[j]) - lse));
    }
    Node n;
    n.local = TensorT<S>({1}, {static_cast<S>(loss / static_cast<double>(b))});
    n.needs_grad = needs_grad(logits);
    if (n.needs_grad) {
      n.back = [this, logits, targets = std::move(targets), probs, b, c](std::uint32_t self) {
        const S upstream = nodes_[self].grad[0];
        std::vector<S>& gl = grad_buf(logits);
        const S inv_b = static_cast<S>(1.0 / static_cast<double>(b));
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            S g = (*probs)[i * c + j];
            if (j == static_cast<std::size_t>(targets[i])) g -= S(1);
            gl[i * c + j] += upstream * g * inv_b;
          }
        }
      };
    }
    return push(std::move(n));
  }

  // ---- access / backward ----

  const TensorT<S>& val(Ref r) const { return node_value(r.idx); }

  // Node-level gradient; empty if nothing flowed here.
  const std::vector<S>& grad(Ref r) const { return nodes_[r.idx].grad; }

  // Seeds d(root)/d(root) = scale and propagates in reverse construction
  // order, then flushes accumulated gradients into registered parameters.
  void backward(Ref root, S scale = S(1)) {
    if (val(root).size() != 1) {
      throw DimensionError("backward root must be a scalar, got " +
                           TensorT<S>::shape_string(val(root).shape));
    }
    grad_buf(root)[0] += scale;
    for (std::uint32_t i = root.idx + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && !n.grad.empty()) n.back(i);
    }
    for (Node& n : nodes_) {
      if (n.flush_target != nullptr && !n.grad.empty()) {
        n.flush_target->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.flush_target->grad[i] += n.grad[i];
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const TensorT<S>* ext{nullptr};
    TensorT<S>* flush_target{nullptr};
    TensorT<S> local;
    std::vector<S> grad;
    std::function<void(std::uint32_t)> back;
    bool needs_grad{false};
  };

  Ref push(Node n) {
    nodes_.push_back(std::move(n));
    return Ref{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const TensorT<S>& node_value(std::uint32_t idx) const {
    const Node& n = nodes_[idx];
    return n.ext != nullptr ? *n.ext : n.local;
  }

  bool needs_grad(Ref r) const { return nodes_[r.idx].needs_grad; }

  std::vector<S>& grad_buf(Ref r) { return grad_buf(r.idx); }
  std::vector<S>& grad_buf(std::uint32_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.empty()) n.grad.assign(node_value(idx).size(), S(0));
    return n.grad;
  }

  static void axpy(const std::vector<S>& src, std::vector<S>& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace ph
