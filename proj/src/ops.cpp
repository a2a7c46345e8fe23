// Copyright 2026 The simtpe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "simtpe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "simtpe/error.hpp"

namespace simtpe {
namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

Node& in(Node& out, std::size_t i) { return *out.inputs[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " +
                          shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw InvalidArgument("matmul: inner dimension mismatch " +
                          shape_to_string(a.shape()) + " x " +
                          shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result(matrix_shape(m, n), std::move(out), {a, b},
                     [m, k, n](Node& o) {
                       Node& na = in(o, 0);
                       Node& nb = in(o, 1);
                       if (na.requires_grad) {
                         na.ensure_grad();
                         gemm_nt(o.grad.data(), nb.value.data(),
                                 na.grad.data(), m, n, k);
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         gemm_tn(na.value.data(), o.grad.data(),
                                 nb.grad.data(), k, m, n);
                       }
                     });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw InvalidArgument("matmul_bt: inner dimension mismatch " +
                          shape_to_string(a.shape()) + " x " +
                          shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result(matrix_shape(m, n), std::move(out), {a, b},
                     [m, k, n](Node& o) {
                       Node& na = in(o, 0);
                       Node& nb = in(o, 1);
                       if (na.requires_grad) {
                         na.ensure_grad();
                         gemm_nn(o.grad.data(), nb.value.data(),
                                 na.grad.data(), m, n, k);
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         gemm_tn(o.grad.data(), na.value.data(),
                                 nb.grad.data(), n, m, k);
                       }
                     });
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw InvalidArgument("matmul_at: inner dimension mismatch " +
                          shape_to_string(a.shape()) + "^T x " +
                          shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_tn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result(matrix_shape(m, n), std::move(out), {a, b},
                     [m, k, n](Node& o) {
                       Node& na = in(o, 0);
                       Node& nb = in(o, 1);
                       // dA[k,m] = B[k,n] dC[m,n]^T
                       if (na.requires_grad) {
                         na.ensure_grad();
                         gemm_nt(nb.value.data(), o.grad.data(),
                                 na.grad.data(), k, n, m);
                       }
                       // dB[k,n] = A[k,m] dC[m,n]
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         gemm_nn(na.value.data(), o.grad.data(),
                                 nb.grad.data(), k, m, n);
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t s = 0; s < 2; ++s) {
      Node& x = in(o, s);
      if (!x.requires_grad) continue;
      x.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) x.grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& x = in(o, 0);
    Node& y = in(o, 1);
    if (x.requires_grad) {
      x.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) x.grad[i] += o.grad[i];
    }
    if (y.requires_grad) {
      y.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) y.grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& x = in(o, 0);
    Node& y = in(o, 1);
    if (x.requires_grad) {
      x.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        x.grad[i] += o.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      y.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        y.grad[i] += o.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& o) {
    Node& x = in(o, 0);
    x.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      x.grad[i] += o.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw InvalidArgument("add_row: row of " + std::to_string(row.size()) +
                          " entries for " + std::to_string(n) + " columns");
  }
  std::vector<double> out(m * n);
  auto av = a.data(), rv = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + rv[j];
  return make_result(matrix_shape(m, n), std::move(out), {a, row},
                     [m, n](Node& o) {
                       Node& x = in(o, 0);
                       Node& r = in(o, 1);
                       if (x.requires_grad) {
                         x.ensure_grad();
                         for (std::size_t i = 0; i < m * n; ++i)
                           x.grad[i] += o.grad[i];
                       }
                       if (r.requires_grad) {
                         r.ensure_grad();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             r.grad[j] += o.grad[i * n + j];
                       }
                     });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0 ? av[i] : 0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& o) {
    Node& x = in(o, 0);
    x.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (x.value[i] > 0) x.grad[i] += o.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw InvalidArgument("layer_norm: gain/bias size mismatch");
  }
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
        Node& nx = in(o, 0);
        Node& ng = in(o, 1);
        Node& nb = in(o, 2);
        if (ng.requires_grad) ng.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        if (nx.requires_grad) nx.ensure_grad();
        std::vector<double> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const double* dy = o.grad.data() + i * n;
          const double* h = xhat.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            if (ng.requires_grad) ng.grad[j] += dy[j] * h[j];
            if (nb.requires_grad) nb.grad[j] += dy[j];
          }
          if (!nx.requires_grad) continue;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = dy[j] * ng.value[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * h[j];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            nx.grad[i * n + j] +=
                inv_std[i] * (dxhat[j] - mean_d - h[j] * mean_dh);
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InvalidArgument("embedding: id " + std::to_string(ids[i]) +
                            " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result(matrix_shape(ids.size(), d), std::move(out), {table},
                     [d, idv = std::move(idv)](Node& o) {
                       Node& t = in(o, 0);
                       t.ensure_grad();
                       for (std::size_t i = 0; i < idv.size(); ++i) {
                         double* g = t.grad.data() +
                                     static_cast<std::size_t>(idv[i]) * d;
                         for (std::size_t j = 0; j < d; ++j)
                           g[j] += o.grad[i * d + j];
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, bool training,
               std::mt19937_64& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw InvalidArgument("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> factor(x.size());
  for (auto& f : factor) f = keep(rng) ? s : 0.0;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  return make_result(x.shape(), std::move(out), {x},
                     [factor = std::move(factor)](Node& o) {
                       Node& nx = in(o, 0);
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i)
                         nx.grad[i] += o.grad[i] * factor[i];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.cols();
  if (begin > end || end > x.rows()) {
    throw InvalidArgument("slice_rows: range [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") outside " +
                          std::to_string(x.rows()) + " rows");
  }
  std::vector<double> out(x.data().begin() + begin * n,
                          x.data().begin() + end * n);
  return make_result(matrix_shape(end - begin, n), std::move(out), {x},
                     [begin, n](Node& o) {
                       Node& nx = in(o, 0);
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i)
                         nx.grad[begin * n + i] += o.grad[i];
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > n) {
    throw InvalidArgument("slice_cols: range [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") outside " +
                          std::to_string(n) + " cols");
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + begin, w, out.data() + i * w);
  return make_result(matrix_shape(m, w), std::move(out), {x},
                     [m, n, w, begin](Node& o) {
                       Node& nx = in(o, 0);
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j)
                           nx.grad[i * n + begin + j] += o.grad[i * w + j];
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw InvalidArgument("concat_rows: column mismatch");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result(matrix_shape(m, n), std::move(out), parts,
                     [offsets = std::move(offsets)](Node& o) {
                       for (std::size_t s = 0; s < o.inputs.size(); ++s) {
                         Node& x = in(o, s);
                         if (!x.requires_grad) continue;
                         x.ensure_grad();
                         for (std::size_t i = 0; i < x.grad.size(); ++i)
                           x.grad[i] += o.grad[offsets[s] + i];
                       }
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    if (p.rows() != m) throw InvalidArgument("concat_cols: row mismatch");
    offsets.push_back(n);
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t s = 0; s < parts.size(); ++s) {
    auto pv = parts[s].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[s], widths[s],
                  out.data() + i * n + offsets[s]);
  }
  return make_result(
      matrix_shape(m, n), std::move(out), parts,
      [m, n, offsets = std::move(offsets), widths = std::move(widths)](Node& o) {
        for (std::size_t s = 0; s < o.inputs.size(); ++s) {
          Node& x = in(o, s);
          if (!x.requires_grad) continue;
          x.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[s]; ++j)
              x.grad[i * widths[s] + j] += o.grad[i * n + offsets[s] + j];
        }
      });
}

MaskedSoftmax masked_softmax(const Tensor& logits, const Mask& mask) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (mask.size() != m * n) {
    throw InvalidArgument("masked_softmax: mask has " +
                          std::to_string(mask.size()) + " entries for " +
                          std::to_string(m * n) + " logits");
  }
  MaskedSoftmax result;
  std::vector<double> out(m * n, 0.0);
  auto lv = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[i * n + j]) continue;
      any = true;
      mx = std::max(mx, lv[i * n + j]);
    }
    if (!any) {
      result.degenerate_rows.push_back(i);
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[i * n + j]) continue;
      out[i * n + j] = std::exp(lv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  result.probs = make_result(logits.shape(), std::move(out), {logits},
                             [m, n](Node& o) {
                               Node& x = in(o, 0);
                               x.ensure_grad();
                               for (std::size_t i = 0; i < m; ++i) {
                                 const double* p = o.value.data() + i * n;
                                 const double* g = o.grad.data() + i * n;
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                   dot += p[j] * g[j];
                                 for (std::size_t j = 0; j < n; ++j)
                                   x.grad[i * n + j] += p[j] * (g[j] - dot);
                               }
                             });
  return result;
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lz;
  }
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& o) {
    Node& nx = in(o, 0);
    nx.ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = o.value.data() + i * n;
      const double* g = o.grad.data() + i * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[j];
      for (std::size_t j = 0; j < n; ++j)
        nx.grad[i * n + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Tensor squash_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n, 0.0);
  std::vector<double> norms(m);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* v = xv.data() + i * n;
    double n2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) n2 += v[j] * v[j];
    const double norm = std::sqrt(n2);
    norms[i] = norm;
    if (norm < 1e-12) continue;
    const double s = norm / (1.0 + n2);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[j] * s;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [m, n, norms = std::move(norms)](Node& o) {
                       Node& nx = in(o, 0);
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         const double norm = norms[i];
                         if (norm < 1e-12) continue;
                         const double n2 = norm * norm;
                         const double s = norm / (1.0 + n2);
                         const double ds =
                             (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
                         const double* v = nx.value.data() + i * n;
                         const double* g = o.grad.data() + i * n;
                         double vg = 0.0;
                         for (std::size_t j = 0; j < n; ++j) vg += v[j] * g[j];
                         const double c = ds / norm * vg;
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] += s * g[j] + c * v[j];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& o) {
    Node& nx = in(o, 0);
    nx.ensure_grad();
    for (auto& g : nx.grad) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw InvalidArgument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return make_result({}, {s}, {x}, [](Node& o) {
    Node& nx = in(o, 0);
    nx.ensure_grad();
    for (std::size_t i = 0; i < nx.grad.size(); ++i)
      nx.grad[i] += 2.0 * nx.value[i] * o.grad[0];
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  return scale(sum_squares(sub(a, b)), 1.0 / static_cast<double>(a.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     double smoothing) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw InvalidArgument("cross_entropy: " + std::to_string(targets.size()) +
                          " targets for " + std::to_string(m) + " rows");
  }
  std::vector<double> probs(m * n);
  double loss = 0.0;
  auto lv = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw InvalidArgument("cross_entropy: target outside vocabulary");
    }
    const double* row = lv.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    double mean_nlp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(row[j] - lz);
      mean_nlp += lz - row[j];
    }
    mean_nlp /= static_cast<double>(n);
    loss += (1.0 - smoothing) * (lz - row[y]) + smoothing * mean_nlp;
  }
  std::vector<int> tv(targets.begin(), targets.end());
  return make_result(
      {}, {loss}, {logits},
      [m, n, smoothing, probs = std::move(probs), tv = std::move(tv)](Node& o) {
        Node& x = in(o, 0);
        x.ensure_grad();
        const double g = o.grad[0];
        const double u = smoothing / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            double t = u;
            if (static_cast<int>(j) == tv[i]) t += 1.0 - smoothing;
            x.grad[i * n + j] += g * (probs[i * n + j] - t);
          }
        }
      });
}

Tensor weighted_pick_sum(const Tensor& x, std::span<const PickEntry> entries) {
  const std::size_t m = x.rows(), n = x.cols();
  double s = 0.0;
  auto xv = x.data();
  for (const auto& e : entries) {
    if (e.row >= m || e.col >= n) {
      throw InvalidArgument("weighted_pick_sum: entry outside tensor");
    }
    s += e.weight * xv[e.row * n + e.col];
  }
  std::vector<PickEntry> ev(entries.begin(), entries.end());
  return make_result({}, {s}, {x}, [n, ev = std::move(ev)](Node& o) {
    Node& nx = in(o, 0);
    nx.ensure_grad();
    for (const auto& e : ev) nx.grad[e.row * n + e.col] += e.weight * o.grad[0];
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::span<const int> limits) {
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != nk) {
    throw InvalidArgument("attention: q/k/v shape mismatch");
  }
  if (heads == 0 || d % heads != 0) {
    throw InvalidArgument("attention: width not divisible by head count");
  }
  if (limits.size() != nq) {
    throw InvalidArgument("attention: one limit per query row required");
  }
  for (int lim : limits) {
    if (lim < 1 || static_cast<std::size_t>(lim) > nk) {
      throw InvalidArgument("attention: limit " + std::to_string(lim) +
                            " outside [1," + std::to_string(nk) + "]");
    }
  }
  const std::size_t hd = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> out(nq * d, 0.0);
  // probs[(r * heads + h) * nk + l]
  std::vector<double> probs(nq * heads * nk, 0.0);
  auto qv = q.data(), kv = k.data(), vv = v.data();
  for (std::size_t r = 0; r < nq; ++r) {
    const std::size_t lim = static_cast<std::size_t>(limits[r]);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qr = qv.data() + r * d + h * hd;
      double* p = probs.data() + (r * heads + h) * nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < lim; ++l) {
        const double* kl = kv.data() + l * d + h * hd;
        double s = 0.0;
        for (std::size_t e = 0; e < hd; ++e) s += qr[e] * kl[e];
        p[l] = s * sc;
        mx = std::max(mx, p[l]);
      }
      double z = 0.0;
      for (std::size_t l = 0; l < lim; ++l) {
        p[l] = std::exp(p[l] - mx);
        z += p[l];
      }
      for (std::size_t l = 0; l < lim; ++l) p[l] /= z;
      double* orow = out.data() + r * d + h * hd;
      for (std::size_t l = 0; l < lim; ++l) {
        const double* vl = vv.data() + l * d + h * hd;
        for (std::size_t e = 0; e < hd; ++e) orow[e] += p[l] * vl[e];
      }
    }
  }
  std::vector<int> lims(limits.begin(), limits.end());
  return make_result(
      matrix_shape(nq, d), std::move(out), {q, k, v},
      [nq, nk, d, heads, hd, sc, probs = std::move(probs),
       lims = std::move(lims)](Node& o) {
        Node& nqn = in(o, 0);
        Node& nkn = in(o, 1);
        Node& nvn = in(o, 2);
        if (nqn.requires_grad) nqn.ensure_grad();
        if (nkn.requires_grad) nkn.ensure_grad();
        if (nvn.requires_grad) nvn.ensure_grad();
        std::vector<double> ds(nk);
        for (std::size_t r = 0; r < nq; ++r) {
          const std::size_t lim = static_cast<std::size_t>(lims[r]);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (r * heads + h) * nk;
            const double* go = o.grad.data() + r * d + h * hd;
            double dot = 0.0;
            for (std::size_t l = 0; l < lim; ++l) {
              const double* vl = nvn.value.data() + l * d + h * hd;
              double dp = 0.0;
              for (std::size_t e = 0; e < hd; ++e) dp += go[e] * vl[e];
              ds[l] = dp;
              dot += p[l] * dp;
              if (nvn.requires_grad) {
                double* gv = nvn.grad.data() + l * d + h * hd;
                for (std::size_t e = 0; e < hd; ++e) gv[e] += p[l] * go[e];
              }
            }
            const double* qr = nqn.value.data() + r * d + h * hd;
            for (std::size_t l = 0; l < lim; ++l) {
              const double g = p[l] * (ds[l] - dot) * sc;
              if (nqn.requires_grad) {
                const double* kl = nkn.value.data() + l * d + h * hd;
                double* gq = nqn.grad.data() + r * d + h * hd;
                for (std::size_t e = 0; e < hd; ++e) gq[e] += g * kl[e];
              }
              if (nkn.requires_grad) {
                double* gk = nkn.grad.data() + l * d + h * hd;
                for (std::size_t e = 0; e < hd; ++e) gk[e] += g * qr[e];
              }
            }
          }
        }
      });
}

std::vector<int> causal_limits(std::size_t n, std::size_t offset) {
  std::vector<int> lims(n);
  for (std::size_t i = 0; i < n; ++i)
    lims[i] = static_cast<int>(offset + i + 1);
  return lims;
}

}  // namespace simtpe
