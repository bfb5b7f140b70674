#include "lobg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lobg/errors.hpp"

namespace lobg {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() > 2) throw InvalidInput(std::string(op) + ": expected rank <= 2, got " + shape_str(a.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
      C[i * n + j] += s;
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
void gemm_tn(const double* A, const double* B, double* C, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a = A + p * m;
    const double* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i];
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= s;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += s * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), c = a.cols();
  if (b.numel() != c) {
    throw InvalidInput("add_row: row of " + std::to_string(b.numel()) + " values for " +
                       std::to_string(c) + " columns");
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return make_result("add_row", a.shape(), std::move(out), {a.node(), b.node()}, [r, c](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw InvalidInput("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw InvalidInput("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul", matrix_shape(m, n), std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& pa = self.parents[0];
                       auto& pb = self.parents[1];
                       if (pa->requires_grad) gemm_nt(self.grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
                       if (pb->requires_grad) gemm_tn(pa->value.data(), self.grad.data(), pb->grad.data(), m, k, n);
                     });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw InvalidInput("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul_nt", matrix_shape(m, n), std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& pa = self.parents[0];
                       auto& pb = self.parents[1];
                       // dA = dC B, dB = dC^T A
                       if (pa->requires_grad) gemm_nn(self.grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
                       if (pb->requires_grad) gemm_tn(self.grad.data(), pa->value.data(), pb->grad.data(), m, n, k);
                     });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw InvalidInput("matmul_tn: inner dimensions differ " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_tn(a.values().data(), b.values().data(), out.data(), k, m, n);
  return make_result("matmul_tn", matrix_shape(m, n), std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& pa = self.parents[0];
                       auto& pb = self.parents[1];
                       // dA[k,m] = B dC^T, dB[k,n] = A dC
                       if (pa->requires_grad) gemm_nt(pb->value.data(), self.grad.data(), pa->grad.data(), k, n, m);
                       if (pb->requires_grad) gemm_nn(pa->value.data(), self.grad.data(), pb->grad.data(), k, m, n);
                     });
}

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  return make_result("sum", {}, {s}, {a.node()}, [](Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0];
    for (auto& v : p->grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw InvalidInput("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor log_floor(const Tensor& a, double floor) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], floor));
  return make_result("log", a.shape(), std::move(out), {a.node()}, [floor](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p->value[i] > floor) p->grad[i] += self.grad[i] / p->value[i];
    }
  });
}

Tensor abs_elem(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(av[i]);
  return make_result("abs", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = p->value[i];
      if (x > 0) p->grad[i] += self.grad[i];
      else if (x < 0) p->grad[i] -= self.grad[i];
    }
  });
}

Tensor sqrt_elem(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (av[i] < 0) throw InvalidInput("sqrt of negative value");
    out[i] = std::sqrt(av[i]);
  }
  return make_result("sqrt", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (self.value[i] > 0) p->grad[i] += self.grad[i] * 0.5 / self.value[i];
    }
  });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.numel());
  std::vector<double> th(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    th[i] = std::tanh(kC * (x + kA * x * x * x));
    out[i] = 0.5 * x * (1.0 + th[i]);
  }
  return make_result("gelu", a.shape(), std::move(out), {a.node()}, [th = std::move(th)](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = p->value[i];
      const double t = th[i];
      const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      p->grad[i] += self.grad[i] * d;
    }
  });
}

Tensor softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0)) throw InvalidParameter("softmax: temperature must be > 0");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (c == 0) throw InvalidInput("softmax: empty last axis");
  const auto lv = logits.values();
  std::vector<double> out(lv.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = lv.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp((x[j] - mx) / temperature);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return make_result("softmax", logits.shape(), std::move(out), {logits.node()},
                     [r, c, temperature](Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < r; ++i) {
                         const double* y = self.value.data() + i * c;
                         const double* g = self.grad.data() + i * c;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
                         for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += y[j] * (g[j] - dot) / temperature;
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c) throw InvalidInput("layer_norm: gain/bias width mismatch");
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  std::vector<double> out(xv.size()), xhat(xv.size()), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xi[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          const double* g = self.grad.data() + i * c;
          const double* xh = xhat.data() + i * c;
          if (pg->requires_grad)
            for (std::size_t j = 0; j < c; ++j) pg->grad[j] += g[j] * xh[j];
          if (pb->requires_grad)
            for (std::size_t j = 0; j < c; ++j) pb->grad[j] += g[j];
          if (px->requires_grad) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[j] * pg->value[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            m1 *= inv_c;
            m2 *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[j] * pg->value[j];
              px->grad[i * c + j] += inv_std[i] * (dxh - m1 - xh[j] * m2);
            }
          }
        }
      });
}

AttentionResult attention(const Tensor& qkv, std::size_t heads) {
  const std::size_t T = qkv.rows(), w = qkv.cols();
  if (heads == 0 || w % 3 != 0 || (w / 3) % heads != 0) {
    throw InvalidInput("attention: qkv width " + std::to_string(w) + " incompatible with " +
                       std::to_string(heads) + " heads");
  }
  const std::size_t d = w / 3, dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto x = qkv.values();
  std::vector<double> probs(heads * T * T);
  std::vector<double> out(T * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    double* P = probs.data() + h * T * T;
    for (std::size_t i = 0; i < T; ++i) {
      double* row = P + i * T;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < T; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += x[i * w + qo + e] * x[j * w + ko + e];
        row[j] = s * sc;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (std::size_t j = 0; j < T; ++j) row[j] /= z;
      for (std::size_t j = 0; j < T; ++j) {
        const double pij = row[j];
        for (std::size_t e = 0; e < dh; ++e) out[i * d + qo + e] += pij * x[j * w + vo + e];
      }
    }
  }
  AttentionResult res;
  res.probs = probs;
  res.out = make_result(
      "attention", matrix_shape(T, d), std::move(out), {qkv.node()},
      [T, w, d, dh, heads, sc, probs = std::move(probs)](Node& self) {
        auto& p = self.parents[0];
        const double* x = p->value.data();
        double* gx = p->grad.data();
        const double* go = self.grad.data();
        std::vector<double> dP(T);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
          const double* P = probs.data() + h * T * T;
          for (std::size_t i = 0; i < T; ++i) {
            const double* row = P + i * T;
            double dot = 0.0;
            for (std::size_t j = 0; j < T; ++j) {
              double s = 0.0;
              for (std::size_t e = 0; e < dh; ++e) s += go[i * d + qo + e] * x[j * w + vo + e];
              dP[j] = s;
              dot += s * row[j];
              // dV[j] += P[i,j] dO[i]
              for (std::size_t e = 0; e < dh; ++e) gx[j * w + vo + e] += row[j] * go[i * d + qo + e];
            }
            for (std::size_t j = 0; j < T; ++j) {
              const double ds = row[j] * (dP[j] - dot) * sc;
              if (ds == 0.0) continue;
              for (std::size_t e = 0; e < dh; ++e) {
                gx[i * w + qo + e] += ds * x[j * w + ko + e];
                gx[j * w + ko + e] += ds * x[i * w + qo + e];
              }
            }
          }
        }
      });
  return res;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<NodePtr> parents;
  for (const auto& t : parts) {
    if (t.cols() != c) throw InvalidInput("concat_rows: column mismatch");
    r += t.rows();
    parents.push_back(t.node());
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const auto& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
  return make_result("concat_rows", matrix_shape(r, c), std::move(out), std::move(parents), [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad)
        for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[off + i];
      off += n;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t c = a.cols();
  if (begin + count > a.rows()) throw InvalidInput("slice_rows: range out of bounds");
  const auto av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          av.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return make_result("slice_rows", matrix_shape(count, c), std::move(out), {a.node()},
                     [begin, c](Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[begin * c + i] += self.grad[i];
                     });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  const std::size_t c = table.cols(), n = table.rows();
  std::vector<double> out(ids.size() * c);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) throw InvalidInput("gather_rows: index " + std::to_string(ids[i]) + " out of range");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return make_result("gather_rows", matrix_shape(ids.size(), c), std::move(out), {table.node()},
                     [ids, c](Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < ids.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j) p->grad[ids[i] * c + j] += self.grad[i * c + j];
                     });
}

Tensor normalize_rows(const Tensor& a, double eps) {
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.values();
  std::vector<double> out(av.size()), norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
    norms[i] = std::sqrt(s);
    const double den = norms[i] + eps;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] / den;
  }
  return make_result("normalize_rows", a.shape(), std::move(out), {a.node()},
                     [r, c, eps, norms = std::move(norms)](Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < r; ++i) {
                         const double n = norms[i];
                         const double den = n + eps;
                         const double* x = p->value.data() + i * c;
                         const double* g = self.grad.data() + i * c;
                         double gx = 0.0;
                         for (std::size_t j = 0; j < c; ++j) gx += g[j] * x[j];
                         // d/dx [x / (|x| + eps)] = I/den - x x^T / (|x| den^2)
                         const double coef = n > 0 ? gx / (n * den * den) : 0.0;
                         for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += g[j] / den - coef * x[j];
                       }
                     });
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw InvalidInput("cosine_sim: length mismatch");
  const auto av = a.values(), bv = b.values();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na == 0.0 || nb == 0.0) throw DegenerateVector("cosine_sim: zero-norm input");
  const double den = na * nb + 1e-12;
  const double cs = ab / den;
  return make_result("cosine_sim", {}, {cs}, {a.node(), b.node()}, [na, nb, den, cs](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const double g = self.grad[0];
    const double* x = pa->value.data();
    const double* y = pb->value.data();
    const std::size_t n = pa->value.size();
    // d(ab/den)/da = b/den - cs * (nb/na) a / den
    if (pa->requires_grad)
      for (std::size_t i = 0; i < n; ++i) pa->grad[i] += g * (y[i] / den - cs * nb / na * x[i] / den);
    if (pb->requires_grad)
      for (std::size_t i = 0; i < n; ++i) pb->grad[i] += g * (x[i] / den - cs * na / nb * y[i] / den);
  });
}

Tensor pick_per_row(const Tensor& a, const std::vector<std::size_t>& cols) {
  const std::size_t r = a.rows(), c = a.cols();
  if (cols.size() != r) throw InvalidInput("pick_per_row: need one column index per row");
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (cols[i] >= c) throw InvalidInput("pick_per_row: column index out of range");
    out[i] = a.values()[i * c + cols[i]];
  }
  return make_result("pick_per_row", {r}, std::move(out), {a.node()}, [cols, c](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < cols.size(); ++i) p->grad[i * c + cols[i]] += self.grad[i];
  });
}

}  // namespace lobg
