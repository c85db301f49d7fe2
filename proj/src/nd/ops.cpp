#include "medpred/nd/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "medpred/error.hpp"

namespace medpred::nd {

namespace {

void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  require(t.rank() == rank, ErrorCode::ShapeMismatch,
          std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
              shape_string(t.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// dst[i] += a * src[i]
inline void axpy(double* dst, const double* src, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

template <typename Fn>
Var unary(Var x, Fn&& fwd_and_deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  Tensor deriv(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    auto [y, d] = fwd_and_deriv(xv[i]);
    out[i] = y;
    deriv[i] = d;
  }
  return x.graph->record(std::move(out), {x}, [deriv = std::move(deriv)](Graph& g, std::size_t self) {
    Tensor* gx = g.grad_sink(g.input(self, 0));
    if (!gx) return;
    const Tensor& gy = g.grad(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * deriv[i];
  });
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_name(std::string_view name) {
  for (Activation a : {Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh}) {
    if (activation_name(a) == name) return a;
  }
  throw Error(ErrorCode::Config, "unknown activation '" + std::string(name) + "'");
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul lhs");
  require_rank(bv, 2, "matmul rhs");
  const std::size_t m = av.dim(0), p = av.dim(1), q = bv.dim(1);
  require(bv.dim(0) == p, ErrorCode::ShapeMismatch,
          "matmul " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
  Tensor out({m, q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      axpy(&out.storage()[i * q], &bv.storage()[k * q], av[i * p + k], q);
    }
  }
  return a.graph->record(std::move(out), {a, b}, [m, p, q](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (Tensor* ga = g.grad_sink(ia)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < p; ++k)
          (*ga)[i * p + k] += dot(&gy.storage()[i * q], &bv.storage()[k * q], q);
    }
    if (Tensor* gb = g.grad_sink(ib)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < p; ++k)
          axpy(&gb->storage()[k * q], &gy.storage()[i * q], av[i * p + k], q);
    }
  });
}

namespace {

Var linear_impl(Var x, Var w, const Var* bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  require(wv.dim(1) == in, ErrorCode::ShapeMismatch,
          "linear " + shape_string(xv.shape()) + " with weight " + shape_string(wv.shape()));
  if (bias) {
    require(bias->value().size() == out_dim, ErrorCode::ShapeMismatch, "linear bias size");
  }
  Tensor out({batch, out_dim});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      out[b * out_dim + o] = dot(&xv.storage()[b * in], &wv.storage()[o * in], in) +
                             (bias ? bias->value()[o] : 0.0);
    }
  }
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return x.graph->record(std::move(out), std::move(inputs),
                         [batch, in, out_dim, has_bias](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const std::size_t ix = g.input(self, 0), iw = g.input(self, 1);
    const Tensor& xv = g.value(ix);
    const Tensor& wv = g.value(iw);
    if (Tensor* gx = g.grad_sink(ix)) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o)
          axpy(&gx->storage()[b * in], &wv.storage()[o * in], gy[b * out_dim + o], in);
    }
    if (Tensor* gw = g.grad_sink(iw)) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o)
          axpy(&gw->storage()[o * in], &xv.storage()[b * in], gy[b * out_dim + o], in);
    }
    if (has_bias) {
      if (Tensor* gb = g.grad_sink(g.input(self, 2))) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_dim; ++o) (*gb)[o] += gy[b * out_dim + o];
      }
    }
  });
}

}  // namespace

Var linear(Var x, Var w, Var bias) { return linear_impl(x, w, &bias); }
Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }

Var add(Var a, Var b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph->record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* gi = g.grad_sink(g.input(self, k))) {
        for (std::size_t i = 0; i < gy.size(); ++i) (*gi)[i] += gy[i];
      }
    }
  });
}

Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const std::size_t f = b.value().size();
  require(xv.rank() >= 1 && xv.shape().back() == f, ErrorCode::ShapeMismatch,
          "add_bias " + shape_string(xv.shape()) + " + " + shape_string(b.shape()));
  Tensor out = xv;
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % f];
  return x.graph->record(std::move(out), {x, b}, [f](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (Tensor* gx = g.grad_sink(g.input(self, 0))) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
    }
    if (Tensor* gb = g.grad_sink(g.input(self, 1))) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i % f] += gy[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return a.graph->record(std::move(out), {a}, [c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (Tensor* ga = g.grad_sink(g.input(self, 0))) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += c * gy[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph->record(Tensor::scalar(s), {a}, [](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    if (Tensor* ga = g.grad_sink(g.input(self, 0))) {
      for (double& v : ga->data()) v += gy;
    }
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.graph->record(Tensor::scalar(s), {a}, [](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    if (Tensor* ga = g.grad_sink(g.input(self, 0))) {
      const Tensor& av = g.value(g.input(self, 0));
      for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += 2.0 * gy * av[i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph->record(std::move(out), {a}, [](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (Tensor* ga = g.grad_sink(g.input(self, 0))) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::EmptyInput, "concat_cols of nothing");
  const std::size_t rows = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols part");
    require(p.value().dim(0) == rows, ErrorCode::ShapeMismatch, "concat_cols row count");
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&pv.storage()[r * widths[k]], widths[k], &out.storage()[r * total + off]);
    }
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph->record(std::move(out), std::move(inputs),
                                [rows, total, widths](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* gp = g.grad_sink(g.input(self, k))) {
        for (std::size_t r = 0; r < rows; ++r) {
          axpy(&gp->storage()[r * widths[k]], &gy.storage()[r * total + off], 1.0, widths[k]);
        }
      }
      off += widths[k];
    }
  });
}

Var relu(Var x) {
  return unary(x, [](double v) { return std::pair{v > 0 ? v : 0.0, v > 0 ? 1.0 : 0.0}; });
}

Var sigmoid(Var x) {
  return unary(x, [](double v) {
    const double s = stable_sigmoid(v);
    return std::pair{s, s * (1.0 - s)};
  });
}

Var tanh(Var x) {
  return unary(x, [](double v) {
    const double t = std::tanh(v);
    return std::pair{t, 1.0 - t * t};
  });
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return tanh(x);
  }
  return x;
}

Var dropout(Var x, double keep_rate, Mode mode, Rng& rng) {
  require(keep_rate > 0.0 && keep_rate <= 1.0, ErrorCode::InvalidRate,
          "keep rate " + std::to_string(keep_rate) + " outside (0, 1]");
  if (mode == Mode::Infer || keep_rate == 1.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double inv = 1.0 / keep_rate;
  for (double& m : mask.data()) m = rng.bernoulli(keep_rate) ? inv : 0.0;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return x.graph->record(std::move(out), {x}, [mask = std::move(mask)](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (Tensor* gx = g.grad_sink(g.input(self, 0))) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * mask[i];
    }
  });
}

BatchNormState BatchNormState::for_features(std::size_t features) {
  BatchNormState s;
  s.running_mean = Tensor({features}, 0.0);
  s.running_var = Tensor({features}, 1.0);
  return s;
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode,
               std::span<const std::uint8_t> row_mask) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 2, ErrorCode::ShapeMismatch, "batch_norm expects rank >= 2");
  const std::size_t f = xv.shape().back();
  const std::size_t rows = xv.size() / f;
  require(gamma.value().size() == f && beta.value().size() == f &&
              state.running_mean.size() == f && state.running_var.size() == f,
          ErrorCode::ShapeMismatch, "batch_norm parameter sizes");
  require(row_mask.empty() || row_mask.size() == rows, ErrorCode::ShapeMismatch,
          "batch_norm mask length");
  auto valid = [&](std::size_t r) { return row_mask.empty() || row_mask[r] != 0; };

  std::vector<double> mean(f, 0.0), inv_std(f, 0.0);
  std::size_t count = 0;
  if (mode == Mode::Train) {
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      ++count;
      axpy(mean.data(), &xv.storage()[r * f], 1.0, f);
    }
    require(count >= 2, ErrorCode::BatchTooSmall,
            "batch norm needs >= 2 rows in training, got " + std::to_string(count));
    for (double& m : mean) m /= static_cast<double>(count);
    std::vector<double> var(f, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      for (std::size_t j = 0; j < f; ++j) {
        const double d = xv[r * f + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < f; ++j) {
      var[j] /= static_cast<double>(count);
      inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
      state.running_mean[j] = state.momentum * state.running_mean[j] + (1.0 - state.momentum) * mean[j];
      state.running_var[j] = state.momentum * state.running_var[j] + (1.0 - state.momentum) * var[j];
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      mean[j] = state.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(std::max(state.running_var[j], 0.0) + state.eps);
    }
  }

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t i = r * f + j;
      xhat[i] = (xv[i] - mean[j]) * inv_std[j];
      out[i] = gv[j] * xhat[i] + bv[j];
    }
  }

  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
  const bool train = mode == Mode::Train;
  return x.graph->record(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), mask = std::move(mask), f, rows,
       count, train](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& gv = g.value(g.input(self, 1));
        auto valid = [&](std::size_t r) { return mask.empty() || mask[r] != 0; };
        std::vector<double> sum_g(f, 0.0), sum_g_xhat(f, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!valid(r)) continue;
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            sum_g[j] += gy[i];
            sum_g_xhat[j] += gy[i] * xhat[i];
          }
        }
        if (Tensor* gg = g.grad_sink(g.input(self, 1))) {
          for (std::size_t j = 0; j < f; ++j) (*gg)[j] += sum_g_xhat[j];
        }
        if (Tensor* gb = g.grad_sink(g.input(self, 2))) {
          for (std::size_t j = 0; j < f; ++j) (*gb)[j] += sum_g[j];
        }
        Tensor* gx = g.grad_sink(g.input(self, 0));
        if (!gx) return;
        const double m = static_cast<double>(count);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!valid(r)) continue;
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            if (train) {
              (*gx)[i] += gv[j] * inv_std[j] / m *
                          (m * gy[i] - sum_g[j] - xhat[i] * sum_g_xhat[j]);
            } else {
              (*gx)[i] += gy[i] * gv[j] * inv_std[j];
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const std::int32_t> indices, std::size_t batch,
              std::size_t length) {
  const Tensor& tv = table.value();
  require_rank(tv, 2, "embedding table");
  require(indices.size() == batch * length, ErrorCode::ShapeMismatch, "embedding index count");
  const std::size_t v = tv.dim(0), h = tv.dim(1);
  Tensor out({batch, length, h});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    require(idx >= 0 && static_cast<std::size_t>(idx) < v, ErrorCode::ShapeMismatch,
            "token index " + std::to_string(idx) + " outside vocabulary of " + std::to_string(v));
    std::copy_n(&tv.storage()[static_cast<std::size_t>(idx) * h], h, &out.storage()[i * h]);
  }
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return table.graph->record(std::move(out), {table}, [idx = std::move(idx), h](Graph& g, std::size_t self) {
    Tensor* gt = g.grad_sink(g.input(self, 0));
    if (!gt) return;
    const Tensor& gy = g.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      axpy(&gt->storage()[static_cast<std::size_t>(idx[i]) * h], &gy.storage()[i * h], 1.0, h);
    }
  });
}

std::vector<std::uint8_t> conv_valid_mask(std::span<const std::size_t> lengths,
                                          std::size_t positions, std::size_t n) {
  std::vector<std::uint8_t> mask(lengths.size() * positions, 0);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t p = 0; p < positions && p + n <= lengths[b]; ++p) mask[b * positions + p] = 1;
  }
  return mask;
}

Var conv_bank(Var D, Var W, Var b, std::span<const std::size_t> lengths) {
  const Tensor& dv = D.value();
  const Tensor& wv = W.value();
  require_rank(dv, 3, "conv input");
  require_rank(wv, 3, "conv filters");
  const std::size_t batch = dv.dim(0), len = dv.dim(1), h = dv.dim(2);
  const std::size_t filters = wv.dim(0), n = wv.dim(1);
  require(wv.dim(2) == h, ErrorCode::ShapeMismatch,
          "filters " + shape_string(wv.shape()) + " vs input " + shape_string(dv.shape()));
  require(b.value().size() == filters, ErrorCode::ShapeMismatch, "conv bias size");
  require(lengths.size() == batch, ErrorCode::ShapeMismatch, "conv lengths size");
  require(len >= n, ErrorCode::WindowTooLarge,
          "window " + std::to_string(n) + " exceeds sequence length " + std::to_string(len));
  const std::size_t positions = len - n + 1;
  const std::size_t span = n * h;

  std::vector<std::size_t> valid(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    valid[i] = lengths[i] >= n ? std::min(lengths[i] - n + 1, positions) : 0;
  }

  // Window p of example i is the contiguous run D[i, p:p+n, :], so the
  // unrolled windows are a strided view of D and each example is one GEMM.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  const Eigen::Map<const RowMat> wm(wv.storage().data(), Eigen::Index(filters), Eigen::Index(span));
  const Eigen::Map<const Eigen::RowVectorXd> bias(b.value().storage().data(), Eigen::Index(filters));

  Tensor out({batch, positions, filters});
  for (std::size_t i = 0; i < batch; ++i) {
    if (valid[i] == 0) continue;
    const Strided x(&dv.storage()[i * len * h], Eigen::Index(valid[i]), Eigen::Index(span),
                    Eigen::OuterStride<>(Eigen::Index(h)));
    Eigen::Map<RowMat> o(&out.storage()[i * positions * filters], Eigen::Index(valid[i]), Eigen::Index(filters));
    o.noalias() = x * wm.transpose();
    o.rowwise() += bias;
  }

  return D.graph->record(
      std::move(out), {D, W, b},
      [valid = std::move(valid), batch, len, h, positions, filters, span](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const std::size_t id = g.input(self, 0), iw = g.input(self, 1), ib = g.input(self, 2);
        const Tensor& dv = g.value(id);
        const Tensor& wv = g.value(iw);
        Tensor* gd = g.grad_sink(id);
        Tensor* gw = g.grad_sink(iw);
        Tensor* gb = g.grad_sink(ib);
        const Eigen::Map<const RowMat> wm(wv.storage().data(), Eigen::Index(filters), Eigen::Index(span));
        RowMat gx;
        for (std::size_t i = 0; i < batch; ++i) {
          if (valid[i] == 0) continue;
          const auto rows = Eigen::Index(valid[i]);
          const Eigen::Map<const RowMat> gi(&gy.storage()[i * positions * filters], rows, Eigen::Index(filters));
          if (gb) {
            Eigen::Map<Eigen::RowVectorXd>(gb->storage().data(), Eigen::Index(filters)) += gi.colwise().sum();
          }
          if (gw) {
            const Strided x(&dv.storage()[i * len * h], rows, Eigen::Index(span), Eigen::OuterStride<>(Eigen::Index(h)));
            Eigen::Map<RowMat>(gw->storage().data(), Eigen::Index(filters), Eigen::Index(span)).noalias() +=
                gi.transpose() * x;
          }
          if (gd) {
            // windows overlap, so scatter-add the per-window gradients
            gx.noalias() = gi * wm;
            double* base = &gd->storage()[i * len * h];
            for (Eigen::Index p = 0; p < rows; ++p) axpy(base + p * Eigen::Index(h), gx.row(p).data(), 1.0, span);
          }
        }
      });
}

Var conv_window(Var D, Var W, Var b, Activation act) {
  const Tensor& dv = D.value();
  const Tensor& wv = W.value();
  require_rank(dv, 2, "conv_window input");
  require_rank(wv, 2, "conv_window filter");
  require(b.value().size() == 1, ErrorCode::ShapeMismatch, "conv_window bias must be scalar");
  const std::size_t l = dv.dim(0), h = dv.dim(1), n = wv.dim(0);
  require(l >= n, ErrorCode::WindowTooLarge,
          "window " + std::to_string(n) + " exceeds note length " + std::to_string(l));
  const std::size_t lengths[] = {l};
  Var c = conv_bank(reshape(D, {1, l, h}), reshape(W, {1, n, wv.dim(1)}), b, lengths);
  return activate(reshape(c, {l - n + 1}), act);
}

Var masked_max_pool(Var C, std::span<const std::size_t> valid, std::vector<std::size_t>* argmax) {
  const Tensor& cv = C.value();
  require_rank(cv, 3, "max pool input");
  const std::size_t batch = cv.dim(0), positions = cv.dim(1), filters = cv.dim(2);
  require(valid.size() == batch, ErrorCode::ShapeMismatch, "max pool valid-count size");
  Tensor out({batch, filters});
  std::vector<std::size_t> arg(batch * filters, 0);
  for (std::size_t i = 0; i < batch; ++i) {
    require(valid[i] >= 1 && valid[i] <= positions, ErrorCode::EmptyInput,
            "max pool over " + std::to_string(valid[i]) + " positions");
    for (std::size_t f = 0; f < filters; ++f) {
      std::size_t best = 0;
      double best_v = cv[(i * positions) * filters + f];
      for (std::size_t p = 1; p < valid[i]; ++p) {
        const double v = cv[(i * positions + p) * filters + f];
        if (v > best_v) {
          best_v = v;
          best = p;
        }
      }
      out[i * filters + f] = best_v;
      arg[i * filters + f] = best;
    }
  }
  if (argmax) *argmax = arg;
  return C.graph->record(std::move(out), {C},
                         [arg = std::move(arg), positions, filters](Graph& g, std::size_t self) {
    Tensor* gc = g.grad_sink(g.input(self, 0));
    if (!gc) return;
    const Tensor& gy = g.grad(self);
    for (std::size_t k = 0; k < arg.size(); ++k) {
      const std::size_t i = k / filters, f = k % filters;
      (*gc)[(i * positions + arg[k]) * filters + f] += gy[k];
    }
  });
}

PoolResult max_pool(Var c) {
  const Tensor& cv = c.value();
  require_rank(cv, 1, "max_pool input");
  require(cv.size() >= 1, ErrorCode::EmptyInput, "max_pool of empty vector");
  const std::size_t valid[] = {cv.size()};
  std::vector<std::size_t> arg;
  Var pooled = masked_max_pool(reshape(c, {1, cv.size(), 1}), valid, &arg);
  return {reshape(pooled, {1}), arg[0]};
}

Var bce_with_logits(Var logits, const Tensor& labels) {
  const Tensor& yv = logits.value();
  require(yv.shape() == labels.shape(), ErrorCode::ShapeMismatch,
          "logits " + shape_string(yv.shape()) + " vs labels " + shape_string(labels.shape()));
  require(yv.rank() == 1 || yv.rank() == 2, ErrorCode::ShapeMismatch, "bce expects [k] or [B x k]");
  const std::size_t rows = yv.rank() == 1 ? 1 : yv.dim(0);
  require(rows > 0, ErrorCode::EmptyBatch, "bce over empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double y = yv[i], l = labels[i];
    require(l == 0.0 || l == 1.0, ErrorCode::Format, "labels must be 0 or 1");
    total += std::max(y, 0.0) - y * l + std::log1p(std::exp(-std::abs(y)));
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return logits.graph->record(Tensor::scalar(total * inv_rows), {logits},
                              [labels, inv_rows](Graph& g, std::size_t self) {
    Tensor* gy = g.grad_sink(g.input(self, 0));
    if (!gy) return;
    const double up = g.grad(self)[0] * inv_rows;
    const Tensor& yv = g.value(g.input(self, 0));
    for (std::size_t i = 0; i < yv.size(); ++i) (*gy)[i] += up * (stable_sigmoid(yv[i]) - labels[i]);
  });
}

}  // namespace medpred::nd
