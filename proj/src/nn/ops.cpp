#include "dgrecon/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dgrecon::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void accumulate(const Var& v, std::span<const double> g) {
  if (!v->requires_grad) return;
  Tensor& dst = v->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Row sums in a fixed order; Eigen's vectorized reductions depend on
// buffer alignment and are not reproducible across allocations.
void add_row_sums(const double* dy, int rows, std::size_t cols, double* out) {
  for (int r = 0; r < rows; ++r) {
    const double* row = dy + static_cast<std::size_t>(r) * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c];
    out[r] += s;
  }
}

int out_extent(int in, const ConvGeometry& g) {
  return (in + 2 * g.padding - g.kernel) / g.stride + 1;
}

// col is (Ci*k^3) x (Do*Ho*Wo), row order (ci, kd, kh, kw).
void im2col3d(const double* x, int ci, int d, int h, int w, const ConvGeometry& g, int od,
              int oh, int ow, double* col) {
  const int k = g.kernel;
  const std::size_t no = static_cast<std::size_t>(od) * oh * ow;
  std::size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * d * h * w;
    for (int kd = 0; kd < k; ++kd) {
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw, ++row) {
          double* out = col + row * no;
          for (int z = 0; z < od; ++z) {
            const int iz = z * g.stride - g.padding + kd;
            for (int y = 0; y < oh; ++y) {
              const int iy = y * g.stride - g.padding + kh;
              double* o = out + (static_cast<std::size_t>(z) * oh + y) * ow;
              if (iz < 0 || iz >= d || iy < 0 || iy >= h) {
                std::fill(o, o + ow, 0.0);
                continue;
              }
              const double* xr = xc + (static_cast<std::size_t>(iz) * h + iy) * w;
              for (int xo = 0; xo < ow; ++xo) {
                const int ix = xo * g.stride - g.padding + kw;
                o[xo] = (ix >= 0 && ix < w) ? xr[ix] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im3d(const double* col, int ci, int d, int h, int w, const ConvGeometry& g, int od,
              int oh, int ow, double* dx) {
  const int k = g.kernel;
  const std::size_t no = static_cast<std::size_t>(od) * oh * ow;
  std::size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    double* xc = dx + static_cast<std::size_t>(c) * d * h * w;
    for (int kd = 0; kd < k; ++kd) {
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw, ++row) {
          const double* in = col + row * no;
          for (int z = 0; z < od; ++z) {
            const int iz = z * g.stride - g.padding + kd;
            if (iz < 0 || iz >= d) continue;
            for (int y = 0; y < oh; ++y) {
              const int iy = y * g.stride - g.padding + kh;
              if (iy < 0 || iy >= h) continue;
              const double* o = in + (static_cast<std::size_t>(z) * oh + y) * ow;
              double* xr = xc + (static_cast<std::size_t>(iz) * h + iy) * w;
              for (int xo = 0; xo < ow; ++xo) {
                const int ix = xo * g.stride - g.padding + kw;
                if (ix >= 0 && ix < w) xr[ix] += o[xo];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var linear(Tape& t, const Var& x, const Var& weight, const Var& bias) {
  const Tensor& X = x->value;
  const Tensor& W = weight->value;
  if (W.rank() != 2) shape_error("linear", "weight must be 2D, got " + shape_str(W.shape()));
  if (X.rank() < 1 || X.dim(0) != W.dim(1)) {
    shape_error("linear", "input " + shape_str(X.shape()) + " has " +
                              std::to_string(X.rank() ? X.dim(0) : 0) +
                              " channels, weight expects " + std::to_string(W.dim(1)));
  }
  if (bias->value.size() != static_cast<std::size_t>(W.dim(0))) {
    shape_error("linear", "bias length " + std::to_string(bias->value.size()) +
                              " != out channels " + std::to_string(W.dim(0)));
  }
  const int co = W.dim(0);
  const int ci = W.dim(1);
  const int n = static_cast<int>(X.size() / ci);
  Shape out_shape = X.shape();
  out_shape[0] = co;
  Tensor Y(out_shape);
  {
    MapMat y(Y.data(), co, n);
    y.noalias() = CMapMat(W.data(), co, ci) * CMapMat(X.data(), ci, n);
    y.colwise() += CMapVec(bias->value.data(), co);
  }
  return t.record(std::move(Y), {x, weight, bias},
                  [co, ci, n](Node& self) {
                    const Var& x = self.inputs[0];
                    const Var& w = self.inputs[1];
                    const Var& b = self.inputs[2];
                    CMapMat dy(self.grad.data(), co, n);
                    if (w->requires_grad) {
                      MapMat(w->grad_buffer().data(), co, ci).noalias() +=
                          dy * CMapMat(x->value.data(), ci, n).transpose();
                    }
                    if (b->requires_grad) {
                      add_row_sums(dy.data(), co, dy.cols(), b->grad_buffer().data());
                    }
                    if (x->requires_grad) {
                      MapMat(x->grad_buffer().data(), ci, n).noalias() +=
                          CMapMat(w->value.data(), co, ci).transpose() * dy;
                    }
                  },
                  "linear");
}

Var conv3d(Tape& t, const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  const Tensor& X = x->value;
  const Tensor& W = weight->value;
  if (X.rank() != 4) shape_error("conv3d", "input must be (C,D,H,W), got " + shape_str(X.shape()));
  if (W.rank() != 5 || W.dim(2) != g.kernel || W.dim(3) != g.kernel || W.dim(4) != g.kernel) {
    shape_error("conv3d", "weight " + shape_str(W.shape()) + " does not match kernel " +
                              std::to_string(g.kernel));
  }
  if (W.dim(1) != X.dim(0)) {
    shape_error("conv3d", "input has " + std::to_string(X.dim(0)) +
                              " channels, weight expects " + std::to_string(W.dim(1)));
  }
  const int ci = X.dim(0), d = X.dim(1), h = X.dim(2), w = X.dim(3);
  const int co = W.dim(0);
  const int od = out_extent(d, g), oh = out_extent(h, g), ow = out_extent(w, g);
  if (od < 1 || oh < 1 || ow < 1) {
    shape_error("conv3d", "input " + shape_str(X.shape()) + " too small for kernel");
  }
  const int kk = ci * g.kernel * g.kernel * g.kernel;
  const int no = od * oh * ow;
  std::vector<double> col(static_cast<std::size_t>(kk) * no);
  im2col3d(X.data(), ci, d, h, w, g, od, oh, ow, col.data());
  Tensor Y({co, od, oh, ow});
  {
    MapMat y(Y.data(), co, no);
    y.noalias() = CMapMat(W.data(), co, kk) * CMapMat(col.data(), kk, no);
    y.colwise() += CMapVec(bias->value.data(), co);
  }
  const bool need = t.grad_enabled() &&
                    (x->requires_grad || weight->requires_grad || bias->requires_grad);
  if (!need) std::vector<double>().swap(col);
  return t.record(
      std::move(Y), {x, weight, bias},
      [col = std::move(col), ci, d, h, w, g, co, od, oh, ow, kk, no](Node& self) {
        const Var& x = self.inputs[0];
        const Var& wt = self.inputs[1];
        const Var& b = self.inputs[2];
        CMapMat dy(self.grad.data(), co, no);
        if (wt->requires_grad) {
          MapMat(wt->grad_buffer().data(), co, kk).noalias() +=
              dy * CMapMat(col.data(), kk, no).transpose();
        }
        if (b->requires_grad) add_row_sums(dy.data(), co, dy.cols(), b->grad_buffer().data());
        if (x->requires_grad) {
          RowMat dcol = CMapMat(wt->value.data(), co, kk).transpose() * dy;
          col2im3d(dcol.data(), ci, d, h, w, g, od, oh, ow, x->grad_buffer().data());
        }
      },
      "conv3d");
}

Var conv2d(Tape& t, const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  const Tensor& X = x->value;
  const Tensor& W = weight->value;
  if (X.rank() != 4) shape_error("conv2d", "input must be (N,C,H,W), got " + shape_str(X.shape()));
  if (W.rank() != 4 || W.dim(2) != g.kernel || W.dim(3) != g.kernel) {
    shape_error("conv2d", "weight " + shape_str(W.shape()) + " does not match kernel " +
                              std::to_string(g.kernel));
  }
  if (W.dim(1) != X.dim(1)) {
    shape_error("conv2d", "input has " + std::to_string(X.dim(1)) +
                              " channels, weight expects " + std::to_string(W.dim(1)));
  }
  const int nb = X.dim(0), ci = X.dim(1), h = X.dim(2), w = X.dim(3);
  const int co = W.dim(0);
  const int oh = out_extent(h, g), ow = out_extent(w, g);
  if (oh < 1 || ow < 1) shape_error("conv2d", "input " + shape_str(X.shape()) + " too small");
  const int kk = ci * g.kernel * g.kernel;
  const int no = oh * ow;
  const std::size_t in_stride = static_cast<std::size_t>(ci) * h * w;
  std::vector<double> cols(static_cast<std::size_t>(nb) * kk * no);
  Tensor Y({nb, co, oh, ow});
  for (int b = 0; b < nb; ++b) {
    double* col = cols.data() + static_cast<std::size_t>(b) * kk * no;
    std::size_t row = 0;
    for (int c = 0; c < ci; ++c) {
      const double* xc = X.data() + b * in_stride + static_cast<std::size_t>(c) * h * w;
      for (int kh = 0; kh < g.kernel; ++kh) {
        for (int kw = 0; kw < g.kernel; ++kw, ++row) {
          double* out = col + row * no;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride - g.padding + kh;
            double* o = out + static_cast<std::size_t>(y) * ow;
            if (iy < 0 || iy >= h) {
              std::fill(o, o + ow, 0.0);
              continue;
            }
            const double* xr = xc + static_cast<std::size_t>(iy) * w;
            for (int xo = 0; xo < ow; ++xo) {
              const int ix = xo * g.stride - g.padding + kw;
              o[xo] = (ix >= 0 && ix < w) ? xr[ix] : 0.0;
            }
          }
        }
      }
    }
    MapMat y(Y.data() + static_cast<std::size_t>(b) * co * no, co, no);
    y.noalias() = CMapMat(W.data(), co, kk) * CMapMat(col, kk, no);
    y.colwise() += CMapVec(bias->value.data(), co);
  }
  const bool need = t.grad_enabled() &&
                    (x->requires_grad || weight->requires_grad || bias->requires_grad);
  if (!need) std::vector<double>().swap(cols);
  return t.record(
      std::move(Y), {x, weight, bias},
      [cols = std::move(cols), nb, ci, h, w, g, co, oh, ow, kk, no, in_stride](Node& self) {
        const Var& x = self.inputs[0];
        const Var& wt = self.inputs[1];
        const Var& bs = self.inputs[2];
        for (int b = 0; b < nb; ++b) {
          CMapMat dy(self.grad.data() + static_cast<std::size_t>(b) * co * no, co, no);
          const double* col = cols.data() + static_cast<std::size_t>(b) * kk * no;
          if (wt->requires_grad) {
            MapMat(wt->grad_buffer().data(), co, kk).noalias() +=
                dy * CMapMat(col, kk, no).transpose();
          }
          if (bs->requires_grad) add_row_sums(dy.data(), co, dy.cols(), bs->grad_buffer().data());
          if (!x->requires_grad) continue;
          RowMat dcol = CMapMat(wt->value.data(), co, kk).transpose() * dy;
          double* dx = x->grad_buffer().data() + b * in_stride;
          std::size_t row = 0;
          for (int c = 0; c < ci; ++c) {
            double* xc = dx + static_cast<std::size_t>(c) * h * w;
            for (int kh = 0; kh < g.kernel; ++kh) {
              for (int kw = 0; kw < g.kernel; ++kw, ++row) {
                const double* in = dcol.data() + row * no;
                for (int y = 0; y < oh; ++y) {
                  const int iy = y * g.stride - g.padding + kh;
                  if (iy < 0 || iy >= h) continue;
                  const double* o = in + static_cast<std::size_t>(y) * ow;
                  double* xr = xc + static_cast<std::size_t>(iy) * w;
                  for (int xo = 0; xo < ow; ++xo) {
                    const int ix = xo * g.stride - g.padding + kw;
                    if (ix >= 0 && ix < w) xr[ix] += o[xo];
                  }
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Var relu(Tape& t, const Var& x) {
  Tensor Y = x->value;
  for (double& v : Y.storage()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(Y), {x},
                  [](Node& self) {
                    const Var& x = self.inputs[0];
                    Tensor& dx = x->grad_buffer();
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      if (x->value[i] > 0.0) dx[i] += self.grad[i];
                    }
                  },
                  "relu");
}

Var sigmoid(Tape& t, const Var& x) {
  Tensor Y = x->value;
  for (double& v : Y.storage()) v = 1.0 / (1.0 + std::exp(-v));
  return t.record(std::move(Y), {x},
                  [](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      const double s = self.value[i];
                      dx[i] += self.grad[i] * s * (1.0 - s);
                    }
                  },
                  "sigmoid");
}

Var upsample_nearest3d(Tape& t, const Var& x, int f) {
  const Tensor& X = x->value;
  if (X.rank() != 4) {
    shape_error("nearest_upsample3d", "input must be (C,D,H,W), got " + shape_str(X.shape()));
  }
  const int c = X.dim(0), d = X.dim(1), h = X.dim(2), w = X.dim(3);
  Tensor Y({c, d * f, h * f, w * f});
  auto src = [=](int ch, int z, int y, int xx) {
    return ((static_cast<std::size_t>(ch) * d + z / f) * h + y / f) * w + xx / f;
  };
  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < d * f; ++z)
      for (int y = 0; y < h * f; ++y)
        for (int xx = 0; xx < w * f; ++xx) Y[o++] = X[src(ch, z, y, xx)];
  return t.record(std::move(Y), {x},
                  [=](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    std::size_t o = 0;
                    for (int ch = 0; ch < c; ++ch)
                      for (int z = 0; z < d * f; ++z)
                        for (int y = 0; y < h * f; ++y)
                          for (int xx = 0; xx < w * f; ++xx) dx[src(ch, z, y, xx)] += self.grad[o++];
                  },
                  "nearest_upsample3d");
}

Var concat(Tape& t, std::span<const Var> xs) {
  if (xs.empty()) shape_error("concat", "no inputs");
  Shape out_shape = xs[0]->value.shape();
  if (out_shape.empty()) shape_error("concat", "scalar inputs");
  int total = 0;
  for (const auto& v : xs) {
    const Shape& s = v->value.shape();
    if (s.size() != out_shape.size() || !std::equal(s.begin() + 1, s.end(), out_shape.begin() + 1)) {
      shape_error("concat", "input " + shape_str(s) + " incompatible with " + shape_str(out_shape));
    }
    total += s[0];
  }
  out_shape[0] = total;
  Tensor Y(out_shape);
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& v : xs) {
    offsets.push_back(off);
    std::copy(v->value.storage().begin(), v->value.storage().end(), Y.storage().begin() + off);
    off += v->value.size();
  }
  return t.record(std::move(Y), {xs.begin(), xs.end()},
                  [offsets](Node& self) {
                    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                      const Var& in = self.inputs[i];
                      accumulate(in, std::span<const double>(self.grad.data() + offsets[i],
                                                             in->value.size()));
                    }
                  },
                  "concat");
}

Var mean(Tape& t, const Var& x) {
  const std::size_t n = x->value.size();
  if (n == 0) shape_error("mean", "empty input");
  double s = 0.0;
  for (double v : x->value.storage()) s += v;
  return t.record(Tensor({1}, s / n), {x},
                  [n](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    const double g = self.grad[0] / n;
                    for (std::size_t i = 0; i < n; ++i) dx[i] += g;
                  },
                  "mean");
}

Var add(Tape& t, const Var& a, const Var& b) {
  if (a->value.shape() != b->value.shape()) {
    shape_error("add", shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  }
  Tensor Y = a->value;
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += b->value[i];
  return t.record(std::move(Y), {a, b},
                  [](Node& self) {
                    accumulate(self.inputs[0], self.grad.values());
                    accumulate(self.inputs[1], self.grad.values());
                  },
                  "add");
}

Var scale(Tape& t, const Var& x, double s) {
  Tensor Y = x->value;
  for (double& v : Y.storage()) v *= s;
  return t.record(std::move(Y), {x},
                  [s](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += s * self.grad[i];
                  },
                  "scale");
}

Var reshape(Tape& t, const Var& x, Shape shape) {
  if (shape_size(shape) != x->value.size()) {
    shape_error("reshape", shape_str(x->value.shape()) + " -> " + shape_str(shape));
  }
  return t.record(x->value.reshaped(std::move(shape)), {x},
                  [](Node& self) { accumulate(self.inputs[0], self.grad.values()); }, "reshape");
}

Var pad3d(Tape& t, const Var& x, std::array<int, 3> dims) {
  const Tensor& X = x->value;
  if (X.rank() != 4) shape_error("pad3d", "input must be (C,D,H,W)");
  const int c = X.dim(0), d = X.dim(1), h = X.dim(2), w = X.dim(3);
  if (dims[0] < d || dims[1] < h || dims[2] < w) shape_error("pad3d", "target smaller than input");
  Tensor Y({c, dims[0], dims[1], dims[2]});
  auto dst = [=](int ch, int z, int y) {
    return ((static_cast<std::size_t>(ch) * dims[0] + z) * dims[1] + y) * dims[2];
  };
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y)
        std::copy_n(X.data() + ((static_cast<std::size_t>(ch) * d + z) * h + y) * w, w,
                    Y.data() + dst(ch, z, y));
  return t.record(std::move(Y), {x},
                  [=](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    for (int ch = 0; ch < c; ++ch)
                      for (int z = 0; z < d; ++z)
                        for (int y = 0; y < h; ++y) {
                          double* o = dx.data() + ((static_cast<std::size_t>(ch) * d + z) * h + y) * w;
                          const double* g = self.grad.data() + dst(ch, z, y);
                          for (int xx = 0; xx < w; ++xx) o[xx] += g[xx];
                        }
                  },
                  "pad3d");
}

Var crop3d(Tape& t, const Var& x, std::array<int, 3> dims) {
  const Tensor& X = x->value;
  if (X.rank() != 4) shape_error("crop3d", "input must be (C,D,H,W)");
  const int c = X.dim(0), d = X.dim(1), h = X.dim(2), w = X.dim(3);
  if (dims[0] > d || dims[1] > h || dims[2] > w) shape_error("crop3d", "target larger than input");
  Tensor Y({c, dims[0], dims[1], dims[2]});
  auto src = [=](int ch, int z, int y) {
    return ((static_cast<std::size_t>(ch) * d + z) * h + y) * w;
  };
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < dims[0]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        std::copy_n(X.data() + src(ch, z, y), dims[2],
                    Y.data() + ((static_cast<std::size_t>(ch) * dims[0] + z) * dims[1] + y) * dims[2]);
  return t.record(std::move(Y), {x},
                  [=](Node& self) {
                    Tensor& dx = self.inputs[0]->grad_buffer();
                    for (int ch = 0; ch < c; ++ch)
                      for (int z = 0; z < dims[0]; ++z)
                        for (int y = 0; y < dims[1]; ++y) {
                          const double* g =
                              self.grad.data() +
                              ((static_cast<std::size_t>(ch) * dims[0] + z) * dims[1] + y) * dims[2];
                          double* o = dx.data() + src(ch, z, y);
                          for (int xx = 0; xx < dims[2]; ++xx) o[xx] += g[xx];
                        }
                  },
                  "crop3d");
}

Var gather(Tape& t, const Var& maps, const GatherPlan& plan, int channels, int spatial_size) {
  const std::size_t per_batch = static_cast<std::size_t>(channels) * spatial_size;
  if (per_batch == 0 || maps->value.size() % per_batch != 0) {
    shape_error("gather", "maps " + shape_str(maps->value.shape()) + " not divisible into " +
                              std::to_string(channels) + " x " + std::to_string(spatial_size));
  }
  const std::size_t batches = maps->value.size() / per_batch;
  for (const auto& tap : plan.taps) {
    if (tap.batch < 0 || static_cast<std::size_t>(tap.batch) >= batches || tap.spatial < 0 ||
        tap.spatial >= spatial_size) {
      shape_error("gather", "plan references a sample outside the maps");
    }
  }
  Tensor Y({channels, plan.outputs},
           apply_gather(plan, maps->value.values(), channels, spatial_size));
  // the plan is copied into the closure; plans are small relative to activations
  return t.record(std::move(Y), {maps},
                  [plan, channels, spatial_size, per_batch](Node& self) {
                    Tensor& dm = self.inputs[0]->grad_buffer();
                    for (int o = 0; o < plan.outputs; ++o) {
                      for (std::size_t k = plan.offsets[o]; k < plan.offsets[o + 1]; ++k) {
                        const GatherTap& tap = plan.taps[k];
                        double* base = dm.data() + tap.batch * per_batch + tap.spatial;
                        for (int c = 0; c < channels; ++c) {
                          base[static_cast<std::size_t>(c) * spatial_size] +=
                              tap.weight * self.grad[static_cast<std::size_t>(c) * plan.outputs + o];
                        }
                      }
                    }
                  },
                  "gather");
}

double log_transform(double x) {
  if (x > 0) return std::log1p(x);
  if (x < 0) return -std::log1p(-x);
  return 0.0;
}

Var log_l1_loss(Tape& t, const Var& pred, std::span<const double> target) {
  const std::size_t n = pred->value.size();
  if (n != target.size()) {
    shape_error("log_l1_loss", std::to_string(n) + " predictions vs " +
                                   std::to_string(target.size()) + " targets");
  }
  if (n == 0) shape_error("log_l1_loss", "no supervision points");
  double s = 0.0;
  std::vector<double> dir(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred->value[i];
    const double diff = log_transform(p) - log_transform(target[i]);
    s += std::abs(diff);
    dir[i] = ((diff > 0) - (diff < 0)) / (std::abs(p) + 1.0);
  }
  return t.record(Tensor({1}, s / n), {pred},
                  [dir = std::move(dir), n](Node& self) {
                    Tensor& dp = self.inputs[0]->grad_buffer();
                    const double g = self.grad[0] / n;
                    for (std::size_t i = 0; i < n; ++i) dp[i] += g * dir[i];
                  },
                  "log_l1_loss");
}

Var bce_with_logits(Tape& t, const Var& logits, std::span<const double> target) {
  constexpr double kEps = 1e-7;
  const std::size_t n = logits->value.size();
  if (n != target.size()) {
    shape_error("bce_with_logits", std::to_string(n) + " logits vs " +
                                       std::to_string(target.size()) + " targets");
  }
  if (n == 0) shape_error("bce_with_logits", "empty input");
  double s = 0.0;
  std::vector<double> dz(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = 1.0 / (1.0 + std::exp(-logits->value[i]));
    const double p = std::clamp(raw, kEps, 1.0 - kEps);
    const double y = target[i];
    s += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    dz[i] = (raw > kEps && raw < 1.0 - kEps) ? (p - y) : 0.0;
  }
  return t.record(Tensor({1}, s / n), {logits},
                  [dz = std::move(dz), n](Node& self) {
                    Tensor& d = self.inputs[0]->grad_buffer();
                    const double g = self.grad[0] / n;
                    for (std::size_t i = 0; i < n; ++i) d[i] += g * dz[i];
                  },
                  "bce_with_logits");
}

}  // namespace dgrecon::nn
