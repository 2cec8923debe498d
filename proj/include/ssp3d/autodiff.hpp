#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ssp3d/errors.hpp"
#include "ssp3d/tensor.hpp"

namespace ssp3d {

// Reverse-mode tape. Vars are node indices into the tape; the graph is a DAG
// built in forward order, so reverse iteration is a valid topological order.
using Var = int;

class Tape {
 public:
  Var leaf(Tensor t, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(t), {}, nullptr, requires_grad});
    return static_cast<Var>(nodes_.size() - 1);
  }

  const Tensor& val(Var v) const { return nodes_[v].value; }
  Tensor& grad(Var v) { return nodes_[v].grad; }

  // ----- elementwise -----

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Tensor out = nodes_[a].value;
    const auto& bd = nodes_[b].value.data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Tensor& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Tensor out = nodes_[a].value;
    const auto& bd = nodes_[b].value.data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Tensor& g) {
      accumulate(a, g);
      Tensor ng = g;
      for (auto& x : ng.data) x = -x;
      accumulate(b, ng);
    });
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tensor out = nodes_[a].value;
    const auto& bd = nodes_[b].value.data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Tensor& g) {
      Tensor ga = g, gb = g;
      const auto& av = nodes_[a].value.data;
      const auto& bv = nodes_[b].value.data;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] *= bv[i];
        gb.data[i] *= av[i];
      }
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  Var scale(Var a, double c) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x *= c;
    return unary_or_binary(std::move(out), a, -1, [this, a, c](const Tensor& g) {
      Tensor ga = g;
      for (auto& x : ga.data) x *= c;
      accumulate(a, ga);
    });
  }

  Var add_const(Var a, double c) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x += c;
    return unary_or_binary(std::move(out), a, -1,
                           [this, a](const Tensor& g) { accumulate(a, g); });
  }

  Var elu(Var a) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x = x > 0.0 ? x : std::expm1(x);
    return unary_or_binary(std::move(out), a, -1, [this, a](const Tensor& g) {
      Tensor ga = g;
      const auto& av = nodes_[a].value.data;
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] *= av[i] > 0.0 ? 1.0 : std::exp(av[i]);
      accumulate(a, ga);
    });
  }

  Var sigmoid(Var a) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    const Var r = leaf_like(out);
    const Tensor saved = out;
    set_node(r, std::move(out), a, -1, [this, a, saved](const Tensor& g) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] *= saved.data[i] * (1.0 - saved.data[i]);
      accumulate(a, ga);
    });
    return r;
  }

  // log of values clamped to [eps, inf); gradient is 1/clamped value inside
  // the clamp and 0 below it.
  Var log_clamped(Var a, double eps = 1e-12) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x = std::log(x < eps ? eps : x);
    return unary_or_binary(std::move(out), a, -1, [this, a, eps](const Tensor& g) {
      Tensor ga = g;
      const auto& av = nodes_[a].value.data;
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] = av[i] < eps ? 0.0 : ga.data[i] / av[i];
      accumulate(a, ga);
    });
  }

  // Clamp into [lo, hi]; straight-through zero gradient outside the range.
  Var clamp(Var a, double lo, double hi) {
    Tensor out = nodes_[a].value;
    for (auto& x : out.data) x = x < lo ? lo : (x > hi ? hi : x);
    return unary_or_binary(std::move(out), a, -1, [this, a, lo, hi](const Tensor& g) {
      Tensor ga = g;
      const auto& av = nodes_[a].value.data;
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        if (av[i] < lo || av[i] > hi) ga.data[i] = 0.0;
      accumulate(a, ga);
    });
  }

  // ----- shape ops -----

  Var reshape(Var a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != nodes_[a].value.numel())
      throw DataError("reshape: element count mismatch");
    Tensor out(std::move(shape), nodes_[a].value.data);
    return unary_or_binary(std::move(out), a, -1, [this, a](const Tensor& g) {
      Tensor ga(nodes_[a].value.shape, g.data);
      accumulate(a, ga);
    });
  }

  Var concat_flat(Var a, Var b) {
    Tensor out({static_cast<int>(nodes_[a].value.numel() + nodes_[b].value.numel())});
    std::copy(nodes_[a].value.data.begin(), nodes_[a].value.data.end(), out.data.begin());
    std::copy(nodes_[b].value.data.begin(), nodes_[b].value.data.end(),
              out.data.begin() + nodes_[a].value.numel());
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Tensor& g) {
      const std::size_t na = nodes_[a].value.data.size();
      Tensor ga(nodes_[a].value.shape);
      Tensor gb(nodes_[b].value.shape);
      std::copy(g.data.begin(), g.data.begin() + na, ga.data.begin());
      std::copy(g.data.begin() + na, g.data.end(), gb.data.begin());
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  // Columns [c0, c1) of a [m, n] matrix.
  Var slice_cols(Var a, int c0, int c1) {
    const auto& s = nodes_[a].value.shape;
    if (s.size() != 2 || c0 < 0 || c1 > s[1] || c0 >= c1)
      throw DataError("slice_cols: bad arguments");
    const int m = s[0], n = s[1], w = c1 - c0;
    Tensor out({m, w});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out.data[i * w + j] = nodes_[a].value.data[i * n + c0 + j];
    return unary_or_binary(std::move(out), a, -1, [this, a, m, n, w, c0](const Tensor& g) {
      Tensor ga({m, n});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) ga.data[i * n + c0 + j] = g.data[i * w + j];
      accumulate(a, ga);
    });
  }

  // ----- reductions / linear algebra -----

  Var sum_all(Var a) {
    double s = 0.0;
    for (double x : nodes_[a].value.data) s += x;
    Tensor out({1});
    out.data[0] = s;
    return unary_or_binary(std::move(out), a, -1, [this, a](const Tensor& g) {
      Tensor ga(nodes_[a].value.shape);
      for (auto& x : ga.data) x = g.data[0];
      accumulate(a, ga);
    });
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(nodes_[a].value.numel())); }

  Var matmul(Var a, Var b) {
    const auto& sa = nodes_[a].value.shape;
    const auto& sb = nodes_[b].value.shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw DataError("matmul: incompatible shapes " + nodes_[a].value.shape_str() + " x " +
                      nodes_[b].value.shape_str());
    const int m = sa[0], k = sa[1], n = sb[1];
    Tensor out({m, n});
    const double* A = nodes_[a].value.data.data();
    const double* B = nodes_[b].value.data.data();
    double* C = out.data.data();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        for (int j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
      }
    return unary_or_binary(std::move(out), a, b, [this, a, b, m, k, n](const Tensor& g) {
      Tensor ga({m, k});
      Tensor gb({k, n});
      const double* A = nodes_[a].value.data.data();
      const double* B = nodes_[b].value.data.data();
      const double* G = g.data.data();
      // ga = G * B^T
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double gij = G[i * n + j];
          for (int p = 0; p < k; ++p) ga.data[i * k + p] += gij * B[p * n + j];
        }
      // gb = A^T * G
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (int j = 0; j < n; ++j) gb.data[p * n + j] += aip * G[i * n + j];
        }
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  // Adds a row vector b[n] to every row of x[m,n].
  Var add_rowvec(Var x, Var b) {
    const auto& sx = nodes_[x].value.shape;
    const auto& sb = nodes_[b].value.shape;
    if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1])
      throw DataError("add_rowvec: incompatible shapes");
    const int m = sx[0], n = sx[1];
    Tensor out = nodes_[x].value;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.data[i * n + j] += nodes_[b].value.data[j];
    return unary_or_binary(std::move(out), x, b, [this, x, b, m, n](const Tensor& g) {
      accumulate(x, g);
      Tensor gb({n});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
      accumulate(b, gb);
    });
  }

  Var softmax_rows(Var a) {
    const auto& s = nodes_[a].value.shape;
    if (s.size() != 2) throw DataError("softmax_rows: expects a matrix");
    const int m = s[0], n = s[1];
    Tensor out = nodes_[a].value;
    for (int i = 0; i < m; ++i) {
      double mx = out.data[i * n];
      for (int j = 1; j < n; ++j) mx = std::max(mx, out.data[i * n + j]);
      double z = 0.0;
      for (int j = 0; j < n; ++j) {
        out.data[i * n + j] = std::exp(out.data[i * n + j] - mx);
        z += out.data[i * n + j];
      }
      for (int j = 0; j < n; ++j) out.data[i * n + j] /= z;
    }
    const Var r = leaf_like(out);
    const Tensor saved = out;
    set_node(r, std::move(out), a, -1, [this, a, saved, m, n](const Tensor& g) {
      Tensor ga({m, n});
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += g.data[i * n + j] * saved.data[i * n + j];
        for (int j = 0; j < n; ++j)
          ga.data[i * n + j] = saved.data[i * n + j] * (g.data[i * n + j] - dot);
      }
      accumulate(a, ga);
    });
    return r;
  }

  // ----- convolutions -----
  // x: [Ci, H, W]; w: [Co, Ci, kh, kw]; b: [Co]; output [Co, Ho, Wo].
  Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const auto& sx = nodes_[x].value.shape;
    const auto& sw = nodes_[w].value.shape;
    if (sx.size() != 3 || sw.size() != 4 || sx[0] != sw[1])
      throw DataError("conv2d: incompatible shapes");
    const int Ci = sx[0], H = sx[1], W = sx[2];
    const int Co = sw[0], kh = sw[2], kw = sw[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor out({Co, Ho, Wo});
    const double* X = nodes_[x].value.data.data();
    const double* Wt = nodes_[w].value.data.data();
    double* O = out.data.data();
    for (int co = 0; co < Co; ++co) {
      const double bias = nodes_[b].value.data[co];
      for (int i = 0; i < Ho * Wo; ++i) O[co * Ho * Wo + i] = bias;
      for (int ci = 0; ci < Ci; ++ci)
        for (int p = 0; p < kh; ++p)
          for (int q = 0; q < kw; ++q) {
            const double wv = Wt[((co * Ci + ci) * kh + p) * kw + q];
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride + p - pad;
              if (iy < 0 || iy >= H) continue;
              for (int ox = 0; ox < Wo; ++ox) {
                const int ix = ox * stride + q - pad;
                if (ix < 0 || ix >= W) continue;
                O[(co * Ho + oy) * Wo + ox] += wv * X[(ci * H + iy) * W + ix];
              }
            }
          }
    }
    return unary_or_binary(std::move(out), x, w,
                           [this, x, w, b, stride, pad, Ci, H, W, Co, kh, kw, Ho, Wo](const Tensor& g) {
      Tensor gx({Ci, H, W});
      Tensor gw({Co, Ci, kh, kw});
      Tensor gb({Co});
      const double* X = nodes_[x].value.data.data();
      const double* Wt = nodes_[w].value.data.data();
      const double* G = g.data.data();
      for (int co = 0; co < Co; ++co) {
        double s = 0.0;
        for (int i = 0; i < Ho * Wo; ++i) s += G[co * Ho * Wo + i];
        gb.data[co] = s;
        for (int ci = 0; ci < Ci; ++ci)
          for (int p = 0; p < kh; ++p)
            for (int q = 0; q < kw; ++q) {
              const double wv = Wt[((co * Ci + ci) * kh + p) * kw + q];
              double acc = 0.0;
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride + p - pad;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride + q - pad;
                  if (ix < 0 || ix >= W) continue;
                  const double gv = G[(co * Ho + oy) * Wo + ox];
                  acc += gv * X[(ci * H + iy) * W + ix];
                  gx.data[(ci * H + iy) * W + ix] += gv * wv;
                }
              }
              gw.data[((co * Ci + ci) * kh + p) * kw + q] += acc;
            }
      }
      accumulate(x, gx);
      accumulate(w, gw);
      accumulate(b, gb);
    });
  }

  // x: [Ci, D, H, W]; w: [Co, Ci, k, k, k]; b: [Co].
  Var conv3d(Var x, Var w, Var b, int stride, int pad) {
    const auto& sx = nodes_[x].value.shape;
    const auto& sw = nodes_[w].value.shape;
    if (sx.size() != 4 || sw.size() != 5 || sx[0] != sw[1])
      throw DataError("conv3d: incompatible shapes");
    const int Ci = sx[0], D = sx[1], H = sx[2], W = sx[3];
    const int Co = sw[0], k = sw[2];
    const int Do = (D + 2 * pad - k) / stride + 1;
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    Tensor out({Co, Do, Ho, Wo});
    const double* X = nodes_[x].value.data.data();
    const double* Wt = nodes_[w].value.data.data();
    double* O = out.data.data();
    const int ovol = Do * Ho * Wo;
    for (int co = 0; co < Co; ++co) {
      const double bias = nodes_[b].value.data[co];
      for (int i = 0; i < ovol; ++i) O[co * ovol + i] = bias;
      for (int ci = 0; ci < Ci; ++ci)
        for (int r = 0; r < k; ++r)
          for (int p = 0; p < k; ++p)
            for (int q = 0; q < k; ++q) {
              const double wv = Wt[(((co * Ci + ci) * k + r) * k + p) * k + q];
              for (int oz = 0; oz < Do; ++oz) {
                const int iz = oz * stride + r - pad;
                if (iz < 0 || iz >= D) continue;
                for (int oy = 0; oy < Ho; ++oy) {
                  const int iy = oy * stride + p - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int ox = 0; ox < Wo; ++ox) {
                    const int ix = ox * stride + q - pad;
                    if (ix < 0 || ix >= W) continue;
                    O[((co * Do + oz) * Ho + oy) * Wo + ox] +=
                        wv * X[((ci * D + iz) * H + iy) * W + ix];
                  }
                }
              }
            }
    }
    return unary_or_binary(std::move(out), x, w,
                           [this, x, w, b, stride, pad, Ci, D, H, W, Co, k, Do, Ho, Wo](const Tensor& g) {
      Tensor gx({Ci, D, H, W});
      Tensor gw({Co, Ci, k, k, k});
      Tensor gb({Co});
      const double* X = nodes_[x].value.data.data();
      const double* Wt = nodes_[w].value.data.data();
      const double* G = g.data.data();
      const int ovol = Do * Ho * Wo;
      for (int co = 0; co < Co; ++co) {
        double s = 0.0;
        for (int i = 0; i < ovol; ++i) s += G[co * ovol + i];
        gb.data[co] = s;
        for (int ci = 0; ci < Ci; ++ci)
          for (int r = 0; r < k; ++r)
            for (int p = 0; p < k; ++p)
              for (int q = 0; q < k; ++q) {
                const double wv = Wt[(((co * Ci + ci) * k + r) * k + p) * k + q];
                double acc = 0.0;
                for (int oz = 0; oz < Do; ++oz) {
                  const int iz = oz * stride + r - pad;
                  if (iz < 0 || iz >= D) continue;
                  for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + p - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                      const int ix = ox * stride + q - pad;
                      if (ix < 0 || ix >= W) continue;
                      const double gv = G[((co * Do + oz) * Ho + oy) * Wo + ox];
                      acc += gv * X[((ci * D + iz) * H + iy) * W + ix];
                      gx.data[((ci * D + iz) * H + iy) * W + ix] += gv * wv;
                    }
                  }
                }
                gw.data[(((co * Ci + ci) * k + r) * k + p) * k + q] += acc;
              }
      }
      accumulate(x, gx);
      accumulate(w, gw);
      accumulate(b, gb);
    });
  }

  // Transposed 3D convolution. x: [Ci, D, H, W]; w: [Ci, Co, k, k, k];
  // output size = stride*(D-1) + k - 2*pad per axis.
  Var conv_transpose3d(Var x, Var w, Var b, int stride, int pad) {
    const auto& sx = nodes_[x].value.shape;
    const auto& sw = nodes_[w].value.shape;
    if (sx.size() != 4 || sw.size() != 5 || sx[0] != sw[0])
      throw DataError("conv_transpose3d: incompatible shapes");
    const int Ci = sx[0], D = sx[1], H = sx[2], W = sx[3];
    const int Co = sw[1], k = sw[2];
    const int Do = stride * (D - 1) + k - 2 * pad;
    const int Ho = stride * (H - 1) + k - 2 * pad;
    const int Wo = stride * (W - 1) + k - 2 * pad;
    Tensor out({Co, Do, Ho, Wo});
    const double* X = nodes_[x].value.data.data();
    const double* Wt = nodes_[w].value.data.data();
    double* O = out.data.data();
    const int ovol = Do * Ho * Wo;
    for (int co = 0; co < Co; ++co) {
      const double bias = nodes_[b].value.data[co];
      for (int i = 0; i < ovol; ++i) O[co * ovol + i] = bias;
    }
    for (int ci = 0; ci < Ci; ++ci)
      for (int co = 0; co < Co; ++co)
        for (int r = 0; r < k; ++r)
          for (int p = 0; p < k; ++p)
            for (int q = 0; q < k; ++q) {
              const double wv = Wt[(((ci * Co + co) * k + r) * k + p) * k + q];
              for (int iz = 0; iz < D; ++iz) {
                const int oz = iz * stride + r - pad;
                if (oz < 0 || oz >= Do) continue;
                for (int iy = 0; iy < H; ++iy) {
                  const int oy = iy * stride + p - pad;
                  if (oy < 0 || oy >= Ho) continue;
                  for (int ix = 0; ix < W; ++ix) {
                    const int ox = ix * stride + q - pad;
                    if (ox < 0 || ox >= Wo) continue;
                    O[((co * Do + oz) * Ho + oy) * Wo + ox] +=
                        wv * X[((ci * D + iz) * H + iy) * W + ix];
                  }
                }
              }
            }
    return unary_or_binary(std::move(out), x, w,
                           [this, x, w, b, stride, pad, Ci, D, H, W, Co, k, Do, Ho, Wo](const Tensor& g) {
      Tensor gx({Ci, D, H, W});
      Tensor gw({Ci, Co, k, k, k});
      Tensor gb({Co});
      const double* X = nodes_[x].value.data.data();
      const double* Wt = nodes_[w].value.data.data();
      const double* G = g.data.data();
      const int ovol = Do * Ho * Wo;
      for (int co = 0; co < Co; ++co) {
        double s = 0.0;
        for (int i = 0; i < ovol; ++i) s += G[co * ovol + i];
        gb.data[co] = s;
      }
      for (int ci = 0; ci < Ci; ++ci)
        for (int co = 0; co < Co; ++co)
          for (int r = 0; r < k; ++r)
            for (int p = 0; p < k; ++p)
              for (int q = 0; q < k; ++q) {
                const double wv = Wt[(((ci * Co + co) * k + r) * k + p) * k + q];
                double acc = 0.0;
                for (int iz = 0; iz < D; ++iz) {
                  const int oz = iz * stride + r - pad;
                  if (oz < 0 || oz >= Do) continue;
                  for (int iy = 0; iy < H; ++iy) {
                    const int oy = iy * stride + p - pad;
                    if (oy < 0 || oy >= Ho) continue;
                    for (int ix = 0; ix < W; ++ix) {
                      const int ox = ix * stride + q - pad;
                      if (ox < 0 || ox >= Wo) continue;
                      const double gv = G[((co * Do + oz) * Ho + oy) * Wo + ox];
                      acc += gv * X[((ci * D + iz) * H + iy) * W + ix];
                      gx.data[((ci * D + iz) * H + iy) * W + ix] += gv * wv;
                    }
                  }
                }
                gw.data[(((ci * Co + co) * k + r) * k + p) * k + q] += acc;
              }
      accumulate(x, gx);
      accumulate(w, gw);
      accumulate(b, gb);
    });
  }

  // Mean over all axes except the leading channel axis.
  Var mean_per_channel(Var a) {
    const auto& s = nodes_[a].value.shape;
    if (s.size() < 2) throw DataError("mean_per_channel: rank must be >= 2");
    const int C = s[0];
    const std::int64_t spatial = nodes_[a].value.numel() / C;
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < spatial; ++i) acc += nodes_[a].value.data[c * spatial + i];
      out.data[c] = acc / static_cast<double>(spatial);
    }
    return unary_or_binary(std::move(out), a, -1, [this, a, C, spatial](const Tensor& g) {
      Tensor ga(nodes_[a].value.shape);
      for (int c = 0; c < C; ++c) {
        const double gv = g.data[c] / static_cast<double>(spatial);
        for (std::int64_t i = 0; i < spatial; ++i) ga.data[c * spatial + i] = gv;
      }
      accumulate(a, ga);
    });
  }

  // ----- backward -----

  void backward(Var root) {
    if (nodes_[root].value.numel() != 1)
      throw DataError("backward: root must be a scalar");
    for (auto& n : nodes_)
      if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    ensure_grad(root);
    nodes_[root].grad.data[0] = 1.0;
    for (int i = root; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.backward_fn && !n.grad.data.empty()) n.backward_fn(n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(const Tensor&)> backward_fn;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;

  void check_same(Var a, Var b, const char* op) const {
    if (!nodes_[a].value.same_shape(nodes_[b].value))
      throw DataError(std::string(op) + ": shape mismatch " + nodes_[a].value.shape_str() +
                      " vs " + nodes_[b].value.shape_str());
  }

  Var leaf_like(const Tensor& t) {
    nodes_.push_back(Node{Tensor(t.shape), {}, nullptr, false});
    return static_cast<Var>(nodes_.size() - 1);
  }

  void set_node(Var v, Tensor value, Var, Var, std::function<void(const Tensor&)> fn) {
    nodes_[v].value = std::move(value);
    nodes_[v].backward_fn = std::move(fn);
  }

  Var unary_or_binary(Tensor out, Var, Var, std::function<void(const Tensor&)> fn) {
    nodes_.push_back(Node{std::move(out), {}, std::move(fn), false});
    return static_cast<Var>(nodes_.size() - 1);
  }

  void ensure_grad(Var v) {
    if (nodes_[v].grad.data.empty()) nodes_[v].grad = Tensor(nodes_[v].value.shape);
  }

 public:
  void accumulate(Var v, const Tensor& g) {
    ensure_grad(v);
    auto& gd = nodes_[v].grad.data;
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += g.data[i];
  }
};

}  // namespace ssp3d
