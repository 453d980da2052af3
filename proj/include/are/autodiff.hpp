// Copyright 2026 The are-bci Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Reverse-mode tape over the fixed primitive set the classifier needs:
// dense/conv layers, batch norm, ELU/ReLU, average pooling, softmax and
// cross-entropy. Not a general autodiff engine. One tape serves exactly
// one forward/backward pair and is single-threaded; parallelism lives at
// the level of independent tapes.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "are/errors.hpp"
#include "are/rng.hpp"
#include "are/tensor.hpp"

namespace are {

/// Per-layer batch-norm state. gamma/beta are trainable (they become tape
/// leaves); running_mean/running_var are plain state updated in train mode.
struct BnLayer {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  float momentum = 0.1f;

  static BnLayer make(int features) {
    BnLayer l;
    l.gamma = Tensor::full({features}, 1.0f);
    l.beta = Tensor::zeros({features});
    l.running_mean = Tensor::zeros({features});
    l.running_var = Tensor::full({features}, 1.0f);
    return l;
  }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int leaf(const Tensor& v) { return push(v, nullptr); }

  const Tensor& val(int id) const { return node_at(id).val; }
  Tensor& grad(int id) { return node_at(id).grad; }

  /// Replays the tape backward from a scalar loss. Visits operations in
  /// exact reverse order of the forward pass.
  void backward(int loss_id) {
    Node& loss = node_at(loss_id);
    if (loss.val.numel() != 1)
      throw UsageError("backward expects a scalar loss");
    for (auto& n : nodes_) n.grad = Tensor::zeros(n.val.shape);
    loss.grad.at(0) = 1.0f;
    for (int i = loss_id; i >= 0; --i) {
      if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back();
    }
    ran_backward_ = true;
  }

  /// backward() + gather, the spec-level gradient entry point.
  std::vector<Tensor> grad_of(int loss_id, const std::vector<int>& wrt) {
    for (int id : wrt) node_at(id);  // validate before running
    backward(loss_id);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (int id : wrt) out.push_back(node_at(id).grad);
    return out;
  }

  // ---- primitives -------------------------------------------------------

  int add(int a, int b) {
    const Tensor &x = val(a), &y = val(b);
    if (!x.same_shape(y)) throw DimensionError("add: shape mismatch");
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, a, b, id] {
      const Tensor& g = grad(id);
      Tensor &ga = grad(a), &gb = grad(b);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] += g.data[i];
      }
    };
    return id;
  }

  int mul(int a, int b) {
    const Tensor &x = val(a), &y = val(b);
    if (!x.same_shape(y)) throw DimensionError("mul: shape mismatch");
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= y.data[i];
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, a, b, id] {
      const Tensor& g = grad(id);
      const Tensor &x2 = val(a), &y2 = val(b);
      Tensor &ga = grad(a), &gb = grad(b);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * y2.data[i];
        gb.data[i] += g.data[i] * x2.data[i];
      }
    };
    return id;
  }

  int scale(int a, float s) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= s;
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, a, id, s] {
      const Tensor& g = grad(id);
      Tensor& ga = grad(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
    };
    return id;
  }

  int sum(int a) {
    double s = 0.0;
    for (float v : val(a).data) s += v;
    int id = push(Tensor({1}, {static_cast<float>(s)}), nullptr);
    node_at(id).back = [this, a, id] {
      const float g = grad(id).at(0);
      Tensor& ga = grad(a);
      for (auto& v : ga.data) v += g;
    };
    return id;
  }

  int matmul(int a, int b) {
    int id = push(are::matmul(val(a), val(b)), nullptr);
    node_at(id).back = [this, a, b, id] {
      const Tensor& g = grad(id);  // [m,n]
      const Tensor &x = val(a), &y = val(b);
      const int m = x.shape[0], k = x.shape[1], n = y.shape[1];
      Tensor &ga = grad(a), &gb = grad(b);
      // dA = G * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += double(g.at(i, j)) * y.at(p, j);
          ga.at(i, p) += static_cast<float>(s);
        }
      // dB = A^T * G
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += double(x.at(i, p)) * g.at(i, j);
          gb.at(p, j) += static_cast<float>(s);
        }
    };
    return id;
  }

  /// x[b,f] * w[f,k] + bias[k]
  int affine(int x, int w, int bias) {
    const Tensor &xv = val(x), &wv = val(w), &bv = val(bias);
    if (xv.ndim() != 2 || wv.ndim() != 2 || xv.shape[1] != wv.shape[0] ||
        bv.shape != std::vector<int>{wv.shape[1]})
      throw DimensionError("affine: shape mismatch");
    Tensor out = are::matmul(xv, wv);
    const int b = out.shape[0], k = out.shape[1];
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < k; ++j) out.at(i, j) += bv.at(j);
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, w, bias, id] {
      const Tensor& g = grad(id);
      const Tensor &xv2 = val(x), &wv2 = val(w);
      const int b2 = g.shape[0], f = xv2.shape[1], k2 = g.shape[1];
      Tensor &gx = grad(x), &gw = grad(w), &gb = grad(bias);
      for (int i = 0; i < b2; ++i)
        for (int p = 0; p < f; ++p) {
          double s = 0.0;
          for (int j = 0; j < k2; ++j) s += double(g.at(i, j)) * wv2.at(p, j);
          gx.at(i, p) += static_cast<float>(s);
        }
      for (int p = 0; p < f; ++p)
        for (int j = 0; j < k2; ++j) {
          double s = 0.0;
          for (int i = 0; i < b2; ++i) s += double(xv2.at(i, p)) * g.at(i, j);
          gw.at(p, j) += static_cast<float>(s);
        }
      for (int j = 0; j < k2; ++j) {
        double s = 0.0;
        for (int i = 0; i < b2; ++i) s += g.at(i, j);
        gb.at(j) += static_cast<float>(s);
      }
    };
    return id;
  }

  /// Temporal convolution: x[b,c,t] * w[f,kl] -> [b,f,c,t], zero-padded
  /// "same" along time. Every channel sees every temporal filter.
  int conv_temporal(int x, int w) {
    const Tensor &xv = val(x), &wv = val(w);
    if (xv.ndim() != 3 || wv.ndim() != 2)
      throw DimensionError("conv_temporal: bad ranks");
    const int b = xv.shape[0], c = xv.shape[1], t = xv.shape[2];
    const int f = wv.shape[0], kl = wv.shape[1];
    const int pad = kl / 2;
    Tensor out({b, f, c, t});
    for (int ib = 0; ib < b; ++ib)
      for (int ic = 0; ic < c; ++ic) {
        const float* xr = &xv.data[(static_cast<size_t>(ib) * c + ic) * t];
        for (int jf = 0; jf < f; ++jf) {
          const float* wr = &wv.data[static_cast<size_t>(jf) * kl];
          float* orow =
              &out.data[((static_cast<size_t>(ib) * f + jf) * c + ic) * t];
          for (int it = 0; it < t; ++it) {
            const int k0 = std::max(0, pad - it);
            const int k1 = std::min(kl, t + pad - it);
            float s = 0.0f;
            for (int k = k0; k < k1; ++k) s += wr[k] * xr[it + k - pad];
            orow[it] = s;
          }
        }
      }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, w, id, b, c, t, f, kl, pad] {
      const Tensor& g = grad(id);
      const Tensor &xv2 = val(x), &wv2 = val(w);
      Tensor &gx = grad(x), &gw = grad(w);
      for (int ib = 0; ib < b; ++ib)
        for (int ic = 0; ic < c; ++ic) {
          const float* xr = &xv2.data[(static_cast<size_t>(ib) * c + ic) * t];
          float* gxr = &gx.data[(static_cast<size_t>(ib) * c + ic) * t];
          for (int jf = 0; jf < f; ++jf) {
            const float* wr = &wv2.data[static_cast<size_t>(jf) * kl];
            float* gwr = &gw.data[static_cast<size_t>(jf) * kl];
            const float* gr =
                &g.data[((static_cast<size_t>(ib) * f + jf) * c + ic) * t];
            for (int it = 0; it < t; ++it) {
              const float gv = gr[it];
              if (gv == 0.0f) continue;
              const int k0 = std::max(0, pad - it);
              const int k1 = std::min(kl, t + pad - it);
              for (int k = k0; k < k1; ++k) {
                gxr[it + k - pad] += gv * wr[k];
                gwr[k] += gv * xr[it + k - pad];
              }
            }
          }
        }
    };
    return id;
  }

  /// Depthwise spatial convolution: x[b,f,c,t] * w[f,d,c] -> [b,f*d,t].
  /// Collapses the channel axis with d spatial filters per temporal map.
  int conv_spatial(int x, int w) {
    const Tensor &xv = val(x), &wv = val(w);
    if (xv.ndim() != 4 || wv.ndim() != 3 || wv.shape[0] != xv.shape[1] ||
        wv.shape[2] != xv.shape[2])
      throw DimensionError("conv_spatial: shape mismatch");
    const int b = xv.shape[0], f = xv.shape[1], c = xv.shape[2], t = xv.shape[3];
    const int d = wv.shape[1];
    Tensor out({b, f * d, t});
    for (int ib = 0; ib < b; ++ib)
      for (int jf = 0; jf < f; ++jf)
        for (int jd = 0; jd < d; ++jd) {
          float* orow =
              &out.data[(static_cast<size_t>(ib) * f * d + jf * d + jd) * t];
          for (int ic = 0; ic < c; ++ic) {
            const float wv0 = wv.at(jf, jd, ic);
            const float* xr =
                &xv.data[((static_cast<size_t>(ib) * f + jf) * c + ic) * t];
            for (int it = 0; it < t; ++it) orow[it] += wv0 * xr[it];
          }
        }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, w, id, b, f, c, t, d] {
      const Tensor& g = grad(id);
      const Tensor &xv2 = val(x), &wv2 = val(w);
      Tensor &gx = grad(x), &gw = grad(w);
      for (int ib = 0; ib < b; ++ib)
        for (int jf = 0; jf < f; ++jf)
          for (int jd = 0; jd < d; ++jd) {
            const float* gr =
                &g.data[(static_cast<size_t>(ib) * f * d + jf * d + jd) * t];
            for (int ic = 0; ic < c; ++ic) {
              const float wv0 = wv2.at(jf, jd, ic);
              const float* xr =
                  &xv2.data[((static_cast<size_t>(ib) * f + jf) * c + ic) * t];
              float* gxr =
                  &gx.data[((static_cast<size_t>(ib) * f + jf) * c + ic) * t];
              double sw = 0.0;
              for (int it = 0; it < t; ++it) {
                gxr[it] += gr[it] * wv0;
                sw += double(gr[it]) * xr[it];
              }
              gw.at(jf, jd, ic) += static_cast<float>(sw);
            }
          }
    };
    return id;
  }

  /// Depthwise temporal convolution: x[b,f,t] * w[f,kl] -> [b,f,t], "same".
  int conv_depthwise_time(int x, int w) {
    const Tensor &xv = val(x), &wv = val(w);
    if (xv.ndim() != 3 || wv.ndim() != 2 || wv.shape[0] != xv.shape[1])
      throw DimensionError("conv_depthwise_time: shape mismatch");
    const int b = xv.shape[0], f = xv.shape[1], t = xv.shape[2];
    const int kl = wv.shape[1], pad = kl / 2;
    Tensor out({b, f, t});
    for (int ib = 0; ib < b; ++ib)
      for (int jf = 0; jf < f; ++jf) {
        const float* xr = &xv.data[(static_cast<size_t>(ib) * f + jf) * t];
        const float* wr = &wv.data[static_cast<size_t>(jf) * kl];
        float* orow = &out.data[(static_cast<size_t>(ib) * f + jf) * t];
        for (int it = 0; it < t; ++it) {
          const int k0 = std::max(0, pad - it);
          const int k1 = std::min(kl, t + pad - it);
          float s = 0.0f;
          for (int k = k0; k < k1; ++k) s += wr[k] * xr[it + k - pad];
          orow[it] = s;
        }
      }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, w, id, b, f, t, kl, pad] {
      const Tensor& g = grad(id);
      const Tensor &xv2 = val(x), &wv2 = val(w);
      Tensor &gx = grad(x), &gw = grad(w);
      for (int ib = 0; ib < b; ++ib)
        for (int jf = 0; jf < f; ++jf) {
          const float* xr = &xv2.data[(static_cast<size_t>(ib) * f + jf) * t];
          const float* wr = &wv2.data[static_cast<size_t>(jf) * kl];
          float* gxr = &gx.data[(static_cast<size_t>(ib) * f + jf) * t];
          float* gwr = &gw.data[static_cast<size_t>(jf) * kl];
          const float* gr = &g.data[(static_cast<size_t>(ib) * f + jf) * t];
          for (int it = 0; it < t; ++it) {
            const float gv = gr[it];
            if (gv == 0.0f) continue;
            const int k0 = std::max(0, pad - it);
            const int k1 = std::min(kl, t + pad - it);
            for (int k = k0; k < k1; ++k) {
              gxr[it + k - pad] += gv * wr[k];
              gwr[k] += gv * xr[it + k - pad];
            }
          }
        }
    };
    return id;
  }

  /// Pointwise feature mixing: x[b,fin,t] * w[fout,fin] -> [b,fout,t].
  int pointwise(int x, int w) {
    const Tensor &xv = val(x), &wv = val(w);
    if (xv.ndim() != 3 || wv.ndim() != 2 || wv.shape[1] != xv.shape[1])
      throw DimensionError("pointwise: shape mismatch");
    const int b = xv.shape[0], fin = xv.shape[1], t = xv.shape[2];
    const int fout = wv.shape[0];
    Tensor out({b, fout, t});
    for (int ib = 0; ib < b; ++ib)
      for (int jo = 0; jo < fout; ++jo) {
        float* orow = &out.data[(static_cast<size_t>(ib) * fout + jo) * t];
        for (int ji = 0; ji < fin; ++ji) {
          const float wv0 = wv.at(jo, ji);
          const float* xr = &xv.data[(static_cast<size_t>(ib) * fin + ji) * t];
          for (int it = 0; it < t; ++it) orow[it] += wv0 * xr[it];
        }
      }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, w, id, b, fin, t, fout] {
      const Tensor& g = grad(id);
      const Tensor &xv2 = val(x), &wv2 = val(w);
      Tensor &gx = grad(x), &gw = grad(w);
      for (int ib = 0; ib < b; ++ib)
        for (int jo = 0; jo < fout; ++jo) {
          const float* gr = &g.data[(static_cast<size_t>(ib) * fout + jo) * t];
          for (int ji = 0; ji < fin; ++ji) {
            const float wv0 = wv2.at(jo, ji);
            const float* xr = &xv2.data[(static_cast<size_t>(ib) * fin + ji) * t];
            float* gxr = &gx.data[(static_cast<size_t>(ib) * fin + ji) * t];
            double sw = 0.0;
            for (int it = 0; it < t; ++it) {
              gxr[it] += gr[it] * wv0;
              sw += double(gr[it]) * xr[it];
            }
            gw.at(jo, ji) += static_cast<float>(sw);
          }
        }
    };
    return id;
  }

  /// Batch norm over feature axis 1. With use_batch_stats the current
  /// batch statistics normalize (and optionally refresh the running ones);
  /// otherwise the stored running statistics are used as constants.
  int batchnorm(int x, int gamma, int beta, BnLayer& layer,
                bool use_batch_stats, bool update_running, float eps = 1e-5f) {
    const Tensor& xv = val(x);
    if (xv.ndim() < 2) throw DimensionError("batchnorm: rank < 2");
    const int f = xv.shape[1];
    if (val(gamma).shape != std::vector<int>{f} ||
        val(beta).shape != std::vector<int>{f})
      throw DimensionError("batchnorm: gamma/beta shape mismatch");
    const int b = xv.shape[0];
    int64_t rest = 1;
    for (int i = 2; i < xv.ndim(); ++i) rest *= xv.shape[static_cast<size_t>(i)];
    const int64_t n_per_f = static_cast<int64_t>(b) * rest;
    if (n_per_f < 1) throw DimensionError("batchnorm: empty batch");

    std::vector<double> mean(static_cast<size_t>(f), 0.0),
        var(static_cast<size_t>(f), 0.0);
    if (use_batch_stats) {
      for (int ib = 0; ib < b; ++ib)
        for (int jf = 0; jf < f; ++jf) {
          const float* xr =
              &xv.data[(static_cast<size_t>(ib) * f + jf) * rest];
          double s = 0.0;
          for (int64_t r = 0; r < rest; ++r) s += xr[r];
          mean[static_cast<size_t>(jf)] += s;
        }
      for (auto& m : mean) m /= static_cast<double>(n_per_f);
      for (int ib = 0; ib < b; ++ib)
        for (int jf = 0; jf < f; ++jf) {
          const float* xr =
              &xv.data[(static_cast<size_t>(ib) * f + jf) * rest];
          const double m = mean[static_cast<size_t>(jf)];
          double s = 0.0;
          for (int64_t r = 0; r < rest; ++r) {
            const double d = xr[r] - m;
            s += d * d;
          }
          var[static_cast<size_t>(jf)] += s;
        }
      for (auto& v : var) v /= static_cast<double>(n_per_f);
      if (update_running) {
        const float mom = layer.momentum;
        for (int jf = 0; jf < f; ++jf) {
          layer.running_mean.at(jf) =
              (1.0f - mom) * layer.running_mean.at(jf) +
              mom * static_cast<float>(mean[static_cast<size_t>(jf)]);
          layer.running_var.at(jf) =
              (1.0f - mom) * layer.running_var.at(jf) +
              mom * static_cast<float>(var[static_cast<size_t>(jf)]);
        }
      }
    } else {
      for (int jf = 0; jf < f; ++jf) {
        mean[static_cast<size_t>(jf)] = layer.running_mean.at(jf);
        var[static_cast<size_t>(jf)] = layer.running_var.at(jf);
      }
    }

    std::vector<float> invstd(static_cast<size_t>(f));
    for (int jf = 0; jf < f; ++jf)
      invstd[static_cast<size_t>(jf)] = static_cast<float>(
          1.0 / std::sqrt(var[static_cast<size_t>(jf)] + eps));

    Tensor xhat(xv.shape);
    Tensor out(xv.shape);
    const Tensor &gv = val(gamma), &bv = val(beta);
    for (int ib = 0; ib < b; ++ib)
      for (int jf = 0; jf < f; ++jf) {
        const float m = static_cast<float>(mean[static_cast<size_t>(jf)]);
        const float is = invstd[static_cast<size_t>(jf)];
        const float gm = gv.at(jf), bt = bv.at(jf);
        const size_t base = (static_cast<size_t>(ib) * f + jf) * rest;
        for (int64_t r = 0; r < rest; ++r) {
          const float xh = (xv.data[base + r] - m) * is;
          xhat.data[base + r] = xh;
          out.data[base + r] = gm * xh + bt;
        }
      }

    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, gamma, beta, id, b, f, rest, n_per_f,
                        use_batch_stats, invstd = std::move(invstd),
                        xhat = std::move(xhat)] {
      const Tensor& g = grad(id);
      const Tensor& gv2 = val(gamma);
      Tensor &gx = grad(x), &ggamma = grad(gamma), &gbeta = grad(beta);
      for (int jf = 0; jf < f; ++jf) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int ib = 0; ib < b; ++ib) {
          const size_t base = (static_cast<size_t>(ib) * f + jf) * rest;
          for (int64_t r = 0; r < rest; ++r) {
            sum_dy += g.data[base + r];
            sum_dy_xh += double(g.data[base + r]) * xhat.data[base + r];
          }
        }
        ggamma.at(jf) += static_cast<float>(sum_dy_xh);
        gbeta.at(jf) += static_cast<float>(sum_dy);
        const float gm = gv2.at(jf);
        const float is = invstd[static_cast<size_t>(jf)];
        if (use_batch_stats) {
          const float mean_dy =
              static_cast<float>(sum_dy / static_cast<double>(n_per_f));
          const float mean_dy_xh =
              static_cast<float>(sum_dy_xh / static_cast<double>(n_per_f));
          for (int ib = 0; ib < b; ++ib) {
            const size_t base = (static_cast<size_t>(ib) * f + jf) * rest;
            for (int64_t r = 0; r < rest; ++r)
              gx.data[base + r] +=
                  gm * is *
                  (g.data[base + r] - mean_dy - xhat.data[base + r] * mean_dy_xh);
          }
        } else {
          for (int ib = 0; ib < b; ++ib) {
            const size_t base = (static_cast<size_t>(ib) * f + jf) * rest;
            for (int64_t r = 0; r < rest; ++r)
              gx.data[base + r] += gm * is * g.data[base + r];
          }
        }
      }
    };
    return id;
  }

  int elu(int x, float alpha = 1.0f) {
    Tensor out = val(x);
    for (auto& v : out.data)
      if (v < 0.0f) v = alpha * (std::exp(v) - 1.0f);
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id, alpha] {
      const Tensor& g = grad(id);
      const Tensor& y = val(id);
      Tensor& gx = grad(x);
      const Tensor& xv = val(x);
      for (size_t i = 0; i < g.data.size(); ++i)
        gx.data[i] +=
            g.data[i] * (xv.data[i] > 0.0f ? 1.0f : y.data[i] + alpha);
    };
    return id;
  }

  int relu(int x) {
    Tensor out = val(x);
    for (auto& v : out.data)
      if (v < 0.0f) v = 0.0f;
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id] {
      const Tensor& g = grad(id);
      const Tensor& xv = val(x);
      Tensor& gx = grad(x);
      for (size_t i = 0; i < g.data.size(); ++i)
        gx.data[i] += xv.data[i] > 0.0f ? g.data[i] : 0.0f;
    };
    return id;
  }

  /// Average pooling along the last axis of x[b,f,t] by factor p (t % p == 0).
  int avgpool_time(int x, int p) {
    const Tensor& xv = val(x);
    if (xv.ndim() != 3) throw DimensionError("avgpool_time: rank != 3");
    const int b = xv.shape[0], f = xv.shape[1], t = xv.shape[2];
    if (p < 1 || t % p != 0)
      throw DimensionError("avgpool_time: pool size must divide time axis");
    const int to = t / p;
    Tensor out({b, f, to});
    const float inv = 1.0f / static_cast<float>(p);
    for (int ib = 0; ib < b; ++ib)
      for (int jf = 0; jf < f; ++jf) {
        const float* xr = &xv.data[(static_cast<size_t>(ib) * f + jf) * t];
        float* orow = &out.data[(static_cast<size_t>(ib) * f + jf) * to];
        for (int io = 0; io < to; ++io) {
          float s = 0.0f;
          for (int k = 0; k < p; ++k) s += xr[io * p + k];
          orow[io] = s * inv;
        }
      }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id, b, f, t, p, to, inv] {
      const Tensor& g = grad(id);
      Tensor& gx = grad(x);
      for (int ib = 0; ib < b; ++ib)
        for (int jf = 0; jf < f; ++jf) {
          const float* gr = &g.data[(static_cast<size_t>(ib) * f + jf) * to];
          float* gxr = &gx.data[(static_cast<size_t>(ib) * f + jf) * t];
          for (int io = 0; io < to; ++io) {
            const float gv = gr[io] * inv;
            for (int k = 0; k < p; ++k) gxr[io * p + k] += gv;
          }
        }
    };
    return id;
  }

  /// Inverted dropout with a per-forward seed.
  int dropout(int x, float rate, uint64_t seed) {
    if (rate < 0.0f || rate >= 1.0f)
      throw ValidationError("dropout rate must be in [0,1)");
    const Tensor& xv = val(x);
    Tensor mask(xv.shape);
    Rng rng(seed);
    const float keep = 1.0f - rate;
    const float scl = 1.0f / keep;
    for (auto& m : mask.data) m = (rng.uniform() < keep) ? scl : 0.0f;
    Tensor out = xv;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id, mask = std::move(mask)] {
      const Tensor& g = grad(id);
      Tensor& gx = grad(x);
      for (size_t i = 0; i < g.data.size(); ++i)
        gx.data[i] += g.data[i] * mask.data[i];
    };
    return id;
  }

  int reshape(int x, std::vector<int> new_shape) {
    const Tensor& xv = val(x);
    if (Tensor::numel_of(new_shape) != xv.numel())
      throw DimensionError("reshape: element count mismatch");
    Tensor out(std::move(new_shape), xv.data);
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id] {
      const Tensor& g = grad(id);
      Tensor& gx = grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
    };
    return id;
  }

  /// Row-wise softmax of logits[b,K], stabilized by max subtraction.
  int softmax(int x) {
    const Tensor& xv = val(x);
    if (xv.ndim() != 2) throw DimensionError("softmax: rank != 2");
    const int b = xv.shape[0], k = xv.shape[1];
    Tensor out(xv.shape);
    for (int i = 0; i < b; ++i) {
      float m = xv.at(i, 0);
      for (int j = 1; j < k; ++j) m = std::max(m, xv.at(i, j));
      double z = 0.0;
      for (int j = 0; j < k; ++j) z += std::exp(double(xv.at(i, j)) - m);
      for (int j = 0; j < k; ++j)
        out.at(i, j) =
            static_cast<float>(std::exp(double(xv.at(i, j)) - m) / z);
    }
    int id = push(std::move(out), nullptr);
    node_at(id).back = [this, x, id, b, k] {
      const Tensor& g = grad(id);
      const Tensor& y = val(id);
      Tensor& gx = grad(x);
      for (int i = 0; i < b; ++i) {
        double dot = 0.0;
        for (int j = 0; j < k; ++j) dot += double(g.at(i, j)) * y.at(i, j);
        for (int j = 0; j < k; ++j)
          gx.at(i, j) +=
              y.at(i, j) * (g.at(i, j) - static_cast<float>(dot));
      }
    };
    return id;
  }

  /// Mean negative log of given class probabilities; labels are 1-based.
  int nll_probs(int probs, const std::vector<int>& labels) {
    const Tensor& pv = val(probs);
    const int b = pv.shape[0], k = pv.shape[1];
    if (static_cast<int>(labels.size()) != b)
      throw DimensionError("nll_probs: label count mismatch");
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const int y = labels[static_cast<size_t>(i)];
      if (y < 1 || y > k) throw ValidationError("label out of range");
      loss -= std::log(std::max(1e-12, double(pv.at(i, y - 1))));
    }
    loss /= b;
    int id = push(Tensor({1}, {static_cast<float>(loss)}), nullptr);
    node_at(id).back = [this, probs, id, labels, b] {
      const float g = grad(id).at(0);
      const Tensor& pv2 = val(probs);
      Tensor& gp = grad(probs);
      for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<size_t>(i)] - 1;
        const float p = std::max(1e-12f, pv2.at(i, y));
        gp.at(i, y) += -g / (p * static_cast<float>(b));
      }
    };
    return id;
  }

  /// Fused softmax cross-entropy: mean over batch of -log softmax[label].
  /// Labels are 1-based.
  int cross_entropy(int logits, const std::vector<int>& labels) {
    const Tensor& zv = val(logits);
    if (zv.ndim() != 2) throw DimensionError("cross_entropy: rank != 2");
    const int b = zv.shape[0], k = zv.shape[1];
    if (static_cast<int>(labels.size()) != b)
      throw DimensionError("cross_entropy: label count mismatch");
    Tensor soft({b, k});
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const int y = labels[static_cast<size_t>(i)];
      if (y < 1 || y > k)
        throw ValidationError("cross_entropy: label out of range {1..K}");
      float m = zv.at(i, 0);
      for (int j = 1; j < k; ++j) m = std::max(m, zv.at(i, j));
      double z = 0.0;
      for (int j = 0; j < k; ++j) z += std::exp(double(zv.at(i, j)) - m);
      for (int j = 0; j < k; ++j)
        soft.at(i, j) =
            static_cast<float>(std::exp(double(zv.at(i, j)) - m) / z);
      loss += std::log(z) - (double(zv.at(i, y - 1)) - m);
    }
    loss /= b;
    int id = push(Tensor({1}, {static_cast<float>(loss)}), nullptr);
    node_at(id).back = [this, logits, id, labels, b, k,
                        soft = std::move(soft)] {
      const float g = grad(id).at(0);
      Tensor& gz = grad(logits);
      const float inv_b = 1.0f / static_cast<float>(b);
      for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<size_t>(i)] - 1;
        for (int j = 0; j < k; ++j) {
          float d = soft.at(i, j) - (j == y ? 1.0f : 0.0f);
          gz.at(i, j) += g * d * inv_b;
        }
      }
    };
    return id;
  }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void()> back;
  };

  Node& node_at(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw UsageError("tensor id is not on this tape");
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& node_at(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw UsageError("tensor id is not on this tape");
    return nodes_[static_cast<size_t>(id)];
  }

  int push(Tensor v, std::function<void()> back) {
    nodes_.push_back(Node{std::move(v), Tensor(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace are
