#include "elastic/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "gemm.hpp"

namespace elastic {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!(a.shape == b.shape)) {
    throw_shape_mismatch(op, "shapes " + a.shape.str() + " and " +
                                 b.shape.str() + " differ");
  }
}

void attach(const TensorRef& y, std::vector<TensorRef> inputs,
            std::function<void(Tensor&)> fn) {
  if (!any_wants_grad(inputs)) return;
  y->parents = std::move(inputs);
  y->backward_fn = std::move(fn);
}

}  // namespace

NormParams NormParams::create(i64 channels) {
  if (channels < 1) throw ConfigError("batch_norm: channels must be >= 1");
  NormParams p;
  p.gamma = Tensor::full({1, channels, 1, 1}, 1.0f, true);
  p.beta = Tensor::create({1, channels, 1, 1}, true);
  p.running_mean.assign(static_cast<size_t>(channels), 0.0f);
  p.running_var.assign(static_cast<size_t>(channels), 1.0f);
  return p;
}

LinearParams LinearParams::create(i64 in_features, i64 out_features,
                                  Pcg32& rng) {
  LinearParams p;
  p.weight = Tensor::create({out_features, in_features, 1, 1}, true);
  double std_dev = std::sqrt(2.0 / static_cast<double>(in_features));
  for (auto& v : p.weight->data) {
    v = static_cast<float>(rng.next_gaussian() * std_dev);
  }
  p.bias = Tensor::create({1, out_features, 1, 1}, true);
  return p;
}

TensorRef relu(const TensorRef& x) {
  auto y = Tensor::create(x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) {
    y->data[i] = x->data[i] > 0.0f ? x->data[i] : 0.0f;
  }
  TensorRef xin = x;
  attach(y, {x}, [xin](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (xin->data[i] > 0.0f) xin->grad[i] += self.grad[i];
    }
  });
  return y;
}

TensorRef add(const TensorRef& a, const TensorRef& b) {
  check_same_shape("add", *a, *b);
  auto y = Tensor::create(a->shape);
  for (size_t i = 0; i < y->data.size(); ++i) {
    y->data[i] = a->data[i] + b->data[i];
  }
  TensorRef ar = a, br = b;
  attach(y, {a, b}, [ar, br](Tensor& self) {
    if (wants_grad(*ar)) {
      for (size_t i = 0; i < self.grad.size(); ++i) ar->grad[i] += self.grad[i];
    }
    if (wants_grad(*br)) {
      for (size_t i = 0; i < self.grad.size(); ++i) br->grad[i] += self.grad[i];
    }
  });
  return y;
}

TensorRef concat_channels(const TensorRef& a, const TensorRef& b) {
  if (a->shape.n != b->shape.n || a->shape.h != b->shape.h ||
      a->shape.w != b->shape.w) {
    throw_shape_mismatch("concat_channels",
                         "shapes " + a->shape.str() + " and " +
                             b->shape.str() + " differ outside channels");
  }
  i64 ca = a->shape.c, cb = b->shape.c;
  auto y = Tensor::create({a->shape.n, ca + cb, a->shape.h, a->shape.w});
  i64 plane = a->shape.h * a->shape.w;
  for (i64 n = 0; n < a->shape.n; ++n) {
    std::memcpy(y->data.data() + n * (ca + cb) * plane,
                a->data.data() + n * ca * plane, sizeof(float) * ca * plane);
    std::memcpy(y->data.data() + (n * (ca + cb) + ca) * plane,
                b->data.data() + n * cb * plane, sizeof(float) * cb * plane);
  }
  TensorRef ar = a, br = b;
  attach(y, {a, b}, [ar, br, ca, cb, plane](Tensor& self) {
    for (i64 n = 0; n < ar->shape.n; ++n) {
      if (wants_grad(*ar)) {
        const float* g = self.grad.data() + n * (ca + cb) * plane;
        float* dst = ar->grad.data() + n * ca * plane;
        for (i64 i = 0; i < ca * plane; ++i) dst[i] += g[i];
      }
      if (wants_grad(*br)) {
        const float* g = self.grad.data() + (n * (ca + cb) + ca) * plane;
        float* dst = br->grad.data() + n * cb * plane;
        for (i64 i = 0; i < cb * plane; ++i) dst[i] += g[i];
      }
    }
  });
  return y;
}

TensorRef batch_norm(const TensorRef& x, NormParams& p) {
  const i64 c_count = p.channels();
  if (x->shape.c != c_count) {
    throw_shape_mismatch("batch_norm",
                         "input channels " + std::to_string(x->shape.c) +
                             " do not match params (" +
                             std::to_string(c_count) + " channels)");
  }
  const i64 n_count = x->shape.n;
  const i64 plane = x->shape.h * x->shape.w;
  const i64 m = n_count * plane;  // samples per channel
  const bool training = p.mode == NormParams::Mode::train;
  if (training && m < 2) {
    throw InputError(
        "batch_norm: train mode needs at least 2 values per channel, got " +
        std::to_string(m));
  }

  std::vector<float> mean(static_cast<size_t>(c_count));
  std::vector<float> invstd(static_cast<size_t>(c_count));
  if (training) {
    for (i64 c = 0; c < c_count; ++c) {
      double acc = 0.0;
      for (i64 n = 0; n < n_count; ++n) {
        const float* row = x->data.data() + (n * c_count + c) * plane;
        for (i64 i = 0; i < plane; ++i) acc += row[i];
      }
      double mu = acc / static_cast<double>(m);
      double var_acc = 0.0;
      for (i64 n = 0; n < n_count; ++n) {
        const float* row = x->data.data() + (n * c_count + c) * plane;
        for (i64 i = 0; i < plane; ++i) {
          double d = row[i] - mu;
          var_acc += d * d;
        }
      }
      double var = var_acc / static_cast<double>(m);  // biased, used to norm
      mean[c] = static_cast<float>(mu);
      invstd[c] =
          static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(p.epsilon)));
      double unbiased = var_acc / static_cast<double>(m - 1);
      p.running_mean[c] = static_cast<float>(
          (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mu);
      p.running_var[c] = static_cast<float>(
          (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased);
    }
  } else {
    for (i64 c = 0; c < c_count; ++c) {
      if (p.running_var[c] < 0.0f) {
        throw InputError("batch_norm: negative running variance at channel " +
                         std::to_string(c));
      }
      mean[c] = p.running_mean[c];
      invstd[c] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(p.running_var[c]) +
                          static_cast<double>(p.epsilon)));
    }
  }

  auto y = Tensor::create(x->shape);
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const float* src = x->data.data() + (n * c_count + c) * plane;
      float* dst = y->data.data() + (n * c_count + c) * plane;
      float mu = mean[c], is = invstd[c];
      float g = p.gamma->data[c], b = p.beta->data[c];
      for (i64 i = 0; i < plane; ++i) {
        dst[i] = (src[i] - mu) * is * g + b;
      }
    }
  }

  TensorRef xin = x;
  TensorRef gamma = p.gamma, beta = p.beta;
  attach(y, {x, p.gamma, p.beta},
         [xin, gamma, beta, mean, invstd, training, c_count, n_count,
          plane](Tensor& self) {
           const i64 m = n_count * plane;
           for (i64 c = 0; c < c_count; ++c) {
             double sum_dy = 0.0;
             double sum_dy_xhat = 0.0;
             float mu = mean[c], is = invstd[c];
             for (i64 n = 0; n < n_count; ++n) {
               const float* dy = self.grad.data() + (n * c_count + c) * plane;
               const float* xv = xin->data.data() + (n * c_count + c) * plane;
               for (i64 i = 0; i < plane; ++i) {
                 double xhat = (xv[i] - mu) * is;
                 sum_dy += dy[i];
                 sum_dy_xhat += dy[i] * xhat;
               }
             }
             if (wants_grad(*gamma)) {
               gamma->grad[c] += static_cast<float>(sum_dy_xhat);
             }
             if (wants_grad(*beta)) {
               beta->grad[c] += static_cast<float>(sum_dy);
             }
             if (!wants_grad(*xin)) continue;
             float g = gamma->data[c];
             if (training) {
               double mean_dy = sum_dy / static_cast<double>(m);
               double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
               for (i64 n = 0; n < n_count; ++n) {
                 const float* dy =
                     self.grad.data() + (n * c_count + c) * plane;
                 const float* xv =
                     xin->data.data() + (n * c_count + c) * plane;
                 float* dx = xin->grad.data() + (n * c_count + c) * plane;
                 for (i64 i = 0; i < plane; ++i) {
                   double xhat = (xv[i] - mu) * is;
                   dx[i] += static_cast<float>(
                       static_cast<double>(g) * is *
                       (dy[i] - mean_dy - xhat * mean_dy_xhat));
                 }
               }
             } else {
               for (i64 n = 0; n < n_count; ++n) {
                 const float* dy =
                     self.grad.data() + (n * c_count + c) * plane;
                 float* dx = xin->grad.data() + (n * c_count + c) * plane;
                 float scale = g * is;
                 for (i64 i = 0; i < plane; ++i) dx[i] += dy[i] * scale;
               }
             }
           }
         });
  return y;
}

TensorRef avg_pool2(const TensorRef& x) {
  const i64 h = x->shape.h, w = x->shape.w;
  if (h < 2 || w < 2) {
    throw InputError("avg_pool2: spatial dims must be >= 2, got " +
                     x->shape.str());
  }
  const i64 oh = (h + 1) / 2, ow = (w + 1) / 2;
  auto y = Tensor::create({x->shape.n, x->shape.c, oh, ow});
  const i64 nc = x->shape.n * x->shape.c;
  for (i64 p = 0; p < nc; ++p) {
    const float* src = x->data.data() + p * h * w;
    float* dst = y->data.data() + p * oh * ow;
    for (i64 i = 0; i < oh; ++i) {
      i64 r0 = 2 * i;
      bool full_r = r0 + 1 < h;
      for (i64 j = 0; j < ow; ++j) {
        i64 c0 = 2 * j;
        bool full_c = c0 + 1 < w;
        if (full_r && full_c) {
          float ab = src[r0 * w + c0] + src[r0 * w + c0 + 1];
          float cd = src[(r0 + 1) * w + c0] + src[(r0 + 1) * w + c0 + 1];
          dst[i * ow + j] = 0.25f * (ab + cd);
        } else if (full_r) {  // single column, two rows
          dst[i * ow + j] = 0.5f * (src[r0 * w + c0] + src[(r0 + 1) * w + c0]);
        } else if (full_c) {  // single row, two columns
          dst[i * ow + j] = 0.5f * (src[r0 * w + c0] + src[r0 * w + c0 + 1]);
        } else {
          dst[i * ow + j] = src[r0 * w + c0];
        }
      }
    }
  }
  TensorRef xin = x;
  attach(y, {x}, [xin, h, w, oh, ow, nc](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (i64 p = 0; p < nc; ++p) {
      const float* gy = self.grad.data() + p * oh * ow;
      float* gx = xin->grad.data() + p * h * w;
      for (i64 i = 0; i < oh; ++i) {
        i64 r0 = 2 * i;
        i64 rows = (r0 + 1 < h) ? 2 : 1;
        for (i64 j = 0; j < ow; ++j) {
          i64 c0 = 2 * j;
          i64 cols = (c0 + 1 < w) ? 2 : 1;
          float share = gy[i * ow + j] / static_cast<float>(rows * cols);
          for (i64 r = 0; r < rows; ++r) {
            for (i64 c = 0; c < cols; ++c) {
              gx[(r0 + r) * w + c0 + c] += share;
            }
          }
        }
      }
    }
  });
  return y;
}

TensorRef max_pool2d(const TensorRef& x, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw ConfigError("max_pool2d: bad kernel/stride/padding");
  }
  const i64 h = x->shape.h, w = x->shape.w;
  const i64 oh = (h + 2 * static_cast<i64>(padding) - kernel) / stride + 1;
  const i64 ow = (w + 2 * static_cast<i64>(padding) - kernel) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw InputError("max_pool2d: input " + x->shape.str() +
                     " too small for kernel " + std::to_string(kernel));
  }
  auto y = Tensor::create({x->shape.n, x->shape.c, oh, ow});
  const i64 nc = x->shape.n * x->shape.c;
  auto argmax = std::make_shared<std::vector<i64>>(
      static_cast<size_t>(nc * oh * ow));
  for (i64 p = 0; p < nc; ++p) {
    const float* src = x->data.data() + p * h * w;
    float* dst = y->data.data() + p * oh * ow;
    i64* arg = argmax->data() + p * oh * ow;
    for (i64 i = 0; i < oh; ++i) {
      for (i64 j = 0; j < ow; ++j) {
        float best = -std::numeric_limits<float>::infinity();
        i64 best_idx = -1;
        for (int kh = 0; kh < kernel; ++kh) {
          i64 r = i * stride + kh - padding;
          if (r < 0 || r >= h) continue;
          for (int kw = 0; kw < kernel; ++kw) {
            i64 c = j * stride + kw - padding;
            if (c < 0 || c >= w) continue;
            float v = src[r * w + c];
            if (v > best) {
              best = v;
              best_idx = r * w + c;
            }
          }
        }
        dst[i * ow + j] = best;
        arg[i * ow + j] = best_idx;
      }
    }
  }
  TensorRef xin = x;
  attach(y, {x}, [xin, argmax, h, w, oh, ow, nc](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (i64 p = 0; p < nc; ++p) {
      const float* gy = self.grad.data() + p * oh * ow;
      float* gx = xin->grad.data() + p * h * w;
      const i64* arg = argmax->data() + p * oh * ow;
      for (i64 i = 0; i < oh * ow; ++i) {
        if (arg[i] >= 0) gx[arg[i]] += gy[i];
      }
    }
  });
  return y;
}

namespace {

struct ResizeAxis {
  std::vector<i64> lo, hi;
  std::vector<float> w_lo, w_hi;
};

// Half-pixel source coordinates, clamped at the borders.
ResizeAxis make_axis(i64 in, i64 out) {
  ResizeAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_lo.resize(out);
  a.w_hi.resize(out);
  double scale = static_cast<double>(in) / static_cast<double>(out);
  for (i64 o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    double limit = static_cast<double>(in - 1);
    if (src > limit) src = limit;
    i64 lo = static_cast<i64>(src);
    if (lo > in - 1) lo = in - 1;
    double frac = src - static_cast<double>(lo);
    i64 hi = (lo + 1 < in) ? lo + 1 : in - 1;
    a.lo[o] = lo;
    a.hi[o] = hi;
    a.w_hi[o] = static_cast<float>(frac);
    a.w_lo[o] = static_cast<float>(1.0 - frac);
  }
  return a;
}

}  // namespace

TensorRef bilinear_resize(const TensorRef& x, i64 out_h, i64 out_w) {
  if (out_h < 1 || out_w < 1) {
    throw InputError("bilinear_resize: target size must be positive");
  }
  const i64 h = x->shape.h, w = x->shape.w;
  auto y = Tensor::create({x->shape.n, x->shape.c, out_h, out_w});
  const i64 nc = x->shape.n * x->shape.c;

  if (out_h == h && out_w == w) {
    y->data = x->data;
    TensorRef xin = x;
    attach(y, {x}, [xin](Tensor& self) {
      if (!wants_grad(*xin)) return;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        xin->grad[i] += self.grad[i];
      }
    });
    return y;
  }

  auto ay = std::make_shared<ResizeAxis>(make_axis(h, out_h));
  auto ax = std::make_shared<ResizeAxis>(make_axis(w, out_w));
  for (i64 p = 0; p < nc; ++p) {
    const float* src = x->data.data() + p * h * w;
    float* dst = y->data.data() + p * out_h * out_w;
    for (i64 i = 0; i < out_h; ++i) {
      const float* r0 = src + ay->lo[i] * w;
      const float* r1 = src + ay->hi[i] * w;
      float wy0 = ay->w_lo[i], wy1 = ay->w_hi[i];
      for (i64 j = 0; j < out_w; ++j) {
        i64 c0 = ax->lo[j], c1 = ax->hi[j];
        float wx0 = ax->w_lo[j], wx1 = ax->w_hi[j];
        float top = wx0 * r0[c0] + wx1 * r0[c1];
        float bot = wx0 * r1[c0] + wx1 * r1[c1];
        dst[i * out_w + j] = wy0 * top + wy1 * bot;
      }
    }
  }
  TensorRef xin = x;
  attach(y, {x}, [xin, ay, ax, h, w, out_h, out_w, nc](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (i64 p = 0; p < nc; ++p) {
      const float* gy = self.grad.data() + p * out_h * out_w;
      float* gx = xin->grad.data() + p * h * w;
      for (i64 i = 0; i < out_h; ++i) {
        i64 r0 = ay->lo[i] * w, r1 = ay->hi[i] * w;
        float wy0 = ay->w_lo[i], wy1 = ay->w_hi[i];
        for (i64 j = 0; j < out_w; ++j) {
          float g = gy[i * out_w + j];
          i64 c0 = ax->lo[j], c1 = ax->hi[j];
          float wx0 = ax->w_lo[j], wx1 = ax->w_hi[j];
          gx[r0 + c0] += wy0 * wx0 * g;
          gx[r0 + c1] += wy0 * wx1 * g;
          gx[r1 + c0] += wy1 * wx0 * g;
          gx[r1 + c1] += wy1 * wx1 * g;
        }
      }
    }
  });
  return y;
}

TensorRef nearest_resize(const TensorRef& x, i64 out_h, i64 out_w) {
  if (out_h < 1 || out_w < 1) {
    throw InputError("nearest_resize: target size must be positive");
  }
  const i64 h = x->shape.h, w = x->shape.w;
  auto y = Tensor::create({x->shape.n, x->shape.c, out_h, out_w});
  const i64 nc = x->shape.n * x->shape.c;
  auto pick = [](i64 in, i64 out, i64 o) {
    double src = (static_cast<double>(o) + 0.5) *
                     (static_cast<double>(in) / static_cast<double>(out)) -
                 0.5;
    i64 idx = static_cast<i64>(std::lround(src));
    if (idx < 0) idx = 0;
    if (idx > in - 1) idx = in - 1;
    return idx;
  };
  auto rows = std::make_shared<std::vector<i64>>(out_h);
  auto cols = std::make_shared<std::vector<i64>>(out_w);
  for (i64 i = 0; i < out_h; ++i) (*rows)[i] = pick(h, out_h, i);
  for (i64 j = 0; j < out_w; ++j) (*cols)[j] = pick(w, out_w, j);
  for (i64 p = 0; p < nc; ++p) {
    const float* src = x->data.data() + p * h * w;
    float* dst = y->data.data() + p * out_h * out_w;
    for (i64 i = 0; i < out_h; ++i) {
      for (i64 j = 0; j < out_w; ++j) {
        dst[i * out_w + j] = src[(*rows)[i] * w + (*cols)[j]];
      }
    }
  }
  TensorRef xin = x;
  attach(y, {x}, [xin, rows, cols, h, w, out_h, out_w, nc](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (i64 p = 0; p < nc; ++p) {
      const float* gy = self.grad.data() + p * out_h * out_w;
      float* gx = xin->grad.data() + p * h * w;
      for (i64 i = 0; i < out_h; ++i) {
        for (i64 j = 0; j < out_w; ++j) {
          gx[(*rows)[i] * w + (*cols)[j]] += gy[i * out_w + j];
        }
      }
    }
  });
  return y;
}

TensorRef global_avg_pool(const TensorRef& x) {
  const i64 plane = x->shape.h * x->shape.w;
  auto y = Tensor::create({x->shape.n, x->shape.c, 1, 1});
  const i64 nc = x->shape.n * x->shape.c;
  const double inv = 1.0 / static_cast<double>(plane);
  for (i64 p = 0; p < nc; ++p) {
    const float* src = x->data.data() + p * plane;
    double acc = 0.0;
    for (i64 i = 0; i < plane; ++i) acc += src[i];
    y->data[p] = static_cast<float>(acc * inv);
  }
  TensorRef xin = x;
  attach(y, {x}, [xin, plane, nc, inv](Tensor& self) {
    if (!wants_grad(*xin)) return;
    for (i64 p = 0; p < nc; ++p) {
      float g = static_cast<float>(self.grad[p] * inv);
      float* gx = xin->grad.data() + p * plane;
      for (i64 i = 0; i < plane; ++i) gx[i] += g;
    }
  });
  return y;
}

TensorRef linear(const TensorRef& x, const LinearParams& p) {
  const i64 features = x->shape.c * x->shape.h * x->shape.w;
  const i64 n = x->shape.n;
  const i64 k = p.weight->shape.n;
  if (p.weight->shape.c != features) {
    throw_shape_mismatch("linear",
                         "input features " + std::to_string(features) +
                             " do not match weight (expects " +
                             std::to_string(p.weight->shape.c) + ")");
  }
  auto y = Tensor::create({n, k, 1, 1});
  detail::sgemm(false, true, static_cast<int>(n), static_cast<int>(k),
                static_cast<int>(features), x->data.data(),
                static_cast<int>(features), p.weight->data.data(),
                static_cast<int>(features), 0.0f, y->data.data(),
                static_cast<int>(k));
  for (i64 i = 0; i < n; ++i) {
    for (i64 j = 0; j < k; ++j) y->data[i * k + j] += p.bias->data[j];
  }
  TensorRef xin = x;
  LinearParams params = p;
  attach(y, {x, p.weight, p.bias}, [xin, params, n, k, features](Tensor& self) {
    if (wants_grad(*xin)) {
      detail::sgemm(false, false, static_cast<int>(n),
                    static_cast<int>(features), static_cast<int>(k),
                    self.grad.data(), static_cast<int>(k),
                    params.weight->data.data(), static_cast<int>(features),
                    1.0f, xin->grad.data(), static_cast<int>(features));
    }
    if (wants_grad(*params.weight)) {
      detail::sgemm(true, false, static_cast<int>(k),
                    static_cast<int>(features), static_cast<int>(n),
                    self.grad.data(), static_cast<int>(k), xin->data.data(),
                    static_cast<int>(features), 1.0f,
                    params.weight->grad.data(), static_cast<int>(features));
    }
    if (wants_grad(*params.bias)) {
      for (i64 j = 0; j < k; ++j) {
        double acc = 0.0;
        for (i64 i = 0; i < n; ++i) acc += self.grad[i * k + j];
        params.bias->grad[j] += static_cast<float>(acc);
      }
    }
  });
  return y;
}

TensorRef softmax_cross_entropy(const TensorRef& logits,
                                const std::vector<int>& labels) {
  const i64 n = logits->shape.n;
  const i64 k = logits->shape.c;
  if (logits->shape.h != 1 || logits->shape.w != 1) {
    throw_shape_mismatch("softmax_cross_entropy",
                         "logits must be (N,K,1,1), got " +
                             logits->shape.str());
  }
  if (static_cast<i64>(labels.size()) != n) {
    throw InputError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }
  for (i64 i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw InputError("softmax_cross_entropy: label " +
                       std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0," + std::to_string(k) +
                       ")");
    }
  }
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(n * k));
  double total = 0.0;
  for (i64 i = 0; i < n; ++i) {
    const float* z = logits->data.data() + i * k;
    float m = z[0];
    for (i64 j = 1; j < k; ++j) m = std::max(m, z[j]);
    double denom = 0.0;
    for (i64 j = 0; j < k; ++j) {
      denom += std::exp(static_cast<double>(z[j]) - m);
    }
    double log_denom = std::log(denom);
    for (i64 j = 0; j < k; ++j) {
      (*probs)[i * k + j] = static_cast<float>(
          std::exp(static_cast<double>(z[j]) - m - log_denom));
    }
    total += log_denom - (static_cast<double>(z[labels[i]]) - m);
  }
  auto loss = Tensor::create({1, 1, 1, 1});
  loss->data[0] = static_cast<float>(total / static_cast<double>(n));

  TensorRef zin = logits;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  attach(loss, {logits}, [zin, probs, labels_copy, n, k](Tensor& self) {
    if (!wants_grad(*zin)) return;
    float g = self.grad[0] / static_cast<float>(n);
    for (i64 i = 0; i < n; ++i) {
      for (i64 j = 0; j < k; ++j) {
        float p = (*probs)[i * k + j];
        float target = ((*labels_copy)[i] == j) ? 1.0f : 0.0f;
        zin->grad[i * k + j] += (p - target) * g;
      }
    }
  });
  return loss;
}

TensorRef sum(const TensorRef& x) {
  auto y = Tensor::create({1, 1, 1, 1});
  double acc = 0.0;
  for (float v : x->data) acc += v;
  y->data[0] = static_cast<float>(acc);
  TensorRef xin = x;
  attach(y, {x}, [xin](Tensor& self) {
    if (!wants_grad(*xin)) return;
    float g = self.grad[0];
    for (auto& v : xin->grad) v += g;
  });
  return y;
}

TensorRef weighted_sum(const TensorRef& x, const std::vector<double>& w) {
  if (static_cast<i64>(w.size()) != x->numel()) {
    throw InputError("weighted_sum: weight count " + std::to_string(w.size()) +
                     " does not match tensor numel " +
                     std::to_string(x->numel()));
  }
  auto y = Tensor::create({1, 1, 1, 1});
  double acc = 0.0;
  for (size_t i = 0; i < x->data.size(); ++i) {
    acc += w[i] * static_cast<double>(x->data[i]);
  }
  y->data[0] = static_cast<float>(acc);
  TensorRef xin = x;
  auto wc = std::make_shared<std::vector<double>>(w);
  attach(y, {x}, [xin, wc](Tensor& self) {
    if (!wants_grad(*xin)) return;
    double g = static_cast<double>(self.grad[0]);
    for (size_t i = 0; i < xin->grad.size(); ++i) {
      xin->grad[i] += static_cast<float>((*wc)[i] * g);
    }
  });
  return y;
}

std::vector<int> predict_classes(const TensorRef& logits) {
  const i64 n = logits->shape.n;
  const i64 k = logits->shape.c;
  std::vector<int> out(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    const float* z = logits->data.data() + i * k;
    int best = 0;
    for (i64 j = 1; j < k; ++j) {
      if (z[j] > z[best]) best = static_cast<int>(j);
    }
    out[i] = best;
  }
  return out;
}

}  // namespace elastic
