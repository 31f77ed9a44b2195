#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "elastic/ops.hpp"
#include "gemm.hpp"

namespace elastic {

namespace {

i64 conv_out_dim(i64 in, int kernel, int stride, int padding) {
  return (in + 2 * static_cast<i64>(padding) - kernel) / stride + 1;
}

// Expand one image's channel group into a (C*k*k) x (OH*OW) matrix whose
// columns are the flattened receptive fields. Out-of-bounds taps read zero.
void im2col(const float* src, i64 channels, i64 height, i64 width, int kernel,
            int stride, int padding, i64 out_h, i64 out_w, float* cols) {
  for (i64 c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        float* row = cols + ((c * kernel + kh) * kernel + kw) * out_h * out_w;
        for (i64 oh = 0; oh < out_h; ++oh) {
          i64 ih = oh * stride + kh - padding;
          if (ih < 0 || ih >= height) {
            std::memset(row + oh * out_w, 0, sizeof(float) * out_w);
            continue;
          }
          const float* src_row = src + (c * height + ih) * width;
          for (i64 ow = 0; ow < out_w; ++ow) {
            i64 iw = ow * stride + kw - padding;
            row[oh * out_w + ow] =
                (iw < 0 || iw >= width) ? 0.0f : src_row[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const float* cols, i64 channels, i64 height, i64 width, int kernel,
            int stride, int padding, i64 out_h, i64 out_w, float* dst) {
  for (i64 c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        const float* row =
            cols + ((c * kernel + kh) * kernel + kw) * out_h * out_w;
        for (i64 oh = 0; oh < out_h; ++oh) {
          i64 ih = oh * stride + kh - padding;
          if (ih < 0 || ih >= height) continue;
          float* dst_row = dst + (c * height + ih) * width;
          for (i64 ow = 0; ow < out_w; ++ow) {
            i64 iw = ow * stride + kw - padding;
            if (iw >= 0 && iw < width) dst_row[iw] += row[oh * out_w + ow];
          }
        }
      }
    }
  }
}

struct ConvDims {
  i64 n, cin, h, w, cout, oh, ow;
  i64 cin_g, cout_g;  // per-group channel counts
  int k, stride, pad, groups;
  bool direct;  // 1x1 stride-1 unpadded: GEMM straight on the input
};

ConvDims check_conv_args(const Tensor& x, const ConvParams& p) {
  const Shape& ws = p.weight->shape;
  if (ws.h != ws.w) {
    throw ConfigError("conv2d: kernel must be square, weight is " + ws.str());
  }
  if (p.groups < 1 || ws.n % p.groups != 0) {
    throw ConfigError("conv2d: out_channels " + std::to_string(ws.n) +
                      " not divisible by groups " + std::to_string(p.groups));
  }
  if (p.stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (p.padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  i64 cin = ws.c * p.groups;
  if (x.shape.c != cin) {
    throw_shape_mismatch(
        "conv2d", "input channels " + std::to_string(x.shape.c) +
                      " do not match weight (expects " + std::to_string(cin) +
                      " = " + std::to_string(ws.c) + " per group x " +
                      std::to_string(p.groups) + " groups)");
  }
  if (p.bias && (p.bias->shape.c != ws.n || p.bias->shape.numel() != ws.n)) {
    throw_shape_mismatch("conv2d",
                         "bias shape " + p.bias->shape.str() +
                             " does not match out_channels " +
                             std::to_string(ws.n));
  }
  ConvDims d;
  d.n = x.shape.n;
  d.cin = cin;
  d.h = x.shape.h;
  d.w = x.shape.w;
  d.cout = ws.n;
  d.k = static_cast<int>(ws.h);
  d.stride = p.stride;
  d.pad = p.padding;
  d.groups = p.groups;
  d.oh = conv_out_dim(d.h, d.k, d.stride, d.pad);
  d.ow = conv_out_dim(d.w, d.k, d.stride, d.pad);
  if (d.oh < 1 || d.ow < 1) {
    throw_shape_mismatch(
        "conv2d", "spatial input " + std::to_string(d.h) + "x" +
                      std::to_string(d.w) + " too small for kernel " +
                      std::to_string(d.k) + " stride " +
                      std::to_string(d.stride) + " padding " +
                      std::to_string(d.pad));
  }
  d.cin_g = d.cin / d.groups;
  d.cout_g = d.cout / d.groups;
  d.direct = (d.k == 1 && d.stride == 1 && d.pad == 0);
  return d;
}

void conv_forward(const float* x, const float* w, const float* bias,
                  const ConvDims& d, float* y, std::vector<float>& scratch) {
  const i64 spatial_out = d.oh * d.ow;
  const i64 patch = d.cin_g * d.k * d.k;
  if (!d.direct) scratch.resize(static_cast<size_t>(patch) * spatial_out);
  for (i64 n = 0; n < d.n; ++n) {
    for (int g = 0; g < d.groups; ++g) {
      const float* xg = x + (n * d.cin + g * d.cin_g) * d.h * d.w;
      const float* wg = w + g * d.cout_g * patch;
      float* yg = y + (n * d.cout + g * d.cout_g) * spatial_out;
      if (d.direct) {
        detail::sgemm(false, false, static_cast<int>(d.cout_g),
                      static_cast<int>(spatial_out), static_cast<int>(d.cin_g),
                      wg, static_cast<int>(d.cin_g), xg,
                      static_cast<int>(spatial_out), 0.0f, yg,
                      static_cast<int>(spatial_out));
      } else {
        im2col(xg, d.cin_g, d.h, d.w, d.k, d.stride, d.pad, d.oh, d.ow,
               scratch.data());
        detail::sgemm(false, false, static_cast<int>(d.cout_g),
                      static_cast<int>(spatial_out), static_cast<int>(patch),
                      wg, static_cast<int>(patch), scratch.data(),
                      static_cast<int>(spatial_out), 0.0f, yg,
                      static_cast<int>(spatial_out));
      }
    }
    if (bias) {
      for (i64 c = 0; c < d.cout; ++c) {
        float b = bias[c];
        float* row = y + (n * d.cout + c) * spatial_out;
        for (i64 i = 0; i < spatial_out; ++i) row[i] += b;
      }
    }
  }
}

}  // namespace

ConvParams ConvParams::create(i64 cin, i64 cout, int k, int stride, int padding,
                              int groups, bool with_bias, Pcg32& rng) {
  if (groups < 1 || cin % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv params: channels (" + std::to_string(cin) + "->" +
                      std::to_string(cout) + ") not divisible by groups " +
                      std::to_string(groups));
  }
  ConvParams p;
  p.stride = stride;
  p.padding = padding;
  p.groups = groups;
  p.weight = Tensor::create({cout, cin / groups, k, k}, true);
  double fan_in = static_cast<double>(cin / groups) * k * k;
  double std_dev = std::sqrt(2.0 / fan_in);
  for (auto& v : p.weight->data) {
    v = static_cast<float>(rng.next_gaussian() * std_dev);
  }
  if (with_bias) p.bias = Tensor::create({1, cout, 1, 1}, true);
  return p;
}

TensorRef conv2d(const TensorRef& x, const ConvParams& p) {
  ConvDims d = check_conv_args(*x, p);
  auto y = Tensor::create({d.n, d.cout, d.oh, d.ow});
  std::vector<float> scratch;
  conv_forward(x->data.data(), p.weight->data.data(),
               p.bias ? p.bias->data.data() : nullptr, d, y->data.data(),
               scratch);

  std::vector<TensorRef> inputs = {x, p.weight};
  if (p.bias) inputs.push_back(p.bias);
  if (!any_wants_grad(inputs)) return y;

  y->parents = inputs;
  TensorRef xin = x;
  ConvParams params = p;
  y->backward_fn = [xin, params, d](Tensor& self) {
    const i64 spatial_out = d.oh * d.ow;
    const i64 patch = d.cin_g * d.k * d.k;
    const float* dy = self.grad.data();
    std::vector<float> cols;
    std::vector<float> dcols;
    const bool need_dx = wants_grad(*xin);
    const bool need_dw = wants_grad(*params.weight);
    if (!d.direct && (need_dw || need_dx)) {
      cols.resize(static_cast<size_t>(patch) * spatial_out);
    }
    if (!d.direct && need_dx) {
      dcols.resize(static_cast<size_t>(patch) * spatial_out);
    }
    for (i64 n = 0; n < d.n; ++n) {
      for (int g = 0; g < d.groups; ++g) {
        const float* xg =
            xin->data.data() + (n * d.cin + g * d.cin_g) * d.h * d.w;
        const float* wg = params.weight->data.data() + g * d.cout_g * patch;
        const float* dyg = dy + (n * d.cout + g * d.cout_g) * spatial_out;
        if (!d.direct && (need_dw || need_dx)) {
          im2col(xg, d.cin_g, d.h, d.w, d.k, d.stride, d.pad, d.oh, d.ow,
                 cols.data());
        }
        if (need_dx) {
          float* dxg =
              xin->grad.data() + (n * d.cin + g * d.cin_g) * d.h * d.w;
          if (d.direct) {
            detail::sgemm(true, false, static_cast<int>(d.cin_g),
                          static_cast<int>(spatial_out),
                          static_cast<int>(d.cout_g), wg,
                          static_cast<int>(d.cin_g), dyg,
                          static_cast<int>(spatial_out), 1.0f, dxg,
                          static_cast<int>(spatial_out));
          } else {
            detail::sgemm(true, false, static_cast<int>(patch),
                          static_cast<int>(spatial_out),
                          static_cast<int>(d.cout_g), wg,
                          static_cast<int>(patch), dyg,
                          static_cast<int>(spatial_out), 0.0f, dcols.data(),
                          static_cast<int>(spatial_out));
            col2im(dcols.data(), d.cin_g, d.h, d.w, d.k, d.stride, d.pad, d.oh,
                   d.ow, dxg);
          }
        }
        if (need_dw) {
          float* dwg = params.weight->grad.data() + g * d.cout_g * patch;
          const float* b = d.direct ? xg : cols.data();
          detail::sgemm(false, true, static_cast<int>(d.cout_g),
                        static_cast<int>(patch), static_cast<int>(spatial_out),
                        dyg, static_cast<int>(spatial_out), b,
                        static_cast<int>(spatial_out), 1.0f, dwg,
                        static_cast<int>(patch));
        }
      }
    }
    if (params.bias && wants_grad(*params.bias)) {
      for (i64 c = 0; c < d.cout; ++c) {
        double acc = 0.0;
        for (i64 n = 0; n < d.n; ++n) {
          const float* row = dy + (n * d.cout + c) * spatial_out;
          for (i64 i = 0; i < spatial_out; ++i) acc += row[i];
        }
        params.bias->grad[c] += static_cast<float>(acc);
      }
    }
  };
  return y;
}

TensorRef conv2d_transpose(const TensorRef& x, const ConvParams& p) {
  const Shape& ws = p.weight->shape;  // (Cin, Cout, k, k)
  if (p.groups != 1) {
    throw ConfigError("conv2d_transpose: only groups=1 is supported");
  }
  if (ws.h != ws.w) {
    throw ConfigError("conv2d_transpose: kernel must be square, weight is " +
                      ws.str());
  }
  if (x->shape.c != ws.n) {
    throw_shape_mismatch("conv2d_transpose",
                         "input channels " + std::to_string(x->shape.c) +
                             " do not match weight (expects " +
                             std::to_string(ws.n) + ")");
  }
  const i64 cin = ws.n, cout = ws.c;
  const int k = static_cast<int>(ws.h), stride = p.stride, pad = p.padding;
  const i64 oh = (x->shape.h - 1) * stride + k - 2 * static_cast<i64>(pad);
  const i64 ow = (x->shape.w - 1) * stride + k - 2 * static_cast<i64>(pad);
  if (oh < 1 || ow < 1) {
    throw_shape_mismatch("conv2d_transpose", "output would be empty");
  }
  auto y = Tensor::create({x->shape.n, cout, oh, ow});

  const Tensor& xt = *x;
  const Tensor& wt = *p.weight;
  for (i64 n = 0; n < xt.shape.n; ++n) {
    for (i64 ci = 0; ci < cin; ++ci) {
      for (i64 h = 0; h < xt.shape.h; ++h) {
        for (i64 w = 0; w < xt.shape.w; ++w) {
          float v = xt.at(n, ci, h, w);
          for (int kh = 0; kh < k; ++kh) {
            i64 out_r = h * stride + kh - pad;
            if (out_r < 0 || out_r >= oh) continue;
            for (int kw = 0; kw < k; ++kw) {
              i64 out_c = w * stride + kw - pad;
              if (out_c < 0 || out_c >= ow) continue;
              for (i64 co = 0; co < cout; ++co) {
                y->at(n, co, out_r, out_c) += v * wt.at(ci, co, kh, kw);
              }
            }
          }
        }
      }
    }
    if (p.bias) {
      for (i64 co = 0; co < cout; ++co) {
        float b = p.bias->data[co];
        float* row = y->data.data() + (n * cout + co) * oh * ow;
        for (i64 i = 0; i < oh * ow; ++i) row[i] += b;
      }
    }
  }

  std::vector<TensorRef> inputs = {x, p.weight};
  if (p.bias) inputs.push_back(p.bias);
  if (!any_wants_grad(inputs)) return y;
  y->parents = inputs;
  TensorRef xin = x;
  ConvParams params = p;
  y->backward_fn = [xin, params, cin, cout, k, stride, pad, oh,
                    ow](Tensor& self) {
    const Tensor& wt = *params.weight;
    const bool need_dx = wants_grad(*xin);
    const bool need_dw = wants_grad(*params.weight);
    for (i64 n = 0; n < xin->shape.n; ++n) {
      for (i64 ci = 0; ci < cin; ++ci) {
        for (i64 h = 0; h < xin->shape.h; ++h) {
          for (i64 w = 0; w < xin->shape.w; ++w) {
            float xv = xin->at(n, ci, h, w);
            double dx_acc = 0.0;
            for (int kh = 0; kh < k; ++kh) {
              i64 out_r = h * stride + kh - pad;
              if (out_r < 0 || out_r >= oh) continue;
              for (int kw = 0; kw < k; ++kw) {
                i64 out_c = w * stride + kw - pad;
                if (out_c < 0 || out_c >= ow) continue;
                for (i64 co = 0; co < cout; ++co) {
                  float gy = self.grad[self.index(n, co, out_r, out_c)];
                  if (need_dx) dx_acc += gy * wt.at(ci, co, kh, kw);
                  if (need_dw) {
                    params.weight
                        ->grad[params.weight->index(ci, co, kh, kw)] +=
                        gy * xv;
                  }
                }
              }
            }
            if (need_dx) {
              xin->grad[xin->index(n, ci, h, w)] +=
                  static_cast<float>(dx_acc);
            }
          }
        }
      }
    }
    if (params.bias && wants_grad(*params.bias)) {
      for (i64 co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (i64 n = 0; n < xin->shape.n; ++n) {
          const float* row = self.grad.data() + (n * cout + co) * oh * ow;
          for (i64 i = 0; i < oh * ow; ++i) acc += row[i];
        }
        params.bias->grad[co] += static_cast<float>(acc);
      }
    }
  };
  return y;
}

}  // namespace elastic
