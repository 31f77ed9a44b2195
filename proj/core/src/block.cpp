#include "elastic/block.hpp"

#include <cmath>

namespace elastic {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string block_tag(const ElasticBlockSpec& s) {
  return std::string(s.kind == BlockKind::resnext_bottleneck ? "resnext"
                                                             : "densenet") +
         " block (in=" + std::to_string(s.in_channels) + ")";
}

}  // namespace

void ElasticBlockSpec::validate() const {
  const std::string tag = block_tag(*this);
  if (in_channels < 1) throw ConfigError(tag + ": in_channels must be >= 1");
  if (bottleneck_channels < 1) {
    throw ConfigError(tag + ": bottleneck_channels must be >= 1");
  }
  if (kind == BlockKind::resnext_bottleneck) {
    if (out_channels < 1) throw ConfigError(tag + ": out_channels must be >= 1");
    if (stride != 1 && stride != 2) {
      throw ConfigError(tag + ": stride must be 1 or 2");
    }
  } else {
    if (growth < 1) throw ConfigError(tag + ": growth must be >= 1");
    if (stride != 1) {
      throw ConfigError(tag + ": densenet blocks do not carry a stride");
    }
  }
  if (branches.empty()) throw ConfigError(tag + ": no branches");
  if (stride == 2 && (branches.size() != 1 || branches[0].scale_ratio != 1)) {
    throw ConfigError(tag +
                      ": stride-2 entry blocks must stay single-branch at "
                      "native resolution");
  }

  Rational total(0);
  for (size_t i = 0; i < branches.size(); ++i) {
    const BranchSpec& b = branches[i];
    std::string btag = tag + " branch " + std::to_string(i);
    if (b.scale_ratio < 1) {
      throw ConfigError(btag + ": scale_ratio must be >= 1");
    }
    if (resample == Resample::avgpool_bilinear &&
        !power_of_two(b.scale_ratio)) {
      throw ConfigError(btag + ": scale_ratio " +
                        std::to_string(b.scale_ratio) +
                        " must be a power of two under avgpool resampling");
    }
    if (b.cardinality < 1) throw ConfigError(btag + ": cardinality must be >= 1");
    if (b.width_fraction <= Rational(0)) {
      throw ConfigError(btag + ": width_fraction must be positive");
    }
    Rational width = b.width_fraction * Rational(bottleneck_channels);
    if (!width.is_integer() || width.num() < 1) {
      throw ConfigError(btag + ": width fraction " + b.width_fraction.str() +
                        " of " + std::to_string(bottleneck_channels) +
                        " channels is not a positive integer");
    }
    if (kind == BlockKind::resnext_bottleneck &&
        width.num() % b.cardinality != 0) {
      throw ConfigError(btag + ": width " + std::to_string(width.num()) +
                        " not divisible by cardinality " +
                        std::to_string(b.cardinality));
    }
    total += b.width_fraction;
  }
  if (total != Rational(1)) {
    throw ConfigError(tag + ": branch width fractions sum to " + total.str() +
                      ", expected 1");
  }
}

bool ElasticBlockSpec::is_elastic() const {
  if (branches.size() > 1) return true;
  return !branches.empty() && branches[0].scale_ratio > 1;
}

i64 ElasticBlockSpec::branch_width(size_t i) const {
  Rational w = branches.at(i).width_fraction * Rational(bottleneck_channels);
  return w.num();
}

i64 ElasticBlockSpec::effective_out_channels() const {
  return kind == BlockKind::resnext_bottleneck ? out_channels
                                               : in_channels + growth;
}

BlockParams make_block(const ElasticBlockSpec& spec, Pcg32& rng) {
  spec.validate();
  BlockParams p;
  p.spec = spec;
  if (spec.kind == BlockKind::resnext_bottleneck) {
    ResnextBlockParams rp;
    for (size_t i = 0; i < spec.branches.size(); ++i) {
      const BranchSpec& b = spec.branches[i];
      i64 width = spec.branch_width(i);
      ResnextBranchParams bp;
      if (spec.resample == Resample::trained_filter && b.scale_ratio > 1) {
        bp.down = ConvParams::create(spec.in_channels, spec.in_channels,
                                     b.scale_ratio, b.scale_ratio, 0, 1, false,
                                     rng);
      }
      bp.reduce.conv = ConvParams::create(spec.in_channels, width, 1, 1, 0, 1,
                                          false, rng);
      bp.reduce.bn = NormParams::create(width);
      bp.grouped.conv = ConvParams::create(width, width, 3, spec.stride, 1,
                                           b.cardinality, false, rng);
      bp.grouped.bn = NormParams::create(width);
      bp.expand.conv = ConvParams::create(width, spec.out_channels, 1, 1, 0, 1,
                                          false, rng);
      bp.expand.bn = NormParams::create(spec.out_channels);
      if (spec.resample == Resample::trained_filter && b.scale_ratio > 1) {
        // Transposed conv back to native resolution; weight is (Cin,Cout,k,k).
        ConvParams up;
        up.stride = b.scale_ratio;
        up.padding = 0;
        up.groups = 1;
        up.weight = Tensor::create({spec.out_channels, spec.out_channels,
                                    b.scale_ratio, b.scale_ratio},
                                   true);
        double fan_in = static_cast<double>(spec.out_channels) *
                        b.scale_ratio * b.scale_ratio;
        double std_dev = std::sqrt(2.0 / fan_in);
        for (auto& v : up.weight->data) {
          v = static_cast<float>(rng.next_gaussian() * std_dev);
        }
        bp.up = up;
      }
      rp.branches.push_back(std::move(bp));
    }
    if (spec.residual &&
        (spec.in_channels != spec.out_channels || spec.stride != 1)) {
      ConvBn proj;
      proj.conv = ConvParams::create(spec.in_channels, spec.out_channels, 1,
                                     spec.stride, 0, 1, false, rng);
      proj.bn = NormParams::create(spec.out_channels);
      rp.projection = std::move(proj);
    }
    p.resnext = std::move(rp);
  } else {
    DensenetBlockParams dp;
    dp.norm0 = NormParams::create(spec.in_channels);
    for (size_t i = 0; i < spec.branches.size(); ++i) {
      const BranchSpec& b = spec.branches[i];
      i64 width = spec.branch_width(i);
      DensenetBranchParams bp;
      if (spec.resample == Resample::trained_filter && b.scale_ratio > 1) {
        bp.down = ConvParams::create(spec.in_channels, spec.in_channels,
                                     b.scale_ratio, b.scale_ratio, 0, 1, false,
                                     rng);
      }
      bp.conv1 = ConvParams::create(spec.in_channels, width, 1, 1, 0, 1, false,
                                    rng);
      bp.bn1 = NormParams::create(width);
      bp.conv2 = ConvParams::create(width, spec.growth, 3, 1, 1, 1, false, rng);
      if (spec.resample == Resample::trained_filter && b.scale_ratio > 1) {
        ConvParams up;
        up.stride = b.scale_ratio;
        up.groups = 1;
        up.weight = Tensor::create(
            {spec.growth, spec.growth, b.scale_ratio, b.scale_ratio}, true);
        double fan_in =
            static_cast<double>(spec.growth) * b.scale_ratio * b.scale_ratio;
        double std_dev = std::sqrt(2.0 / fan_in);
        for (auto& v : up.weight->data) {
          v = static_cast<float>(rng.next_gaussian() * std_dev);
        }
        bp.up = up;
      }
      dp.branches.push_back(std::move(bp));
    }
    p.densenet = std::move(dp);
  }
  return p;
}

namespace {

TensorRef downsample(const TensorRef& x, const ElasticBlockSpec& spec,
                     int ratio, const std::optional<ConvParams>& down) {
  if (ratio == 1) return x;
  if (x->shape.h % ratio != 0 || x->shape.w % ratio != 0) {
    throw InputError("elastic branch: resolution " + x->shape.str() +
                     " not divisible by scale_ratio " + std::to_string(ratio));
  }
  switch (spec.resample) {
    case Resample::avgpool_bilinear: {
      TensorRef t = x;
      for (int r = ratio; r > 1; r /= 2) t = avg_pool2(t);
      return t;
    }
    case Resample::nearest:
      return nearest_resize(x, x->shape.h / ratio, x->shape.w / ratio);
    case Resample::trained_filter:
      return conv2d(x, *down);
  }
  throw UsageError("elastic branch: unknown resample mode");
}

TensorRef upsample(const TensorRef& x, const ElasticBlockSpec& spec, i64 out_h,
                   i64 out_w, const std::optional<ConvParams>& up) {
  if (x->shape.h == out_h && x->shape.w == out_w) return x;
  switch (spec.resample) {
    case Resample::avgpool_bilinear:
      return bilinear_resize(x, out_h, out_w);
    case Resample::nearest:
      return nearest_resize(x, out_h, out_w);
    case Resample::trained_filter:
      return conv2d_transpose(x, *up);
  }
  throw UsageError("elastic branch: unknown resample mode");
}

TensorRef conv_bn_relu(const TensorRef& x, ConvBn& p) {
  return relu(batch_norm(conv2d(x, p.conv), p.bn));
}

TensorRef resnext_forward(const TensorRef& x, BlockParams& params,
                          BranchTrace* trace) {
  const ElasticBlockSpec& spec = params.spec;
  ResnextBlockParams& rp = *params.resnext;
  const i64 out_h = x->shape.h / spec.stride;
  const i64 out_w = x->shape.w / spec.stride;

  TensorRef merged;
  for (size_t i = 0; i < rp.branches.size(); ++i) {
    ResnextBranchParams& bp = rp.branches[i];
    int ratio = spec.branches[i].scale_ratio;
    TensorRef t = downsample(x, spec, ratio, bp.down);
    t = conv_bn_relu(t, bp.reduce);
    t = conv_bn_relu(t, bp.grouped);
    if (trace) {
      trace->post_transform.push_back(t);
      trace->scale_ratios.push_back(ratio);
    }
    t = batch_norm(conv2d(t, bp.expand.conv), bp.expand.bn);
    t = upsample(t, spec, out_h, out_w, bp.up);
    if (trace) trace->merged_inputs.push_back(t);
    merged = merged ? add(merged, t) : t;
  }

  if (spec.residual) {
    TensorRef shortcut =
        rp.projection
            ? batch_norm(conv2d(x, rp.projection->conv), rp.projection->bn)
            : x;
    merged = add(merged, shortcut);
  }
  return relu(merged);
}

TensorRef densenet_forward(const TensorRef& x, BlockParams& params,
                           BranchTrace* trace) {
  const ElasticBlockSpec& spec = params.spec;
  DensenetBlockParams& dp = *params.densenet;
  TensorRef shared = relu(batch_norm(x, dp.norm0));

  TensorRef merged;
  for (size_t i = 0; i < dp.branches.size(); ++i) {
    DensenetBranchParams& bp = dp.branches[i];
    int ratio = spec.branches[i].scale_ratio;
    TensorRef t = downsample(shared, spec, ratio, bp.down);
    t = conv2d(t, bp.conv1);
    t = relu(batch_norm(t, bp.bn1));
    t = conv2d(t, bp.conv2);
    if (trace) {
      trace->post_transform.push_back(t);
      trace->scale_ratios.push_back(ratio);
    }
    t = upsample(t, spec, x->shape.h, x->shape.w, bp.up);
    if (trace) trace->merged_inputs.push_back(t);
    merged = merged ? add(merged, t) : t;
  }
  return concat_channels(x, merged);
}

}  // namespace

TensorRef block_forward(const TensorRef& x, BlockParams& params,
                        BranchTrace* trace) {
  if (x->shape.c != params.spec.in_channels) {
    throw_shape_mismatch("block_forward",
                         "input channels " + std::to_string(x->shape.c) +
                             " do not match spec in_channels " +
                             std::to_string(params.spec.in_channels));
  }
  if (params.spec.kind == BlockKind::resnext_bottleneck) {
    return resnext_forward(x, params, trace);
  }
  return densenet_forward(x, params, trace);
}

namespace {

void visit_conv(const std::string& name, ConvParams& c,
                const std::function<void(const std::string&, const TensorRef&)>&
                    on_tensor) {
  on_tensor(name + ".weight", c.weight);
  if (c.bias) on_tensor(name + ".bias", c.bias);
}

void visit_norm(const std::string& name, NormParams& n,
                const std::function<void(const std::string&, const TensorRef&)>&
                    on_tensor,
                const std::function<void(const std::string&, NormParams*)>&
                    on_norm) {
  on_tensor(name + ".gamma", n.gamma);
  on_tensor(name + ".beta", n.beta);
  on_norm(name, &n);
}

}  // namespace

void visit_block(BlockParams& params, const std::string& prefix,
                 const std::function<void(const std::string&, const TensorRef&)>&
                     on_tensor,
                 const std::function<void(const std::string&, NormParams*)>&
                     on_norm) {
  if (params.resnext) {
    ResnextBlockParams& rp = *params.resnext;
    for (size_t i = 0; i < rp.branches.size(); ++i) {
      std::string b = prefix + ".branch" + std::to_string(i);
      ResnextBranchParams& bp = rp.branches[i];
      if (bp.down) visit_conv(b + ".down", *bp.down, on_tensor);
      visit_conv(b + ".reduce.conv", bp.reduce.conv, on_tensor);
      visit_norm(b + ".reduce.bn", bp.reduce.bn, on_tensor, on_norm);
      visit_conv(b + ".grouped.conv", bp.grouped.conv, on_tensor);
      visit_norm(b + ".grouped.bn", bp.grouped.bn, on_tensor, on_norm);
      visit_conv(b + ".expand.conv", bp.expand.conv, on_tensor);
      visit_norm(b + ".expand.bn", bp.expand.bn, on_tensor, on_norm);
      if (bp.up) visit_conv(b + ".up", *bp.up, on_tensor);
    }
    if (rp.projection) {
      visit_conv(prefix + ".proj.conv", rp.projection->conv, on_tensor);
      visit_norm(prefix + ".proj.bn", rp.projection->bn, on_tensor, on_norm);
    }
  } else if (params.densenet) {
    DensenetBlockParams& dp = *params.densenet;
    visit_norm(prefix + ".norm0", dp.norm0, on_tensor, on_norm);
    for (size_t i = 0; i < dp.branches.size(); ++i) {
      std::string b = prefix + ".branch" + std::to_string(i);
      DensenetBranchParams& bp = dp.branches[i];
      if (bp.down) visit_conv(b + ".down", *bp.down, on_tensor);
      visit_conv(b + ".conv1", bp.conv1, on_tensor);
      visit_norm(b + ".bn1", bp.bn1, on_tensor, on_norm);
      visit_conv(b + ".conv2", bp.conv2, on_tensor);
      if (bp.up) visit_conv(b + ".up", *bp.up, on_tensor);
    }
  }
}

i64 block_learnable_param_count(BlockParams& params) {
  i64 total = 0;
  visit_block(
      params, "b",
      [&total](const std::string&, const TensorRef& t) { total += t->numel(); },
      [](const std::string&, NormParams*) {});
  return total;
}

}  // namespace elastic
