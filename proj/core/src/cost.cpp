#include "elastic/cost.hpp"

#include <sstream>

namespace elastic {

ScalingMethod scaling_method_from_string(const std::string& name) {
  if (name == "single") return ScalingMethod::single;
  if (name == "feature_pyramid_concat") return ScalingMethod::feature_pyramid_concat;
  if (name == "feature_pyramid_add") return ScalingMethod::feature_pyramid_add;
  if (name == "filter_pyramid_standard") return ScalingMethod::filter_pyramid_standard;
  if (name == "filter_pyramid_dilated") return ScalingMethod::filter_pyramid_dilated;
  if (name == "elastic") return ScalingMethod::elastic;
  throw InputError("unknown scaling method '" + name + "'");
}

std::string scaling_method_name(ScalingMethod m) {
  switch (m) {
    case ScalingMethod::single: return "single";
    case ScalingMethod::feature_pyramid_concat: return "feature_pyramid_concat";
    case ScalingMethod::feature_pyramid_add: return "feature_pyramid_add";
    case ScalingMethod::filter_pyramid_standard: return "filter_pyramid_standard";
    case ScalingMethod::filter_pyramid_dilated: return "filter_pyramid_dilated";
    case ScalingMethod::elastic: return "elastic";
  }
  return "?";
}

void CostQuery::validate() const {
  if (resolution < 1) throw InputError("cost query: resolution must be >= 1");
  if (channels < 1) throw InputError("cost query: channels must be >= 1");
  if (kernel < 1) throw InputError("cost query: kernel must be >= 1");
  if (scale_ratios.empty()) {
    throw InputError("cost query: at least one branch required");
  }
  if (scale_ratios.size() != width_divisors.size()) {
    throw InputError("cost query: " + std::to_string(scale_ratios.size()) +
                     " scale ratios but " +
                     std::to_string(width_divisors.size()) +
                     " width divisors");
  }
  Rational total(0);
  for (size_t i = 0; i < scale_ratios.size(); ++i) {
    if (scale_ratios[i] < 1) {
      throw InputError("cost query: scale_ratio[" + std::to_string(i) +
                       "] must be >= 1");
    }
    if (width_divisors[i] <= Rational(0)) {
      throw InputError("cost query: width_divisor[" + std::to_string(i) +
                       "] must be positive");
    }
    if (scale_ratios.size() > 1 && width_divisors[i] <= Rational(1)) {
      throw InputError("cost query: width_divisor[" + std::to_string(i) +
                       "] must exceed 1 when branching");
    }
    total += Rational(1) / width_divisors[i];
  }
  if (total != Rational(1)) {
    throw InputError("cost query: sum of 1/b_i is " + total.str() +
                     ", expected 1");
  }
}

SymbolicCost layer_scaling_cost(ScalingMethod method, const CostQuery& q) {
  q.validate();
  const Rational n2 = Rational(q.resolution) * Rational(q.resolution);
  const Rational c(q.channels);
  const Rational k2 = Rational(q.kernel) * Rational(q.kernel);
  const Rational qn(static_cast<i64>(q.scale_ratios.size()));

  SymbolicCost out;
  switch (method) {
    case ScalingMethod::single:
      out.flops = n2 * c * k2;
      out.params = c * k2;
      break;
    case ScalingMethod::feature_pyramid_concat:
      out.flops = n2 * (qn * c) * k2;
      out.params = (qn * c) * k2;
      break;
    case ScalingMethod::feature_pyramid_add:
      out.flops = n2 * c * k2;
      out.params = c * k2;
      break;
    case ScalingMethod::filter_pyramid_standard:
      for (size_t i = 0; i < q.scale_ratios.size(); ++i) {
        Rational kr = Rational(q.kernel) * Rational(q.scale_ratios[i]);
        Rational term = c * kr * kr / q.width_divisors[i];
        out.params += term;
        out.flops += n2 * term;
      }
      break;
    case ScalingMethod::filter_pyramid_dilated:
      out.flops = n2 * c * k2;
      out.params = c * k2;
      break;
    case ScalingMethod::elastic:
      for (size_t i = 0; i < q.scale_ratios.size(); ++i) {
        Rational nr = Rational(q.resolution) / Rational(q.scale_ratios[i]);
        out.flops += nr * nr * c * k2 / q.width_divisors[i];
      }
      out.params = c * k2;
      break;
  }
  return out;
}

BoundCheck verify_elastic_bound(i64 trials, std::uint64_t seed) {
  Pcg32 rng(seed, rng_stream::kProbe);
  BoundCheck result;
  for (i64 t = 0; t < trials; ++t) {
    CostQuery q;
    q.resolution = 1 + static_cast<i64>(rng.next_below(256));
    q.channels = 1 + static_cast<i64>(rng.next_below(512));
    q.kernel = 1 + static_cast<int>(rng.next_below(7));
    int branches = 1 + static_cast<int>(rng.next_below(4));
    // Random weights w_i >= 1 give divisors b_i = W / w_i, so 1/b_i sums to 1.
    std::vector<i64> weights(branches);
    i64 weight_total = 0;
    for (auto& w : weights) {
      w = 1 + static_cast<i64>(rng.next_below(8));
      weight_total += w;
    }
    bool all_native = true;
    for (int b = 0; b < branches; ++b) {
      int r = 1 << rng.next_below(4);
      if (branches > 1 && weights[b] == weight_total) {
        weights[b] = weight_total - 1;  // keep every divisor above 1
      }
      q.scale_ratios.push_back(r);
      q.width_divisors.push_back(Rational(weight_total, weights[b]));
      if (r != 1) all_native = false;
    }
    if (branches > 1) {
      // Re-normalize after any clamping: recompute total.
      weight_total = 0;
      for (auto w : weights) weight_total += w;
      for (int b = 0; b < branches; ++b) {
        q.width_divisors[b] = Rational(weight_total, weights[b]);
      }
    }

    SymbolicCost single = layer_scaling_cost(ScalingMethod::single, q);
    SymbolicCost elastic = layer_scaling_cost(ScalingMethod::elastic, q);
    ++result.trials;

    bool flops_ok = elastic.flops <= single.flops;
    bool equality_ok = all_native ? elastic.flops == single.flops
                                  : elastic.flops < single.flops;
    bool params_ok = elastic.params == single.params;
    if (!flops_ok || !equality_ok || !params_ok) {
      std::ostringstream os;
      os << "n=" << q.resolution << " c=" << q.channels << " k=" << q.kernel
         << " q=" << branches << ": elastic flops " << elastic.flops.str()
         << " vs single " << single.flops.str() << ", params "
         << elastic.params.str() << " vs " << single.params.str();
      result.ok = false;
      result.counterexample = os.str();
      return result;
    }
  }
  return result;
}

namespace {

struct CostWalk {
  CostReport report;

  void conv(const std::string& name, i64 oh, i64 ow, i64 cin, i64 cout, i64 k,
            i64 groups) {
    LayerCost lc;
    lc.name = name;
    lc.params = cout * (cin / groups) * k * k;
    lc.macs = oh * ow * cout * (cin / groups) * k * k;
    report.layers.push_back(lc);
  }

  void norm(const std::string& name, i64 channels) {
    report.layers.push_back({name, 0, 2 * channels});
  }

  void fc(const std::string& name, i64 in, i64 out) {
    report.layers.push_back({name, in * out, in * out + out});
  }
};

i64 conv_out(i64 in, int k, int s, int p) {
  return (in + 2 * static_cast<i64>(p) - k) / s + 1;
}

}  // namespace

CostReport model_cost(const ArchSpec& spec, i64 input_resolution) {
  spec.validate();
  i64 res_in = input_resolution == 0 ? spec.input_resolution : input_resolution;
  ResolutionCheck rc = check_input_resolution(spec, res_in);
  if (!rc.ok) {
    throw InputError("model_cost: resolution " + std::to_string(res_in) +
                     " unusable: " + rc.reason);
  }

  CostWalk walk;
  walk.report.input_resolution = res_in;

  i64 res = conv_out(res_in, spec.stem.kernel, spec.stem.stride,
                     spec.stem.padding);
  walk.conv("stem.conv", res, res, 3, spec.stem.out_channels, spec.stem.kernel,
            1);
  walk.norm("stem.bn", spec.stem.out_channels);
  if (spec.stem.pool == StemPool::max3s2) res = conv_out(res, 3, 2, 1);

  i64 stream = spec.stem.out_channels;
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    const StageSpec& st = spec.stages[si];
    std::string sprefix = "stage" + std::to_string(si);
    i64 entry_res = res;  // feature size entering the stage, before striding
    if (spec.family == Family::densenet && st.stride_on_entry == 2) {
      std::string t = "trans" + std::to_string(si);
      walk.norm(t + ".bn", stream);
      i64 squeezed =
          (Rational(stream) * spec.transition_compression).floor_div();
      walk.conv(t + ".conv", res, res, stream, squeezed, 1, 1);
      stream = squeezed;
    }
    // rc.stage_resolutions holds the per-stage feature size for res_in.
    i64 out_res = rc.stage_resolutions[si];

    for (i64 bi = 0; bi < st.num_blocks; ++bi) {
      ElasticBlockSpec bs = block_spec_at(spec, si, bi);
      std::string bprefix = sprefix + ".block" + std::to_string(bi);
      // The 1x1 reduce of a stride-2 entry block still runs at the incoming
      // resolution; the stride sits on the 3x3.
      i64 in_res = (bi == 0) ? entry_res : out_res;
      if (spec.family == Family::densenet) in_res = out_res;
      if (spec.family == Family::resnext) {
        for (size_t br = 0; br < bs.branches.size(); ++br) {
          const BranchSpec& b = bs.branches[br];
          i64 width = bs.branch_width(br);
          i64 bres_in = in_res / b.scale_ratio;
          i64 bres_out = out_res / b.scale_ratio;
          std::string p = bprefix + ".branch" + std::to_string(br);
          if (bs.resample == Resample::trained_filter && b.scale_ratio > 1) {
            walk.conv(p + ".down", bres_in, bres_in, bs.in_channels,
                      bs.in_channels, b.scale_ratio, 1);
          }
          walk.conv(p + ".reduce.conv", bres_in, bres_in, bs.in_channels,
                    width, 1, 1);
          walk.norm(p + ".reduce.bn", width);
          walk.conv(p + ".grouped.conv", bres_out, bres_out, width, width, 3,
                    b.cardinality);
          walk.norm(p + ".grouped.bn", width);
          walk.conv(p + ".expand.conv", bres_out, bres_out, width,
                    bs.out_channels, 1, 1);
          walk.norm(p + ".expand.bn", bs.out_channels);
          if (bs.resample == Resample::trained_filter && b.scale_ratio > 1) {
            // Transposed conv: every input position applies the full kernel.
            LayerCost lc;
            lc.name = p + ".up";
            lc.params = bs.out_channels * bs.out_channels * b.scale_ratio *
                        b.scale_ratio;
            lc.macs = bres_out * bres_out * lc.params;
            walk.report.layers.push_back(lc);
          }
        }
        if (bs.residual && (bs.in_channels != bs.out_channels || bs.stride != 1)) {
          walk.conv(bprefix + ".proj.conv", out_res, out_res, bs.in_channels,
                    bs.out_channels, 1, 1);
          walk.norm(bprefix + ".proj.bn", bs.out_channels);
        }
      } else {
        walk.norm(bprefix + ".norm0", bs.in_channels);
        for (size_t br = 0; br < bs.branches.size(); ++br) {
          const BranchSpec& b = bs.branches[br];
          i64 width = bs.branch_width(br);
          i64 bres = out_res / b.scale_ratio;
          std::string p = bprefix + ".branch" + std::to_string(br);
          if (bs.resample == Resample::trained_filter && b.scale_ratio > 1) {
            walk.conv(p + ".down", bres, bres, bs.in_channels, bs.in_channels,
                      b.scale_ratio, 1);
          }
          walk.conv(p + ".conv1", bres, bres, bs.in_channels, width, 1, 1);
          walk.norm(p + ".bn1", width);
          walk.conv(p + ".conv2", bres, bres, width, bs.growth, 3, 1);
          if (bs.resample == Resample::trained_filter && b.scale_ratio > 1) {
            LayerCost lc;
            lc.name = p + ".up";
            lc.params =
                bs.growth * bs.growth * b.scale_ratio * b.scale_ratio;
            lc.macs = bres * bres * lc.params;
            walk.report.layers.push_back(lc);
          }
        }
      }
      stream = bs.effective_out_channels();
    }
    res = rc.stage_resolutions[si];
  }

  if (spec.family == Family::densenet) walk.norm("final_bn", stream);
  walk.fc("fc", stream, spec.num_classes);

  for (const auto& l : walk.report.layers) {
    walk.report.total_macs += l.macs;
    walk.report.total_params += l.params;
  }
  return walk.report;
}

}  // namespace elastic
