#include "elastic/arch.hpp"

#include <algorithm>

namespace elastic {

namespace {

i64 conv_out(i64 in, int k, int s, int p) {
  return (in + 2 * static_cast<i64>(p) - k) / s + 1;
}

}  // namespace

i64 ArchSpec::stem_output_resolution() const {
  i64 r = conv_out(input_resolution, stem.kernel, stem.stride, stem.padding);
  if (stem.pool == StemPool::max3s2) r = conv_out(r, 3, 2, 1);
  return r;
}

i64 ArchSpec::min_resolution() const {
  i64 m = stages.empty() ? 0 : stages[0].resolution;
  for (const auto& s : stages) m = std::min(m, s.resolution);
  return m;
}

void ArchSpec::validate() const {
  if (name.empty()) throw ConfigError("arch: name must not be empty");
  if (num_classes < 2) throw ConfigError("arch '" + name + "': num_classes must be >= 2");
  if (stages.empty()) throw ConfigError("arch '" + name + "': no stages");
  if (input_resolution < 1) {
    throw ConfigError("arch '" + name + "': input_resolution must be >= 1");
  }
  if (stem.kernel < 1 || stem.stride < 1 || stem.padding < 0 ||
      stem.out_channels < 1) {
    throw ConfigError("arch '" + name + "': bad stem");
  }
  if (family == Family::densenet &&
      (transition_compression <= Rational(0) ||
       transition_compression > Rational(1))) {
    throw ConfigError("arch '" + name +
                      "': transition_compression must be in (0, 1]");
  }

  i64 res = stem_output_resolution();
  if (res < 1) {
    throw ConfigError("arch '" + name + "': stem consumes the whole input");
  }
  for (size_t si = 0; si < stages.size(); ++si) {
    const StageSpec& st = stages[si];
    std::string tag = "arch '" + name + "' stage " + std::to_string(si);
    if (st.num_blocks < 1) throw ConfigError(tag + ": num_blocks must be >= 1");
    if (st.stride_on_entry != 1 && st.stride_on_entry != 2) {
      throw ConfigError(tag + ": stride_on_entry must be 1 or 2");
    }
    if (st.stride_on_entry == 2) {
      if (family == Family::densenet && res % 2 != 0) {
        throw ConfigError(tag + ": transition needs an even resolution, has " +
                          std::to_string(res));
      }
      res = family == Family::densenet ? res / 2 : (res + 1) / 2;
    }
    if (st.resolution != res) {
      throw ConfigError(tag + ": resolution " + std::to_string(st.resolution) +
                        " inconsistent with computed " + std::to_string(res) +
                        " (input " + std::to_string(input_resolution) +
                        " and strides so far)");
    }
    if (family == Family::resnext) {
      if (st.out_channels < 1 || st.bottleneck_channels < 1) {
        throw ConfigError(tag + ": widths must be >= 1");
      }
      if (st.cardinality < 1 || st.bottleneck_channels % st.cardinality != 0) {
        throw ConfigError(tag + ": bottleneck width " +
                          std::to_string(st.bottleneck_channels) +
                          " not divisible by cardinality " +
                          std::to_string(st.cardinality));
      }
    } else {
      if (st.growth < 1) throw ConfigError(tag + ": growth must be >= 1");
      if (st.bottleneck_channels < 1) {
        throw ConfigError(tag + ": bottleneck width must be >= 1");
      }
      if (st.cardinality != 1) {
        throw ConfigError(tag + ": densenet blocks are not grouped");
      }
    }
    if (st.elastic) {
      if (st.branches.empty()) {
        throw ConfigError(tag + ": elastic stage without a branch template");
      }
      for (size_t bi = 0; bi < st.branches.size(); ++bi) {
        int r = st.branches[bi].scale_ratio;
        if (st.resolution % r != 0) {
          throw ConfigError(tag + " branch " + std::to_string(bi) +
                            ": scale_ratio " + std::to_string(r) +
                            " does not divide stage resolution " +
                            std::to_string(st.resolution));
        }
      }
    }
  }

  // Validate every distinct concrete block spec this arch will build.
  for (size_t si = 0; si < stages.size(); ++si) {
    for (i64 bi = 0; bi < stages[si].num_blocks; ++bi) {
      block_spec_at(*this, si, bi).validate();
      if (bi > 0 && stages[si].num_blocks > 2) break;  // identical inner blocks
    }
  }
}

bool block_eligible(const ArchSpec& spec, size_t stage_idx, i64 block_idx) {
  const StageSpec& st = spec.stages.at(stage_idx);
  if (block_idx < 0 || block_idx >= st.num_blocks) {
    throw UsageError("block_eligible: block index " +
                     std::to_string(block_idx) + " out of range");
  }
  if (st.resolution == spec.min_resolution()) return false;
  bool stride2_entry = spec.family == Family::resnext &&
                       st.stride_on_entry == 2 && block_idx == 0;
  return !stride2_entry;
}

bool block_is_elastic(const ArchSpec& spec, size_t stage_idx, i64 block_idx) {
  return spec.stages.at(stage_idx).elastic &&
         block_eligible(spec, stage_idx, block_idx);
}

i64 count_elastic_blocks(const ArchSpec& spec) {
  i64 count = 0;
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    for (i64 bi = 0; bi < spec.stages[si].num_blocks; ++bi) {
      if (block_is_elastic(spec, si, bi)) ++count;
    }
  }
  return count;
}

ElasticBlockSpec block_spec_at(const ArchSpec& spec, size_t stage_idx,
                               i64 block_idx) {
  const StageSpec& st = spec.stages.at(stage_idx);
  ElasticBlockSpec b;
  b.resample = st.resample;
  if (spec.family == Family::resnext) {
    b.kind = BlockKind::resnext_bottleneck;
    b.out_channels = st.out_channels;
    b.bottleneck_channels = st.bottleneck_channels;
    b.stride = (block_idx == 0) ? st.stride_on_entry : 1;
    b.residual = true;
    i64 prev_out = 0;
    if (block_idx > 0) {
      prev_out = st.out_channels;
    } else if (stage_idx == 0) {
      prev_out = spec.stem.out_channels;
    } else {
      prev_out = spec.stages[stage_idx - 1].out_channels;
    }
    b.in_channels = prev_out;
  } else {
    b.kind = BlockKind::densenet_growth;
    b.growth = st.growth;
    b.bottleneck_channels = st.bottleneck_channels;
    b.stride = 1;
    b.residual = false;
    i64 stage_in = 0;
    if (stage_idx == 0) {
      stage_in = spec.stem.out_channels;
    } else {
      // Output of the previous stage, squeezed by its following transition.
      i64 prev = block_spec_at(spec, stage_idx - 1,
                               spec.stages[stage_idx - 1].num_blocks - 1)
                     .effective_out_channels();
      if (st.stride_on_entry == 2) {
        prev = (Rational(prev) * spec.transition_compression).floor_div();
      }
      stage_in = prev;
    }
    b.in_channels = stage_in + block_idx * st.growth;
  }
  if (block_is_elastic(spec, stage_idx, block_idx)) {
    b.branches = st.branches;
  } else {
    BranchSpec plain;
    plain.scale_ratio = 1;
    plain.width_fraction = Rational(1);
    plain.cardinality = spec.family == Family::resnext ? st.cardinality : 1;
    b.branches = {plain};
  }
  return b;
}

ArchSpec selastic_transform(const ArchSpec& spec) {
  spec.validate();
  for (const auto& st : spec.stages) {
    if (st.elastic) {
      throw UsageError("selastic_transform: arch '" + spec.name +
                       "' already has elastic stages");
    }
  }
  ArchSpec out = spec;
  out.name = spec.name + "_selastic";
  i64 min_res = spec.min_resolution();
  for (auto& st : out.stages) {
    if (st.resolution == min_res) continue;
    if (st.resolution % 2 != 0) continue;  // cannot host an r=2 branch
    int card = st.cardinality;
    int half_card = std::max(1, card / 2);
    if (spec.family == Family::densenet) half_card = 1;
    BranchSpec high;
    high.scale_ratio = 1;
    high.width_fraction = Rational(1, 2);
    high.cardinality = half_card;
    BranchSpec low = high;
    low.scale_ratio = 2;
    st.elastic = true;
    st.branches = {high, low};
  }
  out.validate();
  return out;
}

ResolutionCheck check_input_resolution(const ArchSpec& spec, i64 resolution) {
  ResolutionCheck rc;
  if (resolution < 1) {
    rc.reason = "resolution must be positive";
    return rc;
  }
  i64 r = conv_out(resolution, spec.stem.kernel, spec.stem.stride,
                   spec.stem.padding);
  if (r < 1) {
    rc.reason = "stem consumes the whole input";
    return rc;
  }
  if (spec.stem.pool == StemPool::max3s2) {
    r = conv_out(r, 3, 2, 1);
    if (r < 1) {
      rc.reason = "stem pooling consumes the whole input";
      return rc;
    }
  }
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    const StageSpec& st = spec.stages[si];
    if (st.stride_on_entry == 2) {
      if (spec.family == Family::densenet) {
        if (r % 2 != 0) {
          rc.reason = "stage " + std::to_string(si) +
                      " transition needs an even feature size, has " +
                      std::to_string(r);
          return rc;
        }
        r = r / 2;
      } else {
        if (r < 2) {
          rc.reason = "stage " + std::to_string(si) +
                      " stride-2 entry needs feature size >= 2";
          return rc;
        }
        r = (r + 1) / 2;
      }
    }
    for (i64 bi = 0; bi < st.num_blocks; ++bi) {
      if (!block_is_elastic(spec, si, bi)) continue;
      for (const auto& br : st.branches) {
        if (r % br.scale_ratio != 0) {
          rc.reason = "stage " + std::to_string(si) + " feature size " +
                      std::to_string(r) + " not divisible by scale_ratio " +
                      std::to_string(br.scale_ratio);
          return rc;
        }
      }
      break;
    }
    rc.stage_resolutions.push_back(r);
  }
  rc.ok = true;
  return rc;
}

std::vector<i64> valid_input_resolutions(const ArchSpec& spec, i64 lo, i64 hi) {
  std::vector<i64> out;
  for (i64 r = std::max<i64>(1, lo); r <= hi; ++r) {
    if (check_input_resolution(spec, r).ok) out.push_back(r);
  }
  return out;
}

}  // namespace elastic
