#include "elastic/arch.hpp"

namespace elastic {

namespace {

std::vector<BranchSpec> half_split(int cardinality) {
  BranchSpec high;
  high.scale_ratio = 1;
  high.width_fraction = Rational(1, 2);
  high.cardinality = cardinality;
  BranchSpec low = high;
  low.scale_ratio = 2;
  return {high, low};
}

StageSpec resnext_stage(int blocks, i64 out, i64 bottleneck, int cardinality,
                        i64 resolution, int stride) {
  StageSpec s;
  s.num_blocks = blocks;
  s.out_channels = out;
  s.bottleneck_channels = bottleneck;
  s.cardinality = cardinality;
  s.resolution = resolution;
  s.stride_on_entry = stride;
  return s;
}

StageSpec densenet_stage(int blocks, int growth, i64 bottleneck,
                         i64 resolution, int stride) {
  StageSpec s;
  s.num_blocks = blocks;
  s.growth = growth;
  s.bottleneck_channels = bottleneck;
  s.resolution = resolution;
  s.stride_on_entry = stride;
  return s;
}

ArchSpec resnext_imagenet(const std::string& name,
                          const std::vector<int>& blocks, bool elastic) {
  ArchSpec a;
  a.name = name;
  a.family = Family::resnext;
  a.input_resolution = 224;
  a.num_classes = 1000;
  a.stem = {7, 2, 3, 64, StemPool::max3s2};
  a.stages = {
      resnext_stage(blocks[0], 256, 128, 32, 56, 1),
      resnext_stage(blocks[1], 512, 256, 32, 28, 2),
      resnext_stage(blocks[2], 1024, 512, 32, 14, 2),
      resnext_stage(blocks[3], 2048, 1024, 32, 7, 2),
  };
  if (elastic) {
    for (size_t i = 0; i + 1 < a.stages.size(); ++i) {
      a.stages[i].elastic = true;
      a.stages[i].branches = half_split(16);
    }
  }
  return a;
}

ArchSpec densenet_imagenet(const std::string& name,
                           const std::vector<int>& blocks, bool elastic) {
  ArchSpec a;
  a.name = name;
  a.family = Family::densenet;
  a.input_resolution = 224;
  a.num_classes = 1000;
  a.stem = {7, 2, 3, 64, StemPool::max3s2};
  a.stages = {
      densenet_stage(blocks[0], 32, 128, 56, 1),
      densenet_stage(blocks[1], 32, 128, 28, 2),
      densenet_stage(blocks[2], 32, 128, 14, 2),
      densenet_stage(blocks[3], 32, 128, 7, 2),
  };
  if (elastic) {
    for (size_t i = 0; i + 1 < a.stages.size(); ++i) {
      a.stages[i].elastic = true;
      a.stages[i].branches = half_split(1);
    }
  }
  return a;
}

// Small 32x32 pair for synthetic-data experiments. The Elastic variant
// rebalances block counts ([2,2,2] -> [3,3,1]) so the pair matches in
// compute: 118,523,904 vs 119,343,104 multiply-accumulates, a 0.69% gap.
ArchSpec toy_resnext(bool elastic) {
  ArchSpec a;
  a.name = elastic ? "toy_resnext_8_elastic" : "toy_resnext_8";
  a.family = Family::resnext;
  a.input_resolution = 32;
  a.num_classes = 8;
  a.stem = {3, 1, 1, 64, StemPool::none};
  if (elastic) {
    a.stages = {
        resnext_stage(3, 128, 64, 16, 32, 1),
        resnext_stage(3, 256, 128, 16, 16, 2),
        resnext_stage(1, 256, 128, 16, 8, 2),
    };
    a.stages[0].elastic = true;
    a.stages[0].branches = half_split(8);
    a.stages[1].elastic = true;
    a.stages[1].branches = half_split(8);
  } else {
    a.stages = {
        resnext_stage(2, 128, 64, 16, 32, 1),
        resnext_stage(2, 256, 128, 16, 16, 2),
        resnext_stage(2, 256, 128, 16, 8, 2),
    };
  }
  return a;
}

// Densenet toy pair; [4,4,4] -> [6,5,4] keeps compute within 5%
// (45,859,632 vs 43,739,856 multiply-accumulates, +4.85%).
ArchSpec toy_densenet(bool elastic) {
  ArchSpec a;
  a.name = elastic ? "toy_densenet_8_elastic" : "toy_densenet_8";
  a.family = Family::densenet;
  a.input_resolution = 32;
  a.num_classes = 8;
  a.stem = {3, 1, 1, 24, StemPool::none};
  if (elastic) {
    a.stages = {
        densenet_stage(6, 12, 48, 32, 1),
        densenet_stage(5, 12, 48, 16, 2),
        densenet_stage(4, 12, 48, 8, 2),
    };
    a.stages[0].elastic = true;
    a.stages[0].branches = half_split(1);
    a.stages[1].elastic = true;
    a.stages[1].branches = half_split(1);
  } else {
    a.stages = {
        densenet_stage(4, 12, 48, 32, 1),
        densenet_stage(4, 12, 48, 16, 2),
        densenet_stage(4, 12, 48, 8, 2),
    };
  }
  return a;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"resnext50",          "resnext50_elastic",  "resnext50_selastic",
          "resnext101",         "resnext101_elastic", "densenet201",
          "densenet201_elastic", "toy_resnext_8",       "toy_resnext_8_elastic",
          "toy_densenet_8",       "toy_densenet_8_elastic"};
}

ArchSpec preset(const std::string& name) {
  ArchSpec a;
  if (name == "resnext50") {
    a = resnext_imagenet(name, {3, 4, 6, 3}, false);
  } else if (name == "resnext50_elastic") {
    a = resnext_imagenet(name, {6, 8, 5, 3}, true);
  } else if (name == "resnext50_selastic") {
    a = selastic_transform(resnext_imagenet("resnext50", {3, 4, 6, 3}, false));
  } else if (name == "resnext101") {
    a = resnext_imagenet(name, {3, 4, 23, 3}, false);
  } else if (name == "resnext101_elastic") {
    a = resnext_imagenet(name, {12, 14, 20, 3}, true);
  } else if (name == "densenet201") {
    a = densenet_imagenet(name, {6, 12, 48, 32}, false);
  } else if (name == "densenet201_elastic") {
    a = densenet_imagenet(name, {10, 20, 40, 30}, true);
  } else if (name == "toy_resnext_8") {
    a = toy_resnext(false);
  } else if (name == "toy_resnext_8_elastic") {
    a = toy_resnext(true);
  } else if (name == "toy_densenet_8") {
    a = toy_densenet(false);
  } else if (name == "toy_densenet_8_elastic") {
    a = toy_densenet(true);
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  a.validate();
  return a;
}

}  // namespace elastic
