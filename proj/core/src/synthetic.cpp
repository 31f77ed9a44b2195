#include <algorithm>
#include <cmath>

#include "elastic/data.hpp"

namespace elastic {

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::none: return "none";
    case Stratum::small: return "small";
    case Stratum::medium: return "medium";
    case Stratum::large: return "large";
  }
  return "?";
}

const char* shape_class_name(int shape_class) {
  static const char* names[kShapeClassCount] = {
      "disk",    "ring",    "square", "square_outline",
      "triangle", "diamond", "plus",   "cross"};
  if (shape_class < 0 || shape_class >= kShapeClassCount) return "?";
  return names[shape_class];
}

TensorRef Dataset::image_tensor(i64 index) const {
  if (index < 0 || index >= size()) {
    throw InputError("dataset index " + std::to_string(index) +
                     " out of range [0," + std::to_string(size()) + ")");
  }
  auto t = Tensor::create({1, 3, height, width});
  const float* src = sample(index);
  std::copy(src, src + 3 * height * width, t->data.begin());
  return t;
}

void SyntheticSpec::validate() const {
  if (canvas < 8) throw ConfigError("synthetic: canvas must be >= 8");
  if (num_classes < 2 || num_classes > kShapeClassCount) {
    throw ConfigError("synthetic: num_classes must be in [2," +
                      std::to_string(kShapeClassCount) + "]");
  }
  if (min_count < 1 || max_count < min_count) {
    throw ConfigError("synthetic: bad object count range");
  }
  if (frac_small < 0 || frac_medium < 0 || frac_small + frac_medium > 1.0) {
    throw ConfigError("synthetic: stratum fractions must be nonnegative and "
                      "sum to at most 1");
  }
  if (!(small_lo <= small_hi && small_hi < medium_lo && medium_lo <= medium_hi &&
        medium_hi < large_lo && large_lo <= large_hi) ||
      small_lo < 3) {
    throw ConfigError("synthetic: size bands must be ordered, disjoint and >= 3");
  }
  if (large_hi + 2 > canvas) {
    throw ConfigError("synthetic: canvas " + std::to_string(canvas) +
                      " too small for objects up to " +
                      std::to_string(large_hi) +
                      " px (needs at least size + 2)");
  }
  if (train_samples < 1 || eval_samples < 1) {
    throw ConfigError("synthetic: sample counts must be >= 1");
  }
  if (noise_sigma < 0) throw ConfigError("synthetic: noise must be >= 0");
}

Stratum stratum_of_size(const SyntheticSpec& spec, i64 size) {
  if (size >= spec.small_lo && size <= spec.small_hi) return Stratum::small;
  if (size >= spec.medium_lo && size <= spec.medium_hi) return Stratum::medium;
  if (size >= spec.large_lo && size <= spec.large_hi) return Stratum::large;
  return Stratum::none;
}

namespace {

// Point-in-shape tests on coordinates relative to the center, with h the
// half-extent. Every shape spans exactly [-h, h] in both axes.
bool inside_shape(int shape_class, double dx, double dy, double h) {
  double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape_class) {
    case 0:  // disk
      return dx * dx + dy * dy <= h * h;
    case 1: {  // ring
      double d2 = dx * dx + dy * dy;
      double inner = 0.55 * h;
      return d2 <= h * h && d2 >= inner * inner;
    }
    case 2:  // square
      return ax <= h && ay <= h;
    case 3: {  // square outline
      double inner = 0.55 * h;
      return ax <= h && ay <= h && !(ax < inner && ay < inner);
    }
    case 4: {  // triangle, apex up, base at the bottom edge
      if (ay > h) return false;
      double half_width = (dy + h) / 2.0;
      return ax <= half_width;
    }
    case 5:  // diamond
      return ax + ay <= h;
    case 6: {  // plus
      double bar = 0.28 * h;
      return (ax <= bar && ay <= h) || (ay <= bar && ax <= h);
    }
    case 7: {  // diagonal cross
      double bar = 0.4 * h;
      if (ax > h || ay > h) return false;
      return std::abs(dx - dy) <= bar || std::abs(dx + dy) <= bar;
    }
    default:
      return false;
  }
}

constexpr int kSupersample = 4;

// Coverage in [0,1] of one pixel by the shape, via subpixel sampling.
double pixel_coverage(const ShapeInstance& s, i64 px, i64 py) {
  double h = static_cast<double>(s.size) / 2.0;
  int hits = 0;
  for (int sy = 0; sy < kSupersample; ++sy) {
    for (int sx = 0; sx < kSupersample; ++sx) {
      double x = static_cast<double>(px) +
                 (static_cast<double>(sx) + 0.5) / kSupersample;
      double y = static_cast<double>(py) +
                 (static_cast<double>(sy) + 0.5) / kSupersample;
      if (inside_shape(s.shape_class, x - s.cx, y - s.cy, h)) ++hits;
    }
  }
  return static_cast<double>(hits) / (kSupersample * kSupersample);
}

void blend_shape(const ShapeInstance& s, i64 canvas, std::vector<float>& rgb) {
  double h = static_cast<double>(s.size) / 2.0;
  i64 x0 = std::max<i64>(0, static_cast<i64>(std::floor(s.cx - h - 1)));
  i64 x1 = std::min<i64>(canvas - 1, static_cast<i64>(std::ceil(s.cx + h + 1)));
  i64 y0 = std::max<i64>(0, static_cast<i64>(std::floor(s.cy - h - 1)));
  i64 y1 = std::min<i64>(canvas - 1, static_cast<i64>(std::ceil(s.cy + h + 1)));
  for (i64 y = y0; y <= y1; ++y) {
    for (i64 x = x0; x <= x1; ++x) {
      double cov = pixel_coverage(s, x, y);
      if (cov <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        float& px = rgb[(c * canvas + y) * canvas + x];
        px = static_cast<float>(px + cov * (s.color[c] - px));
      }
    }
  }
}

}  // namespace

std::vector<float> render_shape_mask(const ShapeInstance& shape, i64 canvas) {
  std::vector<float> rgb(static_cast<size_t>(3 * canvas * canvas), 0.0f);
  ShapeInstance white = shape;
  white.color[0] = white.color[1] = white.color[2] = 1.0f;
  blend_shape(white, canvas, rgb);
  return rgb;
}

namespace {

void generate_split(const SyntheticSpec& spec, i64 count,
                    const std::string& id_prefix, Pcg32& rng, Dataset& out,
                    std::vector<GenRecord>& records) {
  const i64 canvas = spec.canvas;
  out.height = canvas;
  out.width = canvas;
  out.num_classes = spec.num_classes;
  out.augment = AugmentKind::hflip;
  out.images.reserve(static_cast<size_t>(count * 3 * canvas * canvas));

  for (i64 i = 0; i < count; ++i) {
    GenRecord rec;
    double u = rng.next_double();
    i64 lo, hi;
    if (u < spec.frac_small) {
      rec.stratum = Stratum::small;
      lo = spec.small_lo;
      hi = spec.small_hi;
    } else if (u < spec.frac_small + spec.frac_medium) {
      rec.stratum = Stratum::medium;
      lo = spec.medium_lo;
      hi = spec.medium_hi;
    } else {
      rec.stratum = Stratum::large;
      lo = spec.large_lo;
      hi = spec.large_hi;
    }
    rec.label = static_cast<int>(
        rng.next_below(static_cast<std::uint32_t>(spec.num_classes)));
    int n_shapes =
        spec.min_count +
        static_cast<int>(rng.next_below(
            static_cast<std::uint32_t>(spec.max_count - spec.min_count + 1)));

    std::vector<float> rgb(static_cast<size_t>(3 * canvas * canvas), 0.08f);
    for (int s = 0; s < n_shapes; ++s) {
      ShapeInstance inst;
      inst.shape_class = rec.label;
      inst.size = lo + static_cast<i64>(rng.next_below(
                           static_cast<std::uint32_t>(hi - lo + 1)));
      double margin = static_cast<double>(inst.size) / 2.0 + 1.0;
      double span = static_cast<double>(canvas) - 2.0 * margin;
      inst.cx = margin + rng.next_double() * span;
      inst.cy = margin + rng.next_double() * span;
      for (int c = 0; c < 3; ++c) {
        inst.color[c] = static_cast<float>(0.45 + 0.55 * rng.next_double());
      }
      blend_shape(inst, canvas, rgb);
      rec.shapes.push_back(inst);
    }
    if (spec.noise_sigma > 0) {
      for (auto& v : rgb) {
        v = static_cast<float>(v + spec.noise_sigma * rng.next_gaussian());
        v = std::clamp(v, 0.0f, 1.0f);
      }
    }

    out.images.insert(out.images.end(), rgb.begin(), rgb.end());
    out.labels.push_back(rec.label);
    out.strata.push_back(rec.stratum);
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%06lld", id_prefix.c_str(),
                  static_cast<long long>(i));
    out.ids.emplace_back(id);
    records.push_back(std::move(rec));
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData data;
  Pcg32 rng(spec.seed, rng_stream::kDataGen);
  generate_split(spec, spec.train_samples, "train", rng, data.train,
                 data.train_records);
  generate_split(spec, spec.eval_samples, "eval", rng, data.eval,
                 data.eval_records);
  data.eval.augment = AugmentKind::none;
  return data;
}

}  // namespace elastic
