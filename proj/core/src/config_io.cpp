#include "elastic/config_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace elastic {

namespace {

const char* family_name(Family f) {
  return f == Family::resnext ? "resnext" : "densenet";
}

const char* pool_name(StemPool p) {
  return p == StemPool::none ? "none" : "max3s2";
}

const char* resample_name(Resample r) {
  switch (r) {
    case Resample::avgpool_bilinear:
      return "avgpool_bilinear";
    case Resample::nearest:
      return "nearest";
    case Resample::trained_filter:
      return "trained_filter";
  }
  return "avgpool_bilinear";
}

std::string branches_text(const std::vector<BranchSpec>& branches) {
  std::ostringstream os;
  for (size_t i = 0; i < branches.size(); ++i) {
    if (i) os << ",";
    const BranchSpec& b = branches[i];
    os << b.scale_ratio << ":" << b.width_fraction.num() << "/"
       << b.width_fraction.den() << ":" << b.cardinality;
  }
  return os.str();
}

struct LineParser {
  std::string keyword;
  std::map<std::string, std::string> kv;
  int line_no;

  std::string take(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw FormatError("arch config line " + std::to_string(line_no) +
                        ": missing key '" + key + "'");
    }
    std::string v = it->second;
    kv.erase(it);
    return v;
  }

  std::string take_or(const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
  }

  void finish() const {
    if (!kv.empty()) {
      throw FormatError("arch config line " + std::to_string(line_no) +
                        ": unknown key '" + kv.begin()->first + "'");
    }
  }
};

i64 parse_int(const std::string& v, int line_no, const std::string& what) {
  try {
    size_t pos = 0;
    i64 out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("arch config line " + std::to_string(line_no) + ": " +
                      what + " is not an integer: '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line_no, const std::string& what) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw FormatError("arch config line " + std::to_string(line_no) + ": " +
                    what + " must be true or false, got '" + v + "'");
}

Rational parse_fraction(const std::string& v, int line_no,
                        const std::string& what) {
  auto slash = v.find('/');
  if (slash == std::string::npos) {
    return Rational(parse_int(v, line_no, what));
  }
  i64 num = parse_int(v.substr(0, slash), line_no, what);
  i64 den = parse_int(v.substr(slash + 1), line_no, what);
  if (den == 0) {
    throw FormatError("arch config line " + std::to_string(line_no) + ": " +
                      what + " has zero denominator");
  }
  return Rational(num, den);
}

std::vector<BranchSpec> parse_branches(const std::string& v, int line_no) {
  std::vector<BranchSpec> out;
  std::istringstream groups(v);
  std::string part;
  while (std::getline(groups, part, ',')) {
    auto c1 = part.find(':');
    auto c2 = part.rfind(':');
    if (c1 == std::string::npos || c2 == c1) {
      throw FormatError("arch config line " + std::to_string(line_no) +
                        ": branch entry '" + part +
                        "' is not ratio:fraction:cardinality");
    }
    BranchSpec b;
    b.scale_ratio =
        static_cast<int>(parse_int(part.substr(0, c1), line_no, "scale_ratio"));
    b.width_fraction = parse_fraction(part.substr(c1 + 1, c2 - c1 - 1),
                                      line_no, "width_fraction");
    b.cardinality =
        static_cast<int>(parse_int(part.substr(c2 + 1), line_no, "cardinality"));
    out.push_back(b);
  }
  if (out.empty()) {
    throw FormatError("arch config line " + std::to_string(line_no) +
                      ": empty branches list");
  }
  return out;
}

}  // namespace

std::string serialize_arch(const ArchSpec& spec) {
  std::ostringstream os;
  os << "# architecture config\n";
  os << "format_version 1\n";
  os << "name " << spec.name << "\n";
  os << "family " << family_name(spec.family) << "\n";
  os << "input_resolution " << spec.input_resolution << "\n";
  os << "num_classes " << spec.num_classes << "\n";
  if (spec.family == Family::densenet) {
    os << "compression " << spec.transition_compression.num() << "/"
       << spec.transition_compression.den() << "\n";
  }
  os << "stem kernel=" << spec.stem.kernel << " stride=" << spec.stem.stride
     << " padding=" << spec.stem.padding << " channels=" << spec.stem.out_channels
     << " pool=" << pool_name(spec.stem.pool) << "\n";
  for (const StageSpec& st : spec.stages) {
    os << "stage blocks=" << st.num_blocks;
    if (spec.family == Family::resnext) {
      os << " out=" << st.out_channels << " bottleneck=" << st.bottleneck_channels
         << " cardinality=" << st.cardinality;
    } else {
      os << " growth=" << st.growth << " bottleneck=" << st.bottleneck_channels;
    }
    os << " resolution=" << st.resolution << " stride=" << st.stride_on_entry
       << " elastic=" << (st.elastic ? "true" : "false");
    if (st.elastic) {
      os << " resample=" << resample_name(st.resample)
         << " branches=" << branches_text(st.branches);
    }
    os << "\n";
  }
  return os.str();
}

ArchSpec parse_arch(const std::string& text) {
  ArchSpec spec;
  spec.stages.clear();
  bool saw_version = false, saw_name = false, saw_family = false;
  bool saw_res = false, saw_classes = false, saw_stem = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::istringstream line(raw);
    std::string keyword;
    if (!(line >> keyword)) continue;

    LineParser lp;
    lp.keyword = keyword;
    lp.line_no = line_no;
    std::string token;
    std::vector<std::string> plain;
    while (line >> token) {
      auto eq = token.find('=');
      if (eq == std::string::npos) {
        plain.push_back(token);
      } else {
        lp.kv[token.substr(0, eq)] = token.substr(eq + 1);
      }
    }

    if (keyword == "format_version") {
      if (plain.size() != 1 || plain[0] != "1") {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": unsupported format_version");
      }
      saw_version = true;
    } else if (keyword == "name") {
      if (plain.size() != 1) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": name takes one token");
      }
      spec.name = plain[0];
      saw_name = true;
    } else if (keyword == "family") {
      if (plain.size() != 1) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": family takes one token");
      }
      if (plain[0] == "resnext") {
        spec.family = Family::resnext;
      } else if (plain[0] == "densenet") {
        spec.family = Family::densenet;
      } else {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": unknown family '" + plain[0] + "'");
      }
      saw_family = true;
    } else if (keyword == "input_resolution") {
      if (plain.size() != 1) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": input_resolution takes one token");
      }
      spec.input_resolution = parse_int(plain[0], line_no, "input_resolution");
      saw_res = true;
    } else if (keyword == "num_classes") {
      if (plain.size() != 1) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": num_classes takes one token");
      }
      spec.num_classes =
          static_cast<int>(parse_int(plain[0], line_no, "num_classes"));
      saw_classes = true;
    } else if (keyword == "compression") {
      if (plain.size() != 1) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": compression takes one token");
      }
      spec.transition_compression =
          parse_fraction(plain[0], line_no, "compression");
    } else if (keyword == "stem") {
      if (!plain.empty()) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": stem takes key=value pairs only");
      }
      spec.stem.kernel =
          static_cast<int>(parse_int(lp.take("kernel"), line_no, "kernel"));
      spec.stem.stride =
          static_cast<int>(parse_int(lp.take("stride"), line_no, "stride"));
      spec.stem.padding =
          static_cast<int>(parse_int(lp.take("padding"), line_no, "padding"));
      spec.stem.out_channels = parse_int(lp.take("channels"), line_no, "channels");
      std::string pool = lp.take("pool");
      if (pool == "none") {
        spec.stem.pool = StemPool::none;
      } else if (pool == "max3s2") {
        spec.stem.pool = StemPool::max3s2;
      } else {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": unknown stem pool '" + pool + "'");
      }
      lp.finish();
      saw_stem = true;
    } else if (keyword == "stage") {
      if (!plain.empty()) {
        throw FormatError("arch config line " + std::to_string(line_no) +
                          ": stage takes key=value pairs only");
      }
      StageSpec st;
      st.num_blocks =
          static_cast<int>(parse_int(lp.take("blocks"), line_no, "blocks"));
      if (spec.family == Family::resnext) {
        st.out_channels = parse_int(lp.take("out"), line_no, "out");
        st.bottleneck_channels =
            parse_int(lp.take("bottleneck"), line_no, "bottleneck");
        st.cardinality = static_cast<int>(
            parse_int(lp.take("cardinality"), line_no, "cardinality"));
      } else {
        st.growth = static_cast<int>(parse_int(lp.take("growth"), line_no, "growth"));
        st.bottleneck_channels =
            parse_int(lp.take("bottleneck"), line_no, "bottleneck");
      }
      st.resolution = parse_int(lp.take("resolution"), line_no, "resolution");
      st.stride_on_entry =
          static_cast<int>(parse_int(lp.take("stride"), line_no, "stride"));
      st.elastic = parse_bool(lp.take("elastic"), line_no, "elastic");
      if (st.elastic) {
        std::string rs = lp.take_or("resample", "avgpool_bilinear");
        if (rs == "avgpool_bilinear") {
          st.resample = Resample::avgpool_bilinear;
        } else if (rs == "nearest") {
          st.resample = Resample::nearest;
        } else if (rs == "trained_filter") {
          st.resample = Resample::trained_filter;
        } else {
          throw FormatError("arch config line " + std::to_string(line_no) +
                            ": unknown resample '" + rs + "'");
        }
        st.branches = parse_branches(lp.take("branches"), line_no);
      }
      lp.finish();
      spec.stages.push_back(std::move(st));
    } else {
      throw FormatError("arch config line " + std::to_string(line_no) +
                        ": unknown keyword '" + keyword + "'");
    }
  }

  if (!saw_version) throw FormatError("arch config: missing format_version");
  if (!saw_name) throw FormatError("arch config: missing name");
  if (!saw_family) throw FormatError("arch config: missing family");
  if (!saw_res) throw FormatError("arch config: missing input_resolution");
  if (!saw_classes) throw FormatError("arch config: missing num_classes");
  if (!saw_stem) throw FormatError("arch config: missing stem");
  spec.validate();
  return spec;
}

ArchSpec load_arch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open arch config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_arch(buf.str());
}

void save_arch_file(const ArchSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write arch config '" + path + "'");
  out << serialize_arch(spec);
  if (!out) throw IoError("failed writing arch config '" + path + "'");
}

ArchSpec resolve_arch(const std::string& name_or_path) {
  std::error_code ec;
  if (std::filesystem::exists(name_or_path, ec)) {
    return load_arch_file(name_or_path);
  }
  return preset(name_or_path);
}

}  // namespace elastic
