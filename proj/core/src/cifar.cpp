#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "elastic/data.hpp"

namespace elastic {

namespace {

void load_cifar_file(const std::string& path, Dataset& out) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) {
    throw IoError("cifar10: missing file " + path);
  }
  auto bytes = static_cast<i64>(fs::file_size(path));
  if (bytes != kCifarFileBytes) {
    throw FormatError("cifar10: " + path + " is " + std::to_string(bytes) +
                      " bytes, want " + std::to_string(kCifarFileBytes));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cifar10: cannot open " + path);

  constexpr i64 kPixels = 3 * 32 * 32;
  std::vector<unsigned char> record(1 + kPixels);
  for (i64 r = 0; r < kCifarRecordsPerFile; ++r) {
    in.read(reinterpret_cast<char*>(record.data()),
            static_cast<std::streamsize>(record.size()));
    if (!in) throw FormatError("cifar10: short read in " + path);
    int label = record[0];
    if (label < 0 || label > 9) {
      throw FormatError("cifar10: " + path + " record " + std::to_string(r) +
                        " has label " + std::to_string(label));
    }
    out.labels.push_back(label);
    for (int c = 0; c < 3; ++c) {
      for (i64 p = 0; p < 32 * 32; ++p) {
        float v = static_cast<float>(record[1 + c * 32 * 32 + p]) / 255.0f;
        out.images.push_back((v - kCifarMean[c]) / kCifarStd[c]);
      }
    }
  }
}

}  // namespace

Dataset load_cifar10(const std::string& dir, bool train) {
  Dataset out;
  out.height = 32;
  out.width = 32;
  out.num_classes = 10;
  out.augment = train ? AugmentKind::pad_crop_hflip : AugmentKind::none;

  std::vector<std::string> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
    }
  } else {
    files.push_back(dir + "/test_batch.bin");
  }
  for (const auto& f : files) load_cifar_file(f, out);

  const char* prefix = train ? "cifar-train" : "cifar-eval";
  out.ids.reserve(out.labels.size());
  for (size_t i = 0; i < out.labels.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%05zu", prefix, i);
    out.ids.emplace_back(id);
  }
  return out;
}

}  // namespace elastic
