#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gstz/reward_model.hpp"

namespace gstz {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace {

constexpr char kMagic[4] = {'G', 'S', 'T', 'Z'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

// Parses "key=value" fields out of an architecture tag.
bool tag_field(const std::string& tag, const std::string& key, double& out) {
  const std::string needle = key + "=";
  const size_t pos = tag.find(needle);
  if (pos == std::string::npos) return false;
  out = std::stod(tag.substr(pos + needle.size()));
  return true;
}

int tag_int(const std::string& tag, const std::string& key, int fallback) {
  double v;
  return tag_field(tag, key, v) ? static_cast<int>(v) : fallback;
}

}  // namespace

void save_checkpoint(const RewardModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string tag = model.architecture_tag();
  write_u32(os, static_cast<uint32_t>(tag.size()));
  os.write(tag.data(), static_cast<std::streamsize>(tag.size()));
  const auto params = model.parameters();
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (double p : params) {
    const float f = static_cast<float>(p);
    os.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::unique_ptr<RewardModel> make_model_from_tag(const std::string& tag) {
  GridSpec spec;
  spec.height = tag_int(tag, "h", spec.height);
  spec.width = tag_int(tag, "w", spec.width);
  double res;
  if (tag_field(tag, "res", res)) spec.resolution = res;
  const int horizon = tag_int(tag, "t", 30);
  const int in = tag_int(tag, "in", kObsChannels);
  if (tag.rfind("linear", 0) == 0) {
    return std::make_unique<LinearFeatureModel>(horizon, spec, in);
  }
  if (tag.rfind("conv_ed", 0) == 0) {
    ConvModelDims dims;
    dims.c1 = tag_int(tag, "c1", dims.c1);
    dims.c2 = tag_int(tag, "c2", dims.c2);
    dims.c3 = tag_int(tag, "c3", dims.c3);
    return std::make_unique<ConvEncoderDecoderModel>(horizon, spec, in, dims);
  }
  throw std::runtime_error("unknown architecture tag: " + tag);
}

std::unique_ptr<RewardModel> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const uint32_t tag_len = read_u32(is);
  std::string tag(tag_len, '\0');
  is.read(tag.data(), tag_len);
  auto model = make_model_from_tag(tag);
  const uint32_t count = read_u32(is);
  auto params = model->parameters();
  if (count != params.size()) {
    std::ostringstream msg;
    msg << "checkpoint parameter count " << count << " does not match model ("
        << params.size() << ")";
    throw std::runtime_error(msg.str());
  }
  for (uint32_t i = 0; i < count; ++i) {
    float f;
    is.read(reinterpret_cast<char*>(&f), sizeof(f));
    params[i] = static_cast<double>(f);
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return model;
}

}  // namespace gstz
