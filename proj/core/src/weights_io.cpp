// Weights file layout (little-endian, no padding):
//   "EXWT" | u32 version=1 | config fields as u32 in declaration order |
//   per tensor in module order: u32 rank | u32 extents[rank] | f32 payload

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "smokenet/errors.hpp"
#include "smokenet/model.hpp"

namespace smokenet {

namespace {

constexpr char kMagic[4] = {'E', 'X', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4);

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
           (v >> 24);
  } else {
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ofstream& os) : os_(os) {}
  void u32(std::uint32_t v) {
    v = to_le(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void floats(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      os_.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size_bytes()));
    } else {
      for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
    }
  }

 private:
  std::ofstream& os_;
};

class Reader {
 public:
  Reader(std::ifstream& is, std::string path)
      : is_(is), path_(std::move(path)) {}

  std::uint32_t u32(const std::string& field) {
    std::uint32_t v = 0;
    read(&v, sizeof v, field);
    return to_le(v);
  }
  void floats(std::span<float> out, const std::string& field) {
    read(out.data(), out.size_bytes(), field);
    if constexpr (std::endian::native == std::endian::big) {
      for (float& f : out) f = std::bit_cast<float>(to_le(std::bit_cast<std::uint32_t>(f)));
    }
  }
  void bytes(char* out, std::size_t n, const std::string& field) {
    read(out, n, field);
  }
  std::uint64_t offset() const { return offset_; }
  bool at_end() { return is_.peek() == std::ifstream::traits_type::eof(); }

 private:
  void read(void* out, std::size_t n, const std::string& field) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw DataError(path_ + ": truncated while reading " + field +
                      " at byte offset " +
                      std::to_string(offset_ + static_cast<std::uint64_t>(is_.gcount())));
    }
    offset_ += n;
  }

  std::ifstream& is_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

// Declaration order of ModelConfig, arrays expanded element-wise.
std::vector<std::pair<std::string, std::uint32_t*>> config_fields(
    ModelConfig& c) {
  std::vector<std::pair<std::string, std::uint32_t*>> f;
  f.emplace_back("input_size", &c.input_size);
  f.emplace_back("input_channels", &c.input_channels);
  for (std::size_t i = 0; i < c.backbone_channels.size(); ++i) {
    f.emplace_back("backbone_channels[" + std::to_string(i) + "]",
                   &c.backbone_channels[i]);
  }
  for (std::size_t i = 0; i < c.neck_channels.size(); ++i) {
    f.emplace_back("neck_channels[" + std::to_string(i) + "]",
                   &c.neck_channels[i]);
  }
  f.emplace_back("hidden_dim", &c.hidden_dim);
  f.emplace_back("num_classes", &c.num_classes);
  f.emplace_back("kernel", &c.kernel);
  f.emplace_back("stride_backbone", &c.stride_backbone);
  f.emplace_back("stride_neck", &c.stride_neck);
  return f;
}

ModelConfig read_header(Reader& in, const std::string& path) {
  char magic[4];
  in.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path + ": bad magic, expected \"EXWT\"");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) {
    throw DataError(path + ": unsupported format version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kVersion));
  }
  ModelConfig c;
  for (auto& [name, slot] : config_fields(c)) *slot = in.u32(name);
  return c;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path.string() + ": cannot open weights file");
  return is;
}

}  // namespace

void save_weights(const ProposedModel& model,
                  const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError(path.string() + ": cannot open for writing");
    Writer out(os);
    os.write(kMagic, sizeof kMagic);
    out.u32(kVersion);
    ModelConfig c = model.config();
    for (auto& [name, slot] : config_fields(c)) out.u32(*slot);
    for (const Tensor* t : model.parameters()) {
      out.u32(static_cast<std::uint32_t>(t->rank()));
      for (std::size_t e : t->shape().extents()) {
        out.u32(static_cast<std::uint32_t>(e));
      }
      out.floats(t->data());
    }
    if (!os) throw DataError(path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

ModelConfig read_weights_config(const std::filesystem::path& path) {
  std::ifstream is = open_for_read(path);
  Reader in(is, path.string());
  return read_header(in, path.string());
}

ProposedModel load_weights(const std::filesystem::path& path,
                           const ModelConfig& config) {
  config.validate();
  std::ifstream is = open_for_read(path);
  const std::string name = path.string();
  Reader in(is, name);
  ModelConfig file_cfg = read_header(in, name);
  ModelConfig want = config;
  auto got_fields = config_fields(file_cfg);
  auto want_fields = config_fields(want);
  for (std::size_t i = 0; i < got_fields.size(); ++i) {
    if (*got_fields[i].second != *want_fields[i].second) {
      throw ContractError(name + ": config field " + got_fields[i].first +
                          " is " + std::to_string(*got_fields[i].second) +
                          " in file but " +
                          std::to_string(*want_fields[i].second) +
                          " was requested");
    }
  }

  ProposedModel model = allocate(config);
  auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string tag = "tensor " + std::to_string(p);
    const Shape& expected = params[p]->shape();
    const std::uint32_t rank = in.u32(tag + " rank");
    if (rank != expected.rank()) {
      throw ContractError(name + ": " + tag + " has rank " +
                          std::to_string(rank) + ", expected " +
                          std::to_string(expected.rank()));
    }
    for (std::uint32_t a = 0; a < rank; ++a) {
      const std::uint32_t e = in.u32(tag + " extent " + std::to_string(a));
      if (e != expected[a]) {
        throw ContractError(name + ": " + tag + " extent " +
                            std::to_string(a) + " is " + std::to_string(e) +
                            ", expected " + std::to_string(expected[a]) +
                            " for shape " + expected.str());
      }
    }
    in.floats(params[p]->data(), tag + " payload");
  }
  if (!in.at_end()) {
    throw DataError(name + ": trailing bytes after byte offset " +
                    std::to_string(in.offset()));
  }
  return model;
}

}  // namespace smokenet
