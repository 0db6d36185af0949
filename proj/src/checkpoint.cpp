#include "usvtrack/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace usvtrack::ckpt {

namespace {

constexpr char kMagic[8] = {'U', 'S', 'V', 'T', 'C', 'K', 'P', 'T'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_all(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
  if (std::fwrite(p, 1, n, f) != n)
    throw std::runtime_error("checkpoint: short write to " + path);
}

void read_all(std::FILE* f, void* p, std::size_t n, const std::string& path) {
  if (std::fread(p, 1, n, f) != n)
    throw std::runtime_error("checkpoint: truncated file " + path);
}

}  // namespace

void save_checkpoint_file(const std::string& path, const std::string& kind,
                          const nlohmann::json& meta, const std::vector<NamedVec>& state) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& s : state)
    manifest.push_back({{"name", s.name}, {"count", s.data->size()}});
  nlohmann::json header{{"kind", kind}, {"meta", meta}, {"arrays", manifest}};
  const std::string hstr = header.dump();

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  write_all(f.get(), kMagic, sizeof(kMagic), path);
  const std::uint32_t ver = kFormatVersion;
  write_all(f.get(), &ver, sizeof(ver), path);
  const std::uint64_t hlen = hstr.size();
  write_all(f.get(), &hlen, sizeof(hlen), path);
  write_all(f.get(), hstr.data(), hstr.size(), path);
  for (const auto& s : state)
    write_all(f.get(), s.data->data(), s.data->size() * sizeof(double), path);
}

CheckpointFile load_checkpoint_file(const std::string& path, const std::string& expected_kind) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[8];
  read_all(f.get(), magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a usvtrack checkpoint");
  std::uint32_t ver = 0;
  read_all(f.get(), &ver, sizeof(ver), path);
  if (ver != kFormatVersion)
    throw std::runtime_error("checkpoint: " + path + " has format version " +
                             std::to_string(ver) + ", this build expects " +
                             std::to_string(kFormatVersion));
  std::uint64_t hlen = 0;
  read_all(f.get(), &hlen, sizeof(hlen), path);
  std::string hstr(hlen, '\0');
  read_all(f.get(), hstr.data(), hlen, path);

  CheckpointFile out;
  nlohmann::json header = nlohmann::json::parse(hstr);
  out.kind = header.at("kind").get<std::string>();
  if (out.kind != expected_kind)
    throw std::runtime_error("checkpoint: " + path + " holds a '" + out.kind +
                             "' model, expected '" + expected_kind + "'");
  out.meta = header.at("meta");
  for (const auto& a : header.at("arrays")) {
    std::vector<double> v(a.at("count").get<std::size_t>());
    read_all(f.get(), v.data(), v.size() * sizeof(double), path);
    out.arrays.emplace_back(a.at("name").get<std::string>(), std::move(v));
  }
  return out;
}

void bind_arrays(const CheckpointFile& file, const std::vector<NamedVec>& state) {
  if (file.arrays.size() != state.size())
    throw std::runtime_error("checkpoint: array count mismatch (" +
                             std::to_string(file.arrays.size()) + " stored vs " +
                             std::to_string(state.size()) + " expected)");
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& [name, vec] = file.arrays[i];
    if (name != state[i].name || vec.size() != state[i].data->size())
      throw std::runtime_error("checkpoint: array '" + name + "' does not match expected '" +
                               state[i].name + "'");
    *state[i].data = vec;
  }
}

}  // namespace usvtrack::ckpt
