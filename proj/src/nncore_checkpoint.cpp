#include "chanalign/nncore/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "chanalign/errors.hpp"

namespace nncore {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeF64 = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw chanalign::DataError("checkpoint truncated: " + path);
  return v;
}

std::string take_string(std::istream& is, const std::string& path) {
  auto len = take<uint32_t>(is, path);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw chanalign::DataError("checkpoint truncated: " + path);
  return s;
}

void check_header(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw chanalign::DataError("bad checkpoint magic: " + path);
  auto version = take<uint32_t>(is, path);
  if (version != kVersion)
    throw chanalign::DataError("unsupported checkpoint version " + std::to_string(version) + ": " +
                               path);
}

}  // namespace

void save_checkpoint(const ParameterStore& params, const std::string& path,
                     const std::string& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw chanalign::DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put(os, static_cast<uint64_t>(params.items().size()));
  for (const auto& [name, t] : params.items()) {
    put(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(os, kDtypeF64);
    put(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put(os, static_cast<int64_t>(d));
  }
  for (const auto& [name, t] : params.items())
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw chanalign::DataError("checkpoint write failed: " + path);
}

std::string checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw chanalign::DataError("cannot open checkpoint: " + path);
  check_header(is, path);
  return take_string(is, path);
}

void load_checkpoint(ParameterStore& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw chanalign::DataError("cannot open checkpoint: " + path);
  check_header(is, path);
  take_string(is, path);  // metadata, not needed here
  auto count = take<uint64_t>(is, path);
  if (count != params.items().size())
    throw chanalign::DataError("checkpoint parameter count mismatch: " + path);
  struct Entry {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<Entry> entries;
  for (uint64_t i = 0; i < count; i++) {
    Entry e;
    e.name = take_string(is, path);
    auto dtype = take<uint32_t>(is, path);
    if (dtype != kDtypeF64)
      throw chanalign::DataError("unsupported dtype in checkpoint: " + path);
    auto ndim = take<uint32_t>(is, path);
    for (uint32_t d = 0; d < ndim; d++)
      e.shape.push_back(static_cast<int>(take<int64_t>(is, path)));
    entries.push_back(std::move(e));
  }
  for (uint64_t i = 0; i < count; i++) {
    const auto& [name, t] = params.items()[i];
    if (entries[i].name != name)
      throw chanalign::DataError("checkpoint parameter '" + entries[i].name +
                                 "' does not match expected '" + name + "': " + path);
    if (entries[i].shape != t.shape())
      throw chanalign::DataError("checkpoint shape mismatch for '" + name + "': " + path);
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw chanalign::DataError("checkpoint truncated: " + path);
  }
}

}  // namespace nncore
