#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/error.hpp"
#include "blade/core/tensor.hpp"

namespace blade {

namespace io {

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
  uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

inline void write_tensor_f(std::ostream& os, const TensorF& t) {
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}
inline TensorF read_tensor_f(std::istream& is) {
  uint32_t rank = read_u32(is);
  std::vector<int> dims(rank);
  for (auto& d : dims) d = static_cast<int>(read_u32(is));
  TensorF t(dims);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  return t;
}

}  // namespace io

/// Checkpoint container: a JSON metadata blob plus named float tensors.
struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, TensorF> tensors;

  static constexpr const char* kMagic = "BLDCKPT1";

  void save(const std::string& path) const {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw TrainError("cannot write checkpoint: " + path);
    os.write(kMagic, 8);
    io::write_string(os, meta.dump());
    io::write_u64(os, tensors.size());
    for (auto& [name, t] : tensors) {
      io::write_string(os, name);
      io::write_tensor_f(os, t);
    }
    if (!os) throw TrainError("short write on checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TrainError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw TrainError("bad checkpoint magic in " + path);
    Checkpoint ck;
    ck.meta = nlohmann::json::parse(io::read_string(is));
    uint64_t n = io::read_u64(is);
    for (uint64_t i = 0; i < n; ++i) {
      std::string name = io::read_string(is);
      ck.tensors[name] = io::read_tensor_f(is);
    }
    if (!is) throw TrainError("truncated checkpoint: " + path);
    return ck;
  }
};

inline void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TrainError("cannot write file: " + path);
  os << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TrainError("cannot open file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const std::string& path) {
  return nlohmann::json::parse(read_text_file(path));
}

}  // namespace blade
