#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "skillstep/bundle.hpp"

namespace skillstep {

namespace ckpt {

constexpr char kMagic[8] = {'S', 'K', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

struct Entry {
  std::string name;
  std::vector<int> shape;
  uint64_t offset = 0;  // into the payload section, in floats

  int numel() const {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

inline void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

/// Flat list of every tensor a checkpoint carries, in canonical order:
/// per module, per parameter, the value then both Adam moments then the
/// step counter (as a single float).
struct TensorRef {
  std::string name;
  Tensor* tensor = nullptr;     // null for the step pseudo-tensor
  ParamTensor* param = nullptr; // set when the ref is a step counter
};

inline std::vector<TensorRef> checkpoint_refs(ModelBundle& b) {
  std::vector<TensorRef> refs;
  for (auto& [mod, set] : b.module_sets()) {
    for (auto& [pname, p] : *set) {
      const std::string base = mod + "/" + pname;
      refs.push_back({base + "#value", &p.value, nullptr});
      refs.push_back({base + "#m", &p.adam_m, nullptr});
      refs.push_back({base + "#v", &p.adam_v, nullptr});
      refs.push_back({base + "#step", nullptr, &p});
    }
  }
  return refs;
}

}  // namespace ckpt

inline void save_checkpoint(ModelBundle& b, int iteration, uint64_t config_hash,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_checkpoint: cannot open " + path);
  os.write(ckpt::kMagic, sizeof(ckpt::kMagic));
  ckpt::write_u32(os, ckpt::kVersion);
  ckpt::write_u64(os, config_hash);
  ckpt::write_u32(os, static_cast<uint32_t>(iteration));

  auto refs = ckpt::checkpoint_refs(b);
  ckpt::write_u32(os, static_cast<uint32_t>(refs.size()));
  uint64_t offset = 0;
  for (const auto& r : refs) {
    ckpt::write_u32(os, static_cast<uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    if (r.tensor) {
      ckpt::write_u32(os, static_cast<uint32_t>(r.tensor->rank()));
      for (int d = 0; d < r.tensor->rank(); ++d)
        ckpt::write_u32(os, static_cast<uint32_t>(r.tensor->dim(d)));
      ckpt::write_u64(os, offset);
      offset += static_cast<uint64_t>(r.tensor->numel());
    } else {
      ckpt::write_u32(os, 1);
      ckpt::write_u32(os, 1);
      ckpt::write_u64(os, offset);
      offset += 1;
    }
  }
  for (const auto& r : refs) {
    if (r.tensor) {
      os.write(reinterpret_cast<const char*>(r.tensor->data()),
               static_cast<std::streamsize>(sizeof(float) * r.tensor->numel()));
    } else {
      const float step = static_cast<float>(r.param->adam_step);
      os.write(reinterpret_cast<const char*>(&step), sizeof(step));
    }
  }
  if (!os) throw DataError("save_checkpoint: write failure on " + path);
}

/// Loads into an existing bundle built from the same config. Returns the
/// stored iteration counter. A differing config hash means the file belongs
/// to another configuration and is rejected.
inline int load_checkpoint(ModelBundle& b, const std::string& path,
                           uint64_t expected_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0)
    throw DataError("load_checkpoint: bad magic in " + path);
  const uint32_t version = ckpt::read_u32(is);
  if (version != ckpt::kVersion)
    throw ConfigError("load_checkpoint: unsupported version " + std::to_string(version));
  const uint64_t hash = ckpt::read_u64(is);
  if (hash != expected_hash)
    throw ConfigError("load_checkpoint: config hash mismatch (file written by a "
                      "different configuration)");
  const int iteration = static_cast<int>(ckpt::read_u32(is));

  auto refs = ckpt::checkpoint_refs(b);
  const uint32_t count = ckpt::read_u32(is);
  if (count != refs.size())
    throw ConfigError("load_checkpoint: tensor count mismatch");
  std::vector<ckpt::Entry> entries(count);
  for (auto& e : entries) {
    const uint32_t len = ckpt::read_u32(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    if (!is) throw DataError("checkpoint: truncated file");
    const uint32_t rank = ckpt::read_u32(is);
    e.shape.resize(rank);
    for (auto& d : e.shape) d = static_cast<int>(ckpt::read_u32(is));
    e.offset = ckpt::read_u64(is);
  }
  for (size_t i = 0; i < refs.size(); ++i) {
    if (entries[i].name != refs[i].name)
      throw ConfigError("load_checkpoint: manifest mismatch at '" + entries[i].name + "'");
    const int expect = refs[i].tensor ? refs[i].tensor->numel() : 1;
    if (entries[i].numel() != expect)
      throw ConfigError("load_checkpoint: shape mismatch at '" + entries[i].name + "'");
  }
  for (auto& r : refs) {
    if (r.tensor) {
      is.read(reinterpret_cast<char*>(r.tensor->data()),
              static_cast<std::streamsize>(sizeof(float) * r.tensor->numel()));
    } else {
      float step = 0.0f;
      is.read(reinterpret_cast<char*>(&step), sizeof(step));
      r.param->adam_step = static_cast<int64_t>(step);
    }
    if (!is) throw DataError("checkpoint: truncated file");
  }
  return iteration;
}

}  // namespace skillstep
