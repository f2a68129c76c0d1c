#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vapor/autodiff.hpp"
#include "vapor/world_io.hpp"

namespace vapor {

struct Blob {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
};

/// Named float32 tensors plus a JSON document (config, hash, training state).
struct Checkpoint {
  Json meta = Json::object();
  std::vector<Blob> blobs;

  /// Parameters are stored as `prefix/<name without its network label>`, so a
  /// network can be restored under a different label.
  template <typename S>
  void add(const std::string& prefix, const std::vector<ad::Parameter<S>*>& params) {
    for (const auto* p : params) add_matrix(prefix + "/" + local_name(p->name), p->value);
  }

  template <typename S>
  void add_matrix(const std::string& name, const ad::Matrix<S>& m) {
    Blob b{name, static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
    b.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) b.data.push_back(static_cast<float>(m.data()[i]));
    blobs.push_back(std::move(b));
  }

  const Blob& find(const std::string& name) const;
  bool has(const std::string& name) const;

  template <typename S>
  void read_matrix(const std::string& name, ad::Matrix<S>& m) const {
    const Blob& b = find(name);
    if (b.rows != m.rows() || b.cols != m.cols()) throw std::runtime_error("checkpoint shape mismatch for " + name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(b.data[static_cast<std::size_t>(i)]);
  }

  template <typename S>
  void restore(const std::string& prefix, const std::vector<ad::Parameter<S>*>& params) const {
    for (auto* p : params) read_matrix(prefix + "/" + local_name(p->name), p->value);
  }

  static std::string local_name(const std::string& name) {
    const auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(dot + 1);
  }
};

inline constexpr char kCheckpointMagic[8] = {'V', 'A', 'P', 'O', 'R', 'C', 'K', '\0'};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vapor
