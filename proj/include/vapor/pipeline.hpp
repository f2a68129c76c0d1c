#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "vapor/config.hpp"
#include "vapor/eval.hpp"

namespace vapor::pipeline {

namespace fs = std::filesystem;

/// runs/<timestamp>-<hash>/ with its fixed sub-directories. The latest directory
/// carrying the hash is reused so successive commands share artifacts.
struct RunDir {
  fs::path root;

  static RunDir open(const fs::path& out, const std::string& hash);
  fs::path world() const { return root / "world"; }
  fs::path logs() const { return root / "logs"; }
  fs::path dataset() const { return root / "dataset"; }
  fs::path ckpt() const { return root / "ckpt"; }
  fs::path reports() const { return root / "reports"; }
  /// Merges `summary` under commands.<command> of manifest.json.
  void record(const std::string& command, const Json& summary, const Config& cfg, const std::string& hash) const;
};

enum class Ablation { None, NoProprio, NoAttention };
Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

/// Artifact name suffix for a training ablation ("" or "-no-attention").
std::string suffix(Ablation a);
/// Network a training run with this ablation uses.
nn::NetworkConfig network_for(const Config& cfg, Ablation a);

Json gen_world(const Config& cfg, const RunDir& run, const std::string& hash);
Json collect(const Config& cfg, const RunDir& run, const std::string& hash, double hours);
Json make_dataset(const Config& cfg, const RunDir& run, const std::string& hash);
Json train(const Config& cfg, const RunDir& run, const std::string& hash, Ablation ablation);
Json evaluate(const Config& cfg, const RunDir& run, const std::string& hash, Ablation ablation);
/// Prints one scored lattice per closed-loop step as JSON lines.
Json plan_step(const Config& cfg, const RunDir& run, int steps, std::ostream& out);
Json oracle(std::uint64_t seed);

/// Critic stored by `train`, after checking it against the config's network and grid.
nn::QNetwork<float> load_qmin(const Config& cfg, const RunDir& run, Ablation ablation);

void write_text(const fs::path& path, const std::string& text);

}  // namespace vapor::pipeline
