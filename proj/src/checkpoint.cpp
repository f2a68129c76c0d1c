#include "vapor/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vapor {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::string get_string(std::ifstream& in, std::uint32_t len) {
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

const Blob& Checkpoint::find(const std::string& name) const {
  for (const Blob& b : blobs) {
    if (b.name == name) return b;
  }
  throw std::runtime_error("checkpoint has no tensor " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const Blob& b : blobs) {
    if (b.name == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, 1);
  const std::string meta = ckpt.meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const Blob& b : ckpt.blobs) {
    put_u32(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_u32(out, static_cast<std::uint32_t>(b.rows));
    put_u32(out, static_cast<std::uint32_t>(b.cols));
    out.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw std::runtime_error("not a checkpoint file");
  if (get_u32(in) != 1) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.meta = Json::parse(get_string(in, get_u32(in)));
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name = get_string(in, get_u32(in));
    b.rows = static_cast<int>(get_u32(in));
    b.cols = static_cast<int>(get_u32(in));
    b.data.resize(static_cast<std::size_t>(b.rows) * b.cols);
    in.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated in " + b.name);
    ckpt.blobs.push_back(std::move(b));
  }
  return ckpt;
}

}  // namespace vapor
