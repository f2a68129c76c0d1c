#include <cstring>
#include <stdexcept>

#include "vapor/dataset.hpp"

namespace vapor {

namespace {

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
}

void put_floats(std::ofstream& out, const float* v, std::size_t n) {
  out.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * sizeof(float)));
}

void get_floats(std::ifstream& in, float* v, std::size_t n) {
  in.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * sizeof(float)));
}

constexpr std::streamoff kCountOffset = sizeof kDatasetMagic + 2 * sizeof(std::uint32_t) + sizeof(double);

}  // namespace

std::size_t record_size(int n) {
  const std::size_t maps = 3 * static_cast<std::size_t>(n) * n;
  return (2 * maps + 2 + 3 + 4 + 2) * sizeof(float) + 1;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, const GridSpec& grid, const std::string& params_json)
    : out_(path, std::ios::binary | std::ios::trunc), grid_(grid) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_.write(kDatasetMagic, sizeof kDatasetMagic);
  put(out_, std::uint32_t{1});
  put(out_, static_cast<std::uint32_t>(grid.n));
  put(out_, grid.beta);
  put(out_, std::uint64_t{0});
  put(out_, static_cast<std::uint32_t>(params_json.size()));
  out_.write(params_json.data(), static_cast<std::streamsize>(params_json.size()));
}

void DatasetWriter::add(const Transition& t) {
  if (t.s.maps.grid.n != grid_.n || t.next.maps.grid.n != grid_.n) throw std::invalid_argument("transition grid mismatch");
  const TransitionRecord r = to_record(t);
  put_floats(out_, r.maps.data(), r.maps.size());
  put_floats(out_, r.stability.data(), 2);
  put_floats(out_, r.action.data(), 3);
  put_floats(out_, r.reward.data(), 4);
  put_floats(out_, r.next_maps.data(), r.next_maps.size());
  put_floats(out_, r.next_stability.data(), 2);
  put(out_, static_cast<std::uint8_t>(r.done ? 1 : 0));
  ++count_;
}

void DatasetWriter::close() {
  if (!out_.is_open()) return;
  out_.seekp(kCountOffset);
  put(out_, static_cast<std::uint64_t>(count_));
  out_.close();
  if (out_.fail()) throw std::runtime_error("dataset write failed");
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot read " + path.string());
  char magic[sizeof kDatasetMagic];
  in_.read(magic, sizeof magic);
  if (!in_ || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) throw std::runtime_error("not a dataset file");
  get(in_, header_.version);
  if (header_.version != 1) throw std::runtime_error("unsupported dataset version");
  get(in_, header_.n);
  get(in_, header_.beta);
  std::uint64_t count = 0;
  get(in_, count);
  count_ = count;
  std::uint32_t len = 0;
  get(in_, len);
  header_.params_json.resize(len);
  in_.read(header_.params_json.data(), len);
  if (!in_) throw std::runtime_error("dataset header truncated");
}

bool DatasetReader::next(TransitionRecord& r) {
  if (read_ >= count_) return false;
  const std::size_t maps = 3 * static_cast<std::size_t>(header_.n) * header_.n;
  r.maps.resize(maps);
  r.next_maps.resize(maps);
  get_floats(in_, r.maps.data(), maps);
  get_floats(in_, r.stability.data(), 2);
  get_floats(in_, r.action.data(), 3);
  get_floats(in_, r.reward.data(), 4);
  get_floats(in_, r.next_maps.data(), maps);
  get_floats(in_, r.next_stability.data(), 2);
  std::uint8_t done = 0;
  get(in_, done);
  if (!in_) throw std::runtime_error("dataset truncated at record " + std::to_string(read_));
  r.done = done != 0;
  ++read_;
  return true;
}

TrainingSet load_training_set(const std::filesystem::path& dataset, const std::filesystem::path& manifest,
                              const nn::NetworkConfig& cfg) {
  DatasetReader reader(dataset);
  std::ifstream min(manifest);
  if (!min) throw std::runtime_error("cannot read " + manifest.string());
  const Json m = Json::parse(min);
  if (m.at("transitions").get<std::size_t>() != reader.count()) {
    throw std::runtime_error("dataset/manifest mismatch: transition count");
  }
  if (m.at("grid_n").get<int>() != static_cast<int>(reader.header().n) || static_cast<int>(reader.header().n) != cfg.grid_n) {
    throw std::runtime_error("dataset/manifest mismatch: grid size");
  }
  if (reader.count() == 0) throw std::runtime_error("dataset is empty");
  TrainingSet set;
  set.width = cfg.extero_width();
  TransitionRecord r;
  while (reader.next(r)) set.append(r, cfg);
  return set;
}

}  // namespace vapor
