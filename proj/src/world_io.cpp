#include "vapor/world_io.hpp"

#include <bit>
#include <stdexcept>

namespace vapor {

static_assert(std::endian::native == std::endian::little, "side-car files are little-endian");

namespace {

Json vec2(const Vec2& v) { return Json::array({v.x(), v.y()}); }
Vec2 vec2(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
Json vec3(const Action& v) { return Json::array({v.x(), v.y(), v.z()}); }
Action vec3(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
Json pose(const Pose2& p) { return Json::array({p.x, p.y, p.theta}); }
Pose2 pose(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix) {
  return stem.string() + suffix;
}

}  // namespace

Json to_json(const WorldModel& world) {
  Json j;
  j["seed"] = world.seed;
  j["archetype"] = to_string(world.archetype);
  j["bounds"] = {{"min", vec2(world.bounds.min)}, {"max", vec2(world.bounds.max)}};
  Json materials = Json::object();
  for (std::size_t i = 0; i < kMaterialCount; ++i) {
    const Material& m = world.materials[static_cast<MaterialKind>(i)];
    materials[std::string(to_string(m.kind))] = {{"pliability", m.pliability},   {"reflectance", m.reflectance},
                                                 {"min_height", m.min_height},   {"max_height", m.max_height},
                                                 {"roughness", m.roughness}};
  }
  j["materials"] = materials;
  Json entities = Json::array();
  for (const Entity& e : world.entities) {
    entities.push_back({{"kind", to_string(e.kind)}, {"center", vec2(e.center)}, {"radius", e.radius}, {"height", e.height}});
  }
  j["entities"] = entities;
  j["mission"] = {{"start", pose(world.mission.start)}, {"goal", vec2(world.mission.goal)}};
  Json corridors = Json::array();
  for (const Corridor& c : world.corridors) corridors.push_back({{"a", vec2(c.a)}, {"b", vec2(c.b)}, {"width", c.width}});
  j["corridors"] = corridors;
  return j;
}

WorldModel world_from_json(const Json& j) {
  WorldModel w;
  w.seed = j.at("seed").get<std::uint64_t>();
  w.archetype = archetype_from_string(j.at("archetype").get<std::string>());
  w.bounds = {vec2(j.at("bounds").at("min")), vec2(j.at("bounds").at("max"))};
  for (const auto& [name, m] : j.at("materials").items()) {
    Material& mat = w.materials[material_from_string(name)];
    mat.pliability = m.at("pliability").get<double>();
    mat.reflectance = m.at("reflectance").get<double>();
    mat.min_height = m.at("min_height").get<double>();
    mat.max_height = m.at("max_height").get<double>();
    mat.roughness = m.at("roughness").get<double>();
  }
  for (const auto& e : j.at("entities")) {
    w.entities.push_back({material_from_string(e.at("kind").get<std::string>()), vec2(e.at("center")),
                          e.at("radius").get<double>(), e.at("height").get<double>()});
  }
  w.mission.start = pose(j.at("mission").at("start"));
  w.mission.goal = vec2(j.at("mission").at("goal"));
  for (const auto& c : j.at("corridors")) w.corridors.push_back({vec2(c.at("a")), vec2(c.at("b")), c.at("width").get<double>()});
  return w;
}

void save_world(const std::filesystem::path& path, const WorldModel& world, const std::string& config_hash) {
  Json j = to_json(world);
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  open_out(path) << j.dump(1) << '\n';
}

WorldModel load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return world_from_json(Json::parse(in));
}

void write_rollout(const std::filesystem::path& stem, const Rollout& rollout, const std::string& config_hash) {
  auto lines = open_out(with_suffix(stem, ".jsonl"));
  auto points = open_out(with_suffix(stem, ".points.bin"), std::ios::binary);
  auto proprio = open_out(with_suffix(stem, ".proprio.bin"), std::ios::binary);
  std::uint64_t point_offset = 0, proprio_offset = 0;
  for (const StepRecord& s : rollout.steps) {
    Json j;
    j["episode"] = rollout.episode;
    j["world_seed"] = rollout.world_seed;
    j["archetype"] = to_string(rollout.archetype);
    j["t"] = s.t;
    j["pose"] = pose(s.pose);
    j["velocity"] = vec3(s.velocity);
    j["action"] = s.has_action ? vec3(s.action) : Json(nullptr);
    j["entanglement"] = s.entanglement;
    j["point_cloud_ref"] = {{"offset", point_offset}, {"points", s.cloud.points.size()}};
    j["proprio"] = {{"offset", proprio_offset}, {"samples", s.proprio.size()}};
    j["I_b"] = s.current;
    j["flags"] = {{"collision", s.flags.collision}, {"immobilized", s.flags.immobilized}, {"clamped", s.flags.clamped}};
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    lines << j.dump() << '\n';

    for (const auto& p : s.cloud.points) points.write(reinterpret_cast<const char*>(p.data()), 4 * sizeof(float));
    point_offset += s.cloud.points.size() * 4 * sizeof(float);
    for (const auto& sample : s.proprio) {
      const auto v = sample.vector();
      proprio.write(reinterpret_cast<const char*>(v.data()), kProprioChannels * sizeof(double));
    }
    proprio_offset += s.proprio.size() * kProprioChannels * sizeof(double);
  }
}

std::vector<Rollout> read_rollout(const std::filesystem::path& stem, int& skipped) {
  std::ifstream lines(with_suffix(stem, ".jsonl"));
  std::ifstream points(with_suffix(stem, ".points.bin"), std::ios::binary);
  std::ifstream proprio(with_suffix(stem, ".proprio.bin"), std::ios::binary);
  if (!lines || !points || !proprio) throw std::runtime_error("cannot read rollout " + stem.string());

  std::vector<Rollout> runs;
  bool split = true;
  std::string line;
  while (std::getline(lines, line)) {
    StepRecord s;
    Rollout header;
    try {
      const Json j = Json::parse(line);
      header.episode = j.at("episode").get<std::uint64_t>();
      header.world_seed = j.at("world_seed").get<std::uint64_t>();
      header.archetype = archetype_from_string(j.at("archetype").get<std::string>());
      s.t = j.at("t").get<double>();
      s.pose = pose(j.at("pose"));
      s.velocity = vec3(j.at("velocity"));
      s.has_action = !j.at("action").is_null();
      if (s.has_action) s.action = vec3(j.at("action"));
      s.entanglement = j.at("entanglement").get<double>();
      s.current = j.at("I_b").get<double>();
      const Json& f = j.at("flags");
      s.flags = {f.at("collision").get<bool>(), f.at("immobilized").get<bool>(), f.at("clamped").get<bool>()};

      const Json& cref = j.at("point_cloud_ref");
      s.cloud.points.resize(cref.at("points").get<std::size_t>());
      points.clear();
      points.seekg(static_cast<std::streamoff>(cref.at("offset").get<std::uint64_t>()));
      for (auto& p : s.cloud.points) points.read(reinterpret_cast<char*>(p.data()), 4 * sizeof(float));
      if (!points) throw std::runtime_error("point side-car truncated");

      const Json& pref = j.at("proprio");
      s.proprio.resize(pref.at("samples").get<std::size_t>());
      proprio.clear();
      proprio.seekg(static_cast<std::streamoff>(pref.at("offset").get<std::uint64_t>()));
      for (auto& sample : s.proprio) {
        double v[kProprioChannels];
        proprio.read(reinterpret_cast<char*>(v), sizeof v);
        std::copy(v, v + 8, sample.joints.begin());
        std::copy(v + 8, v + 12, sample.forces.begin());
        sample.current = v[12];
      }
      if (!proprio) throw std::runtime_error("proprio side-car truncated");
    } catch (const std::exception&) {
      ++skipped;
      split = true;
      continue;
    }
    if (split || runs.back().episode != header.episode) {
      header.steps.clear();
      runs.push_back(std::move(header));
      split = false;
    }
    runs.back().steps.push_back(std::move(s));
  }
  return runs;
}

}  // namespace vapor
