// Copyright 2026 The phri Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "phri/episode_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace phri {

namespace {

nlohmann::json vec_json(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec json_vec(const nlohmann::json& j, const char* field, Eigen::Index expected = -1) {
  const auto values = j.at(field).get<std::vector<double>>();
  if (expected >= 0 && static_cast<Eigen::Index>(values.size()) != expected) {
    throw FormatError(std::string("field '") + field + "' has " +
                      std::to_string(values.size()) + " entries, expected " +
                      std::to_string(expected));
  }
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

nlohmann::json to_json(const PlantParams& p) {
  return {{"dof", p.dof()},
          {"mass", vec_json(p.mass)},
          {"damping", vec_json(p.damping)},
          {"stiffness", vec_json(p.stiffness)},
          {"dt", p.dt}};
}

PlantParams plant_from_json(const nlohmann::json& j) {
  PlantParams p;
  p.mass = json_vec(j, "mass");
  p.damping = json_vec(j, "damping", p.mass.size());
  p.stiffness = json_vec(j, "stiffness", p.mass.size());
  p.dt = j.at("dt").get<double>();
  p.validate();
  return p;
}

nlohmann::json to_json(const TrajectorySpec& s) {
  return {{"kind", to_string(s.kind)},     {"start", vec_json(s.start)},
          {"length", s.length},            {"radius", s.radius},
          {"amplitude", s.amplitude},      {"wavelength", s.wavelength},
          {"duration", s.duration}};
}

TrajectorySpec trajectory_from_json(const nlohmann::json& j) {
  TrajectorySpec s;
  s.kind = parse_trajectory_kind(j.at("kind").get<std::string>());
  s.start = json_vec(j, "start");
  s.length = j.value("length", s.length);
  s.radius = j.value("radius", s.radius);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.wavelength = j.value("wavelength", s.wavelength);
  s.duration = j.value("duration", s.duration);
  s.validate();
  return s;
}

nlohmann::json to_json(const Obstacle& o) {
  return {{"center", vec_json(o.center)},
          {"half_width", o.half_width},
          {"arc_fraction", o.arc_fraction},
          {"side", o.side}};
}

Obstacle obstacle_from_json(const nlohmann::json& j) {
  Obstacle o;
  o.center = json_vec(j, "center");
  o.half_width = j.at("half_width").get<double>();
  o.arc_fraction = j.at("arc_fraction").get<double>();
  o.side = j.value("side", 1);
  return o;
}

nlohmann::json to_json(const HumanModel& h) {
  return {{"id", h.id},
          {"stiffness", vec_json(h.stiffness)},
          {"damping", vec_json(h.damping)},
          {"detour_amplitude", h.detour_amplitude},
          {"detour_sigma", h.detour_sigma},
          {"force_cap", h.force_cap},
          {"noise_std", h.noise_std}};
}

HumanModel human_from_json(const nlohmann::json& j) {
  HumanModel h;
  h.id = j.value("id", h.id);
  h.stiffness = json_vec(j, "stiffness");
  h.damping = json_vec(j, "damping", h.stiffness.size());
  h.detour_amplitude = j.at("detour_amplitude").get<double>();
  h.detour_sigma = j.at("detour_sigma").get<double>();
  h.force_cap = j.at("force_cap").get<double>();
  h.noise_std = j.value("noise_std", h.noise_std);
  h.validate();
  return h;
}

nlohmann::json to_json(const EpisodeMeta& m) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"plant", to_json(m.plant)},
                      {"trajectory", to_json(m.trajectory)},
                      {"obstacle", nullptr},
                      {"human", to_json(m.human)},
                      {"controller", m.controller},
                      {"model_id", m.model_id},
                      {"seed", m.seed},
                      {"aborted", m.aborted},
                      {"diagnostic", m.diagnostic}};
  if (m.obstacle) j["obstacle"] = to_json(*m.obstacle);
  return j;
}

EpisodeMeta meta_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw FormatError("episode metadata: unsupported schema_version " + std::to_string(version));
  }
  EpisodeMeta m;
  m.plant = plant_from_json(j.at("plant"));
  m.trajectory = trajectory_from_json(j.at("trajectory"));
  if (j.contains("obstacle") && !j["obstacle"].is_null()) {
    m.obstacle = obstacle_from_json(j["obstacle"]);
  }
  m.human = human_from_json(j.at("human"));
  m.controller = j.value("controller", m.controller);
  parse_controller_kind(m.controller);
  m.model_id = j.value("model_id", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  m.aborted = j.value("aborted", false);
  m.diagnostic = j.value("diagnostic", std::string());
  return m;
}

nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"t", r.t},
          {"x", vec_json(r.x)},
          {"v", vec_json(r.v)},
          {"u_h", vec_json(r.u_h)},
          {"x_ref_r", vec_json(r.x_ref_r)},
          {"x_ref_h_true", vec_json(r.x_ref_h_true)},
          {"u_r", vec_json(r.u_r)},
          {"tag", r.tag}};
}

EpisodeRecord record_from_json(const nlohmann::json& j, int dof) {
  EpisodeRecord r;
  r.t = j.at("t").get<double>();
  r.x = json_vec(j, "x", dof);
  r.v = json_vec(j, "v", dof);
  r.u_h = json_vec(j, "u_h", dof);
  r.x_ref_r = json_vec(j, "x_ref_r", dof);
  r.x_ref_h_true = json_vec(j, "x_ref_h_true", dof);
  r.u_r = json_vec(j, "u_r", dof);
  r.tag = j.value("tag", std::string());
  return r;
}

std::filesystem::path meta_path(const std::filesystem::path& episode_path) {
  std::filesystem::path p = episode_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_records(const Episode& episode, std::ostream& out) {
  for (const auto& r : episode.records) out << to_json(r).dump() << '\n';
}

void write_episode(const Episode& episode, const std::filesystem::path& path) {
  {
    auto out = open_out(path);
    write_records(episode, out);
    if (!out) throw Error("failed writing " + path.string());
  }
  write_text(meta_path(path), to_json(episode.meta).dump(2) + "\n");
}

Episode read_episode(const std::filesystem::path& path) {
  Episode ep;
  {
    std::ifstream in(meta_path(path));
    if (!in) throw Error("missing episode metadata " + meta_path(path).string());
    try {
      ep.meta = meta_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("episode metadata " + meta_path(path).string() + ": " + e.what());
    }
  }
  std::ifstream in(path);
  if (!in) throw Error("cannot open episode " + path.string());
  const int dof = ep.meta.plant.dof();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ep.records.push_back(record_from_json(nlohmann::json::parse(line), dof));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ep;
}

std::string episode_csv(const Episode& episode) {
  const int d = episode.dof();
  std::string csv = "t";
  for (const char* group : {"x", "v", "u_h", "x_ref_r", "x_ref_h_true", "u_r"}) {
    for (int a = 0; a < d; ++a) csv += std::string(",") + group + "_" + std::to_string(a);
  }
  csv += ",tag\n";
  for (const auto& r : episode.records) {
    csv += fmt(r.t);
    for (const Vec* v : {&r.x, &r.v, &r.u_h, &r.x_ref_r, &r.x_ref_h_true, &r.u_r}) {
      for (Eigen::Index a = 0; a < v->size(); ++a) csv += "," + fmt((*v)(a));
    }
    csv += "," + r.tag + "\n";
  }
  return csv;
}

void write_episode_csv(const Episode& episode, const std::filesystem::path& path) {
  write_text(path, episode_csv(episode));
}

void write_dataset_dir(const std::filesystem::path& dir, const std::vector<Episode>& episodes,
                       const DatasetProvenance& provenance) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"schema_version", kSchemaVersion},
                             {"provenance",
                              {{"model_id", provenance.model_id},
                               {"iteration", provenance.iteration},
                               {"context", provenance.context}}},
                             {"episodes", nlohmann::json::array()}};
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "episode_%04zu.jsonl", i);
    write_episode(episodes[i], dir / name);
    manifest["episodes"].push_back({{"file", name},
                                    {"meta", meta_path(name).string()},
                                    {"trajectory", to_string(episodes[i].meta.trajectory.kind)},
                                    {"controller", episodes[i].meta.controller},
                                    {"model_id", episodes[i].meta.model_id},
                                    {"human_id", episodes[i].meta.human.id},
                                    {"seed", episodes[i].meta.seed},
                                    {"records", episodes[i].records.size()}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<Episode> read_dataset_dir(const std::filesystem::path& dir,
                                      DatasetProvenance* provenance) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("schema_version", 0) != kSchemaVersion) {
    throw FormatError("manifest: unsupported schema_version");
  }
  if (provenance && manifest.contains("provenance")) {
    const auto& p = manifest["provenance"];
    provenance->model_id = p.value("model_id", std::string());
    provenance->iteration = p.value("iteration", 0);
    provenance->context = p.value("context", std::string());
  }
  std::vector<Episode> out;
  for (const auto& e : manifest.at("episodes")) {
    out.push_back(read_episode(dir / e.at("file").get<std::string>()));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace phri
