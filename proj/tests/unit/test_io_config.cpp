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


#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "phri/config.hpp"
#include "phri/episode_io.hpp"

using namespace phri;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phri_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Episode small_episode(std::uint64_t seed) {
  const TrajectorySpec spec = TrajectorySpec::defaults(TrajectoryKind::kSinusoidal);
  ControllerSetup imp;
  imp.kind = ControllerKind::kIMP;
  TrajectorySpec s = spec;
  s.duration = 0.4;
  return simulate_episode(PlantParams::defaults(), s, place_obstacle(s, 0.3, -1),
                          HumanModel::defaults(), imp, nullptr, seed)
      .episode;
}

bool same_records(const Episode& a, const Episode& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a.records[i], &y = b.records[i];
    if (x.t != y.t || x.x != y.x || x.v != y.v || x.u_h != y.u_h || x.x_ref_r != y.x_ref_r ||
        x.x_ref_h_true != y.x_ref_h_true || x.u_r != y.u_r || x.tag != y.tag) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("episode files round-trip exactly") {
  const fs::path dir = scratch("episode");
  const Episode ep = small_episode(3);
  write_episode(ep, dir / "e.jsonl");
  CHECK(fs::exists(dir / "e.meta.json"));
  const Episode back = read_episode(dir / "e.jsonl");
  CHECK(same_records(ep, back));
  CHECK(back.meta.seed == 3);
  CHECK(back.meta.controller == "IMP");
  REQUIRE(back.meta.obstacle.has_value());
  CHECK(back.meta.obstacle->side == -1);
  CHECK(back.meta.obstacle->center == ep.meta.obstacle->center);
  CHECK(back.meta.plant.mass == ep.meta.plant.mass);
  CHECK(back.meta.human.stiffness == ep.meta.human.stiffness);
  CHECK(back.meta.trajectory.kind == TrajectoryKind::kSinusoidal);
  CHECK(back.meta.trajectory.duration == 0.4);
}

TEST_CASE("record lines carry every field") {
  const Episode ep = small_episode(1);
  std::ostringstream out;
  write_records(ep, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"t", "x", "v", "u_h", "x_ref_r", "x_ref_h_true", "u_r", "tag"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["x"].size() == 2);
  const auto meta = to_json(ep.meta);
  CHECK(meta["schema_version"] == kSchemaVersion);
  for (const char* key : {"plant", "trajectory", "obstacle", "human", "seed"}) CHECK(meta.contains(key));
}

TEST_CASE("malformed episode lines report the line number") {
  const fs::path dir = scratch("bad_episode");
  const Episode ep = small_episode(1);
  write_episode(ep, dir / "e.jsonl");
  {
    std::ofstream out(dir / "e.jsonl", std::ios::app);
    out << "{\"t\": 1.0, \"x\": [0]}\n";
  }
  try {
    read_episode(dir / "e.jsonl");
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":" + std::to_string(ep.size() + 1) + ":") != std::string::npos);
  }
  fs::remove(dir / "e.meta.json");
  CHECK_THROWS_AS(read_episode(dir / "e.jsonl"), Error);
}

TEST_CASE("metadata with an unknown schema version is rejected") {
  auto j = to_json(small_episode(1).meta);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(meta_from_json(j), FormatError);
}

TEST_CASE("episode CSV") {
  const Episode ep = small_episode(1);
  const std::string csv = episode_csv(ep);
  CHECK(csv.rfind("t,x_0,x_1,v_0,v_1,u_h_0,u_h_1,", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == ep.size() + 1);
}

TEST_CASE("dataset directories with manifest") {
  const fs::path dir = scratch("dataset");
  std::vector<Episode> eps = {small_episode(1), small_episode(2)};
  write_dataset_dir(dir, eps, {"M_0", 1, "h0"});
  CHECK(fs::exists(dir / "episode_0000.jsonl"));
  CHECK(fs::exists(dir / "episode_0001.jsonl"));
  std::ifstream in(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest["episodes"].size() == 2);
  CHECK(manifest["provenance"]["model_id"] == "M_0");
  DatasetProvenance prov;
  const auto back = read_dataset_dir(dir, &prov);
  REQUIRE(back.size() == 2);
  CHECK(same_records(back[1], eps[1]));
  CHECK(prov.iteration == 1);
  CHECK(prov.context == "h0");

  const fs::path empty = scratch("empty_dataset");
  write_dataset_dir(empty, {}, {});
  CHECK(read_dataset_dir(empty).empty());
  CHECK_THROWS_AS(read_dataset_dir(scratch("no_manifest")), Error);
}

// ---------------------------------------------------------------------------

TEST_CASE("profiles select consistent parameter sets") {
  const RunConfig desk = RunConfig::for_profile(Profile::kDesk);
  CHECK(desk.iterate.predictor.hidden_size == 32);
  CHECK(desk.iterate.predictor.window_k == 25);
  CHECK(desk.iterate.predictor.horizon_N == 10);
  CHECK(desk.iterate.episodes_per_iteration == 10);
  CHECK(desk.iterate.horizons == std::vector<int>{2, 5, 10});
  CHECK(desk.env.pick_index <= desk.iterate.predictor.horizon_N);
  CHECK(desk.generate.episodes_per_kind * desk.env.trajectories.size() == 30);
  desk.validate();
  const RunConfig paper = RunConfig::for_profile(Profile::kPaper);
  CHECK(paper.iterate.predictor.hidden_size == 250);
  CHECK(paper.iterate.predictor.recurrent_layers == 3);
  CHECK(paper.iterate.predictor.window_k == 125);
  CHECK(paper.iterate.predictor.horizon_N == 50);
  CHECK(paper.iterate.horizons == std::vector<int>{5, 10, 20, 50});
  CHECK(paper.env.pick_index == 20);
  CHECK(paper.iterate.train.epochs == 25);
  CHECK(paper.env.weights.alpha == 0.8);
  CHECK(paper.env.plant.mass(0) == 10.0);
  CHECK(paper.env.plant.stiffness.isZero());
  CHECK(paper.env.plant.dt == 0.008);
  paper.validate();
  CHECK(parse_profile("paper") == Profile::kPaper);
  CHECK_THROWS_AS(parse_profile("laptop"), InvalidArgument);
}

TEST_CASE("config overrides") {
  const auto doc = nlohmann::json::parse(R"({
    "seed": 7,
    "game": {"alpha": 0.6, "R_r": [1e-3, 2e-3]},
    "plant": {"mass": 12},
    "human": {"stiffness": [250, 260]},
    "trajectories": ["curved"],
    "iterate": {"max_iters": 2, "tol": "inf"},
    "transfer": {"context": "object", "episodes": 5},
    "serve": {"port": 9000}
  })");
  const RunConfig c = apply_config(RunConfig::for_profile(Profile::kDesk), doc);
  CHECK(c.seed == 7);
  CHECK(c.env.weights.alpha == 0.6);
  CHECK(c.env.weights.R_r(1, 1) == 2e-3);
  CHECK(c.env.weights.R_r(0, 1) == 0.0);
  CHECK(c.env.plant.mass(1) == 12.0);
  CHECK(c.env.human.stiffness(1) == 260.0);
  CHECK(c.env.trajectories == std::vector<TrajectoryKind>{TrajectoryKind::kCurved});
  CHECK(c.iterate.max_iters == 2);
  CHECK(std::isinf(c.iterate.tol));
  CHECK(c.transfer_context.kind == TransferKind::kObject);
  CHECK(c.transfer.episodes == 5);
  CHECK(c.serve.port == 9000);

  // The dump reloads to the same configuration.
  const RunConfig again = apply_config(RunConfig::for_profile(Profile::kDesk), to_json(c));
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("config rejects unknown keys and bad values") {
  auto apply = [](const char* text) {
    return apply_config(RunConfig::for_profile(Profile::kDesk), nlohmann::json::parse(text));
  };
  try {
    apply(R"({"plant": {"masss": 3}})");
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("plant.masss") != std::string::npos);
  }
  CHECK_THROWS_AS(apply(R"({"trajectories": ["zigzag"]})"), InvalidArgument);
  CHECK_THROWS_AS(apply(R"({"game": {"alpha": 1.5}})"), InvalidArgument);
  CHECK_THROWS_AS(apply(R"({"pick_index": 11})"), InvalidArgument);
  CHECK_THROWS_AS(apply(R"({"human": {"stiffness": [1, 2, 3]}})"), InvalidArgument);
  CHECK_THROWS_AS(apply(R"({"generate": {"controller": "PID"}})"), InvalidArgument);
}

TEST_CASE("switching profile in a config file") {
  const RunConfig c = apply_config(RunConfig::for_profile(Profile::kDesk),
                                   nlohmann::json::parse(R"({"profile": "paper", "seed": 3})"));
  CHECK(c.profile == Profile::kPaper);
  CHECK(c.iterate.predictor.horizon_N == 50);
  CHECK(c.seed == 3);
}

TEST_CASE("config files") {
  const fs::path dir = scratch("config");
  write_text(dir / "c.json", R"({"duration": 4.0})");
  CHECK(load_config(dir / "c.json", RunConfig{}).env.duration == 4.0);
  write_text(dir / "bad.json", "{ nope");
  CHECK_THROWS_AS(load_config(dir / "bad.json", RunConfig{}), InvalidArgument);
  CHECK_THROWS_AS(load_config(dir / "missing.json", RunConfig{}), InvalidArgument);
}
