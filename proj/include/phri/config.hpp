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


#ifndef PHRI_CONFIG_HPP
#define PHRI_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "phri/pipeline.hpp"

namespace phri {

enum class Profile { kDesk, kPaper };

std::string to_string(Profile p);
Profile parse_profile(std::string_view name);

struct GenerateSettings {
  int episodes_per_kind = 10;
  ControllerKind controller = ControllerKind::kGT;
};

struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8700;
  double rate = 125.0;             // steps per second
  int prediction_interval = 1;     // steps between prediction updates
  std::filesystem::path models_dir = "models";
  std::filesystem::path recordings_dir = "recordings";
  std::filesystem::path static_dir;  // optional UI bundle
};

/// Default environment with the pick index inside the desk horizon.
inline Environment desk_environment() {
  Environment e;
  e.pick_index = 4;
  return e;
}

/// Everything a command needs. Built from a profile, then overridden by the
/// config document and command-line flags.
struct RunConfig {
  Profile profile = Profile::kDesk;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  Environment env = desk_environment();
  IterateConfig iterate;
  TransferContext transfer_context;
  TransferConfig transfer;
  int compare_episodes = 10;
  GenerateSettings generate;
  ServeSettings serve;

  static RunConfig for_profile(Profile profile);
  void validate() const;
};

/// Applies a config document on top of `base`. Unknown keys are rejected
/// with InvalidArgument naming the key.
RunConfig apply_config(RunConfig base, const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path, RunConfig base);

nlohmann::json to_json(const RunConfig& c);

}  // namespace phri

#endif  // PHRI_CONFIG_HPP
