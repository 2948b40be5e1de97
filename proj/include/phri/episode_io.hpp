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


#ifndef PHRI_EPISODE_IO_HPP
#define PHRI_EPISODE_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "phri/dynamics.hpp"
#include "phri/pipeline.hpp"

namespace phri {

nlohmann::json to_json(const PlantParams& p);
PlantParams plant_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrajectorySpec& s);
TrajectorySpec trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Obstacle& o);
Obstacle obstacle_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HumanModel& h);
HumanModel human_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpisodeMeta& m);
EpisodeMeta meta_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpisodeRecord& r);
EpisodeRecord record_from_json(const nlohmann::json& j, int dof);

/// Sidecar next to an episode file: "run.jsonl" → "run.meta.json".
std::filesystem::path meta_path(const std::filesystem::path& episode_path);

/// One JSON record per line plus the metadata sidecar.
void write_episode(const Episode& episode, const std::filesystem::path& path);
void write_records(const Episode& episode, std::ostream& out);
/// Reads records and sidecar; throws FormatError with the line number on
/// malformed content.
Episode read_episode(const std::filesystem::path& path);

/// Flat CSV: t, x_i, v_i, u_h_i, x_ref_r_i, x_ref_h_true_i, u_r_i, tag.
std::string episode_csv(const Episode& episode);
void write_episode_csv(const Episode& episode, const std::filesystem::path& path);

/// Dataset directory: episode_NNNN.jsonl (+ sidecars) and manifest.json.
void write_dataset_dir(const std::filesystem::path& dir, const std::vector<Episode>& episodes,
                       const DatasetProvenance& provenance);
std::vector<Episode> read_dataset_dir(const std::filesystem::path& dir,
                                      DatasetProvenance* provenance = nullptr);

/// Writes text atomically enough for reports: truncate and write.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace phri

#endif  // PHRI_EPISODE_IO_HPP
