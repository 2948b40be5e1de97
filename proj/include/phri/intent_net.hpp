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


#ifndef PHRI_INTENT_NET_HPP
#define PHRI_INTENT_NET_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "phri/common.hpp"

namespace phri {

/// Shape of the recurrent predictor. The input window has k rows of
/// (x, v, u_h, x_ref_r), i.e. 4·dof features; the output is N future
/// positions.
struct PredictorConfig {
  int dof = 2;
  int window_k = 25;
  int horizon_N = 10;
  int recurrent_layers = 1;
  int hidden_size = 32;
  int fc_hidden = 128;
  // Head predicts displacements from the last observed position.
  bool residual_output = true;

  int input_features() const { return 4 * dof; }
  int output_size() const { return horizon_N * dof; }
  void validate() const;

  static PredictorConfig desk(int dof = 2);
  /// 3 stacked layers of 250 units, k = 125, N = 50.
  static PredictorConfig paper(int dof = 2);

  bool operator==(const PredictorConfig&) const = default;
};

nlohmann::json to_json(const PredictorConfig& c);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

/// Per-feature affine normalization, (value − mean) / scale.
struct Normalization {
  Vec input_mean;    // input_features
  Vec input_scale;
  Vec output_mean;   // output_size, row-major over (step, axis)
  Vec output_scale;

  static Normalization identity(const PredictorConfig& c);
  void validate(const PredictorConfig& c) const;
};

struct ParamBlock {
  std::string name;
  Mat value;
  bool recurrent = false;
  bool frozen = false;
};

enum class FreezePolicy { kNone, kFreezeRecurrent };

/// Stacked gated recurrent layers (input, forget, candidate, output rows in
/// that order) followed by affine → tanh → affine.
class PredictorModel {
 public:
  PredictorModel() = default;
  explicit PredictorModel(PredictorConfig config);

  const PredictorConfig& config() const { return config_; }

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  Normalization& normalization() { return norm_; }
  const Normalization& normalization() const { return norm_; }

  const std::string& version_tag() const { return version_tag_; }
  void set_version_tag(std::string tag) { version_tag_ = std::move(tag); }

  // Block accessors; layer-major then head.
  const Mat& w_input(int layer) const { return blocks_[3 * layer].value; }
  const Mat& w_recurrent(int layer) const { return blocks_[3 * layer + 1].value; }
  const Mat& bias(int layer) const { return blocks_[3 * layer + 2].value; }
  int head_offset() const { return 3 * config_.recurrent_layers; }
  const Mat& head_w1() const { return blocks_[head_offset()].value; }
  const Mat& head_b1() const { return blocks_[head_offset() + 1].value; }
  const Mat& head_w2() const { return blocks_[head_offset() + 2].value; }
  const Mat& head_b2() const { return blocks_[head_offset() + 3].value; }

  std::size_t parameter_count() const;
  std::size_t trainable_count() const;
  std::size_t recurrent_parameter_count() const;
  std::size_t head_parameter_count() const;

  /// Validates shapes against the config.
  void validate() const;

 private:
  PredictorConfig config_;
  std::vector<ParamBlock> blocks_;
  Normalization norm_;
  std::string version_tag_ = "phri-predictor/1";
};

/// Uniform ±sqrt(1/fan_in) weights, zero biases, forget-gate bias 1.
PredictorModel init_model(const PredictorConfig& config, std::uint64_t seed);

/// Applies the freeze policy and returns the trainable parameter count.
std::size_t set_freeze(PredictorModel& model, FreezePolicy policy);

/// One window (k × 4d, physical units) to N × d positions in meters.
Mat forward(const PredictorModel& model, const Mat& window);

/// Batched forward; all windows must share the configured shape.
std::vector<Mat> forward_batch(const PredictorModel& model,
                               std::span<const Mat* const> windows);

struct Sample {
  Mat input;   // k × 4d
  Mat target;  // N × d
};

struct Gradients {
  std::vector<Mat> blocks;  // aligned with PredictorModel::blocks()
  double max_abs() const;
};

enum class GradientScope {
  kAll,       // full backpropagation through time
  kHeadOnly,  // recurrent gradients left at zero (used when they are frozen)
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

/// Mean squared error in normalized output space over every output of every
/// sample, with exact gradients by backpropagation through time. Throws
/// NumericalError naming the first sample with a non-finite loss.
LossAndGradients loss_and_gradients(const PredictorModel& model,
                                    std::span<const Sample* const> batch,
                                    GradientScope scope = GradientScope::kAll);

/// Loss only (no backward pass).
double loss(const PredictorModel& model, std::span<const Sample* const> batch);

/// Adaptive-moment optimizer state.
struct TrainState {
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  static TrainState for_model(const PredictorModel& model, double learning_rate = 1e-3,
                              std::uint64_t seed = 0);
};

/// Bias-corrected adaptive-moment update of every non-frozen block. Frozen
/// blocks and their moments are left untouched.
void optimizer_step(PredictorModel& model, TrainState& state,
                    const Gradients& gradients);

/// Line-oriented model file: one JSON section per line (header, config,
/// normalization, one line per block, end marker).
void save_model(const PredictorModel& model, const std::filesystem::path& path);
void write_model(const PredictorModel& model, std::ostream& out);
PredictorModel load_model(const std::filesystem::path& path);
PredictorModel read_model(std::istream& in);

/// Byte-wise equality of two parameter blocks.
bool bit_identical(const Mat& a, const Mat& b);

}  // namespace phri

#endif  // PHRI_INTENT_NET_HPP
