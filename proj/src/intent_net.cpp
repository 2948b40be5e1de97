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


#include "phri/intent_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace phri {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

// splitmix-style 53-bit uniform so initialization does not depend on the
// standard library's distribution implementations.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (double(next() >> 11) * 0x1.0p-53);
  }

 private:
  std::uint64_t state_;
};

template <typename Derived>
void sigmoid_inplace(Eigen::DenseBase<Derived>&& block) {
  block = (1.0 + (-block.derived().array()).exp()).inverse().matrix();
}

struct LayerCache {
  Mat input;      // in × (k·B), column t·B + b
  Mat gates;      // 4h × (k·B), activated
  Mat cell;       // h × (k·B)
  Mat cell_tanh;  // h × (k·B)
  Mat hidden;     // h × (k·B)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mat head_in;  // h × B
  Mat z1;       // fc × B
  Mat y;        // out × B, normalized
};

void check_window(const PredictorConfig& c, const Mat& w, std::size_t index) {
  if (w.rows() != c.window_k) {
    std::ostringstream msg;
    msg << "window " << index << " has " << w.rows() << " rows, expected window_k = "
        << c.window_k;
    throw InvalidArgument(msg.str());
  }
  if (w.cols() != c.input_features()) {
    std::ostringstream msg;
    msg << "window " << index << " has " << w.cols()
        << " columns, expected input_features = " << c.input_features();
    throw InvalidArgument(msg.str());
  }
}

Mat pack_inputs(const PredictorModel& model, std::span<const Mat* const> windows) {
  const auto& c = model.config();
  const auto& norm = model.normalization();
  const Eigen::Index B = static_cast<Eigen::Index>(windows.size());
  const Vec inv_scale = norm.input_scale.cwiseInverse();
  Mat packed(c.input_features(), c.window_k * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat& w = *windows[b];
    check_window(c, w, static_cast<std::size_t>(b));
    for (int t = 0; t < c.window_k; ++t) {
      packed.col(t * B + b) =
          (w.row(t).transpose() - norm.input_mean).cwiseProduct(inv_scale);
    }
  }
  return packed;
}

void run_forward(const PredictorModel& model, Mat input, Eigen::Index B, ForwardCache& cache) {
  const auto& c = model.config();
  const int k = c.window_k, h = c.hidden_size;
  cache.layers.resize(c.recurrent_layers);
  for (int l = 0; l < c.recurrent_layers; ++l) {
    LayerCache& L = cache.layers[l];
    L.input = l == 0 ? std::move(input) : cache.layers[l - 1].hidden;
    L.gates.noalias() = model.w_input(l) * L.input;
    L.gates.colwise() += model.bias(l).col(0);
    L.cell.resize(h, k * B);
    L.cell_tanh.resize(h, k * B);
    L.hidden.resize(h, k * B);
    const Mat& Wh = model.w_recurrent(l);
    for (int t = 0; t < k; ++t) {
      auto G = L.gates.middleCols(t * B, B);
      if (t > 0) G.noalias() += Wh * L.hidden.middleCols((t - 1) * B, B);
      sigmoid_inplace(G.topRows(2 * h));
      G.middleRows(2 * h, h) = G.middleRows(2 * h, h).array().tanh().matrix();
      sigmoid_inplace(G.bottomRows(h));
      auto cell = L.cell.middleCols(t * B, B);
      cell = G.topRows(h).cwiseProduct(G.middleRows(2 * h, h));
      if (t > 0) cell += G.middleRows(h, h).cwiseProduct(L.cell.middleCols((t - 1) * B, B));
      L.cell_tanh.middleCols(t * B, B) = cell.array().tanh().matrix();
      L.hidden.middleCols(t * B, B) =
          G.bottomRows(h).cwiseProduct(L.cell_tanh.middleCols(t * B, B));
    }
  }
  cache.head_in = cache.layers.back().hidden.middleCols((k - 1) * B, B);
  cache.z1.noalias() = model.head_w1() * cache.head_in;
  cache.z1.colwise() += model.head_b1().col(0);
  cache.z1 = cache.z1.array().tanh().matrix();
  cache.y.noalias() = model.head_w2() * cache.z1;
  cache.y.colwise() += model.head_b2().col(0);
}

// Target of one sample in the normalized output parametrization.
Vec normalized_target(const PredictorModel& model, const Sample& s) {
  const auto& c = model.config();
  const auto& norm = model.normalization();
  const int d = c.dof;
  Vec t(c.output_size());
  for (int j = 0; j < c.horizon_N; ++j) {
    for (int a = 0; a < d; ++a) {
      const double anchor = c.residual_output ? s.input(c.window_k - 1, a) : 0.0;
      t(j * d + a) = s.target(j, a) - anchor;
    }
  }
  return (t - norm.output_mean).cwiseQuotient(norm.output_scale);
}

std::string block_label(const PredictorConfig& c, std::size_t index) {
  const std::size_t head = 3 * static_cast<std::size_t>(c.recurrent_layers);
  if (index < head) {
    static const char* kinds[] = {"w_ih", "w_hh", "b"};
    return "lstm" + std::to_string(index / 3) + "." + kinds[index % 3];
  }
  static const char* heads[] = {"fc1.w", "fc1.b", "fc2.w", "fc2.b"};
  return heads[index - head];
}

}  // namespace

// ---------------------------------------------------------------------------

void PredictorConfig::validate() const {
  require(dof >= 1, "predictor config: dof must be >= 1");
  require(window_k >= 1, "predictor config: window_k must be >= 1");
  require(horizon_N >= 1, "predictor config: horizon_N must be >= 1");
  require(recurrent_layers >= 1, "predictor config: recurrent_layers must be >= 1");
  require(hidden_size >= 1, "predictor config: hidden_size must be >= 1");
  require(fc_hidden >= 1, "predictor config: fc_hidden must be >= 1");
}

PredictorConfig PredictorConfig::desk(int dof) {
  PredictorConfig c;
  c.dof = dof;
  c.window_k = 25;
  c.horizon_N = 10;
  c.recurrent_layers = 1;
  c.hidden_size = 32;
  c.fc_hidden = 128;
  return c;
}

PredictorConfig PredictorConfig::paper(int dof) {
  PredictorConfig c;
  c.dof = dof;
  c.window_k = 125;
  c.horizon_N = 50;
  c.recurrent_layers = 3;
  c.hidden_size = 250;
  c.fc_hidden = 128;
  return c;
}

nlohmann::json to_json(const PredictorConfig& c) {
  return {{"dof", c.dof},
          {"input_features", c.input_features()},
          {"window_k", c.window_k},
          {"horizon_N", c.horizon_N},
          {"recurrent_layers", c.recurrent_layers},
          {"hidden_size", c.hidden_size},
          {"fc_hidden", c.fc_hidden},
          {"output_size", c.output_size()},
          {"residual_output", c.residual_output}};
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig c;
  c.dof = j.at("dof").get<int>();
  c.window_k = j.at("window_k").get<int>();
  c.horizon_N = j.at("horizon_N").get<int>();
  c.recurrent_layers = j.at("recurrent_layers").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.fc_hidden = j.at("fc_hidden").get<int>();
  c.residual_output = j.value("residual_output", true);
  c.validate();
  if (j.contains("input_features") && j["input_features"].get<int>() != c.input_features()) {
    throw FormatError("predictor config: input_features must equal 4 * dof");
  }
  if (j.contains("output_size") && j["output_size"].get<int>() != c.output_size()) {
    throw FormatError("predictor config: output_size must equal horizon_N * dof");
  }
  return c;
}

Normalization Normalization::identity(const PredictorConfig& c) {
  Normalization n;
  n.input_mean = Vec::Zero(c.input_features());
  n.input_scale = Vec::Ones(c.input_features());
  n.output_mean = Vec::Zero(c.output_size());
  n.output_scale = Vec::Ones(c.output_size());
  return n;
}

void Normalization::validate(const PredictorConfig& c) const {
  require(input_mean.size() == c.input_features() && input_scale.size() == c.input_features(),
          "normalization: input statistics must have input_features entries");
  require(output_mean.size() == c.output_size() && output_scale.size() == c.output_size(),
          "normalization: output statistics must have output_size entries");
  require((input_scale.array() > 0.0).all() && (output_scale.array() > 0.0).all(),
          "normalization: scales must be > 0");
}

PredictorModel::PredictorModel(PredictorConfig config) : config_(config) {
  config_.validate();
  const int h = config_.hidden_size;
  for (int l = 0; l < config_.recurrent_layers; ++l) {
    const int in = l == 0 ? config_.input_features() : h;
    blocks_.push_back({"lstm" + std::to_string(l) + ".w_ih", Mat::Zero(4 * h, in), true, false});
    blocks_.push_back({"lstm" + std::to_string(l) + ".w_hh", Mat::Zero(4 * h, h), true, false});
    blocks_.push_back({"lstm" + std::to_string(l) + ".b", Mat::Zero(4 * h, 1), true, false});
  }
  blocks_.push_back({"fc1.w", Mat::Zero(config_.fc_hidden, h), false, false});
  blocks_.push_back({"fc1.b", Mat::Zero(config_.fc_hidden, 1), false, false});
  blocks_.push_back({"fc2.w", Mat::Zero(config_.output_size(), config_.fc_hidden), false, false});
  blocks_.push_back({"fc2.b", Mat::Zero(config_.output_size(), 1), false, false});
  norm_ = Normalization::identity(config_);
}

std::size_t PredictorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

std::size_t PredictorModel::trainable_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    if (!b.frozen) n += static_cast<std::size_t>(b.value.size());
  }
  return n;
}

std::size_t PredictorModel::recurrent_parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    if (b.recurrent) n += static_cast<std::size_t>(b.value.size());
  }
  return n;
}

std::size_t PredictorModel::head_parameter_count() const {
  return parameter_count() - recurrent_parameter_count();
}

void PredictorModel::validate() const {
  config_.validate();
  const PredictorModel reference(config_);
  if (blocks_.size() != reference.blocks_.size()) {
    throw InvalidArgument("predictor: expected " + std::to_string(reference.blocks_.size()) +
                          " parameter blocks, found " + std::to_string(blocks_.size()));
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Mat& want = reference.blocks_[i].value;
    const Mat& got = blocks_[i].value;
    if (want.rows() != got.rows() || want.cols() != got.cols()) {
      std::ostringstream msg;
      msg << "predictor: block " << reference.blocks_[i].name << " has shape " << got.rows()
          << "x" << got.cols() << ", expected " << want.rows() << "x" << want.cols();
      throw InvalidArgument(msg.str());
    }
  }
  norm_.validate(config_);
}

PredictorModel init_model(const PredictorConfig& config, std::uint64_t seed) {
  PredictorModel model(config);
  UniformSource rng(seed);
  const int h = config.hidden_size;
  for (auto& block : model.blocks()) {
    Mat& w = block.value;
    if (w.cols() == 1) {
      w.setZero();
      continue;
    }
    const double bound = std::sqrt(1.0 / double(w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  for (int l = 0; l < config.recurrent_layers; ++l) {
    model.blocks()[3 * l + 2].value.middleRows(h, h).setOnes();
  }
  return model;
}

std::size_t set_freeze(PredictorModel& model, FreezePolicy policy) {
  for (auto& b : model.blocks()) {
    b.frozen = policy == FreezePolicy::kFreezeRecurrent && b.recurrent;
  }
  return model.trainable_count();
}

std::vector<Mat> forward_batch(const PredictorModel& model, std::span<const Mat* const> windows) {
  const auto& c = model.config();
  const auto B = static_cast<Eigen::Index>(windows.size());
  std::vector<Mat> out;
  if (B == 0) return out;
  ForwardCache cache;
  run_forward(model, pack_inputs(model, windows), B, cache);
  const auto& norm = model.normalization();
  const int d = c.dof;
  out.reserve(windows.size());
  for (Eigen::Index b = 0; b < B; ++b) {
    const Vec flat = cache.y.col(b).cwiseProduct(norm.output_scale) + norm.output_mean;
    Mat pred(c.horizon_N, d);
    for (int j = 0; j < c.horizon_N; ++j) {
      for (int a = 0; a < d; ++a) {
        const double anchor = c.residual_output ? (*windows[b])(c.window_k - 1, a) : 0.0;
        pred(j, a) = flat(j * d + a) + anchor;
      }
    }
    out.push_back(std::move(pred));
  }
  return out;
}

Mat forward(const PredictorModel& model, const Mat& window) {
  const Mat* one[] = {&window};
  return std::move(forward_batch(model, one).front());
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& g : blocks) {
    if (g.size() > 0) m = std::max(m, g.cwiseAbs().maxCoeff());
  }
  return m;
}

namespace {

// Forward plus normalized residuals (y − target) for a batch.
Mat batch_residuals(const PredictorModel& model, std::span<const Sample* const> batch,
                    ForwardCache& cache) {
  require(!batch.empty(), "loss_and_gradients: batch must be non-empty");
  const auto B = static_cast<Eigen::Index>(batch.size());
  std::vector<const Mat*> inputs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    if (s.target.rows() != model.config().horizon_N || s.target.cols() != model.config().dof) {
      std::ostringstream msg;
      msg << "sample " << i << " target is " << s.target.rows() << "x" << s.target.cols()
          << ", expected horizon_N x dof = " << model.config().horizon_N << "x"
          << model.config().dof;
      throw InvalidArgument(msg.str());
    }
    inputs[i] = &s.input;
  }
  run_forward(model, pack_inputs(model, inputs), B, cache);
  Mat residual = cache.y;
  for (Eigen::Index b = 0; b < B; ++b) residual.col(b) -= normalized_target(model, *batch[b]);
  return residual;
}

double mean_square_checked(const Mat& residual) {
  const double total = residual.squaredNorm();
  if (!std::isfinite(total)) {
    for (Eigen::Index b = 0; b < residual.cols(); ++b) {
      if (!std::isfinite(residual.col(b).squaredNorm())) {
        throw NumericalError("non-finite loss at batch index " + std::to_string(b));
      }
    }
  }
  return total / double(residual.size());
}

}  // namespace

double loss(const PredictorModel& model, std::span<const Sample* const> batch) {
  ForwardCache cache;
  return mean_square_checked(batch_residuals(model, batch, cache));
}

LossAndGradients loss_and_gradients(const PredictorModel& model,
                                    std::span<const Sample* const> batch, GradientScope scope) {
  const auto& c = model.config();
  ForwardCache cache;
  const Mat residual = batch_residuals(model, batch, cache);
  LossAndGradients out;
  out.loss = mean_square_checked(residual);

  const auto B = static_cast<Eigen::Index>(batch.size());
  const int k = c.window_k, h = c.hidden_size;
  const int head = model.head_offset();
  auto& g = out.gradients.blocks;
  g.resize(model.blocks().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = Mat::Zero(model.blocks()[i].value.rows(), model.blocks()[i].value.cols());
  }

  const Mat dy = residual * (2.0 / double(residual.size()));
  g[head + 2].noalias() = dy * cache.z1.transpose();
  g[head + 3] = dy.rowwise().sum();
  const Mat da1 = (model.head_w2().transpose() * dy)
                      .cwiseProduct((1.0 - cache.z1.array().square()).matrix());
  g[head].noalias() = da1 * cache.head_in.transpose();
  g[head + 1] = da1.rowwise().sum();
  if (scope == GradientScope::kHeadOnly) return out;

  Mat dH = Mat::Zero(h, k * B);
  dH.rightCols(B).noalias() = model.head_w1().transpose() * da1;
  for (int l = c.recurrent_layers - 1; l >= 0; --l) {
    const LayerCache& L = cache.layers[l];
    const Mat& Wh = model.w_recurrent(l);
    Mat dPre(4 * h, k * B);
    Mat dh_next = Mat::Zero(h, B);
    Mat dc_next = Mat::Zero(h, B);
    for (int t = k - 1; t >= 0; --t) {
      const auto G = L.gates.middleCols(t * B, B);
      const auto gi = G.topRows(h).array();
      const auto gf = G.middleRows(h, h).array();
      const auto gg = G.middleRows(2 * h, h).array();
      const auto go = G.bottomRows(h).array();
      const auto tc = L.cell_tanh.middleCols(t * B, B).array();
      const Eigen::ArrayXXd dh = dH.middleCols(t * B, B).array() + dh_next.array();
      const Eigen::ArrayXXd dc = dh * go * (1.0 - tc.square()) + dc_next.array();
      auto D = dPre.middleCols(t * B, B);
      D.topRows(h) = (dc * gg * gi * (1.0 - gi)).matrix();
      if (t > 0) {
        const auto c_prev = L.cell.middleCols((t - 1) * B, B).array();
        D.middleRows(h, h) = (dc * c_prev * gf * (1.0 - gf)).matrix();
      } else {
        D.middleRows(h, h).setZero();
      }
      D.middleRows(2 * h, h) = (dc * gi * (1.0 - gg.square())).matrix();
      D.bottomRows(h) = (dh * tc * go * (1.0 - go)).matrix();
      dc_next = (dc * gf).matrix();
      dh_next.noalias() = Wh.transpose() * D;
    }
    g[3 * l].noalias() = dPre * L.input.transpose();
    if (k > 1) {
      g[3 * l + 1].noalias() =
          dPre.rightCols((k - 1) * B) * L.hidden.leftCols((k - 1) * B).transpose();
    }
    g[3 * l + 2] = dPre.rowwise().sum();
    if (l > 0) dH.noalias() = model.w_input(l).transpose() * dPre;
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainState TrainState::for_model(const PredictorModel& model, double learning_rate,
                                 std::uint64_t seed) {
  TrainState s;
  for (const auto& b : model.blocks()) {
    s.first_moment.push_back(Mat::Zero(b.value.rows(), b.value.cols()));
    s.second_moment.push_back(Mat::Zero(b.value.rows(), b.value.cols()));
  }
  s.learning_rate = learning_rate;
  s.seed = seed;
  return s;
}

void optimizer_step(PredictorModel& model, TrainState& state, const Gradients& gradients) {
  auto& blocks = model.blocks();
  require(gradients.blocks.size() == blocks.size() && state.first_moment.size() == blocks.size(),
          "optimizer_step: gradient and state must cover every block");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].frozen) continue;
    const Mat& g = gradients.blocks[i];
    require(g.rows() == blocks[i].value.rows() && g.cols() == blocks[i].value.cols(),
            "optimizer_step: gradient shape mismatch in block " + blocks[i].name);
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    blocks[i].value.array() -=
        state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

bool bit_identical(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// ---------------------------------------------------------------------------
// Model file

namespace {

constexpr const char* kModelFormat = "phri-predictor";

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j, Eigen::Index expected, const std::string& what) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    throw FormatError("model file: " + what + " has " + std::to_string(values.size()) +
                      " entries, expected " + std::to_string(expected));
  }
  return Eigen::Map<const Vec>(values.data(), expected);
}

nlohmann::json next_section(std::istream& in, const std::string& expected, int& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw FormatError("model file: corrupt or truncated section '" + expected + "' at line " +
                        std::to_string(line_no));
    }
    return j;
  }
  throw FormatError("model file: missing section '" + expected + "'");
}

void expect_kind(const nlohmann::json& j, const std::string& kind, const std::string& expected) {
  if (!j.is_object() || j.value("section", std::string()) != kind) {
    throw FormatError("model file: expected section '" + expected + "'");
  }
}

}  // namespace

void write_model(const PredictorModel& model, std::ostream& out) {
  const auto& c = model.config();
  const auto& n = model.normalization();
  out << nlohmann::json{{"section", "header"},
                        {"format", kModelFormat},
                        {"schema_version", kSchemaVersion},
                        {"version_tag", model.version_tag()},
                        {"blocks", model.blocks().size()}}
             .dump()
      << '\n';
  nlohmann::json cfg = to_json(c);
  cfg["section"] = "config";
  out << cfg.dump() << '\n';
  out << nlohmann::json{{"section", "normalization"},
                        {"input_mean", vec_json(n.input_mean)},
                        {"input_scale", vec_json(n.input_scale)},
                        {"output_mean", vec_json(n.output_mean)},
                        {"output_scale", vec_json(n.output_scale)}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < model.blocks().size(); ++i) {
    const ParamBlock& b = model.blocks()[i];
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(b.value.size()));
    for (Eigen::Index r = 0; r < b.value.rows(); ++r) {
      for (Eigen::Index col = 0; col < b.value.cols(); ++col) data.push_back(b.value(r, col));
    }
    out << nlohmann::json{{"section", "block"},
                          {"index", i},
                          {"name", b.name},
                          {"rows", b.value.rows()},
                          {"cols", b.value.cols()},
                          {"recurrent", b.recurrent},
                          {"frozen", b.frozen},
                          {"data", std::move(data)}}
               .dump()
        << '\n';
  }
  out << nlohmann::json{{"section", "end"}}.dump() << '\n';
}

void save_model(const PredictorModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_model(model, out);
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

PredictorModel read_model(std::istream& in) {
  int line_no = 0;
  try {
    const auto header = next_section(in, "header", line_no);
    expect_kind(header, "header", "header");
    if (header.value("format", std::string()) != kModelFormat) {
      throw FormatError("model file: not a phri predictor file");
    }
    const int version = header.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
      throw FormatError("model file: unsupported schema_version " + std::to_string(version) +
                        " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    const auto cfg_json = next_section(in, "config", line_no);
    expect_kind(cfg_json, "config", "config");
    PredictorModel model(predictor_config_from_json(cfg_json));
    model.set_version_tag(header.value("version_tag", std::string()));
    const auto& c = model.config();

    const auto norm_json = next_section(in, "normalization", line_no);
    expect_kind(norm_json, "normalization", "normalization");
    Normalization& n = model.normalization();
    n.input_mean = json_vec(norm_json.at("input_mean"), c.input_features(), "input_mean");
    n.input_scale = json_vec(norm_json.at("input_scale"), c.input_features(), "input_scale");
    n.output_mean = json_vec(norm_json.at("output_mean"), c.output_size(), "output_mean");
    n.output_scale = json_vec(norm_json.at("output_scale"), c.output_size(), "output_scale");
    try {
      n.validate(c);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("model file: ") + e.what());
    }

    const auto declared = header.value("blocks", model.blocks().size());
    if (declared != model.blocks().size()) {
      throw FormatError("model file: header declares " + std::to_string(declared) +
                        " blocks, config implies " + std::to_string(model.blocks().size()));
    }
    for (std::size_t i = 0; i < model.blocks().size(); ++i) {
      ParamBlock& b = model.blocks()[i];
      const std::string label = "block " + block_label(c, i);
      const auto j = next_section(in, label, line_no);
      expect_kind(j, "block", label);
      const auto rows = j.at("rows").get<Eigen::Index>();
      const auto cols = j.at("cols").get<Eigen::Index>();
      if (rows != b.value.rows() || cols != b.value.cols()) {
        std::ostringstream msg;
        msg << "model file: shape mismatch in " << label << ": declared " << rows << "x"
            << cols << ", config requires " << b.value.rows() << "x" << b.value.cols();
        throw FormatError(msg.str());
      }
      const auto data = j.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw FormatError("model file: " + label + " carries " + std::to_string(data.size()) +
                          " values for a " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " shape");
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index col = 0; col < cols; ++col) b.value(r, col) = data[r * cols + col];
      }
      b.frozen = j.value("frozen", false);
    }
    const auto end = next_section(in, "end", line_no);
    expect_kind(end, "end", "end");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: malformed content near line ") +
                      std::to_string(line_no) + ": " + e.what());
  }
}

PredictorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace phri
