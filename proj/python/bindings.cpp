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


// Python module phri._core.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "phri/common.hpp"
#include "phri/config.hpp"
#include "phri/dynamics.hpp"
#include "phri/episode_io.hpp"
#include "phri/game.hpp"
#include "phri/intent_net.hpp"
#include "phri/pipeline.hpp"
#include "phri/simulation.hpp"

namespace py = pybind11;
using namespace phri;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Mat stack(const std::vector<EpisodeRecord>& records, Vec EpisodeRecord::*field) {
  if (records.empty()) return Mat();
  Mat out(static_cast<Eigen::Index>(records.size()), (records.front().*field).size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = (records[i].*field).transpose();
  }
  return out;
}

py::dict episode_dict(const Episode& e) {
  Vec t(static_cast<Eigen::Index>(e.size()));
  for (std::size_t i = 0; i < e.size(); ++i) t(static_cast<Eigen::Index>(i)) = e.records[i].t;
  py::dict d;
  d["t"] = t;
  d["x"] = stack(e.records, &EpisodeRecord::x);
  d["v"] = stack(e.records, &EpisodeRecord::v);
  d["u_h"] = stack(e.records, &EpisodeRecord::u_h);
  d["u_r"] = stack(e.records, &EpisodeRecord::u_r);
  d["x_ref_r"] = stack(e.records, &EpisodeRecord::x_ref_r);
  d["x_ref_h_true"] = stack(e.records, &EpisodeRecord::x_ref_h_true);
  d["meta"] = to_python(to_json(e.meta));
  d["f_rms"] = f_rms(e);
  return d;
}

// Translates library exceptions to ValueError / RuntimeError.
void register_errors(py::module_& m) {
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cooperative-game pHRI controller, intent predictor and simulator";
  m.attr("__version__") = kVersion;
  m.attr("SCHEMA_VERSION") = kSchemaVersion;
  register_errors(m);

  m.def(
      "solve_care",
      [](const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
        const CareResult r = solve_care(A, B, Q, R);
        return py::make_tuple(r.P, r.iterations, r.residual);
      },
      py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"),
      "Stabilizing CARE solution. Returns (P, iterations, residual).");
  m.def("care_residual", &care_residual, py::arg("A"), py::arg("B"), py::arg("Q"),
        py::arg("R"), py::arg("P"));
  m.def("solve_lyapunov", &solve_lyapunov, py::arg("A"), py::arg("Q"));
  m.def(
      "discretize",
      [](const Mat& A, const Mat& B, double dt) {
        const DiscreteSystem d = discretize(A, B, dt);
        return py::make_tuple(d.A_d, d.B_d);
      },
      py::arg("A"), py::arg("B"), py::arg("dt"), "Zero-order-hold (A_d, B_d).");
  m.def(
      "state_space",
      [](double mass, double damping, double stiffness, int dof) {
        const StateSpace ss =
            build_state_space(PlantParams::diagonal(dof, mass, damping, stiffness, 0.008));
        return py::make_tuple(ss.A, ss.B());
      },
      py::arg("mass") = 10.0, py::arg("damping") = 100.0, py::arg("stiffness") = 0.0,
      py::arg("dof") = 2, "(A, [B_h B_r]) of the impedance plant.");

  py::class_<GameController>(m, "GameController")
      .def(py::init([](double alpha, int dof) {
             return GameController(PlantParams::defaults(dof), GameWeights::defaults(dof, alpha));
           }),
           py::arg("alpha") = 0.8, py::arg("dof") = 2)
      .def_property_readonly("A", &GameController::A)
      .def_property_readonly("B", &GameController::B)
      .def_property_readonly("P", &GameController::P)
      .def_property_readonly("K", &GameController::K)
      .def_property_readonly("Q_c", &GameController::Q_c)
      .def_property_readonly("R_c", &GameController::R_c)
      .def_property_readonly("residual", &GameController::care_residual_norm)
      .def("shared_reference", &GameController::shared_reference, py::arg("z_ref_h"),
           py::arg("z_ref_r"))
      .def("control", &GameController::control, py::arg("z"), py::arg("z_ref"))
      .def("robot_action", &GameController::robot_action, py::arg("z"), py::arg("z_ref"))
      .def("regulation_cost",
           [](const GameController& g, const Mat& K, const Vec& z0, double horizon) {
             return regulation_cost(g.A(), g.B(), K, z0, g.Q_c(), g.R_c(), 0.008, horizon);
           },
           py::arg("K"), py::arg("z0"), py::arg("horizon") = 20.0);

  py::class_<PredictorModel>(m, "Model")
      .def_property_readonly("config",
                             [](const PredictorModel& p) { return to_python(to_json(p.config())); })
      .def_property_readonly("parameter_count", &PredictorModel::parameter_count)
      .def_property_readonly("trainable_count", &PredictorModel::trainable_count)
      .def("forward", [](const PredictorModel& p, const Mat& window) { return forward(p, window); },
           py::arg("window"), "k x 4d window to N x d predicted positions.")
      .def("freeze_recurrent",
           [](PredictorModel& p) { return set_freeze(p, FreezePolicy::kFreezeRecurrent); })
      .def("save", [](const PredictorModel& p, const std::filesystem::path& path) {
        save_model(p, path);
      });

  m.def(
      "init_model",
      [](int hidden, int k, int N, int layers, int dof, std::uint64_t seed) {
        PredictorConfig c = PredictorConfig::desk(dof);
        c.hidden_size = hidden;
        c.window_k = k;
        c.horizon_N = N;
        c.recurrent_layers = layers;
        return init_model(c, seed);
      },
      py::arg("hidden") = 32, py::arg("k") = 25, py::arg("N") = 10, py::arg("layers") = 1,
      py::arg("dof") = 2, py::arg("seed") = 1);
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "rollout",
      [](const std::string& controller, std::uint64_t seed, std::size_t index,
         const PredictorModel* model) {
        const Environment env = desk_environment();
        const Scenario s = make_scenario(env, seed, kHeldOutStream, index);
        const Rollout r =
            run_scenario(env, s, parse_controller_kind(controller), model, model ? "model" : "");
        return episode_dict(r.episode);
      },
      py::arg("controller") = "GT", py::arg("seed") = 1, py::arg("index") = 0,
      py::arg("model") = nullptr, "One desk-profile held-out episode as numpy arrays.");
  m.def(
      "read_episode",
      [](const std::filesystem::path& path) { return episode_dict(read_episode(path)); },
      py::arg("path"));
  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const WelchResult r = welch_t_test(a, b);
        return py::make_tuple(r.t, r.df, r.p);
      },
      py::arg("a"), py::arg("b"), "Returns (t, df, two-sided p).");
}
