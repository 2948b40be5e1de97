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


// phri: dataset generation, training, iteration, transfer, evaluation,
// controller comparison and the live session service.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phri/config.hpp"
#include "phri/episode_io.hpp"
#include "phri/pipeline.hpp"

#ifdef PHRI_WITH_LIVE
#include "phri/live/server.hpp"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace phri;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string out;
};

RunConfig resolve(const Globals& g) {
  Profile profile = Profile::kDesk;
  if (!g.profile.empty()) profile = parse_profile(g.profile);
  RunConfig c = RunConfig::for_profile(profile);
  if (!g.config.empty()) {
    if (!fs::is_regular_file(g.config)) throw InvalidArgument("config file not found: " + g.config);
    c = load_config(g.config, c);
    // An explicit --profile wins over the file's profile.
    if (!g.profile.empty() && c.profile != profile) {
      throw InvalidArgument("--profile " + g.profile + " conflicts with the config file profile " +
                            to_string(c.profile));
    }
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  return c;
}

void progress(const std::string& line) { std::cerr << line << "\n"; }

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw InvalidArgument(what + " not found: " + path);
}

std::string report_csv(std::initializer_list<const EvalReport*> reports,
                       std::initializer_list<const char*> stages) {
  std::string csv = std::string("stage,") + kReportCsvHeader + "\n";
  auto stage = stages.begin();
  for (const EvalReport* r : reports) {
    std::string rows;
    append_csv_rows(*r, rows);
    std::size_t pos = 0;
    while (pos < rows.size()) {
      const std::size_t end = rows.find('\n', pos);
      csv += std::string(*stage) + "," + rows.substr(pos, end - pos) + "\n";
      pos = end + 1;
    }
    ++stage;
  }
  return csv;
}

void print_report(const EvalReport& r, const std::string& label) {
  std::printf("%s (%s)\n  horizon      e_rms [m]      e_max [m]\n", label.c_str(),
              r.model_id.c_str());
  for (const auto& h : r.horizons) {
    std::printf("  %7d  %13.6e  %13.6e\n", h.horizon, h.e_rms, h.e_max);
  }
}

int cmd_generate(const RunConfig& c, const std::vector<std::string>& trajectories,
                 std::optional<int> per_kind, const std::string& controller,
                 const std::string& dir_opt) {
  Environment env = c.env;
  if (!trajectories.empty()) {
    env.trajectories.clear();
    for (const auto& t : trajectories) env.trajectories.push_back(parse_trajectory_kind(t));
  }
  const int n = per_kind.value_or(c.generate.episodes_per_kind);
  if (n < 0) throw InvalidArgument("--episodes-per-kind must be >= 0");
  const ControllerKind kind =
      controller.empty() ? c.generate.controller : parse_controller_kind(controller);
  const fs::path dir = dir_opt.empty() ? c.out / "dataset" : fs::path(dir_opt);
  const std::size_t count = static_cast<std::size_t>(n) * env.trajectories.size();
  std::vector<Episode> episodes;
  for (const auto& r : collect(env, c.seed, kTrainStream, count, kind, nullptr, "")) {
    episodes.push_back(r.episode);
  }
  write_dataset_dir(dir, episodes, {"", 0, env.human.id});
  std::printf("%zu episodes written to %s\n", episodes.size(), dir.string().c_str());
  return kExitOk;
}

int cmd_train(const RunConfig& c, const std::string& dataset_dir, const std::string& base_path,
              std::optional<int> epochs, const std::string& model_out) {
  if (!fs::is_directory(dataset_dir)) throw InvalidArgument("dataset directory not found: " + dataset_dir);
  std::optional<PredictorModel> base;
  if (!base_path.empty()) {
    require_file(base_path, "base model");
    base = load_model(base_path);
  }
  const PredictorConfig& pc = base ? base->config() : c.iterate.predictor;
  DatasetProvenance prov;
  Dataset ds = build_dataset(read_dataset_dir(dataset_dir, &prov), pc, c.iterate.window_stride,
                             c.iterate.target);
  ds.provenance = prov;
  if (ds.windows.empty()) {
    throw InvalidArgument("dataset has no windows: episodes must be at least k + N = " +
                          std::to_string(pc.window_k + pc.horizon_N) + " steps long");
  }
  TrainOptions opts = c.iterate.train;
  if (epochs) opts.epochs = *epochs;
  TrainResult r = train_model(ds, pc, base ? &*base : nullptr, opts, derive_seed(c.seed, 0x7A11));
  const fs::path path = model_out.empty() ? c.out / "models" / "model.jsonl" : fs::path(model_out);
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  save_model(r.model, path);
  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i + 1, r.loss_trace[i]);
    csv += line;
  }
  fs::path loss_path = path;
  loss_path.replace_extension(".loss.csv");
  write_text(loss_path, csv);
  std::printf("trained on %zu windows in %.1f s; model written to %s\n", ds.windows.size(),
              r.seconds, path.string().c_str());
  return kExitOk;
}

int cmd_iterate(RunConfig c, std::optional<int> max_iters) {
  if (max_iters) c.iterate.max_iters = *max_iters;
  if (c.iterate.max_iters < 0) throw InvalidArgument("--max-iters must be >= 0");
  IterateOutcome o = iterate(c.env, c.iterate, c.seed, progress);
  fs::create_directories(c.out / "models");
  fs::create_directories(c.out / "reports");
  for (std::size_t k = 0; k < o.models.size(); ++k) {
    save_model(o.models[k], c.out / "models" / (o.iterations[k].model_id + ".jsonl"));
    write_text(c.out / "reports" / (o.iterations[k].model_id + ".json"),
               o.iterations[k].report.to_json().dump(2) + "\n");
  }
  write_text(c.out / "iterate.csv", iteration_csv(o));
  json summary = {{"schema_version", kSchemaVersion},
                  {"seed", c.seed},
                  {"profile", to_string(c.profile)},
                  {"converged", o.converged},
                  {"error", o.error},
                  {"models", json::array()}};
  for (const auto& it : o.iterations) summary["models"].push_back(it.model_id);
  write_text(c.out / "iterate.json", summary.dump(2) + "\n");
  write_text(c.out / "config.json", to_json(c).dump(2) + "\n");
  for (const auto& it : o.iterations) print_report(it.report, "iteration " + std::to_string(it.index));
  std::printf("%zu models written to %s\n", o.models.size(), (c.out / "models").string().c_str());
  if (!o.error.empty()) {
    std::fprintf(stderr, "error: %s\n", o.error.c_str());
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_transfer(RunConfig c, const std::string& model_path, const std::string& context,
                 std::optional<double> gain, std::optional<int> episodes) {
  require_file(model_path, "base model");
  if (!context.empty()) c.transfer_context.kind = parse_transfer_kind(context);
  if (gain) c.transfer_context.gain_scale = *gain;
  if (episodes) c.transfer.episodes = *episodes;
  const PredictorModel base = load_model(model_path);
  TransferOutcome o = run_transfer(c.env, c.transfer_context, base, c.transfer, c.seed);
  const std::string name = fs::path(model_path).stem().string() + "-tl-" +
                           to_string(c.transfer_context.kind);
  fs::create_directories(c.out / "models");
  save_model(o.model, c.out / "models" / (name + ".jsonl"));
  write_text(c.out / ("transfer-" + to_string(c.transfer_context.kind) + ".csv"),
             report_csv({&o.before, &o.after}, {"pre", "post"}));
  json j = {{"schema_version", kSchemaVersion},
            {"context", to_string(c.transfer_context.kind)},
            {"model", name},
            {"pre", o.before.to_json()},
            {"post", o.after.to_json()}};
  write_text(c.out / ("transfer-" + to_string(c.transfer_context.kind) + ".json"), j.dump(2) + "\n");
  print_report(o.before, "pre-TL");
  print_report(o.after, "post-TL");
  std::printf("transfer took %.2f s; model written to %s\n", o.seconds,
              (c.out / "models" / (name + ".jsonl")).string().c_str());
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const std::string& model_path, const std::string& dataset_dir,
             std::optional<int> episodes) {
  require_file(model_path, "model");
  const PredictorModel model = load_model(model_path);
  const std::string id = fs::path(model_path).stem().string();
  std::vector<int> horizons;
  for (int h : c.iterate.horizons) {
    if (h <= model.config().horizon_N) horizons.push_back(h);
  }
  if (horizons.empty()) throw InvalidArgument("no configured horizon fits the model's horizon");
  EvalReport report;
  if (!dataset_dir.empty()) {
    if (!fs::is_directory(dataset_dir)) throw InvalidArgument("dataset directory not found: " + dataset_dir);
    const auto eps = read_dataset_dir(dataset_dir);
    if (eps.empty()) throw InvalidArgument("dataset is empty: " + dataset_dir);
    report = evaluate_offline(model, eps, horizons, id, c.seed);
  } else {
    Environment env = c.env;
    env.pick_index = std::min(env.pick_index, model.config().horizon_N);
    const int n = episodes.value_or(c.compare_episodes);
    if (n < 1) throw InvalidArgument("--episodes must be >= 1");
    const auto rollouts = collect(env, c.seed, kHeldOutStream, n, ControllerKind::kGT, &model, id);
    report = evaluate_rollouts(rollouts, horizons, id, c.seed);
  }
  fs::create_directories(c.out);
  std::string csv = std::string(kReportCsvHeader) + "\n";
  append_csv_rows(report, csv);
  write_text(c.out / ("eval-" + id + ".csv"), csv);
  write_text(c.out / ("eval-" + id + ".json"), report.to_json().dump(2) + "\n");
  print_report(report, dataset_dir.empty() ? "closed-loop evaluation" : "offline evaluation");
  return kExitOk;
}

int cmd_compare(const RunConfig& c, const std::string& model_path, std::optional<int> episodes) {
  std::optional<PredictorModel> model;
  if (!model_path.empty()) {
    require_file(model_path, "model");
    model = load_model(model_path);
  }
  const int n = episodes.value_or(c.compare_episodes);
  ComparisonReport r = compare_controllers(c.env, model ? &*model : nullptr, n, c.seed);
  fs::create_directories(c.out);
  write_text(c.out / "compare.csv", r.to_csv());
  write_text(c.out / "compare.json", r.to_json().dump(2) + "\n");
  std::printf("controller   mean f_rms [N]   std [N]\n");
  for (const auto& s : r.controllers) {
    std::printf("%-10s   %14.6f   %7.4f\n", s.controller.c_str(), s.mean, s.stddev);
  }
  for (const auto& t : r.tests) {
    std::printf("%s vs %s: t = %.3f, df = %.1f, p = %.3g\n", t.a.c_str(), t.b.c_str(), t.result.t,
                t.result.df, t.result.p);
  }
  return kExitOk;
}

#ifdef PHRI_WITH_LIVE
int cmd_serve(RunConfig c, const std::string& host, std::optional<int> port,
              std::optional<double> rate, const std::string& models_dir,
              const std::string& recordings_dir, const std::string& static_dir) {
  if (!host.empty()) c.serve.host = host;
  if (port) c.serve.port = *port;
  if (rate) c.serve.rate = *rate;
  if (!models_dir.empty()) c.serve.models_dir = models_dir;
  if (!recordings_dir.empty()) c.serve.recordings_dir = recordings_dir;
  if (!static_dir.empty()) c.serve.static_dir = static_dir;
  c.validate();
  live::ServerOptions o;
  o.host = c.serve.host;
  o.port = static_cast<unsigned short>(c.serve.port);
  o.models_dir = c.serve.models_dir;
  o.static_dir = c.serve.static_dir;
  o.defaults.env = c.env;
  o.defaults.rate = c.serve.rate;
  o.defaults.prediction_interval = c.serve.prediction_interval;
  o.defaults.recordings_dir = c.serve.recordings_dir;
  o.defaults.transfer = c.transfer;
  live::Server server(o);
  std::printf("serving on ws://%s:%u (health: http://%s:%u/health)\n", server.host().c_str(),
              server.port(), server.host().c_str(), server.port());
  std::fflush(stdout);
  server.run(true);
  std::printf("shut down\n");
  return kExitOk;
}
#endif

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phri: intent prediction and cooperative control for physical human-robot "
               "interaction"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->option_text("FILE");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--profile", g.profile, "Scale profile: desk or paper");
  app.add_option("--out", g.out, "Output directory");
  auto fall = [](CLI::App* sub) { sub->fallthrough(); return sub; };

  auto* gen = fall(app.add_subcommand("generate", "Record a dataset without a model in the loop"));
  std::vector<std::string> gen_traj;
  std::optional<int> gen_n;
  std::string gen_ctrl, gen_dir;
  gen->add_option("--trajectory", gen_traj, "Trajectory kinds (linear, curved, sinusoidal, eval)");
  gen->add_option("--episodes-per-kind", gen_n, "Episodes per trajectory kind");
  gen->add_option("--controller", gen_ctrl, "MG, IMP or GT");
  gen->add_option("--dataset", gen_dir, "Dataset directory (default <out>/dataset)");

  auto* train = fall(app.add_subcommand("train", "Train a predictor on a dataset directory"));
  std::string tr_data, tr_base, tr_out;
  std::optional<int> tr_epochs;
  train->add_option("--dataset", tr_data, "Dataset directory")->required();
  train->add_option("--base", tr_base, "Warm-start model file");
  train->add_option("--epochs", tr_epochs, "Epochs");
  train->add_option("--model-out", tr_out, "Model file (default <out>/models/model.jsonl)");

  auto* iter = fall(app.add_subcommand("iterate", "Iterative collect-and-train loop"));
  std::optional<int> it_max;
  iter->add_option("--max-iters", it_max, "Iterations after M_0");

  auto* tl = fall(app.add_subcommand("transfer", "Fine-tune the head in a new context"));
  std::string tl_model, tl_ctx;
  std::optional<double> tl_gain;
  std::optional<int> tl_n;
  tl->add_option("--model", tl_model, "Base model file")->required();
  tl->add_option("--context", tl_ctx, "new_trajectory, new_user or object");
  tl->add_option("--gain-scale", tl_gain, "Human gain scale for new_user");
  tl->add_option("--episodes", tl_n, "Transfer episodes");

  auto* ev = fall(app.add_subcommand("eval", "Evaluate a model"));
  std::string ev_model, ev_data;
  std::optional<int> ev_n;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--dataset", ev_data, "Evaluate offline on this dataset instead of closed loop");
  ev->add_option("--episodes", ev_n, "Closed-loop episodes");

  auto* cmp = fall(app.add_subcommand("compare", "Compare MG, IMP and GT by f_rms"));
  std::string cmp_model;
  std::optional<int> cmp_n;
  cmp->add_option("--model", cmp_model, "Model for the GT controller");
  cmp->add_option("--episodes", cmp_n, "Matched-seed episodes per controller");

  auto* serve = fall(app.add_subcommand("serve", "Run the live session service"));
  std::string sv_host, sv_models, sv_rec, sv_static;
  std::optional<int> sv_port;
  std::optional<double> sv_rate;
  serve->add_option("--host", sv_host, "Bind address (default 127.0.0.1)");
  serve->add_option("--port", sv_port, "Port (default 8700)");
  serve->add_option("--rate", sv_rate, "Steps per second (default 125)");
  serve->add_option("--models-dir", sv_models, "Model store directory");
  serve->add_option("--recordings-dir", sv_rec, "Recording directory");
  serve->add_option("--static-dir", sv_static, "UI bundle directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const RunConfig c = resolve(g);
    if (*gen) return cmd_generate(c, gen_traj, gen_n, gen_ctrl, gen_dir);
    if (*train) return cmd_train(c, tr_data, tr_base, tr_epochs, tr_out);
    if (*iter) return cmd_iterate(c, it_max);
    if (*tl) return cmd_transfer(c, tl_model, tl_ctx, tl_gain, tl_n);
    if (*ev) return cmd_eval(c, ev_model, ev_data, ev_n);
    if (*cmp) return cmd_compare(c, cmp_model, cmp_n);
    if (*serve) {
#ifdef PHRI_WITH_LIVE
      return cmd_serve(c, sv_host, sv_port, sv_rate, sv_models, sv_rec, sv_static);
#else
      std::fprintf(stderr, "error: built without the live service\n");
      return kExitFailure;
#endif
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
