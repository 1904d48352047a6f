// Copyright 2026 The tpmhe Authors
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

// tpmhe: simulate, estimate, analyze, preset run, compare, model.
// Exit codes: 0 success, 2 invalid input, 3 solver failure, 1 other errors.

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tpmhe/tpmhe.hpp"

namespace {

using namespace tpmhe;

Json load_config(const std::string& path) { return path.empty() ? Json::object() : read_json(path); }

struct SimulateArgs {
  std::string model, profile, out, config;
  int T = -1;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  const Json cfg = load_config(a.config);
  SimulationSetup s = default_setup(a.model, a.T);
  if (!a.profile.empty()) s.profile.kind = a.profile;
  if (cfg.contains("profile")) {
    const auto& p = cfg["profile"];
    if (p.contains("kind")) s.profile.kind = p["kind"].get<std::string>();
    if (p.contains("params"))
      for (auto it = p["params"].begin(); it != p["params"].end(); ++it) s.profile.params[it.key()] = it.value();
  }
  if (cfg.contains("noise")) {
    Json merged = s.noise.to_json();
    for (auto it = cfg["noise"].begin(); it != cfg["noise"].end(); ++it) merged[it.key()] = it.value();
    s.noise = NoiseSpec::from_json(merged);
  }
  if (cfg.contains("x0")) s.x0 = vec_from_json(cfg["x0"]);
  const DataBatch b = s.run(a.seed);
  write_batch(b, a.out, {s.model.n, s.model.m, s.model.q, s.model.p});
  std::cout << "wrote " << a.out << " (" << b.size() << " samples, model " << s.model.id << ")\n";
  return 0;
}

struct EstimateArgs {
  std::string in, scheme, prior = "turnpike", weight_update = "ekf", out, config;
  int N = 10, delta = 0, Delta = 0, workers = 1;
  std::uint64_t seed = 1;
};

int cmd_estimate(const EstimateArgs& a) {
  const Json cfg = load_config(a.config);
  const DataBatch data = read_batch(a.in);
  const SystemModel model = make_model(data.meta.model_id);
  const CostSpec cost = cost_from_json(cfg.value("cost", Json::object()), default_cost(model));
  const SolverOptions opt = cfg.contains("solver") ? SolverOptions::from_json(cfg["solver"]) : SolverOptions{};
  const Json extra{{"scheme", a.scheme}, {"input", a.in}, {"model_id", model.id}};
  EstimateSequence est;
  if (a.scheme == "fie") {
    est = fie(model, data, cost, opt);
  } else if (a.scheme == "mhe") {
    est = mhe(model, data, cost, a.N, opt);
  } else if (a.scheme == "dmhe") {
    est = delayed_mhe(model, data, cost, a.N, a.delta, opt);
  } else if (a.scheme == "mhe-prior") {
    PriorConfig pc;
    pc.kind = prior_kind_from_string(a.prior);
    pc.update = weight_update_from_string(a.weight_update);
    pc.W0 = cfg.contains("W0") ? mat_from_json(cfg["W0"]) : default_prior_weight(model);
    if (cfg.contains("mean0")) {
      pc.mean0 = vec_from_json(cfg["mean0"]);
    } else {
      const SimulationSetup s = default_setup(model.id);
      pc.mean0 = sample_initial_prior(model, s.x0, a.seed, cfg.value("prior_spread", 0.25));
    }
    const auto res = mhe_prior(model, data, cost, a.N, pc, {a.delta}, opt);
    est = res.by_delta.at(a.delta);
  } else if (a.scheme == "ihe") {
    est = ihe_clairvoyant(model, data, cost, opt).estimates;
  } else if (a.scheme == "ae") {
    est = approximate_estimator(model, data, cost, {a.N, a.Delta}, a.workers, opt).estimates;
  } else if (a.scheme == "kf" || a.scheme == "fis") {
    const Mat Qcov = spd_inverse(cost.Q()), Rcov = spd_inverse(cost.R());
    const Vec x0 = cfg.contains("x0") ? vec_from_json(cfg["x0"]) : Vec(Vec::Zero(model.n));
    const Mat P0 = cfg.contains("P0") ? mat_from_json(cfg["P0"]) : Mat(Mat::Identity(model.n, model.n));
    est = a.scheme == "kf" ? kalman_filter(model, data, Qcov, Rcov, x0, P0).estimates
                           : fixed_interval_smoother(model, data, Qcov, Rcov, x0, P0);
  } else {
    throw ValidationError("unknown scheme '" + a.scheme + "'");
  }
  write_estimates(est, a.out, extra);
  std::cout << "wrote " << a.out << " (" << est.estimates.size() << " estimates, delay " << est.delay << ")\n";
  return 0;
}

struct AnalyzeArgs {
  std::vector<std::string> estimates;
  std::string truth, benchmark, metrics = "sse,perf,regret,turnpike", out, config;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const Json cfg = load_config(a.config);
  const DataBatch data = read_batch(a.truth);
  const SystemModel model = make_model(data.meta.model_id);
  const CostSpec cost = cost_from_json(cfg.value("cost", Json::object()), default_cost(model));
  std::vector<std::string> metrics;
  {
    std::string cur;
    for (char c : a.metrics + ",") {
      if (c == ',') {
        if (!cur.empty()) metrics.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
  }
  auto wants = [&](const std::string& m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };
  for (const auto& m : metrics)
    if (m != "sse" && m != "perf" && m != "regret" && m != "turnpike")
      throw ValidationError("unknown metric '" + m + "'");
  std::vector<EstimateSequence> seqs;
  for (const auto& p : a.estimates) seqs.push_back(read_estimates(p));
  std::optional<EstimateSequence> bench;
  if (!a.benchmark.empty()) bench = read_estimates(a.benchmark);
  if ((wants("regret") || wants("turnpike")) && !bench)
    throw ValidationError("regret and turnpike metrics need --benchmark");
  // Common range of every sequence, the benchmark and the data.
  TimeIndex lo = data.t0, hi = data.t_end();
  for (const auto& s : seqs) lo = std::max(lo, s.first()), hi = std::min(hi, s.last());
  if (bench) lo = std::max(lo, bench->first()), hi = std::min(hi, bench->last());
  if (lo >= hi) throw ValidationError("estimates share no common range");
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::vector<std::string>> rows;
  const std::string range = std::to_string(lo) + ":" + std::to_string(hi);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    std::vector<std::string> r{a.estimates[i], to_string(s.kind), std::to_string(s.delay), range};
    if (wants("sse")) r.push_back(format_double(sse(s, data, lo, hi)));
    if (wants("perf")) r.push_back(format_double(performance(model, data, cost, s, lo, hi)));
    if (wants("regret")) r.push_back(format_double(regret(model, data, cost, s, *bench, lo, hi)));
    rows.push_back(r);
  }
  std::vector<std::string> header{"file", "kind", "delay", "range"};
  for (const char* m : {"sse", "perf", "regret"})
    if (wants(m)) header.push_back(m);
  write_table(out / "metrics.csv", header, rows);
  if (wants("turnpike")) {
    std::vector<std::vector<std::string>> dev;
    for (TimeIndex t = lo; t <= hi; ++t) {
      std::vector<std::string> r{std::to_string(t)};
      for (const auto& s : seqs) r.push_back(format_double((s.at(t) - bench->at(t)).norm()));
      dev.push_back(r);
    }
    std::vector<std::string> h{"t"};
    for (const auto& p : a.estimates) h.push_back(p);
    write_table(out / "deviation.csv", h, dev);
  }
  std::cout << "wrote " << (out / "metrics.csv").string() << "\n";
  return 0;
}

struct PresetArgs {
  std::string name, out, config;
  std::vector<std::uint64_t> seeds;
  int num_seeds = 0, workers = 1;
};

int cmd_preset(const PresetArgs& a) {
  std::vector<std::uint64_t> seeds = a.seeds;
  if (a.num_seeds > 0) seeds = seed_range(1, static_cast<std::size_t>(a.num_seeds));
  const Json overrides = load_config(a.config);
  const std::optional<fs::path> out = a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out);
  const Json man = run_preset(a.name, overrides, seeds, a.workers, out);
  for (auto it = man["summary"].begin(); it != man["summary"].end(); ++it)
    std::cout << it.key() << " median " << format_double(it.value()["median"].get<double>()) << " [q25 "
              << format_double(it.value()["q25"].get<double>()) << ", q75 "
              << format_double(it.value()["q75"].get<double>()) << "]\n";
  if (out) std::cout << "wrote " << (*out / "manifest.json").string() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<Json> mans;
  for (const auto& p : paths) mans.push_back(read_json(p));
  const Json table = compare_manifests(mans);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : table["rows"]) {
    std::vector<std::string> row{r["metric"].get<std::string>()};
    for (std::size_t i = 0; i < mans.size(); ++i) {
      const Json* run = nullptr;
      for (const auto& x : r["runs"])
        if (x["run"].get<std::size_t>() == i) run = &x;
      for (const char* k : {"median", "q25", "q75"})
        row.push_back(run ? format_double((*run)[k].get<double>()) : "");
    }
    rows.push_back(row);
  }
  std::vector<std::string> header{"metric"};
  for (std::size_t i = 0; i < mans.size(); ++i)
    for (const char* k : {"median", "q25", "q75"}) header.push_back("run" + std::to_string(i) + "_" + k);
  if (!out.empty()) {
    write_table(out, header, rows);
    std::cout << "wrote " << out << "\n";
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) std::cout << (i ? "," : "") << header[i];
    std::cout << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) std::cout << (i ? "," : "") << r[i];
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-horizon state estimation with turnpike diagnostics"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a registry model and write a data batch");
  s->add_option("--model", sim.model, "Model id (scalar, reactor, cstr, quadrotor, lti:n:m:p:seed)")->required();
  s->add_option("--profile", sim.profile, "Input profile kind (default: the model's)");
  s->add_option("--T", sim.T, "Final time index (default: the model's)");
  s->add_option("--seed", sim.seed, "Master seed");
  s->add_option("--out", sim.out, "Output CSV path")->required();
  s->add_option("--config", sim.config, "JSON overrides: x0, profile, noise");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Run an estimator on a data batch");
  e->add_option("--in", est.in, "Input batch CSV")->required();
  e->add_option("--scheme", est.scheme, "fie|mhe|dmhe|mhe-prior|ihe|ae|kf|fis")
      ->required()
      ->check(CLI::IsMember({"fie", "mhe", "dmhe", "mhe-prior", "ihe", "ae", "kf", "fis"}));
  e->add_option("--N", est.N, "Window length");
  e->add_option("--delta", est.delta, "Publication delay");
  e->add_option("--Delta", est.Delta, "AE block half-width");
  e->add_option("--prior", est.prior, "filtering|smoothing|turnpike")
      ->check(CLI::IsMember({"filtering", "smoothing", "turnpike"}));
  e->add_option("--weight-update", est.weight_update, "constant|ekf")->check(CLI::IsMember({"constant", "ekf"}));
  e->add_option("--workers", est.workers, "AE worker threads");
  e->add_option("--seed", est.seed, "Seed for the sampled initial prior when no mean0 is configured");
  e->add_option("--out", est.out, "Output CSV path")->required();
  e->add_option("--config", est.config, "JSON: cost {Q,R,G}, W0, mean0, x0, P0, solver");

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Compute metrics of estimate sequences");
  a->add_option("--estimates", an.estimates, "Estimate CSV files")->required();
  a->add_option("--truth", an.truth, "Batch CSV with ground truth")->required();
  a->add_option("--benchmark", an.benchmark, "Benchmark estimate CSV");
  a->add_option("--metrics", an.metrics, "Comma list of sse,perf,regret,turnpike");
  a->add_option("--out", an.out, "Output directory")->required();
  a->add_option("--config", an.config, "JSON: cost {Q,R,G}");

  PresetArgs pr;
  auto* p = app.add_subcommand("preset", "Experiment presets");
  p->require_subcommand(1);
  auto* run = p->add_subcommand("run", "Run a named preset");
  run->add_option("name", pr.name, "Preset name")->required()->check(CLI::IsMember(preset_names()));
  run->add_option("--seed", pr.seeds, "Master seeds (repeatable)");
  run->add_option("--num-seeds", pr.num_seeds, "Use seeds 1..k");
  run->add_option("--workers", pr.workers, "Parallel seeds");
  run->add_option("--out", pr.out, "Output directory");
  run->add_option("--config", pr.config, "JSON parameter overrides");

  std::vector<std::string> cmp_paths;
  std::string cmp_out;
  auto* c = app.add_subcommand("compare", "Aligned metric table across manifests");
  c->add_option("manifests", cmp_paths, "manifest.json files")->required();
  c->add_option("--out", cmp_out, "Output CSV (default: stdout)");

  std::string card_id;
  auto* m = app.add_subcommand("model", "Print a model card");
  m->add_option("id", card_id, "Model id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*e) return cmd_estimate(est);
    if (*a) return cmd_analyze(an);
    if (*run) return cmd_preset(pr);
    if (*c) return cmd_compare(cmp_paths, cmp_out);
    if (*m) {
      std::cout << make_model(card_id).model_card().dump(2) << "\n";
      return 0;
    }
  } catch (const SolverError& err) {
    std::cerr << "solver error: " << err.what() << "\n";
    return 3;
  } catch (const ValidationError& err) {
    std::cerr << "invalid input: " << err.what() << "\n";
    return 2;
  } catch (const UnsupportedError& err) {
    std::cerr << "unsupported: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
