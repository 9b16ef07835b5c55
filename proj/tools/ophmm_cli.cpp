// Batch command-line front end: grid building, binning, SMC fitting, decoding,
// template extraction, model comparison, replay/SWR detection, correlation,
// simulation, and report aggregation. Every subcommand reads an optional JSON
// config (flags override config keys), writes its declared artifacts plus a
// manifest with content hashes, and removes partial outputs on error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ophmm/common.hpp"
#include "ophmm/conjugate.hpp"
#include "ophmm/decode.hpp"
#include "ophmm/events.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/hmm.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/io.hpp"
#include "ophmm/model.hpp"
#include "ophmm/replay.hpp"
#include "ophmm/rng.hpp"
#include "ophmm/sim.hpp"
#include "ophmm/smc.hpp"

using nlohmann::json;
using namespace ophmm;

namespace {

// Removes declared outputs unless the run reached commit(), so failed runs
// never leave partial artifacts behind.
struct OutputGuard {
  std::vector<std::string> paths;
  bool committed = false;
  void track(const std::string& p) {
    if (!p.empty()) paths.push_back(p);
  }
  void commit() { committed = true; }
  ~OutputGuard() {
    if (committed) return;
    for (const auto& p : paths) std::remove(p.c_str());
  }
};

json maybe_load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = load_json(path);
  if (!j.is_object()) throw config_error(path + ": config must be a JSON object");
  return j;
}

// Effective option value: explicit flag beats config key beats fallback.
template <class T>
T pick(const CLI::App* sub, const std::string& flag, const T& flag_value, const json& cfg,
       const std::string& key, const T& fallback, bool* given = nullptr) {
  if (sub->count(flag) > 0) {
    if (given) *given = true;
    return flag_value;
  }
  if (cfg.contains(key)) {
    if (given) *given = true;
    try {
      return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
      throw config_error("config key '" + key + "': " + e.what());
    }
  }
  if (given) *given = false;
  return fallback;
}

std::uint64_t require_seed(const CLI::App* sub, std::uint64_t flag_value, const json& cfg,
                           const std::string& subname) {
  bool given = false;
  const std::uint64_t seed = pick(sub, "--seed", flag_value, cfg, "seed", std::uint64_t{0}, &given);
  if (!given)
    throw config_error("'" + subname + "' is stochastic and needs an explicit --seed "
                       "(flag or config key \"seed\")");
  return seed;
}

RawRecording load_recording(const std::string& spikes_path, const std::string& positions_path,
                            double duration, int n_cells_hint) {
  RawRecording rec;
  if (!spikes_path.empty()) {
    rec.spike_times = read_spikes_csv(spikes_path, n_cells_hint);
    if (n_cells_hint > 0 && static_cast<int>(rec.spike_times.size()) < n_cells_hint)
      rec.spike_times.resize(static_cast<std::size_t>(n_cells_hint));
  }
  // Positions-only workflows (template extraction) still need one cell slot to
  // satisfy recording validation; its counts are never read.
  if (rec.spike_times.empty()) rec.spike_times.resize(std::max(1, n_cells_hint));
  rec.n_cells = static_cast<int>(rec.spike_times.size());
  if (!positions_path.empty())
    read_positions_csv(positions_path, rec.position_times, rec.positions);
  double max_t = 0.0;
  for (const auto& v : rec.spike_times)
    if (!v.empty()) max_t = std::max(max_t, v.back());
  if (!rec.position_times.empty()) max_t = std::max(max_t, rec.position_times.back());
  rec.duration = duration > 0.0 ? duration : max_t;
  rec.validate();
  return rec;
}

SpatialGrid load_grid(const std::string& path) {
  if (path.empty()) throw config_error("a grid JSON is required (--grid)");
  return grid_from_json(load_json(path));
}

ModelParams load_model(const std::string& path, const SpatialGrid& grid) {
  if (path.empty()) throw config_error("a model JSON is required (--model)");
  std::uint64_t sum = 0;
  ModelParams m = model_from_json(load_json(path), &sum);
  if (sum != grid.checksum())
    throw data_error("model " + path + " was fitted against a different grid (checksum mismatch)");
  m.validate(grid);
  return m;
}

std::string manifest_for(const std::string& flag_value, const std::string& primary) {
  return flag_value.empty() ? primary + ".manifest.json" : flag_value;
}

void emit_summary(const json& j) { std::cout << j.dump() << std::endl; }

// Event timestamps for correlation: replay events anchor at their start time,
// ripple events at their envelope peak, generic files carry a `time_s` column.
std::vector<double> read_event_times(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path + " for reading");
  std::string header;
  if (!std::getline(in, header)) throw data_error(path + ": empty file");
  while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) header.pop_back();
  in.close();

  std::vector<double> times;
  if (header == "template_id,c,t_rep,start_s,end_s,omega_log10") {
    for (const auto& e : read_replay_events_csv(path)) times.push_back(e.start_s);
  } else if (header == "start_s,end_s,peak_s,peak_uv") {
    for (const auto& e : read_swr_events_csv(path)) times.push_back(e.peak_s);
  } else if (header == "time_s") {
    std::ifstream again(path);
    std::string line;
    std::getline(again, line);  // header
    std::size_t line_no = 1;
    while (std::getline(again, line)) {
      ++line_no;
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      try {
        times.push_back(std::stod(line));
      } catch (const std::exception&) {
        throw data_error(path + ":" + std::to_string(line_no) + ": not a number: '" + line + "'");
      }
    }
  } else {
    throw data_error(path + ": unrecognised event file header '" + header + "'");
  }
  std::sort(times.begin(), times.end());
  return times;
}

// ---- grid ---------------------------------------------------------------

struct GridOpts {
  std::string config, positions, mask, out, manifest;
  double cell_size = 0.0;
};

void run_grid(const GridOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string positions = pick(sub, "--positions", o.positions, cfg, "positions", std::string{});
  const std::string mask = pick(sub, "--mask", o.mask, cfg, "mask", std::string{});
  const double cell_size = pick(sub, "--cell-size", o.cell_size, cfg, "cell_size", 0.0);
  if (positions.empty()) throw config_error("grid: --positions is required");
  if (!(cell_size > 0.0)) throw config_error("grid: --cell-size must be positive");

  std::vector<double> times;
  std::vector<Vec2> samples;
  read_positions_csv(positions, times, samples);

  std::vector<SpatialGrid::Cell> forced;
  if (!mask.empty()) {
    const json mj = load_json(mask);
    for (const auto& c : mj.at("cells")) forced.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  }

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);

  SpatialGrid grid = SpatialGrid::build(samples, cell_size, forced);
  save_json(o.out, grid_to_json(grid));

  json echo{{"positions", positions}, {"cell_size", cell_size}};
  if (!mask.empty()) echo["mask"] = mask;
  ManifestBuilder mb("grid", echo);
  mb.add_input("positions", positions);
  if (!mask.empty()) mb.add_input("mask", mask);
  mb.add_output("grid", o.out);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"labels", grid.size()},
                    {"rows", grid.n_rows()},
                    {"cols", grid.n_cols()},
                    {"checksum", grid.checksum()}});
}

// ---- bin ----------------------------------------------------------------

struct BinOpts {
  std::string config, spikes, positions, grid, out, manifest;
  double dt = 0.0, duration = 0.0;
  int cells = 0;
};

void run_bin(const BinOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string spikes = pick(sub, "--spikes", o.spikes, cfg, "spikes", std::string{});
  const std::string positions = pick(sub, "--positions", o.positions, cfg, "positions", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const double dt = pick(sub, "--dt", o.dt, cfg, "dt", 0.1);
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  const int cells = pick(sub, "--cells", o.cells, cfg, "cells", 0);
  if (spikes.empty()) throw config_error("bin: --spikes is required");

  SpatialGrid grid = load_grid(grid_path);
  RawRecording rec = load_recording(spikes, positions, duration, cells);
  BinnedDataset binned = bin_spikes(rec, grid, dt);
  if (binned.snapped_samples > 0)
    std::cerr << "warning: " << binned.snapped_samples
              << " tracking samples snapped to the nearest accessible cell\n";

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);

  {
    std::ofstream out(o.out);
    if (!out) throw data_error("cannot open " + o.out + " for writing");
    out << "t,label";
    for (int n = 0; n < binned.n_cells; ++n) out << ",y_" << n;
    out << '\n';
    for (int t = 0; t < binned.T(); ++t) {
      out << (t + 1) << ','
          << (binned.has_positions() ? binned.positions[static_cast<std::size_t>(t)] : 0);
      for (int n = 0; n < binned.n_cells; ++n)
        out << ',' << binned.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)];
      out << '\n';
    }
  }

  json echo{{"spikes", spikes}, {"grid", grid_path},       {"dt", dt},
            {"duration", rec.duration}, {"cells", rec.n_cells}};
  if (!positions.empty()) echo["positions"] = positions;
  ManifestBuilder mb("bin", echo);
  mb.add_input("spikes", spikes);
  if (!positions.empty()) mb.add_input("positions", positions);
  mb.add_input("grid", grid_path);
  mb.add_output("binned", o.out);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"T", binned.T()}, {"cells", binned.n_cells},
                    {"snapped", binned.snapped_samples}});
}

// ---- fit ----------------------------------------------------------------

struct FitOpts {
  std::string config, spikes, positions, grid, out_model, out_diag, out_kpost, manifest;
  double dt = 0.0, duration = 0.0, ess_frac = 0.0, subpop_frac = 0.0;
  double alpha = 0.0, beta = 0.0, omega = 0.0, delta = 0.0;
  std::vector<double> psi;
  int cells = 0, particles = 0, kappa_bar = 0, threads = 0;
  std::uint64_t seed = 0;
};

void run_fit(const FitOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string spikes = pick(sub, "--spikes", o.spikes, cfg, "spikes", std::string{});
  const std::string positions = pick(sub, "--positions", o.positions, cfg, "positions", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const double dt = pick(sub, "--dt", o.dt, cfg, "dt", 0.1);
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  const int cells = pick(sub, "--cells", o.cells, cfg, "cells", 0);
  const std::uint64_t seed = require_seed(sub, o.seed, cfg, "fit");
  if (spikes.empty()) throw config_error("fit: --spikes is required");

  SpatialGrid grid = load_grid(grid_path);
  RawRecording rec = load_recording(spikes, positions, duration, cells);
  BinnedDataset binned = bin_spikes(rec, grid, dt);

  Hyperparams hp = default_hyperparams(grid);
  hp.alpha = pick(sub, "--alpha", o.alpha, cfg, "alpha", hp.alpha);
  hp.beta = pick(sub, "--beta", o.beta, cfg, "beta", hp.beta);
  hp.omega = pick(sub, "--omega", o.omega, cfg, "omega", hp.omega);
  hp.delta = pick(sub, "--delta", o.delta, cfg, "delta", hp.delta);
  hp.kappa_bar = pick(sub, "--kappa-bar", o.kappa_bar, cfg, "kappa_bar", hp.kappa_bar);
  const std::vector<double> psi =
      pick(sub, "--psi", o.psi, cfg, "psi", std::vector<double>{});
  if (!psi.empty()) {
    if (psi.size() != 3) throw config_error("fit: --psi needs exactly xx,xy,yy");
    hp.psi = Sym2{psi[0], psi[1], psi[2]};
  }
  hp.validate();

  SmcConfig smc;
  smc.n_particles = pick(sub, "--particles", o.particles, cfg, "particles", smc.n_particles);
  smc.ess_threshold_frac = pick(sub, "--ess-frac", o.ess_frac, cfg, "ess_frac", smc.ess_threshold_frac);
  smc.subpop_floor_frac =
      pick(sub, "--subpop-frac", o.subpop_frac, cfg, "subpop_frac", smc.subpop_floor_frac);
  smc.threads = pick(sub, "--threads", o.threads, cfg, "threads", smc.threads);
  smc.seed = seed;
  smc.validate();

  OutputGuard guard;
  guard.track(o.out_model);
  guard.track(o.out_diag);
  guard.track(o.out_kpost);
  const std::string manifest = manifest_for(o.manifest, o.out_model);
  guard.track(manifest);
  if (o.out_model.empty()) throw config_error("fit: --out-model is required");

  FitResult fr = fit_smc(binned, grid, hp, smc);

  save_json(o.out_model, model_to_json(fr.params, grid.checksum()));
  if (!o.out_diag.empty()) write_diagnostics_csv(o.out_diag, fr.diagnostics);
  if (!o.out_kpost.empty()) write_k_posterior_csv(o.out_kpost, fr.k_posterior);

  json echo{{"spikes", spikes},       {"grid", grid_path},
            {"dt", dt},               {"duration", rec.duration},
            {"cells", rec.n_cells},   {"seed", seed},
            {"particles", smc.n_particles}, {"kappa_bar", hp.kappa_bar},
            {"ess_frac", smc.ess_threshold_frac}, {"subpop_frac", smc.subpop_floor_frac},
            {"threads", smc.threads}, {"alpha", hp.alpha},
            {"beta", hp.beta},        {"omega", hp.omega},
            {"delta", hp.delta},      {"psi", {hp.psi.xx, hp.psi.xy, hp.psi.yy}}};
  if (!positions.empty()) echo["positions"] = positions;
  ManifestBuilder mb("fit", echo);
  mb.add_input("spikes", spikes);
  if (!positions.empty()) mb.add_input("positions", positions);
  mb.add_input("grid", grid_path);
  mb.add_output("model", o.out_model);
  if (!o.out_diag.empty()) mb.add_output("diagnostics", o.out_diag);
  if (!o.out_kpost.empty()) mb.add_output("k_posterior", o.out_kpost);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"kappa_hat", fr.kappa_hat}, {"n_resamples", fr.n_resamples},
                    {"T", binned.T()}});
}

// ---- decode ---------------------------------------------------------------

struct DecodeOpts {
  std::string config, model, grid, spikes, positions, method;
  std::string train_spikes, train_positions;
  std::string out_decoded, out_posterior, out_metrics, manifest;
  double dt = 0.0, duration = 0.0, train_duration = 0.0, bandwidth = 0.0;
  int cells = 0;
};

void run_decode(const DecodeOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string model_path = pick(sub, "--model", o.model, cfg, "model", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const std::string spikes = pick(sub, "--spikes", o.spikes, cfg, "spikes", std::string{});
  const std::string positions = pick(sub, "--positions", o.positions, cfg, "positions", std::string{});
  const std::string method = pick(sub, "--method", o.method, cfg, "method", std::string{"op"});
  const double dt_flag = pick(sub, "--dt", o.dt, cfg, "dt", 0.0);
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  const int cells = pick(sub, "--cells", o.cells, cfg, "cells", 0);
  if (spikes.empty()) throw config_error("decode: --spikes is required");
  if (o.out_decoded.empty()) throw config_error("decode: --out-decoded is required");
  const bool needs_model = (method == "op" || method == "op-viterbi");
  if (method != "op" && method != "op-viterbi" && method != "bd" && method != "lp")
    throw config_error("decode: unknown --method '" + method + "'");

  SpatialGrid grid = load_grid(grid_path);

  ModelParams model;
  double dt = dt_flag;
  if (!model_path.empty()) {
    model = load_model(model_path, grid);
    if (dt_flag > 0.0 && std::abs(dt_flag - model.dt) > 1e-12)
      model = adapt_model_dt(model, dt_flag);
    dt = model.dt;
  } else if (needs_model) {
    throw config_error("decode: --model is required for method '" + method + "'");
  } else if (!(dt > 0.0)) {
    throw config_error("decode: --dt is required when no model is given");
  }

  RawRecording rec = load_recording(spikes, positions, duration, cells);
  BinnedDataset binned = bin_spikes(rec, grid, dt);

  Mat posterior;  // empty unless the method produces per-bin distributions
  std::vector<int> decoded;
  BinnedDataset train;
  const bool needs_train = (method == "bd" || method == "lp");
  std::string train_spikes, train_positions;
  if (needs_train) {
    train_spikes = pick(sub, "--train-spikes", o.train_spikes, cfg, "train_spikes", std::string{});
    train_positions =
        pick(sub, "--train-positions", o.train_positions, cfg, "train_positions", std::string{});
    const double train_duration =
        pick(sub, "--train-duration", o.train_duration, cfg, "train_duration", 0.0);
    if (train_spikes.empty() || train_positions.empty())
      throw config_error("decode: method '" + method +
                         "' needs --train-spikes and --train-positions");
    RawRecording train_rec =
        load_recording(train_spikes, train_positions, train_duration, binned.n_cells);
    train = bin_spikes(train_rec, grid, dt);
  }

  if (method == "op") {
    posterior = op_position_posterior(model, grid, binned.counts);
    decoded.resize(static_cast<std::size_t>(binned.T()));
    for (int t = 0; t < binned.T(); ++t) {
      int best = 1;
      for (int v = 2; v <= grid.size(); ++v)
        if (posterior(t, v - 1) > posterior(t, best - 1) + 1e-15) best = v;
      decoded[static_cast<std::size_t>(t)] = best;
    }
  } else if (method == "op-viterbi") {
    decoded = op_viterbi_positions(model, grid, binned.counts);
  } else if (method == "bd") {
    BdModel bd = fit_bd(train, grid);
    posterior = bd_position_posterior(bd, binned.counts, dt);
    decoded = bd_map_positions(bd, binned.counts, dt);
  } else {
    const double bandwidth = pick(sub, "--bandwidth", o.bandwidth, cfg, "bandwidth", 0.0);
    LpModel lp = fit_lp(train, grid, bandwidth);
    decoded = lp_viterbi_positions(lp, binned.counts, dt);
  }

  if (!o.out_posterior.empty() && posterior.rows() == 0)
    throw config_error("decode: method '" + method + "' has no per-bin posterior to write");

  Vec post_at_truth;
  if (posterior.rows() > 0 && binned.has_positions()) {
    post_at_truth.resize(static_cast<std::size_t>(binned.T()));
    for (int t = 0; t < binned.T(); ++t)
      post_at_truth[static_cast<std::size_t>(t)] =
          posterior(t, binned.positions[static_cast<std::size_t>(t)] - 1);
  }

  OutputGuard guard;
  guard.track(o.out_decoded);
  guard.track(o.out_posterior);
  guard.track(o.out_metrics);
  const std::string manifest = manifest_for(o.manifest, o.out_decoded);
  guard.track(manifest);

  write_decoded_csv(o.out_decoded, decoded, grid, post_at_truth);
  if (!o.out_posterior.empty()) write_posterior_binary(o.out_posterior, posterior);

  json summary{{"method", method}, {"T", binned.T()}, {"dt", dt}};
  if (binned.has_positions()) {
    DecodeMetrics metrics = decoding_metrics(decoded, binned.positions, grid,
                                             posterior.rows() > 0 ? &posterior : nullptr);
    summary["median_geodesic_error"] = metrics.median_geodesic_error;
    if (std::isfinite(metrics.mean_posterior_at_truth))
      summary["mean_posterior_at_truth"] = metrics.mean_posterior_at_truth;
    if (!o.out_metrics.empty()) save_json(o.out_metrics, summary);
  } else if (!o.out_metrics.empty()) {
    throw config_error("decode: --out-metrics needs --positions ground truth");
  }

  json echo{{"spikes", spikes}, {"grid", grid_path}, {"method", method}, {"dt", dt},
            {"duration", rec.duration}};
  if (!model_path.empty()) echo["model"] = model_path;
  if (!positions.empty()) echo["positions"] = positions;
  if (needs_train) {
    echo["train_spikes"] = train_spikes;
    echo["train_positions"] = train_positions;
  }
  ManifestBuilder mb("decode", echo);
  mb.add_input("spikes", spikes);
  mb.add_input("grid", grid_path);
  if (!model_path.empty()) mb.add_input("model", model_path);
  if (!positions.empty()) mb.add_input("positions", positions);
  if (needs_train) {
    mb.add_input("train_spikes", train_spikes);
    mb.add_input("train_positions", train_positions);
  }
  mb.add_output("decoded", o.out_decoded);
  if (!o.out_posterior.empty()) mb.add_output("posterior", o.out_posterior);
  if (!o.out_metrics.empty()) mb.add_output("metrics", o.out_metrics);
  mb.write(manifest);
  guard.commit();
  emit_summary(summary);
}

// ---- templates ------------------------------------------------------------

struct TemplatesOpts {
  std::string config, positions, grid, regions, out, manifest;
  double dt = 0.0, duration = 0.0;
};

void run_templates(const TemplatesOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string positions = pick(sub, "--positions", o.positions, cfg, "positions", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const std::string regions_path = pick(sub, "--regions", o.regions, cfg, "regions", std::string{});
  const double dt = pick(sub, "--dt", o.dt, cfg, "dt", 0.1);
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  if (positions.empty()) throw config_error("templates: --positions is required");
  if (regions_path.empty()) throw config_error("templates: --regions is required");
  if (o.out.empty()) throw config_error("templates: --out is required");

  SpatialGrid grid = load_grid(grid_path);
  RawRecording rec = load_recording("", positions, duration, 0);
  BinnedDataset binned = bin_spikes(rec, grid, dt);

  std::vector<RegionSpec> specs;
  const json rj = load_json(regions_path);
  try {
    for (const auto& r : rj.at("regions")) {
      RegionSpec spec;
      spec.from = r.at("from").get<std::vector<int>>();
      spec.to = r.at("to").get<std::vector<int>>();
      spec.collapse_repeats = r.value("collapse_repeats", false);
      specs.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed regions JSON: ") + e.what());
  }

  std::vector<std::string> warnings;
  std::vector<ReplayTemplate> templates = extract_templates(binned.positions, specs, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);

  save_json(o.out, templates_to_json(templates));

  ManifestBuilder mb("templates", json{{"positions", positions}, {"grid", grid_path},
                                       {"regions", regions_path}, {"dt", dt}});
  mb.add_input("positions", positions);
  mb.add_input("grid", grid_path);
  mb.add_input("regions", regions_path);
  mb.add_output("templates", o.out);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"n_templates", templates.size()}});
}

// ---- bic ------------------------------------------------------------------

struct BicOpts {
  std::string config, model, model_rest, grid, spikes, train_spikes, train_positions;
  std::string candidates, out, manifest;
  double duration = 0.0, train_duration = 0.0;
  int cells = 0, prior_draws = 0;
  std::uint64_t seed = 0;
};

void run_bic(const BicOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string model_path = pick(sub, "--model", o.model, cfg, "model", std::string{});
  const std::string model_rest = pick(sub, "--model-rest", o.model_rest, cfg, "model_rest", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const std::string spikes = pick(sub, "--spikes", o.spikes, cfg, "spikes", std::string{});
  const std::string train_spikes = pick(sub, "--train-spikes", o.train_spikes, cfg, "train_spikes", std::string{});
  const std::string train_positions =
      pick(sub, "--train-positions", o.train_positions, cfg, "train_positions", std::string{});
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  const double train_duration =
      pick(sub, "--train-duration", o.train_duration, cfg, "train_duration", 0.0);
  const int cells = pick(sub, "--cells", o.cells, cfg, "cells", 0);
  const int prior_draws = pick(sub, "--prior-draws", o.prior_draws, cfg, "prior_draws", 30);
  if (spikes.empty()) throw config_error("bic: --spikes is required");
  if (o.out.empty()) throw config_error("bic: --out is required");

  SpatialGrid grid = load_grid(grid_path);
  ModelParams model = load_model(model_path, grid);
  RawRecording rec = load_recording(spikes, "", duration, cells > 0 ? cells : model.n_cells);
  BinnedDataset binned = bin_spikes(rec, grid, model.dt);
  if (binned.n_cells != model.n_cells)
    throw data_error("bic: spike file has " + std::to_string(binned.n_cells) +
                     " cells but the model expects " + std::to_string(model.n_cells));

  std::string requested = pick(sub, "--candidates", o.candidates, cfg, "candidates", std::string{});
  bool seed_given = false;
  const std::uint64_t seed = pick(sub, "--seed", o.seed, cfg, "seed", std::uint64_t{0}, &seed_given);
  std::vector<std::string> names;
  if (requested.empty()) {
    names = {"op", "op-stationary"};
    if (!model_rest.empty()) names.push_back("op-rest");
    if (!train_spikes.empty()) names.push_back("bd");
    if (seed_given) {
      names.push_back("op-prior-sample");
      names.push_back("op-prior-mean");
    }
  } else {
    std::string cur;
    for (char ch : requested + ",") {
      if (ch == ',') {
        if (!cur.empty()) names.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
  }

  const long T = binned.T();
  std::vector<BicRow> rows;
  std::vector<double> prior_logliks;  // cached across the two prior candidates
  auto prior_loglik = [&](int index) {
    if (!seed_given)
      throw config_error("bic: prior candidates need an explicit --seed");
    while (static_cast<int>(prior_logliks.size()) <= index) {
      RngStream rng = RngStream::derive(seed, {0x42494350, prior_logliks.size()});
      ModelParams draw = sample_prior(default_hyperparams(grid), model.kappa, model.n_cells,
                                      model.dt, grid, rng);
      prior_logliks.push_back(op_spike_log_lik_total(draw, binned.counts));
    }
    return prior_logliks[static_cast<std::size_t>(index)];
  };

  for (const auto& name : names) {
    BicRow row;
    row.label = name;
    if (name == "op") {
      row.log_lik = op_spike_log_lik_total(model, binned.counts);
      row.n_params = op_param_count(model.kappa, model.n_cells);
    } else if (name == "op-rest") {
      if (model_rest.empty()) throw config_error("bic: candidate op-rest needs --model-rest");
      ModelParams rest_model = load_model(model_rest, grid);
      row.log_lik = op_spike_log_lik_total(rest_model, binned.counts);
      row.n_params = op_param_count(rest_model.kappa, rest_model.n_cells);
    } else if (name == "op-stationary") {
      row.log_lik = stationary_spike_log_lik_total(model, binned.counts);
      row.n_params = stationary_param_count(model.kappa, model.n_cells);
    } else if (name == "bd") {
      if (train_spikes.empty() || train_positions.empty())
        throw config_error("bic: candidate bd needs --train-spikes and --train-positions");
      RawRecording train_rec =
          load_recording(train_spikes, train_positions, train_duration, model.n_cells);
      BinnedDataset train = bin_spikes(train_rec, grid, model.dt);
      BdModel bd = fit_bd(train, grid);
      row.log_lik = bd_spike_log_lik_total(bd, binned.counts, model.dt);
      row.n_params = bd_param_count(grid.size(), model.n_cells);
    } else if (name == "op-prior-sample") {
      row.log_lik = prior_loglik(0);
      row.n_params = op_param_count(model.kappa, model.n_cells);
    } else if (name == "op-prior-mean") {
      double acc = 0.0;
      for (int d = 0; d < prior_draws; ++d) acc += prior_loglik(d);
      row.log_lik = acc / prior_draws;
      row.n_params = op_param_count(model.kappa, model.n_cells);
    } else {
      throw config_error("bic: unknown candidate '" + name + "'");
    }
    row.bic = bic_value(row.log_lik, row.n_params, T);
    rows.push_back(row);
  }

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);
  write_bic_csv(o.out, rows);

  json echo{{"model", model_path}, {"grid", grid_path}, {"spikes", spikes},
            {"candidates", names}, {"T", T}};
  if (seed_given) echo["seed"] = seed;
  ManifestBuilder mb("bic", echo);
  mb.add_input("model", model_path);
  mb.add_input("grid", grid_path);
  mb.add_input("spikes", spikes);
  if (!model_rest.empty()) mb.add_input("model_rest", model_rest);
  if (!train_spikes.empty()) mb.add_input("train_spikes", train_spikes);
  if (!train_positions.empty()) mb.add_input("train_positions", train_positions);
  mb.add_output("bic", o.out);
  mb.write(manifest);
  guard.commit();

  const BicRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.bic < best->bic) best = &r;
  emit_summary(json{{"best", best->label}, {"bic", best->bic}, {"n_candidates", rows.size()}});
}

// ---- detect-replay ----------------------------------------------------------

struct ReplayOpts {
  std::string config, model, grid, spikes, templates, out_events, out_traces, manifest;
  double duration = 0.0, omega_star = 0.0;
  int cells = 0;
  std::vector<int> compressions;
};

void run_detect_replay(const ReplayOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string model_path = pick(sub, "--model", o.model, cfg, "model", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const std::string spikes = pick(sub, "--spikes", o.spikes, cfg, "spikes", std::string{});
  const std::string templates_path = pick(sub, "--templates", o.templates, cfg, "templates", std::string{});
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  const int cells = pick(sub, "--cells", o.cells, cfg, "cells", 0);
  if (spikes.empty()) throw config_error("detect-replay: --spikes is required");
  if (templates_path.empty()) throw config_error("detect-replay: --templates is required");
  if (o.out_events.empty()) throw config_error("detect-replay: --out-events is required");

  SpatialGrid grid = load_grid(grid_path);
  ModelParams model = load_model(model_path, grid);
  std::vector<ReplayTemplate> templates = templates_from_json(load_json(templates_path));
  if (templates.empty()) throw config_error("detect-replay: templates file contains no templates");
  RawRecording rec = load_recording(spikes, "", duration, cells > 0 ? cells : model.n_cells);

  ReplayConfig rcfg;
  rcfg.omega_star = pick(sub, "--omega-star", o.omega_star, cfg, "omega_star", rcfg.omega_star);
  rcfg.compressions =
      pick(sub, "--compressions", o.compressions, cfg, "compressions", rcfg.compressions);
  rcfg.base_dt = model.dt;
  if (!(rcfg.omega_star > 0.0)) throw config_error("detect-replay: --omega-star must be positive");
  for (int c : rcfg.compressions)
    if (c < 1) throw config_error("detect-replay: compression rates must be >= 1");

  std::vector<std::vector<Vec>> traces_by_c;
  std::vector<ReplayEvent> events =
      detect_replay(model, grid, rec, templates, rcfg,
                    o.out_traces.empty() ? nullptr : &traces_by_c);

  OutputGuard guard;
  guard.track(o.out_events);
  guard.track(o.out_traces);
  const std::string manifest = manifest_for(o.manifest, o.out_events);
  guard.track(manifest);

  write_replay_events_csv(o.out_events, events);
  if (!o.out_traces.empty()) {
    std::vector<ScoreTraceRow> trace_rows;
    for (std::size_t ci = 0; ci < traces_by_c.size(); ++ci)
      for (std::size_t ti = 0; ti < traces_by_c[ci].size(); ++ti) {
        const Vec& trace = traces_by_c[ci][ti];
        for (std::size_t t = 0; t < trace.size(); ++t) {
          ScoreTraceRow r;
          r.template_id = templates[ti].id;
          r.compression = rcfg.compressions[ci];
          r.t = static_cast<int>(t) + 1;
          r.log10_omega = trace[t] / std::numbers::ln10;
          trace_rows.push_back(r);
        }
      }
    write_score_trace_csv(o.out_traces, trace_rows);
  }

  ManifestBuilder mb("detect-replay",
                     json{{"model", model_path}, {"grid", grid_path}, {"spikes", spikes},
                          {"templates", templates_path}, {"omega_star", rcfg.omega_star},
                          {"compressions", rcfg.compressions}, {"duration", rec.duration}});
  mb.add_input("model", model_path);
  mb.add_input("grid", grid_path);
  mb.add_input("spikes", spikes);
  mb.add_input("templates", templates_path);
  mb.add_output("events", o.out_events);
  if (!o.out_traces.empty()) mb.add_output("traces", o.out_traces);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"n_events", events.size()}});
}

// ---- detect-swr -------------------------------------------------------------

struct SwrOpts {
  std::string config, lfp, out, manifest;
  double fs = 0.0, low = 0.0, high = 0.0, threshold_sd = 0.0;
  double min_duration = 0.0, max_duration = 0.0, min_amplitude = 0.0, max_amplitude = 0.0;
  double merge_gap = 0.0;
  int order = 0;
};

void run_detect_swr(const SwrOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string lfp_path = pick(sub, "--lfp", o.lfp, cfg, "lfp", std::string{});
  if (lfp_path.empty()) throw config_error("detect-swr: --lfp is required");
  if (o.out.empty()) throw config_error("detect-swr: --out is required");

  LfpTrace lfp = read_lfp(lfp_path);
  SwrConfig sc;
  sc.fs_hz = pick(sub, "--fs", o.fs, cfg, "fs", lfp.fs_hz);
  sc.low_hz = pick(sub, "--low", o.low, cfg, "low", sc.low_hz);
  sc.high_hz = pick(sub, "--high", o.high, cfg, "high", sc.high_hz);
  sc.filter_order = pick(sub, "--order", o.order, cfg, "order", sc.filter_order);
  sc.threshold_sd = pick(sub, "--threshold-sd", o.threshold_sd, cfg, "threshold_sd", sc.threshold_sd);
  sc.min_duration_s = pick(sub, "--min-duration", o.min_duration, cfg, "min_duration", sc.min_duration_s);
  sc.max_duration_s = pick(sub, "--max-duration", o.max_duration, cfg, "max_duration", sc.max_duration_s);
  sc.min_amplitude_uv =
      pick(sub, "--min-amplitude", o.min_amplitude, cfg, "min_amplitude", sc.min_amplitude_uv);
  sc.max_amplitude_uv =
      pick(sub, "--max-amplitude", o.max_amplitude, cfg, "max_amplitude", sc.max_amplitude_uv);
  sc.merge_gap_s = pick(sub, "--merge-gap", o.merge_gap, cfg, "merge_gap", sc.merge_gap_s);

  SwrResult res = detect_swr(lfp.samples_uv, lfp.t0_s, sc);

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);
  write_swr_events_csv(o.out, res.events);

  ManifestBuilder mb("detect-swr",
                     json{{"lfp", lfp_path}, {"fs", sc.fs_hz}, {"low", sc.low_hz},
                          {"high", sc.high_hz}, {"order", sc.filter_order},
                          {"threshold_sd", sc.threshold_sd}, {"min_duration", sc.min_duration_s},
                          {"max_duration", sc.max_duration_s},
                          {"min_amplitude", sc.min_amplitude_uv},
                          {"max_amplitude", sc.max_amplitude_uv}, {"merge_gap", sc.merge_gap_s}});
  mb.add_input("lfp", lfp_path);
  mb.add_output("events", o.out);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"n_events", res.events.size()}, {"threshold_uv", res.threshold_uv}});
}

// ---- correlate ---------------------------------------------------------------

struct CorrelateOpts {
  std::string config, events_a, events_b, out, manifest;
  double duration = 0.0, tau = 0.0, max_lag = 0.0, alpha = 0.0;
};

void run_correlate(const CorrelateOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string events_a = pick(sub, "--events-a", o.events_a, cfg, "events_a", std::string{});
  const std::string events_b = pick(sub, "--events-b", o.events_b, cfg, "events_b", std::string{});
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  if (events_a.empty() || events_b.empty())
    throw config_error("correlate: --events-a and --events-b are required");
  if (!(duration > 0.0)) throw config_error("correlate: --duration must be positive");
  if (o.out.empty()) throw config_error("correlate: --out is required");

  CorrelogramConfig cc;
  cc.bin_width_s = pick(sub, "--tau", o.tau, cfg, "tau", cc.bin_width_s);
  cc.max_lag_s = pick(sub, "--max-lag", o.max_lag, cfg, "max_lag", cc.max_lag_s);
  cc.alpha = pick(sub, "--alpha", o.alpha, cfg, "alpha", cc.alpha);

  const std::vector<double> a = read_event_times(events_a);
  const std::vector<double> b = read_event_times(events_b);
  Correlogram cg = cross_correlogram(a, b, duration, cc);

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);
  write_correlogram_csv(o.out, cg);

  int n_sig = 0;
  for (const auto& r : cg.rows) n_sig += r.significant ? 1 : 0;
  ManifestBuilder mb("correlate", json{{"events_a", events_a}, {"events_b", events_b},
                                       {"duration", duration}, {"tau", cc.bin_width_s},
                                       {"max_lag", cc.max_lag_s}, {"alpha", cc.alpha}});
  mb.add_input("events_a", events_a);
  mb.add_input("events_b", events_b);
  mb.add_output("correlogram", o.out);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"n_bins", cg.rows.size()}, {"n_significant", n_sig},
                    {"n_a", cg.n_a}, {"n_b", cg.n_b}});
}

// ---- simulate ------------------------------------------------------------------

struct SimulateOpts {
  std::string config, model, grid, out_spikes, out_positions, out_truth, manifest;
  int bins = 0;
  std::uint64_t seed = 0;
};

void run_simulate(const SimulateOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string model_path = pick(sub, "--model", o.model, cfg, "model", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const int bins = pick(sub, "--bins", o.bins, cfg, "bins", 0);
  const std::uint64_t seed = require_seed(sub, o.seed, cfg, "simulate");
  if (bins < 1) throw config_error("simulate: --bins must be >= 1");
  if (o.out_spikes.empty()) throw config_error("simulate: --out-spikes is required");

  SpatialGrid grid = load_grid(grid_path);
  ModelParams model = load_model(model_path, grid);
  SimResult sim = simulate(model, grid, bins, seed);
  const auto times = scatter_spike_times(sim.data.counts, model.dt, seed);

  OutputGuard guard;
  guard.track(o.out_spikes);
  guard.track(o.out_positions);
  guard.track(o.out_truth);
  const std::string manifest = manifest_for(o.manifest, o.out_spikes);
  guard.track(manifest);

  write_spikes_csv(o.out_spikes, times);
  if (!o.out_positions.empty()) {
    std::vector<double> pos_times(static_cast<std::size_t>(bins));
    std::vector<Vec2> pos(static_cast<std::size_t>(bins));
    for (int t = 0; t < bins; ++t) {
      pos_times[static_cast<std::size_t>(t)] = static_cast<double>(t) * model.dt;
      pos[static_cast<std::size_t>(t)] = grid.centroid(sim.labels[static_cast<std::size_t>(t)]);
    }
    write_positions_csv(o.out_positions, pos_times, pos);
  }
  if (!o.out_truth.empty())
    save_json(o.out_truth, json{{"states", sim.states}, {"labels", sim.labels}});

  long long total = 0;
  for (const auto& v : times) total += static_cast<long long>(v.size());
  ManifestBuilder mb("simulate", json{{"model", model_path}, {"grid", grid_path},
                                      {"bins", bins}, {"seed", seed}, {"dt", model.dt}});
  mb.add_input("model", model_path);
  mb.add_input("grid", grid_path);
  mb.add_output("spikes", o.out_spikes);
  if (!o.out_positions.empty()) mb.add_output("positions", o.out_positions);
  if (!o.out_truth.empty()) mb.add_output("truth", o.out_truth);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"T", bins}, {"total_spikes", total},
                    {"duration", static_cast<double>(bins) * model.dt}});
}

// ---- simulate-replay ----------------------------------------------------------

struct SimReplayOpts {
  std::string config, model, grid, templates, out_spikes, out_ledger, manifest;
  int bins = 0, events_per_template = 0;
  std::uint64_t seed = 0;
};

void run_simulate_replay(const SimReplayOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string model_path = pick(sub, "--model", o.model, cfg, "model", std::string{});
  const std::string grid_path = pick(sub, "--grid", o.grid, cfg, "grid", std::string{});
  const std::string templates_path = pick(sub, "--templates", o.templates, cfg, "templates", std::string{});
  const int bins = pick(sub, "--bins", o.bins, cfg, "bins", 0);
  const int per_template =
      pick(sub, "--events-per-template", o.events_per_template, cfg, "events_per_template", 0);
  const std::uint64_t seed = require_seed(sub, o.seed, cfg, "simulate-replay");
  if (bins < 1) throw config_error("simulate-replay: --bins must be >= 1");
  if (templates_path.empty()) throw config_error("simulate-replay: --templates is required");
  if (o.out_spikes.empty() || o.out_ledger.empty())
    throw config_error("simulate-replay: --out-spikes and --out-ledger are required");

  SpatialGrid grid = load_grid(grid_path);
  ModelParams model = load_model(model_path, grid);
  std::vector<ReplayTemplate> templates = templates_from_json(load_json(templates_path));
  if (templates.empty()) throw config_error("simulate-replay: templates file contains no templates");

  ReplaySim rs = simulate_replay(model, grid, bins, templates, per_template, seed);
  const auto times = scatter_spike_times(rs.data.counts, model.dt, seed);

  OutputGuard guard;
  guard.track(o.out_spikes);
  guard.track(o.out_ledger);
  const std::string manifest = manifest_for(o.manifest, o.out_spikes);
  guard.track(manifest);

  write_spikes_csv(o.out_spikes, times);
  save_json(o.out_ledger, ledger_to_json(rs.ledger));

  ManifestBuilder mb("simulate-replay",
                     json{{"model", model_path}, {"grid", grid_path},
                          {"templates", templates_path}, {"bins", bins},
                          {"events_per_template", per_template}, {"seed", seed},
                          {"dt", model.dt}});
  mb.add_input("model", model_path);
  mb.add_input("grid", grid_path);
  mb.add_input("templates", templates_path);
  mb.add_output("spikes", o.out_spikes);
  mb.add_output("ledger", o.out_ledger);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"T", bins}, {"n_planted", rs.ledger.events.size()}});
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOpts {
  std::string config, events, ledger, templates, out, manifest;
  int bins = 0, compression = 0;
  std::vector<double> omega_stars;
};

void run_evaluate(const EvaluateOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string events_path = pick(sub, "--events", o.events, cfg, "events", std::string{});
  const std::string ledger_path = pick(sub, "--ledger", o.ledger, cfg, "ledger", std::string{});
  const std::string templates_path = pick(sub, "--templates", o.templates, cfg, "templates", std::string{});
  const int bins = pick(sub, "--bins", o.bins, cfg, "bins", 0);
  const int compression = pick(sub, "--compression", o.compression, cfg, "compression", 1);
  std::vector<double> omega_stars =
      pick(sub, "--omega-stars", o.omega_stars, cfg, "omega_stars",
           std::vector<double>{1, 2, 5, 10, 20, 50, 100, 150});
  if (events_path.empty() || ledger_path.empty() || templates_path.empty())
    throw config_error("evaluate: --events, --ledger, and --templates are required");
  if (bins < 1) throw config_error("evaluate: --bins must be >= 1");
  if (o.out.empty()) throw config_error("evaluate: --out is required");

  const std::vector<ReplayEvent> events = read_replay_events_csv(events_path);
  const PlantedLedger ledger = ledger_from_json(load_json(ledger_path));
  const std::vector<ReplayTemplate> templates = templates_from_json(load_json(templates_path));

  std::vector<ClassificationPoint> points =
      classify_sweep(events, ledger, templates, compression, bins, omega_stars);

  OutputGuard guard;
  guard.track(o.out);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);
  write_classification_csv(o.out, points);

  ManifestBuilder mb("evaluate", json{{"events", events_path}, {"ledger", ledger_path},
                                      {"templates", templates_path}, {"bins", bins},
                                      {"compression", compression},
                                      {"omega_stars", omega_stars}});
  mb.add_input("events", events_path);
  mb.add_input("ledger", ledger_path);
  mb.add_input("templates", templates_path);
  mb.add_output("classification", o.out);
  mb.write(manifest);
  guard.commit();

  const ClassificationPoint* best = nullptr;
  for (const auto& p : points)
    if (std::isfinite(p.jaccard) && (best == nullptr || p.jaccard > best->jaccard)) best = &p;
  json summary{{"n_thresholds", points.size()}};
  if (best != nullptr) {
    summary["best_jaccard"] = best->jaccard;
    summary["at_omega_star"] = best->omega_star;
  }
  emit_summary(summary);
}

// ---- report ---------------------------------------------------------------

struct ReportOpts {
  std::string config, replay_events, swr_events, correlogram, classification;
  std::string posterior, metrics, out, out_heatmap, manifest;
  double duration = 0.0;
};

void run_report(const ReportOpts& o, const CLI::App* sub) {
  const json cfg = maybe_load_config(o.config);
  const std::string replay_events = pick(sub, "--replay-events", o.replay_events, cfg, "replay_events", std::string{});
  const std::string swr_events = pick(sub, "--swr-events", o.swr_events, cfg, "swr_events", std::string{});
  const std::string correlogram = pick(sub, "--correlogram", o.correlogram, cfg, "correlogram", std::string{});
  const std::string posterior = pick(sub, "--posterior", o.posterior, cfg, "posterior", std::string{});
  const std::string metrics = pick(sub, "--metrics", o.metrics, cfg, "metrics", std::string{});
  const double duration = pick(sub, "--duration", o.duration, cfg, "duration", 0.0);
  if (o.out.empty()) throw config_error("report: --out is required");
  if (replay_events.empty() && swr_events.empty() && correlogram.empty() && posterior.empty() &&
      metrics.empty())
    throw config_error("report: nothing to aggregate (no inputs given)");

  json report = json::object();

  if (!replay_events.empty()) {
    const auto events = read_replay_events_csv(replay_events);
    std::map<std::pair<int, int>, int> by_tpl_c;
    double min_score = 0.0, max_score = 0.0;
    for (std::size_t i = 0; i < events.size(); ++i) {
      by_tpl_c[{events[i].template_id, events[i].c}]++;
      if (i == 0 || events[i].log10_omega < min_score) min_score = events[i].log10_omega;
      if (i == 0 || events[i].log10_omega > max_score) max_score = events[i].log10_omega;
    }
    json groups = json::array();
    for (const auto& [key, count] : by_tpl_c)
      groups.push_back(json{{"template_id", key.first}, {"c", key.second}, {"events", count}});
    report["replay"] = json{{"n_events", events.size()}, {"by_template_compression", groups}};
    if (!events.empty()) {
      report["replay"]["min_log10_omega"] = min_score;
      report["replay"]["max_log10_omega"] = max_score;
    }
  }

  if (!swr_events.empty()) {
    const auto events = read_swr_events_csv(swr_events);
    double mean_dur = 0.0;
    for (const auto& e : events) mean_dur += e.end_s - e.start_s;
    if (!events.empty()) mean_dur /= static_cast<double>(events.size());
    report["swr"] = json{{"n_events", events.size()}, {"mean_duration_s", mean_dur}};
    if (duration > 0.0)
      report["swr"]["rate_hz"] = static_cast<double>(events.size()) / duration;
  }

  if (!correlogram.empty()) {
    const Correlogram cg = read_correlogram_csv(correlogram);
    json sig_lags = json::array();
    const CorrelogramRow* peak = nullptr;
    for (const auto& r : cg.rows) {
      if (r.significant) sig_lags.push_back(r.lag_s);
      if (peak == nullptr || r.sqrt_rho > peak->sqrt_rho) peak = &r;
    }
    report["correlogram"] = json{{"n_bins", cg.rows.size()}, {"significant_lags", sig_lags}};
    if (peak != nullptr) {
      report["correlogram"]["peak_lag_s"] = peak->lag_s;
      report["correlogram"]["peak_sqrt_rho"] = peak->sqrt_rho;
    }
  }

  if (!metrics.empty()) report["decode"] = load_json(metrics);

  OutputGuard guard;
  guard.track(o.out);
  guard.track(o.out_heatmap);
  const std::string manifest = manifest_for(o.manifest, o.out);
  guard.track(manifest);

  if (!posterior.empty() && !o.out_heatmap.empty()) {
    write_matrix_csv(o.out_heatmap, read_posterior_binary(posterior));
    report["heatmap_csv"] = o.out_heatmap;
  } else if (!o.out_heatmap.empty()) {
    throw config_error("report: --out-heatmap needs --posterior");
  }

  save_json(o.out, report);

  json echo = json::object();
  ManifestBuilder mb("report", echo);
  if (!replay_events.empty()) mb.add_input("replay_events", replay_events);
  if (!swr_events.empty()) mb.add_input("swr_events", swr_events);
  if (!correlogram.empty()) mb.add_input("correlogram", correlogram);
  if (!posterior.empty()) mb.add_input("posterior", posterior);
  if (!metrics.empty()) mb.add_input("metrics", metrics);
  mb.add_output("report", o.out);
  if (!o.out_heatmap.empty()) mb.add_output("heatmap", o.out_heatmap);
  mb.write(manifest);
  guard.commit();
  emit_summary(json{{"sections", report.size()}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observed-position hidden Markov model toolkit: fitting, decoding, "
               "replay and ripple detection, correlation, and simulation"};
  app.require_subcommand(1);

  // grid
  auto go = std::make_shared<GridOpts>();
  CLI::App* grid_sub = app.add_subcommand("grid", "Build the spatial grid from tracking samples");
  grid_sub->add_option("--config", go->config, "JSON config; flags override its keys");
  grid_sub->add_option("--positions", go->positions, "tracking CSV (time_s,x_px,y_px)");
  grid_sub->add_option("--cell-size", go->cell_size, "grid cell size in pixels");
  grid_sub->add_option("--mask", go->mask, "JSON with extra accessible cells {\"cells\":[[r,c],..]}");
  grid_sub->add_option("--out", go->out, "output grid JSON")->required();
  grid_sub->add_option("--manifest", go->manifest, "manifest path (default <out>.manifest.json)");
  grid_sub->callback([go, grid_sub]() { run_grid(*go, grid_sub); });

  // bin
  auto bo = std::make_shared<BinOpts>();
  CLI::App* bin_sub = app.add_subcommand("bin", "Bin spikes (and positions) at a fixed width");
  bin_sub->add_option("--config", bo->config, "JSON config; flags override its keys");
  bin_sub->add_option("--spikes", bo->spikes, "spike CSV (cell_id,time_s)");
  bin_sub->add_option("--positions", bo->positions, "tracking CSV (optional)");
  bin_sub->add_option("--grid", bo->grid, "grid JSON");
  bin_sub->add_option("--dt", bo->dt, "bin width in seconds (default 0.1)");
  bin_sub->add_option("--duration", bo->duration, "recording length (default: last event time)");
  bin_sub->add_option("--cells", bo->cells, "cell count (default: max id + 1)");
  bin_sub->add_option("--out", bo->out, "output CSV (t,label,y_0..)")->required();
  bin_sub->add_option("--manifest", bo->manifest, "manifest path");
  bin_sub->callback([bo, bin_sub]() { run_bin(*bo, bin_sub); });

  // fit
  auto fo = std::make_shared<FitOpts>();
  CLI::App* fit_sub = app.add_subcommand("fit", "Fit the model by sequential Monte Carlo");
  fit_sub->add_option("--config", fo->config, "JSON config; flags override its keys");
  fit_sub->add_option("--spikes", fo->spikes, "spike CSV");
  fit_sub->add_option("--positions", fo->positions, "tracking CSV (omit for spikes-only fits)");
  fit_sub->add_option("--grid", fo->grid, "grid JSON");
  fit_sub->add_option("--dt", fo->dt, "bin width in seconds (default 0.1)");
  fit_sub->add_option("--duration", fo->duration, "recording length");
  fit_sub->add_option("--cells", fo->cells, "cell count");
  fit_sub->add_option("--seed", fo->seed, "RNG seed (required)");
  fit_sub->add_option("--particles", fo->particles, "particle count H (default 1500)");
  fit_sub->add_option("--kappa-bar", fo->kappa_bar, "largest model size (default 10)");
  fit_sub->add_option("--ess-frac", fo->ess_frac, "resample when ESS < frac*H (default 0.5)");
  fit_sub->add_option("--subpop-frac", fo->subpop_frac, "protected share per model size (default 0.1)");
  fit_sub->add_option("--threads", fo->threads, "worker threads (default 1)");
  fit_sub->add_option("--alpha", fo->alpha, "rate prior shape");
  fit_sub->add_option("--beta", fo->beta, "rate prior rate");
  fit_sub->add_option("--omega", fo->omega, "transition prior concentration");
  fit_sub->add_option("--delta", fo->delta, "covariance prior degrees of freedom");
  fit_sub->add_option("--psi", fo->psi, "covariance prior scale xx,xy,yy")
      ->delimiter(',')
      ->expected(3);
  fit_sub->add_option("--out-model", fo->out_model, "fitted model JSON")->required();
  fit_sub->add_option("--out-diagnostics", fo->out_diag, "per-step diagnostics CSV");
  fit_sub->add_option("--out-k-posterior", fo->out_kpost, "model-size posterior CSV");
  fit_sub->add_option("--manifest", fo->manifest, "manifest path");
  fit_sub->callback([fo, fit_sub]() { run_fit(*fo, fit_sub); });

  // decode
  auto dopt = std::make_shared<DecodeOpts>();
  CLI::App* dec_sub = app.add_subcommand("decode", "Decode positions from spikes");
  dec_sub->add_option("--config", dopt->config, "JSON config; flags override its keys");
  dec_sub->add_option("--model", dopt->model, "fitted model JSON (op methods)");
  dec_sub->add_option("--grid", dopt->grid, "grid JSON");
  dec_sub->add_option("--spikes", dopt->spikes, "test spike CSV");
  dec_sub->add_option("--positions", dopt->positions, "truth tracking CSV (metrics)");
  dec_sub->add_option("--method", dopt->method, "op | op-viterbi | bd | lp (default op)");
  dec_sub->add_option("--dt", dopt->dt, "decode bin width (default: model's)");
  dec_sub->add_option("--duration", dopt->duration, "test recording length");
  dec_sub->add_option("--cells", dopt->cells, "cell count");
  dec_sub->add_option("--train-spikes", dopt->train_spikes, "training spikes (bd/lp)");
  dec_sub->add_option("--train-positions", dopt->train_positions, "training tracking (bd/lp)");
  dec_sub->add_option("--train-duration", dopt->train_duration, "training length");
  dec_sub->add_option("--bandwidth", dopt->bandwidth, "lp kernel scale (default 2 cells)");
  dec_sub->add_option("--out-decoded", dopt->out_decoded, "decoded CSV")->required();
  dec_sub->add_option("--out-posterior", dopt->out_posterior, "dense posterior container");
  dec_sub->add_option("--out-metrics", dopt->out_metrics, "metrics JSON (needs truth)");
  dec_sub->add_option("--manifest", dopt->manifest, "manifest path");
  dec_sub->callback([dopt, dec_sub]() { run_decode(*dopt, dec_sub); });

  // templates
  auto to = std::make_shared<TemplatesOpts>();
  CLI::App* tpl_sub = app.add_subcommand("templates", "Cut trajectory templates from RUN tracking");
  tpl_sub->add_option("--config", to->config, "JSON config; flags override its keys");
  tpl_sub->add_option("--positions", to->positions, "tracking CSV");
  tpl_sub->add_option("--grid", to->grid, "grid JSON");
  tpl_sub->add_option("--regions", to->regions, "region specs JSON");
  tpl_sub->add_option("--dt", to->dt, "bin width in seconds (default 0.1)");
  tpl_sub->add_option("--duration", to->duration, "recording length");
  tpl_sub->add_option("--out", to->out, "templates JSON")->required();
  tpl_sub->add_option("--manifest", to->manifest, "manifest path");
  tpl_sub->callback([to, tpl_sub]() { run_templates(*to, tpl_sub); });

  // bic
  auto bic_o = std::make_shared<BicOpts>();
  CLI::App* bic_sub = app.add_subcommand("bic", "Compare model candidates on spikes-only data");
  bic_sub->add_option("--config", bic_o->config, "JSON config; flags override its keys");
  bic_sub->add_option("--model", bic_o->model, "fitted model JSON");
  bic_sub->add_option("--model-rest", bic_o->model_rest, "model fitted on the quiescent data");
  bic_sub->add_option("--grid", bic_o->grid, "grid JSON");
  bic_sub->add_option("--spikes", bic_o->spikes, "quiescent spike CSV");
  bic_sub->add_option("--duration", bic_o->duration, "recording length");
  bic_sub->add_option("--cells", bic_o->cells, "cell count");
  bic_sub->add_option("--train-spikes", bic_o->train_spikes, "RUN spikes (bd candidate)");
  bic_sub->add_option("--train-positions", bic_o->train_positions, "RUN tracking (bd candidate)");
  bic_sub->add_option("--train-duration", bic_o->train_duration, "RUN length");
  bic_sub->add_option("--seed", bic_o->seed, "RNG seed (prior candidates)");
  bic_sub->add_option("--prior-draws", bic_o->prior_draws, "draws behind op-prior-mean (default 30)");
  bic_sub->add_option("--candidates", bic_o->candidates,
                      "comma list: op,op-rest,op-stationary,bd,op-prior-sample,op-prior-mean");
  bic_sub->add_option("--out", bic_o->out, "report CSV")->required();
  bic_sub->add_option("--manifest", bic_o->manifest, "manifest path");
  bic_sub->callback([bic_o, bic_sub]() { run_bic(*bic_o, bic_sub); });

  // detect-replay
  auto ro = std::make_shared<ReplayOpts>();
  CLI::App* rep_sub = app.add_subcommand("detect-replay", "Scan quiescent spikes for template replay");
  rep_sub->add_option("--config", ro->config, "JSON config; flags override its keys");
  rep_sub->add_option("--model", ro->model, "fitted model JSON");
  rep_sub->add_option("--grid", ro->grid, "grid JSON");
  rep_sub->add_option("--spikes", ro->spikes, "quiescent spike CSV");
  rep_sub->add_option("--templates", ro->templates, "templates JSON");
  rep_sub->add_option("--omega-star", ro->omega_star, "detection threshold (default 20)");
  rep_sub->add_option("--compressions", ro->compressions, "compression rates, e.g. 1,5,10")
      ->delimiter(',');
  rep_sub->add_option("--duration", ro->duration, "recording length");
  rep_sub->add_option("--cells", ro->cells, "cell count");
  rep_sub->add_option("--out-events", ro->out_events, "events CSV")->required();
  rep_sub->add_option("--out-traces", ro->out_traces, "score traces CSV");
  rep_sub->add_option("--manifest", ro->manifest, "manifest path");
  rep_sub->callback([ro, rep_sub]() { run_detect_replay(*ro, rep_sub); });

  // detect-swr
  auto so = std::make_shared<SwrOpts>();
  CLI::App* swr_sub = app.add_subcommand("detect-swr", "Detect sharp-wave ripples in an LFP trace");
  swr_sub->add_option("--config", so->config, "JSON config; flags override its keys");
  swr_sub->add_option("--lfp", so->lfp, "LFP CSV (time_s,value_uV) or .bin container");
  swr_sub->add_option("--fs", so->fs, "sample rate override (Hz)");
  swr_sub->add_option("--low", so->low, "band lower edge (default 120 Hz)");
  swr_sub->add_option("--high", so->high, "band upper edge (default 250 Hz)");
  swr_sub->add_option("--order", so->order, "filter prototype order (default 4)");
  swr_sub->add_option("--threshold-sd", so->threshold_sd, "envelope threshold in SDs (default 3.5)");
  swr_sub->add_option("--min-duration", so->min_duration, "shortest event (default 0.030 s)");
  swr_sub->add_option("--max-duration", so->max_duration, "longest event (default 0.500 s)");
  swr_sub->add_option("--min-amplitude", so->min_amplitude, "smallest peak (default 20 uV)");
  swr_sub->add_option("--max-amplitude", so->max_amplitude, "largest peak (default 800 uV)");
  swr_sub->add_option("--merge-gap", so->merge_gap, "merge events closer than this (default 0.050 s)");
  swr_sub->add_option("--out", so->out, "events CSV")->required();
  swr_sub->add_option("--manifest", so->manifest, "manifest path");
  swr_sub->callback([so, swr_sub]() { run_detect_swr(*so, swr_sub); });

  // correlate
  auto co = std::make_shared<CorrelateOpts>();
  CLI::App* cor_sub = app.add_subcommand("correlate", "Cross-correlogram of two event streams");
  cor_sub->add_option("--config", co->config, "JSON config; flags override its keys");
  cor_sub->add_option("--events-a", co->events_a, "replay/SWR/time_s event CSV");
  cor_sub->add_option("--events-b", co->events_b, "replay/SWR/time_s event CSV");
  cor_sub->add_option("--duration", co->duration, "observation span in seconds");
  cor_sub->add_option("--tau", co->tau, "bin width (default 0.25 s)");
  cor_sub->add_option("--max-lag", co->max_lag, "largest lag (default 5 s)");
  cor_sub->add_option("--alpha", co->alpha, "family-wise error rate (default 0.05)");
  cor_sub->add_option("--out", co->out, "correlogram CSV")->required();
  cor_sub->add_option("--manifest", co->manifest, "manifest path");
  cor_sub->callback([co, cor_sub]() { run_correlate(*co, cor_sub); });

  // simulate
  auto sim_o = std::make_shared<SimulateOpts>();
  CLI::App* sim_sub = app.add_subcommand("simulate", "Draw a session from a model");
  sim_sub->add_option("--config", sim_o->config, "JSON config; flags override its keys");
  sim_sub->add_option("--model", sim_o->model, "generating model JSON");
  sim_sub->add_option("--grid", sim_o->grid, "grid JSON");
  sim_sub->add_option("--bins", sim_o->bins, "session length in bins");
  sim_sub->add_option("--seed", sim_o->seed, "RNG seed (required)");
  sim_sub->add_option("--out-spikes", sim_o->out_spikes, "spike CSV")->required();
  sim_sub->add_option("--out-positions", sim_o->out_positions, "tracking CSV");
  sim_sub->add_option("--out-truth", sim_o->out_truth, "state/label truth JSON");
  sim_sub->add_option("--manifest", sim_o->manifest, "manifest path");
  sim_sub->callback([sim_o, sim_sub]() { run_simulate(*sim_o, sim_sub); });

  // simulate-replay
  auto sr_o = std::make_shared<SimReplayOpts>();
  CLI::App* sr_sub = app.add_subcommand("simulate-replay",
                                        "Draw a quiescent session with planted replay");
  sr_sub->add_option("--config", sr_o->config, "JSON config; flags override its keys");
  sr_sub->add_option("--model", sr_o->model, "generating model JSON");
  sr_sub->add_option("--grid", sr_o->grid, "grid JSON");
  sr_sub->add_option("--templates", sr_o->templates, "templates JSON");
  sr_sub->add_option("--bins", sr_o->bins, "session length in bins");
  sr_sub->add_option("--events-per-template", sr_o->events_per_template, "planted count per template");
  sr_sub->add_option("--seed", sr_o->seed, "RNG seed (required)");
  sr_sub->add_option("--out-spikes", sr_o->out_spikes, "spike CSV")->required();
  sr_sub->add_option("--out-ledger", sr_o->out_ledger, "planted-event ledger JSON")->required();
  sr_sub->add_option("--manifest", sr_o->manifest, "manifest path");
  sr_sub->callback([sr_o, sr_sub]() { run_simulate_replay(*sr_o, sr_sub); });

  // evaluate
  auto eo = std::make_shared<EvaluateOpts>();
  CLI::App* eval_sub = app.add_subcommand("evaluate", "Score detections against a planted ledger");
  eval_sub->add_option("--config", eo->config, "JSON config; flags override its keys");
  eval_sub->add_option("--events", eo->events, "detected events CSV");
  eval_sub->add_option("--ledger", eo->ledger, "planted-event ledger JSON");
  eval_sub->add_option("--templates", eo->templates, "templates JSON");
  eval_sub->add_option("--bins", eo->bins, "session length in base bins");
  eval_sub->add_option("--compression", eo->compression, "compression of the detections (default 1)");
  eval_sub->add_option("--omega-stars", eo->omega_stars, "thresholds, e.g. 1,2,5,20")
      ->delimiter(',');
  eval_sub->add_option("--out", eo->out, "classification CSV")->required();
  eval_sub->add_option("--manifest", eo->manifest, "manifest path");
  eval_sub->callback([eo, eval_sub]() { run_evaluate(*eo, eval_sub); });

  // report
  auto rep_o = std::make_shared<ReportOpts>();
  CLI::App* report_sub = app.add_subcommand("report", "Aggregate artifacts into one JSON");
  report_sub->add_option("--config", rep_o->config, "JSON config; flags override its keys");
  report_sub->add_option("--replay-events", rep_o->replay_events, "replay events CSV");
  report_sub->add_option("--swr-events", rep_o->swr_events, "SWR events CSV");
  report_sub->add_option("--correlogram", rep_o->correlogram, "correlogram CSV");
  report_sub->add_option("--posterior", rep_o->posterior, "dense posterior container");
  report_sub->add_option("--metrics", rep_o->metrics, "decode metrics JSON");
  report_sub->add_option("--duration", rep_o->duration, "recording length (SWR rate)");
  report_sub->add_option("--out", rep_o->out, "report JSON")->required();
  report_sub->add_option("--out-heatmap", rep_o->out_heatmap, "posterior heatmap CSV");
  report_sub->add_option("--manifest", rep_o->manifest, "manifest path");
  report_sub->callback([rep_o, report_sub]() { run_report(*rep_o, report_sub); });

  auto fail = [](const char* type, const std::string& message, int code) {
    std::cout << json{{"error", {{"type", type}, {"message", message}}}}.dump() << std::endl;
    std::cerr << "error: " << message << '\n';
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const config_error& e) {
    return fail("config", e.what(), 2);
  } catch (const data_error& e) {
    return fail("data", e.what(), 3);
  } catch (const numerical_error& e) {
    return fail("numerical", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
