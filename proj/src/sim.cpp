#include "ophmm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ophmm/hmm.hpp"

namespace ophmm {

namespace {
constexpr std::uint64_t SIM_CHAIN = 0x53494d43;    // stream purposes
constexpr std::uint64_t SIM_POSITION = 0x53494d50;
constexpr std::uint64_t SIM_COUNTS = 0x53494d59;
constexpr std::uint64_t SIM_SCATTER = 0x53494d53;
constexpr std::uint64_t SIM_PLANT = 0x53494d4c;
}  // namespace

SimResult simulate(const ModelParams& m, const SpatialGrid& grid, int n_bins, std::uint64_t seed) {
  if (n_bins < 1) throw config_error("simulate needs at least one bin");
  m.validate(grid);

  RngStream chain_rng = RngStream::derive(seed, {SIM_CHAIN});
  RngStream pos_rng = RngStream::derive(seed, {SIM_POSITION});
  RngStream count_rng = RngStream::derive(seed, {SIM_COUNTS});

  std::vector<Vec> pos_probs(static_cast<std::size_t>(m.kappa));
  for (int i = 1; i <= m.kappa; ++i)
    pos_probs[static_cast<std::size_t>(i - 1)] =
        position_probs(grid, m.xi[static_cast<std::size_t>(i - 1)],
                       m.sigma[static_cast<std::size_t>(i - 1)]);

  SimResult out;
  out.states.resize(static_cast<std::size_t>(n_bins));
  out.labels.resize(static_cast<std::size_t>(n_bins));
  out.data.dt = m.dt;
  out.data.n_cells = m.n_cells;
  out.data.counts.assign(static_cast<std::size_t>(n_bins),
                         std::vector<int>(static_cast<std::size_t>(m.n_cells), 0));
  out.data.positions.resize(static_cast<std::size_t>(n_bins));

  int s_prev = 1;
  for (int t = 0; t < n_bins; ++t) {
    Vec row(static_cast<std::size_t>(m.kappa));
    for (int j = 0; j < m.kappa; ++j) row[static_cast<std::size_t>(j)] = m.P(s_prev - 1, j);
    const int s = chain_rng.categorical(row) + 1;
    const int x = pos_rng.categorical(pos_probs[static_cast<std::size_t>(s - 1)]) + 1;
    out.states[static_cast<std::size_t>(t)] = s;
    out.labels[static_cast<std::size_t>(t)] = x;
    out.data.positions[static_cast<std::size_t>(t)] = x;
    for (int n = 0; n < m.n_cells; ++n)
      out.data.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)] =
          count_rng.poisson(m.dt * m.lambda(s - 1, n));
    s_prev = s;
  }
  return out;
}

std::vector<std::vector<double>> scatter_spike_times(const std::vector<std::vector<int>>& counts,
                                                     double dt, std::uint64_t seed) {
  if (!(dt > 0.0)) throw config_error("scatter_spike_times needs dt > 0");
  const std::size_t n_cells = counts.empty() ? 0 : counts.front().size();
  std::vector<std::vector<double>> times(n_cells);
  RngStream rng = RngStream::derive(seed, {SIM_SCATTER});
  std::vector<double> bin_times;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const double t0 = static_cast<double>(t) * dt;
    for (std::size_t n = 0; n < n_cells; ++n) {
      const int y = counts[t][n];
      if (y <= 0) continue;
      bin_times.clear();
      for (int k = 0; k < y; ++k) bin_times.push_back(t0 + rng.uniform() * dt);
      std::sort(bin_times.begin(), bin_times.end());
      times[n].insert(times[n].end(), bin_times.begin(), bin_times.end());
    }
  }
  return times;
}

ReplaySim simulate_replay(const ModelParams& m, const SpatialGrid& grid, int n_bins,
                          const std::vector<ReplayTemplate>& templates, int events_per_template,
                          std::uint64_t seed) {
  if (templates.empty()) throw config_error("simulate_replay needs at least one template");
  if (events_per_template < 1) throw config_error("events_per_template must be >= 1");
  for (const auto& tpl : templates) {
    if (tpl.labels.empty()) throw config_error("template " + std::to_string(tpl.id) + " is empty");
    if (static_cast<int>(tpl.labels.size()) > n_bins)
      throw config_error("template " + std::to_string(tpl.id) + " longer than the session");
  }

  // Base trajectory and chain path.
  SimResult base = simulate(m, grid, n_bins, seed);

  // Plant events at uniform starts; on overlap, resample the later event.
  struct Slot {
    int tpl_index;
    int start;  // 0-based
    int length;
  };
  RngStream plant_rng = RngStream::derive(seed, {SIM_PLANT});
  std::vector<Slot> slots;
  for (std::size_t ti = 0; ti < templates.size(); ++ti) {
    const int len = static_cast<int>(templates[ti].labels.size());
    for (int r = 0; r < events_per_template; ++r) {
      Slot s;
      s.tpl_index = static_cast<int>(ti);
      s.length = len;
      s.start = plant_rng.uniform_int(n_bins - len + 1);
      slots.push_back(s);
    }
  }
  const int max_retries = 10000;
  int retries = 0;
  for (;;) {
    std::stable_sort(slots.begin(), slots.end(),
                     [](const Slot& a, const Slot& b) { return a.start < b.start; });
    int clash = -1;
    for (std::size_t i = 1; i < slots.size(); ++i) {
      if (slots[i].start < slots[i - 1].start + slots[i - 1].length) {
        clash = static_cast<int>(i);
        break;
      }
    }
    if (clash < 0) break;
    if (++retries > max_retries)
      throw config_error("could not place planted events without overlap after " +
                         std::to_string(max_retries) + " retries");
    auto& s = slots[static_cast<std::size_t>(clash)];
    s.start = plant_rng.uniform_int(n_bins - s.length + 1);
  }

  ReplaySim out;
  out.ledger.states = base.states;
  out.ledger.labels = base.labels;
  for (const auto& s : slots) {
    const auto& tpl = templates[static_cast<std::size_t>(s.tpl_index)];
    for (int j = 0; j < s.length; ++j)
      out.ledger.labels[static_cast<std::size_t>(s.start + j)] =
          tpl.labels[static_cast<std::size_t>(j)];
    PlantedEvent e;
    e.template_id = tpl.id;
    e.start_bin = s.start + 1;
    e.length = s.length;
    out.ledger.events.push_back(e);
  }

  // State marginals given the overwritten trajectory, position emissions only.
  AugmentedChain chain(m.P);
  const Mat pos_table = position_log_prob_table(m, grid);
  Mat emit(static_cast<std::size_t>(n_bins), static_cast<std::size_t>(m.kappa));
  for (int t = 0; t < n_bins; ++t)
    for (int i = 0; i < m.kappa; ++i)
      emit(t, i) = pos_table(i, out.ledger.labels[static_cast<std::size_t>(t)] - 1);
  ForwardResult fwd = forward_pass(chain, emit);
  BackwardResult bwd = backward_pass(chain, emit);
  Mat gamma = state_marginals(chain, smooth(chain, fwd, bwd));

  // Posterior-mean rates and spike counts.
  RngStream count_rng = RngStream::derive(seed, {SIM_COUNTS, 2});
  out.data.dt = m.dt;
  out.data.n_cells = m.n_cells;
  out.data.counts.assign(static_cast<std::size_t>(n_bins),
                         std::vector<int>(static_cast<std::size_t>(m.n_cells), 0));
  for (int t = 0; t < n_bins; ++t) {
    for (int n = 0; n < m.n_cells; ++n) {
      double rate = 0.0;
      for (int i = 0; i < m.kappa; ++i) rate += m.lambda(i, n) * gamma(t + 1, i);
      out.data.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)] =
          count_rng.poisson(m.dt * rate);
    }
  }
  return out;
}

namespace {

const ReplayTemplate* template_by_id(const std::vector<ReplayTemplate>& templates, int id) {
  for (const auto& t : templates)
    if (t.id == id) return &t;
  return nullptr;
}

}  // namespace

ClassificationPoint classify_replay(const std::vector<ReplayEvent>& events,
                                    const PlantedLedger& ledger,
                                    const std::vector<ReplayTemplate>& templates, int compression,
                                    int n_base_bins, double omega_star) {
  if (compression < 1) throw config_error("compression must be >= 1");
  const long long n = static_cast<long long>(n_base_bins) * compression;
  std::vector<char> truth(static_cast<std::size_t>(n), 0);
  std::vector<char> pred(static_cast<std::size_t>(n), 0);

  for (const auto& e : ledger.events) {
    const long long b = static_cast<long long>(e.start_bin - 1) * compression;
    const long long len = static_cast<long long>(e.length) * compression;
    for (long long j = b; j < b + len && j < n; ++j)
      if (j >= 0) truth[static_cast<std::size_t>(j)] = 1;
  }

  const double log10_thresh = std::log10(omega_star);
  ClassificationPoint out;
  out.omega_star = omega_star;
  for (const auto& e : events) {
    if (!(e.log10_omega > log10_thresh)) continue;
    if (e.c != compression)
      throw config_error("classification requires detections at a single compression rate");
    const ReplayTemplate* tpl = template_by_id(templates, e.template_id);
    if (tpl == nullptr) throw config_error("detected event references unknown template id");
    ++out.events_kept;
    const long long b = e.t_rep - 1;
    const long long len = static_cast<long long>(tpl->labels.size());
    for (long long j = b; j < b + len && j < n; ++j)
      if (j >= 0) pred[static_cast<std::size_t>(j)] = 1;
  }

  for (long long j = 0; j < n; ++j) {
    const bool tr = truth[static_cast<std::size_t>(j)] != 0;
    const bool pr = pred[static_cast<std::size_t>(j)] != 0;
    if (tr && pr)
      ++out.tp;
    else if (!tr && pr)
      ++out.fp;
    else if (tr && !pr)
      ++out.fn;
    else
      ++out.tn;
  }
  out.tpr = (out.tp + out.fn) > 0
                ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fn)
                : 0.0;
  out.fpr = (out.fp + out.tn) > 0
                ? static_cast<double>(out.fp) / static_cast<double>(out.fp + out.tn)
                : 0.0;
  const long long denom = out.tp + out.fp + out.fn;
  out.jaccard = denom > 0 ? static_cast<double>(out.tp) / static_cast<double>(denom)
                          : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<ClassificationPoint> classify_sweep(const std::vector<ReplayEvent>& events,
                                                const PlantedLedger& ledger,
                                                const std::vector<ReplayTemplate>& templates,
                                                int compression, int n_base_bins,
                                                const std::vector<double>& omega_stars) {
  std::vector<ClassificationPoint> out;
  out.reserve(omega_stars.size());
  for (double w : omega_stars)
    out.push_back(classify_replay(events, ledger, templates, compression, n_base_bins, w));
  return out;
}

int planted_events_detected(const std::vector<ReplayEvent>& events, const PlantedLedger& ledger,
                            double dt) {
  int hits = 0;
  for (const auto& p : ledger.events) {
    const double p_start = static_cast<double>(p.start_bin - 1) * dt;
    const double p_end = p_start + static_cast<double>(p.length) * dt;
    bool found = false;
    for (const auto& e : events) {
      if (e.template_id != p.template_id) continue;
      if (e.start_s < p_end && p_start < e.end_s) {
        found = true;
        break;
      }
    }
    if (found) ++hits;
  }
  return hits;
}

}  // namespace ophmm
