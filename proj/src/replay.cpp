#include "ophmm/replay.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ophmm {

std::vector<ReplayTemplate> extract_templates(const std::vector<int>& trajectory,
                                              const std::vector<RegionSpec>& specs,
                                              std::vector<std::string>* warnings) {
  std::vector<ReplayTemplate> out;
  int next_id = 1;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const RegionSpec& spec = specs[si];
    if (spec.from.empty() || spec.to.empty())
      throw config_error("template region spec needs non-empty from/to label sets");
    std::set<int> from(spec.from.begin(), spec.from.end());
    std::set<int> to(spec.to.begin(), spec.to.end());
    bool fired = false;
    long anchor = -1;
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
      int x = trajectory[t];
      if (from.count(x)) anchor = static_cast<long>(t);  // last entry into the start region
      if (anchor >= 0 && to.count(x)) {
        ReplayTemplate tmpl;
        tmpl.id = next_id++;
        for (std::size_t u = anchor; u <= t; ++u) {
          if (spec.collapse_repeats && !tmpl.labels.empty() && tmpl.labels.back() == trajectory[u])
            continue;
          tmpl.labels.push_back(trajectory[u]);
        }
        out.push_back(std::move(tmpl));
        fired = true;
        anchor = -1;
      }
    }
    if (!fired && warnings)
      warnings->push_back("template region spec " + std::to_string(si + 1) +
                          " matched no traversal");
  }
  return out;
}

ReplayScorer::ReplayScorer(const ModelParams& m, const SpatialGrid& grid,
                           const std::vector<std::vector<int>>& counts)
    : model_(m), chain_(m.P) {
  log_pos_ = position_log_prob_table(m, grid);
  spike_emit_ = emission_log_table(m, grid, counts, {});
  fwd_ = forward_pass(chain_, spike_emit_);
  bwd_ = backward_pass(chain_, spike_emit_);
  nu_ = stationary_distribution(m.P, &nu_fallback_);
}

double ReplayScorer::log_trajectory_posterior(const ReplayTemplate& tmpl, int t) const {
  const int a = tmpl.length();
  const int n = chain_.size();
  if (a < 1) throw data_error("replay template is empty");
  if (t < 1 || t + a - 1 > T()) throw data_error("replay window outside the recording");
  for (int x : tmpl.labels)
    if (x < 1 || x > static_cast<int>(log_pos_.cols()))
      throw data_error("replay template label outside the grid");

  // Windowed accumulation in the scaled linear domain. Seed: the filtering
  // slice at t (the spike emission at t is already inside it) weighted by
  // the first template position.
  Vec g(n), nxt(n);
  double log_scale = fwd_.log_lik[t];
  double mx = NEG_INF;
  for (int idx = 0; idx < n; ++idx) {
    double lp = log_pos_(chain_.state_of(idx) - 1, tmpl.labels[0] - 1);
    double lv = fwd_.slices[t][idx] > 0.0 ? std::log(fwd_.slices[t][idx]) + lp : NEG_INF;
    g[idx] = lv;
    mx = std::max(mx, lv);
  }
  if (mx == NEG_INF) return NEG_INF;
  double total = 0.0;
  for (int idx = 0; idx < n; ++idx) {
    g[idx] = g[idx] == NEG_INF ? 0.0 : std::exp(g[idx] - mx);
    total += g[idx];
  }
  log_scale += mx + std::log(total);
  for (int idx = 0; idx < n; ++idx) g[idx] /= total;

  for (int u = 2; u <= a; ++u) {
    const int tu = t + u - 1;  // absolute bin of template entry u
    Vec emit(chain_.kappa());
    for (int s = 0; s < chain_.kappa(); ++s)
      emit[s] = spike_emit_(tu - 1, s) + log_pos_(s, tmpl.labels[u - 1] - 1);
    double inc = chain_.forward_step(g, emit, nxt);
    if (inc == NEG_INF) return NEG_INF;
    std::swap(g, nxt);
    log_scale += inc;
  }

  // Close with the backward function at t + a - 1 and normalise by the full
  // data likelihood.
  const int tend = t + a - 1;
  double closing = 0.0;
  for (int idx = 0; idx < n; ++idx) closing += g[idx] * bwd_.slices[tend][idx];
  if (closing <= 0.0) return NEG_INF;
  return log_scale + std::log(closing) + bwd_.log_scale[tend] - fwd_.total_log_lik();
}

double ReplayScorer::log_trajectory_marginal(const ReplayTemplate& tmpl) const {
  const int a = tmpl.length();
  const int kappa = chain_.kappa();
  if (a < 1) throw data_error("replay template is empty");
  Vec g(kappa), nxt(kappa);
  double log_scale = 0.0;
  double total = 0.0;
  for (int j = 0; j < kappa; ++j) {
    g[j] = nu_[j] * std::exp(log_pos_(j, tmpl.labels[0] - 1));
    total += g[j];
  }
  if (total <= 0.0) return NEG_INF;
  log_scale += std::log(total);
  for (int j = 0; j < kappa; ++j) g[j] /= total;
  for (int u = 2; u <= a; ++u) {
    total = 0.0;
    for (int j = 0; j < kappa; ++j) {
      double acc = 0.0;
      for (int i = 0; i < kappa; ++i) acc += g[i] * model_.P(i, j);
      nxt[j] = acc * std::exp(log_pos_(j, tmpl.labels[u - 1] - 1));
      total += nxt[j];
    }
    if (total <= 0.0) return NEG_INF;
    log_scale += std::log(total);
    for (int j = 0; j < kappa; ++j) g[j] = nxt[j] / total;
  }
  return log_scale;
}

Vec ReplayScorer::score_scan(const ReplayTemplate& tmpl) const {
  const int a = tmpl.length();
  if (a > T()) return {};
  double marginal = log_trajectory_marginal(tmpl);
  if (marginal == NEG_INF)
    throw numerical_error("replay template has zero marginal probability under the model");
  Vec scores(T() - a + 1);
  for (int t = 1; t <= T() - a + 1; ++t)
    scores[t - 1] = log_trajectory_posterior(tmpl, t) - marginal;
  return scores;
}

std::vector<ReplayEvent> detect_at_compression(const ReplayScorer& scorer,
                                               const std::vector<ReplayTemplate>& templates,
                                               int c, double base_dt, double omega_star,
                                               std::vector<Vec>* traces) {
  if (c < 1) throw config_error("compression rate must be >= 1");
  if (omega_star <= 0.0) throw config_error("replay threshold must be positive");
  const double dt_c = base_dt / c;
  const double log_thresh = std::log(omega_star);
  std::vector<ReplayEvent> events;
  for (const ReplayTemplate& tmpl : templates) {
    Vec scan = scorer.score_scan(tmpl);
    if (traces) traces->push_back(scan);
    const long n = static_cast<long>(scan.size());
    for (long i = 0; i < n; ++i) {
      if (!(scan[i] > log_thresh)) continue;
      double left = i > 0 ? scan[i - 1] : NEG_INF;
      double right = i + 1 < n ? scan[i + 1] : NEG_INF;
      if (!(scan[i] > left && scan[i] > right)) continue;
      ReplayEvent ev;
      ev.template_id = tmpl.id;
      ev.c = c;
      ev.t_rep = i + 1;
      ev.start_s = i * dt_c;
      ev.end_s = (i + tmpl.length()) * dt_c;
      ev.log10_omega = scan[i] / std::log(10.0);
      events.push_back(ev);
    }
  }
  return events;
}

std::vector<ReplayEvent> dedupe_events(std::vector<ReplayEvent> events) {
  std::stable_sort(events.begin(), events.end(), [](const ReplayEvent& a, const ReplayEvent& b) {
    if (a.log10_omega != b.log10_omega) return a.log10_omega > b.log10_omega;
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    if (a.template_id != b.template_id) return a.template_id < b.template_id;
    return a.c < b.c;
  });
  std::vector<ReplayEvent> kept;
  for (const ReplayEvent& ev : events) {
    bool clashes = false;
    for (const ReplayEvent& k : kept) {
      double overlap = std::min(ev.end_s, k.end_s) - std::max(ev.start_s, k.start_s);
      double shorter = std::min(ev.end_s - ev.start_s, k.end_s - k.start_s);
      if (overlap >= 0.5 * shorter - 1e-12) {
        clashes = true;
        break;
      }
    }
    if (!clashes) kept.push_back(ev);
  }
  std::sort(kept.begin(), kept.end(), [](const ReplayEvent& a, const ReplayEvent& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return a.template_id < b.template_id;
  });
  return kept;
}

std::vector<ReplayEvent> detect_replay(const ModelParams& m, const SpatialGrid& grid,
                                       const RawRecording& rest,
                                       const std::vector<ReplayTemplate>& templates,
                                       const ReplayConfig& cfg,
                                       std::vector<std::vector<Vec>>* traces_by_c) {
  if (templates.empty()) throw config_error("replay detection needs at least one template");
  std::vector<ReplayEvent> all;
  for (int c : cfg.compressions) {
    BinnedDataset compressed = rebin(rest, cfg.base_dt, c);
    ReplayScorer scorer(m, grid, compressed.counts);
    std::vector<Vec> traces;
    auto events = detect_at_compression(scorer, templates, c, cfg.base_dt, cfg.omega_star,
                                        traces_by_c ? &traces : nullptr);
    if (traces_by_c) traces_by_c->push_back(std::move(traces));
    all.insert(all.end(), events.begin(), events.end());
  }
  return dedupe_events(std::move(all));
}

double bic_value(double log_lik, long n_params, long n_bins) {
  if (n_bins < 1) throw data_error("bic: empty dataset");
  return -2.0 * log_lik + static_cast<double>(n_params) * std::log(static_cast<double>(n_bins));
}

long op_param_count(int kappa, int n_cells) {
  return static_cast<long>(kappa) * (kappa + n_cells + 3);
}

long stationary_param_count(int kappa, int n_cells) {
  return static_cast<long>(kappa) * (n_cells + 3) + kappa - 1;
}

long bd_param_count(int n_positions, int n_cells) {
  return static_cast<long>(n_positions) * n_cells;
}

double op_spike_log_lik_total(const ModelParams& m, const std::vector<std::vector<int>>& counts) {
  AugmentedChain chain(m.P);
  Mat emit(counts.size(), m.kappa);
  for (std::size_t t = 0; t < counts.size(); ++t)
    for (int s = 1; s <= m.kappa; ++s) emit(t, s - 1) = spike_log_lik(m, s, counts[t]);
  return forward_pass(chain, emit).total_log_lik();
}

double stationary_spike_log_lik_total(const ModelParams& m,
                                      const std::vector<std::vector<int>>& counts,
                                      bool* nu_fallback) {
  Vec nu = stationary_distribution(m.P, nu_fallback);
  double total = 0.0;
  Vec terms(m.kappa);
  for (const auto& y : counts) {
    for (int s = 1; s <= m.kappa; ++s)
      terms[s - 1] = nu[s - 1] > 0.0 ? std::log(nu[s - 1]) + spike_log_lik(m, s, y) : NEG_INF;
    double v = logsumexp(terms);
    if (v == NEG_INF) throw numerical_error("stationary benchmark: zero-probability bin");
    total += v;
  }
  return total;
}

double bd_spike_log_lik_total(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                              double dt) {
  const std::size_t M = bd.rates.rows();
  double total = 0.0;
  Vec terms(M);
  for (const auto& y : counts) {
    double lgam = 0.0;
    for (std::size_t n = 0; n < bd.rates.cols(); ++n)
      lgam += std::lgamma(static_cast<double>(y[n]) + 1.0);
    for (std::size_t x = 0; x < M; ++x) {
      double e = bd.log_prior[x] - lgam;
      for (std::size_t n = 0; n < bd.rates.cols(); ++n) {
        double mu = dt * bd.rates(x, n);
        if (mu == 0.0) {
          if (y[n] > 0) {
            e = NEG_INF;
            break;
          }
          continue;
        }
        e += -mu + y[n] * std::log(mu);
      }
      terms[x] = e;
    }
    double v = logsumexp(terms);
    if (v == NEG_INF) throw numerical_error("bd benchmark: zero-probability bin");
    total += v;
  }
  return total;
}

}  // namespace ophmm
