#pragma once

#include <string>
#include <vector>

#include "ophmm/decode.hpp"
#include "ophmm/hmm.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"

namespace ophmm {

struct ReplayTemplate {
  int id = 0;
  std::vector<int> labels;  // positions on the behavioural timescale

  int length() const { return static_cast<int>(labels.size()); }
};

// A traversal cut: the trajectory segment from the last visit to `from`
// through the first subsequent visit to `to` becomes one template.
struct RegionSpec {
  std::vector<int> from;
  std::vector<int> to;
  bool collapse_repeats = false;  // drop consecutive duplicate labels
};

// Cuts templates out of an observed trajectory; ids are assigned 1..N in
// extraction order. Specs that never fire add a warning instead of a
// template.
std::vector<ReplayTemplate> extract_templates(const std::vector<int>& trajectory,
                                              const std::vector<RegionSpec>& specs,
                                              std::vector<std::string>* warnings = nullptr);

// Shared per-dataset state for replay scoring: spikes-only forward/backward
// passes under the fitted model plus the position table.
class ReplayScorer {
 public:
  ReplayScorer(const ModelParams& m, const SpatialGrid& grid,
               const std::vector<std::vector<int>>& counts);

  // log p(X_{t:t+a-1} = template | y_{1:T}) via the windowed forward
  // accumulation seeded from the forward function at t and closed with the
  // backward function at t + a - 1. t is 1-based; requires t + a - 1 <= T.
  double log_trajectory_posterior(const ReplayTemplate& tmpl, int t) const;

  // log of the model's marginal probability of emitting the template under
  // the stationary state distribution (time-invariant).
  double log_trajectory_marginal(const ReplayTemplate& tmpl) const;

  // Natural-log replay score for the template at t.
  double log_score(const ReplayTemplate& tmpl, int t) const {
    return log_trajectory_posterior(tmpl, t) - log_trajectory_marginal(tmpl);
  }

  // Scores for every admissible start bin (1..T-a+1).
  Vec score_scan(const ReplayTemplate& tmpl) const;

  int T() const { return static_cast<int>(fwd_.slices.size()) - 1; }
  double total_log_lik() const { return fwd_.total_log_lik(); }
  bool stationary_fallback_used() const { return nu_fallback_; }

 private:
  const ModelParams& model_;
  AugmentedChain chain_;
  Mat log_pos_;     // kappa x M
  Mat spike_emit_;  // T x kappa
  ForwardResult fwd_;
  BackwardResult bwd_;
  Vec nu_;  // stationary distribution of the base chain
  bool nu_fallback_ = false;
};

struct ReplayEvent {
  int template_id = 0;
  int c = 1;          // time-compression rate
  long t_rep = 0;     // 1-based start bin on the compressed timescale
  double start_s = 0.0, end_s = 0.0;
  double log10_omega = 0.0;
};

struct ReplayConfig {
  std::vector<int> compressions = {1};
  double omega_star = 20.0;   // detection threshold on the score
  double base_dt = 0.1;
};

// Candidate events at one compression: score above threshold and a strict
// local maximum against both neighbours (absent neighbours don't block).
std::vector<ReplayEvent> detect_at_compression(const ReplayScorer& scorer,
                                               const std::vector<ReplayTemplate>& templates,
                                               int c, double base_dt, double omega_star,
                                               std::vector<Vec>* traces = nullptr);

// Greedy overlap resolution across templates and compressions: events are
// kept in descending score order (ties: earlier start, lower template id,
// lower compression); a candidate overlapping a kept event by at least half
// of the shorter wall-clock span is dropped.
std::vector<ReplayEvent> dedupe_events(std::vector<ReplayEvent> events);

// Full detection pipeline over raw rest-period spikes.
std::vector<ReplayEvent> detect_replay(const ModelParams& m, const SpatialGrid& grid,
                                       const RawRecording& rest,
                                       const std::vector<ReplayTemplate>& templates,
                                       const ReplayConfig& cfg,
                                       std::vector<std::vector<Vec>>* traces_by_c = nullptr);

// ---- Fit-quality comparison --------------------------------------------

double bic_value(double log_lik, long n_params, long n_bins);

long op_param_count(int kappa, int n_cells);          // kappa (kappa + C + 3)
long stationary_param_count(int kappa, int n_cells);  // kappa (C + 3) + kappa - 1
long bd_param_count(int n_positions, int n_cells);    // M * C

// Spike-only data log likelihoods for the benchmark candidates.
double op_spike_log_lik_total(const ModelParams& m, const std::vector<std::vector<int>>& counts);
double stationary_spike_log_lik_total(const ModelParams& m,
                                      const std::vector<std::vector<int>>& counts,
                                      bool* nu_fallback = nullptr);
double bd_spike_log_lik_total(const BdModel& bd, const std::vector<std::vector<int>>& counts,
                              double dt);

struct BicRow {
  std::string label;
  double log_lik = 0.0;
  long n_params = 0;
  double bic = 0.0;
};

}  // namespace ophmm
