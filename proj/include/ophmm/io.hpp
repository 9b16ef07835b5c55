#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ophmm/common.hpp"
#include "ophmm/decode.hpp"
#include "ophmm/events.hpp"
#include "ophmm/grid.hpp"
#include "ophmm/ingest.hpp"
#include "ophmm/model.hpp"
#include "ophmm/replay.hpp"
#include "ophmm/sim.hpp"
#include "ophmm/smc.hpp"

namespace ophmm {

// ---- CSV ----

// Spike times: header `cell_id,time_s`, 0-based cell ids, 6-decimal seconds.
// n_cells_hint > 0 forces the cell count (to include silent trailing cells).
std::vector<std::vector<double>> read_spikes_csv(const std::string& path, int n_cells_hint = 0);
void write_spikes_csv(const std::string& path, const std::vector<std::vector<double>>& times);

// Position samples: header `time_s,x_px,y_px`.
void read_positions_csv(const std::string& path, std::vector<double>& times,
                        std::vector<Vec2>& positions);
void write_positions_csv(const std::string& path, const std::vector<double>& times,
                         const std::vector<Vec2>& positions);

// LFP trace: CSV header `time_s,value_uV` (rate inferred from timestamps) or a
// raw binary container (magic "OPLFPB01", float64 fs, float64 t0, uint64 n,
// n float64 samples).  Chosen by file suffix: `.bin` -> binary, else CSV.
struct LfpTrace {
  double fs_hz = 0.0;
  double t0_s = 0.0;
  Vec samples_uv;
};
LfpTrace read_lfp(const std::string& path);
void write_lfp_binary(const std::string& path, const LfpTrace& lfp);

// Replay events: header `template_id,c,t_rep,start_s,end_s,omega_log10`.
void write_replay_events_csv(const std::string& path, const std::vector<ReplayEvent>& events);
std::vector<ReplayEvent> read_replay_events_csv(const std::string& path);

// SWR events: header `start_s,end_s,peak_s,peak_uv`.
void write_swr_events_csv(const std::string& path, const std::vector<SwrEvent>& events);
std::vector<SwrEvent> read_swr_events_csv(const std::string& path);

// Correlogram rows: header `u,J,rho_hat,sqrt_rho,level,lo,hi`.
void write_correlogram_csv(const std::string& path, const Correlogram& cg);
Correlogram read_correlogram_csv(const std::string& path);

// SMC diagnostics: header `t,ess,resampled,p_1..p_kbar`.
void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRow>& rows);

// Model-size posterior: header `k,probability`.
void write_k_posterior_csv(const std::string& path, const Vec& posterior);

// Decoded positions: header `t,label,x_px,y_px[,posterior_at_truth]`.
void write_decoded_csv(const std::string& path, const std::vector<int>& labels,
                       const SpatialGrid& grid, const Vec& posterior_at_truth);

// Dense position posterior: magic "OPPOST01", uint64 T, uint64 M, then T*M
// row-major float64 probabilities.
void write_posterior_binary(const std::string& path, const Mat& posterior);
Mat read_posterior_binary(const std::string& path);

// Classification sweep: header
// `omega_star,tp,fp,fn,tn,tpr,fpr,jaccard,events_kept`.
void write_classification_csv(const std::string& path,
                              const std::vector<ClassificationPoint>& points);

// Model-comparison report: header `candidate,log_lik,n_params,bic`.
void write_bic_csv(const std::string& path, const std::vector<BicRow>& rows);

// Replay score traces (plot data): header `c,t,log10_omega` over all scanned
// windows of every template at every compression.
struct ScoreTraceRow {
  int template_id = 0;
  int compression = 1;
  int t = 0;
  double log10_omega = 0.0;
};
void write_score_trace_csv(const std::string& path, const std::vector<ScoreTraceRow>& rows);

// Generic numeric matrix as CSV (plot data; no header).
void write_matrix_csv(const std::string& path, const Mat& mat);

// ---- JSON ----

nlohmann::json grid_to_json(const SpatialGrid& grid);
SpatialGrid grid_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ModelParams& m, std::uint64_t grid_checksum);
ModelParams model_from_json(const nlohmann::json& j, std::uint64_t* grid_checksum = nullptr);

nlohmann::json templates_to_json(const std::vector<ReplayTemplate>& templates);
std::vector<ReplayTemplate> templates_from_json(const nlohmann::json& j);

nlohmann::json ledger_to_json(const PlantedLedger& ledger);
PlantedLedger ledger_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::json& j);

// ---- Manifest ----

// FNV-1a 64-bit hash of a file's bytes, as a fixed-width hex string.
std::string file_hash_hex(const std::string& path);

class ManifestBuilder {
 public:
  ManifestBuilder(std::string subcommand, nlohmann::json config);
  void add_input(const std::string& name, const std::string& path);
  void add_output(const std::string& name, const std::string& path);
  // Hashes all registered files and writes the manifest JSON.
  void write(const std::string& path) const;
  const std::vector<std::string>& output_paths() const { return output_paths_; }

 private:
  std::string subcommand_;
  nlohmann::json config_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  std::vector<std::string> output_paths_;
};

}  // namespace ophmm
