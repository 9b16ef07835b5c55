#include "ophmm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ophmm {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw data_error(path + ":" + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw data_error(path + ":" + std::to_string(line_no) + ": not an integer: '" + s + "'");
  }
}

std::ifstream open_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_write(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw data_error("cannot open " + path + " for writing");
  return out;
}

// Reads a CSV file, checks the header, and hands data rows to `row_fn`.
void for_each_row(const std::string& path, const std::string& expected_header, std::size_t n_cols,
                  const std::function<void(const std::vector<std::string>&, std::size_t)>& row_fn) {
  std::ifstream in = open_read(path);
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!saw_header) {
      if (t != expected_header)
        throw data_error(path + ": expected header '" + expected_header + "', got '" + t + "'");
      saw_header = true;
      continue;
    }
    std::vector<std::string> fields = split_csv(t);
    if (fields.size() != n_cols)
      throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(n_cols) + " fields, got " + std::to_string(fields.size()));
    row_fn(fields, line_no);
  }
  if (!saw_header) throw data_error(path + ": empty file (missing header)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

// ---- CSV ----

std::vector<std::vector<double>> read_spikes_csv(const std::string& path, int n_cells_hint) {
  std::vector<std::vector<double>> times(
      n_cells_hint > 0 ? static_cast<std::size_t>(n_cells_hint) : 0);
  for_each_row(path, "cell_id,time_s", 2, [&](const std::vector<std::string>& f, std::size_t ln) {
    const long cell = parse_long(f[0], path, ln);
    const double t = parse_double(f[1], path, ln);
    if (cell < 0) throw data_error(path + ":" + std::to_string(ln) + ": negative cell id");
    if (n_cells_hint > 0 && cell >= n_cells_hint)
      throw data_error(path + ":" + std::to_string(ln) + ": cell id " + std::to_string(cell) +
                       " outside the declared cell count " + std::to_string(n_cells_hint));
    if (static_cast<std::size_t>(cell) >= times.size())
      times.resize(static_cast<std::size_t>(cell) + 1);
    times[static_cast<std::size_t>(cell)].push_back(t);
  });
  for (auto& v : times)
    if (!std::is_sorted(v.begin(), v.end())) std::sort(v.begin(), v.end());
  return times;
}

void write_spikes_csv(const std::string& path, const std::vector<std::vector<double>>& times) {
  std::ofstream out = open_write(path);
  out << "cell_id,time_s\n";
  for (std::size_t n = 0; n < times.size(); ++n)
    for (double t : times[n]) out << n << ',' << fmt6(t) << '\n';
}

void read_positions_csv(const std::string& path, std::vector<double>& times,
                        std::vector<Vec2>& positions) {
  times.clear();
  positions.clear();
  for_each_row(path, "time_s,x_px,y_px", 3,
               [&](const std::vector<std::string>& f, std::size_t ln) {
                 times.push_back(parse_double(f[0], path, ln));
                 positions.push_back({parse_double(f[1], path, ln), parse_double(f[2], path, ln)});
               });
}

void write_positions_csv(const std::string& path, const std::vector<double>& times,
                         const std::vector<Vec2>& positions) {
  if (times.size() != positions.size())
    throw config_error("position times and samples differ in length");
  std::ofstream out = open_write(path);
  out << "time_s,x_px,y_px\n";
  for (std::size_t i = 0; i < times.size(); ++i)
    out << fmt6(times[i]) << ',' << fmt(positions[i].x) << ',' << fmt(positions[i].y) << '\n';
}

namespace {
constexpr char LFP_MAGIC[9] = "OPLFPB01";
}

LfpTrace read_lfp(const std::string& path) {
  LfpTrace lfp;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".bin") {
    std::ifstream in = open_read(path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, LFP_MAGIC, 8) != 0)
      throw data_error(path + ": not an LFP binary container");
    double fs = 0.0, t0 = 0.0;
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&fs), sizeof fs);
    in.read(reinterpret_cast<char*>(&t0), sizeof t0);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in) throw data_error(path + ": truncated LFP header");
    if (!(fs > 0.0)) throw data_error(path + ": non-positive sample rate");
    lfp.fs_hz = fs;
    lfp.t0_s = t0;
    lfp.samples_uv.resize(n);
    in.read(reinterpret_cast<char*>(lfp.samples_uv.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw data_error(path + ": truncated LFP samples");
    return lfp;
  }
  std::vector<double> times;
  for_each_row(path, "time_s,value_uV", 2, [&](const std::vector<std::string>& f, std::size_t ln) {
    times.push_back(parse_double(f[0], path, ln));
    lfp.samples_uv.push_back(parse_double(f[1], path, ln));
  });
  if (times.size() < 2) throw data_error(path + ": need at least two LFP samples");
  lfp.t0_s = times.front();
  // Sample rate from the median inter-sample gap (robust to dropped rows).
  std::vector<double> gaps(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) gaps[i - 1] = times[i] - times[i - 1];
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2),
                   gaps.end());
  const double median_gap = gaps[gaps.size() / 2];
  if (!(median_gap > 0.0)) throw data_error(path + ": LFP timestamps not increasing");
  lfp.fs_hz = 1.0 / median_gap;
  return lfp;
}

void write_lfp_binary(const std::string& path, const LfpTrace& lfp) {
  std::ofstream out = open_write(path, true);
  out.write(LFP_MAGIC, 8);
  const std::uint64_t n = lfp.samples_uv.size();
  out.write(reinterpret_cast<const char*>(&lfp.fs_hz), sizeof lfp.fs_hz);
  out.write(reinterpret_cast<const char*>(&lfp.t0_s), sizeof lfp.t0_s);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(lfp.samples_uv.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void write_replay_events_csv(const std::string& path, const std::vector<ReplayEvent>& events) {
  std::ofstream out = open_write(path);
  out << "template_id,c,t_rep,start_s,end_s,omega_log10\n";
  for (const auto& e : events)
    out << e.template_id << ',' << e.c << ',' << e.t_rep << ',' << fmt(e.start_s) << ','
        << fmt(e.end_s) << ',' << fmt(e.log10_omega) << '\n';
}

std::vector<ReplayEvent> read_replay_events_csv(const std::string& path) {
  std::vector<ReplayEvent> events;
  for_each_row(path, "template_id,c,t_rep,start_s,end_s,omega_log10", 6,
               [&](const std::vector<std::string>& f, std::size_t ln) {
                 ReplayEvent e;
                 e.template_id = static_cast<int>(parse_long(f[0], path, ln));
                 e.c = static_cast<int>(parse_long(f[1], path, ln));
                 e.t_rep = parse_long(f[2], path, ln);
                 e.start_s = parse_double(f[3], path, ln);
                 e.end_s = parse_double(f[4], path, ln);
                 e.log10_omega = parse_double(f[5], path, ln);
                 events.push_back(e);
               });
  return events;
}

void write_swr_events_csv(const std::string& path, const std::vector<SwrEvent>& events) {
  std::ofstream out = open_write(path);
  out << "start_s,end_s,peak_s,peak_uv\n";
  for (const auto& e : events)
    out << fmt(e.start_s) << ',' << fmt(e.end_s) << ',' << fmt(e.peak_s) << ',' << fmt(e.peak_uv)
        << '\n';
}

std::vector<SwrEvent> read_swr_events_csv(const std::string& path) {
  std::vector<SwrEvent> events;
  for_each_row(path, "start_s,end_s,peak_s,peak_uv", 4,
               [&](const std::vector<std::string>& f, std::size_t ln) {
                 SwrEvent e;
                 e.start_s = parse_double(f[0], path, ln);
                 e.end_s = parse_double(f[1], path, ln);
                 e.peak_s = parse_double(f[2], path, ln);
                 e.peak_uv = parse_double(f[3], path, ln);
                 events.push_back(e);
               });
  return events;
}

void write_correlogram_csv(const std::string& path, const Correlogram& cg) {
  std::ofstream out = open_write(path);
  out << "u,J,rho_hat,sqrt_rho,level,lo,hi\n";
  for (const auto& r : cg.rows)
    out << fmt(r.lag_s) << ',' << r.pair_count << ',' << fmt(r.rho_hat) << ',' << fmt(r.sqrt_rho)
        << ',' << fmt(r.independence_level) << ',' << fmt(r.band_lo) << ',' << fmt(r.band_hi)
        << '\n';
}

Correlogram read_correlogram_csv(const std::string& path) {
  Correlogram cg;
  for_each_row(path, "u,J,rho_hat,sqrt_rho,level,lo,hi", 7,
               [&](const std::vector<std::string>& f, std::size_t ln) {
                 CorrelogramRow r;
                 r.lag_s = parse_double(f[0], path, ln);
                 r.pair_count = parse_long(f[1], path, ln);
                 r.rho_hat = parse_double(f[2], path, ln);
                 r.sqrt_rho = parse_double(f[3], path, ln);
                 r.independence_level = parse_double(f[4], path, ln);
                 r.band_lo = parse_double(f[5], path, ln);
                 r.band_hi = parse_double(f[6], path, ln);
                 r.significant = r.sqrt_rho < r.band_lo || r.sqrt_rho > r.band_hi;
                 cg.rows.push_back(r);
               });
  if (!cg.rows.empty()) cg.independence_sqrt = std::sqrt(cg.rows.front().independence_level);
  return cg;
}

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRow>& rows) {
  std::ofstream out = open_write(path);
  out << "t,ess,resampled";
  const std::size_t kbar = rows.empty() ? 0 : rows.front().p_kappa.size();
  for (std::size_t k = 1; k <= kbar; ++k) out << ",p_" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << r.t << ',' << fmt(r.ess) << ',' << (r.resampled ? 1 : 0);
    for (double p : r.p_kappa) out << ',' << fmt(p);
    out << '\n';
  }
}

void write_k_posterior_csv(const std::string& path, const Vec& posterior) {
  std::ofstream out = open_write(path);
  out << "k,probability\n";
  for (std::size_t k = 0; k < posterior.size(); ++k)
    out << (k + 1) << ',' << fmt(posterior[k]) << '\n';
}

void write_decoded_csv(const std::string& path, const std::vector<int>& labels,
                       const SpatialGrid& grid, const Vec& posterior_at_truth) {
  const bool with_post = !posterior_at_truth.empty();
  if (with_post && posterior_at_truth.size() != labels.size())
    throw config_error("posterior_at_truth length mismatch");
  std::ofstream out = open_write(path);
  out << (with_post ? "t,label,x_px,y_px,posterior_at_truth\n" : "t,label,x_px,y_px\n");
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const Vec2 c = grid.centroid(labels[t]);
    out << (t + 1) << ',' << labels[t] << ',' << fmt(c.x) << ',' << fmt(c.y);
    if (with_post) out << ',' << fmt(posterior_at_truth[t]);
    out << '\n';
  }
}

namespace {
constexpr char POST_MAGIC[9] = "OPPOST01";
}

void write_posterior_binary(const std::string& path, const Mat& posterior) {
  std::ofstream out = open_write(path, true);
  out.write(POST_MAGIC, 8);
  const std::uint64_t t = posterior.rows(), m = posterior.cols();
  out.write(reinterpret_cast<const char*>(&t), sizeof t);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(posterior.data().data()),
            static_cast<std::streamsize>(t * m * sizeof(double)));
}

Mat read_posterior_binary(const std::string& path) {
  std::ifstream in = open_read(path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, POST_MAGIC, 8) != 0)
    throw data_error(path + ": not a posterior container");
  std::uint64_t t = 0, m = 0;
  in.read(reinterpret_cast<char*>(&t), sizeof t);
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  if (!in) throw data_error(path + ": truncated posterior header");
  Mat out(t, m);
  in.read(reinterpret_cast<char*>(out.data().data()),
          static_cast<std::streamsize>(t * m * sizeof(double)));
  if (!in) throw data_error(path + ": truncated posterior payload");
  return out;
}

void write_classification_csv(const std::string& path,
                              const std::vector<ClassificationPoint>& points) {
  std::ofstream out = open_write(path);
  out << "omega_star,tp,fp,fn,tn,tpr,fpr,jaccard,events_kept\n";
  for (const auto& p : points)
    out << fmt(p.omega_star) << ',' << p.tp << ',' << p.fp << ',' << p.fn << ',' << p.tn << ','
        << fmt(p.tpr) << ',' << fmt(p.fpr) << ',' << fmt(p.jaccard) << ',' << p.events_kept
        << '\n';
}

void write_bic_csv(const std::string& path, const std::vector<BicRow>& rows) {
  std::ofstream out = open_write(path);
  out << "candidate,log_lik,n_params,bic\n";
  for (const auto& r : rows)
    out << r.label << ',' << fmt(r.log_lik) << ',' << r.n_params << ',' << fmt(r.bic) << '\n';
}

void write_score_trace_csv(const std::string& path, const std::vector<ScoreTraceRow>& rows) {
  std::ofstream out = open_write(path);
  out << "template_id,c,t,log10_omega\n";
  for (const auto& r : rows)
    out << r.template_id << ',' << r.compression << ',' << r.t << ',' << fmt(r.log10_omega)
        << '\n';
}

void write_matrix_csv(const std::string& path, const Mat& mat) {
  std::ofstream out = open_write(path);
  for (std::size_t r = 0; r < mat.rows(); ++r) {
    for (std::size_t c = 0; c < mat.cols(); ++c) {
      if (c) out << ',';
      out << fmt(mat(r, c));
    }
    out << '\n';
  }
}

// ---- JSON ----

using nlohmann::json;

json grid_to_json(const SpatialGrid& grid) {
  json cells = json::array();
  for (int label = 1; label <= grid.size(); ++label) {
    const auto& c = grid.cell(label);
    cells.push_back({c.row, c.col});
  }
  return json{{"cell_size_px", grid.cell_size()},
              {"origin_px", {grid.origin().x, grid.origin().y}},
              {"n_rows", grid.n_rows()},
              {"n_cols", grid.n_cols()},
              {"cells", cells},
              {"checksum", grid.checksum()}};
}

SpatialGrid grid_from_json(const json& j) {
  try {
    const double cell_size = j.at("cell_size_px").get<double>();
    const Vec2 origin{j.at("origin_px").at(0).get<double>(), j.at("origin_px").at(1).get<double>()};
    const int n_rows = j.at("n_rows").get<int>();
    const int n_cols = j.at("n_cols").get<int>();
    std::vector<SpatialGrid::Cell> cells;
    for (const auto& c : j.at("cells"))
      cells.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    SpatialGrid grid = SpatialGrid::from_cells(cell_size, origin, n_rows, n_cols, cells);
    if (j.contains("checksum") && j.at("checksum").get<std::uint64_t>() != grid.checksum())
      throw data_error("grid checksum mismatch: file does not round-trip");
    return grid;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed grid JSON: ") + e.what());
  }
}

json model_to_json(const ModelParams& m, std::uint64_t grid_checksum) {
  json p = json::array(), lam = json::array(), sig = json::array();
  for (int i = 0; i < m.kappa; ++i)
    for (int k = 0; k < m.kappa; ++k) p.push_back(m.P(i, k));
  for (int i = 0; i < m.kappa; ++i)
    for (int n = 0; n < m.n_cells; ++n) lam.push_back(m.lambda(i, n));
  for (const auto& s : m.sigma) sig.push_back({s.xx, s.xy, s.yy});
  return json{{"kappa", m.kappa},    {"n_cells", m.n_cells},
              {"dt", m.dt},          {"P", p},
              {"lambda", lam},       {"xi", m.xi},
              {"sigma", sig},        {"grid_checksum", grid_checksum}};
}

ModelParams model_from_json(const json& j, std::uint64_t* grid_checksum) {
  try {
    ModelParams m;
    m.kappa = j.at("kappa").get<int>();
    m.n_cells = j.at("n_cells").get<int>();
    m.dt = j.at("dt").get<double>();
    if (m.kappa < 1 || m.n_cells < 1) throw data_error("model JSON: bad dimensions");
    const auto& p = j.at("P");
    const auto& lam = j.at("lambda");
    if (static_cast<int>(p.size()) != m.kappa * m.kappa)
      throw data_error("model JSON: P has wrong length");
    if (static_cast<int>(lam.size()) != m.kappa * m.n_cells)
      throw data_error("model JSON: lambda has wrong length");
    m.P = Mat(static_cast<std::size_t>(m.kappa), static_cast<std::size_t>(m.kappa));
    for (int i = 0; i < m.kappa; ++i)
      for (int k = 0; k < m.kappa; ++k)
        m.P(i, k) = p.at(static_cast<std::size_t>(i * m.kappa + k)).get<double>();
    m.lambda = Mat(static_cast<std::size_t>(m.kappa), static_cast<std::size_t>(m.n_cells));
    for (int i = 0; i < m.kappa; ++i)
      for (int n = 0; n < m.n_cells; ++n)
        m.lambda(i, n) = lam.at(static_cast<std::size_t>(i * m.n_cells + n)).get<double>();
    m.xi = j.at("xi").get<std::vector<int>>();
    if (static_cast<int>(m.xi.size()) != m.kappa) throw data_error("model JSON: xi wrong length");
    for (const auto& s : j.at("sigma")) {
      Sym2 cov;
      cov.xx = s.at(0).get<double>();
      cov.xy = s.at(1).get<double>();
      cov.yy = s.at(2).get<double>();
      m.sigma.push_back(cov);
    }
    if (static_cast<int>(m.sigma.size()) != m.kappa)
      throw data_error("model JSON: sigma wrong length");
    if (grid_checksum != nullptr) *grid_checksum = j.at("grid_checksum").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed model JSON: ") + e.what());
  }
}

json templates_to_json(const std::vector<ReplayTemplate>& templates) {
  json arr = json::array();
  for (const auto& t : templates) arr.push_back(json{{"id", t.id}, {"labels", t.labels}});
  return json{{"templates", arr}};
}

std::vector<ReplayTemplate> templates_from_json(const json& j) {
  try {
    std::vector<ReplayTemplate> out;
    for (const auto& t : j.at("templates")) {
      ReplayTemplate tpl;
      tpl.id = t.at("id").get<int>();
      tpl.labels = t.at("labels").get<std::vector<int>>();
      out.push_back(std::move(tpl));
    }
    return out;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed templates JSON: ") + e.what());
  }
}

json ledger_to_json(const PlantedLedger& ledger) {
  json events = json::array();
  for (const auto& e : ledger.events)
    events.push_back(
        json{{"template_id", e.template_id}, {"start_bin", e.start_bin}, {"length", e.length}});
  return json{{"events", events}, {"states", ledger.states}, {"labels", ledger.labels}};
}

PlantedLedger ledger_from_json(const json& j) {
  try {
    PlantedLedger out;
    for (const auto& e : j.at("events")) {
      PlantedEvent ev;
      ev.template_id = e.at("template_id").get<int>();
      ev.start_bin = e.at("start_bin").get<int>();
      ev.length = e.at("length").get<int>();
      out.events.push_back(ev);
    }
    out.states = j.at("states").get<std::vector<int>>();
    out.labels = j.at("labels").get<std::vector<int>>();
    return out;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed ledger JSON: ") + e.what());
  }
}

json load_json(const std::string& path) {
  std::ifstream in = open_read(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw data_error(path + ": invalid JSON: " + e.what());
  }
}

void save_json(const std::string& path, const json& j) {
  std::ofstream out = open_write(path);
  out << j.dump(2) << '\n';
}

// ---- Manifest ----

std::string file_hash_hex(const std::string& path) {
  std::ifstream in = open_read(path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[8192];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

ManifestBuilder::ManifestBuilder(std::string subcommand, nlohmann::json config)
    : subcommand_(std::move(subcommand)), config_(std::move(config)) {}

void ManifestBuilder::add_input(const std::string& name, const std::string& path) {
  inputs_[name] = path;
}

void ManifestBuilder::add_output(const std::string& name, const std::string& path) {
  outputs_[name] = path;
  output_paths_.push_back(path);
}

void ManifestBuilder::write(const std::string& path) const {
  json inputs = json::object(), outputs = json::object();
  for (const auto& [name, p] : inputs_)
    inputs[name] = json{{"path", p}, {"fnv64", file_hash_hex(p)}};
  for (const auto& [name, p] : outputs_)
    outputs[name] = json{{"path", p}, {"fnv64", file_hash_hex(p)}};
  save_json(path, json{{"subcommand", subcommand_},
                       {"config", config_},
                       {"inputs", inputs},
                       {"outputs", outputs}});
}

}  // namespace ophmm
