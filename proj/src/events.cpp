#include "ophmm/events.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace ophmm {

namespace {

using cd = std::complex<double>;

// Bilinear map s -> z with sampling rate fs.
cd bilinear(cd s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Biquad with a zero pair {+1, -1} and the given digital pole pair.
Biquad section_from_poles(cd z1, cd z2) {
  Biquad q;
  q.b0 = 1.0;
  q.b1 = 0.0;
  q.b2 = -1.0;
  q.a1 = -(z1 + z2).real();
  q.a2 = (z1 * z2).real();
  return q;
}

}  // namespace

std::vector<Biquad> butterworth_bandpass(int order, double low_hz, double high_hz, double fs_hz) {
  if (order < 1) throw config_error("filter order must be >= 1");
  if (!(fs_hz > 0.0)) throw config_error("sampling rate must be positive");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs_hz / 2.0))
    throw config_error("band edges must satisfy 0 < low < high < fs/2");

  const double pi = std::numbers::pi;
  // Pre-warped analogue edges so that the digital response hits the requested
  // frequencies exactly after the bilinear transform.
  const double w1 = 2.0 * fs_hz * std::tan(pi * low_hz / fs_hz);
  const double w2 = 2.0 * fs_hz * std::tan(pi * high_hz / fs_hz);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  std::vector<Biquad> sos;
  sos.reserve(static_cast<std::size_t>(order));

  // Low-pass prototype poles on the unit circle, upper half-plane only; each
  // maps to two band-pass poles whose conjugates come from the mirrored
  // prototype pole, so pairing (q, conj q) yields real biquads.
  auto push_pair = [&](cd proto) {
    const cd pb = proto * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    const cd s_hi = (pb + disc) / 2.0;
    const cd s_lo = (pb - disc) / 2.0;
    const cd z_hi = bilinear(s_hi, fs_hz);
    const cd z_lo = bilinear(s_lo, fs_hz);
    if (std::abs(proto.imag()) < 1e-14) {
      // Real prototype pole (odd order): its two band-pass poles are mutual
      // conjugates (or both real) and form a single section.
      sos.push_back(section_from_poles(z_hi, z_lo));
    } else {
      sos.push_back(section_from_poles(z_hi, std::conj(z_hi)));
      sos.push_back(section_from_poles(z_lo, std::conj(z_lo)));
    }
  };

  for (int k = 1; 2 * k <= order; ++k) {
    const double theta = pi * (2.0 * k + order - 1.0) / (2.0 * order);
    push_pair(cd(std::cos(theta), std::sin(theta)));
  }
  if (order % 2 == 1) push_pair(cd(-1.0, 0.0));

  // Normalise so the cascade has unit gain at the analogue centre frequency's
  // digital image.
  const double f_center = std::atan(w0 / (2.0 * fs_hz)) * fs_hz / pi;
  const double g = cascade_gain(sos, f_center, fs_hz);
  if (!(g > 0.0) || !std::isfinite(g)) throw numerical_error("degenerate band-pass design");
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (auto& q : sos) {
    q.b0 *= per_section;
    q.b1 *= per_section;
    q.b2 *= per_section;
  }
  return sos;
}

double cascade_gain(const std::vector<Biquad>& sos, double f_hz, double fs_hz) {
  const double w = 2.0 * std::numbers::pi * f_hz / fs_hz;
  const cd e1 = std::exp(cd(0.0, -w));
  const cd e2 = e1 * e1;
  double g = 1.0;
  for (const auto& q : sos) {
    const cd num = q.b0 + q.b1 * e1 + q.b2 * e2;
    const cd den = 1.0 + q.a1 * e1 + q.a2 * e2;
    g *= std::abs(num / den);
  }
  return g;
}

Vec sos_filter(const std::vector<Biquad>& sos, const Vec& x) {
  Vec y = x;
  for (const auto& q : sos) {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : y) {
      const double xn = v;
      const double yn = q.b0 * xn + s1;
      s1 = q.b1 * xn - q.a1 * yn + s2;
      s2 = q.b2 * xn - q.a2 * yn;
      v = yn;
    }
  }
  return y;
}

namespace {

// One cascade pass seeded with per-section steady-state initial conditions for
// a constant input equal to the first sample; suppresses start-up transients.
Vec sos_filter_steady(const std::vector<Biquad>& sos, const Vec& x) {
  Vec y = x;
  double level = y.empty() ? 0.0 : y.front();
  for (const auto& q : sos) {
    const double h1 = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    double s1 = (h1 - q.b0) * level;
    double s2 = (q.b2 - q.a2 * h1) * level;
    for (double& v : y) {
      const double xn = v;
      const double yn = q.b0 * xn + s1;
      s1 = q.b1 * xn - q.a1 * yn + s2;
      s2 = q.b2 * xn - q.a2 * yn;
      v = yn;
    }
    level *= h1;  // DC level presented to the next section
  }
  return y;
}

}  // namespace

Vec filtfilt(const std::vector<Biquad>& sos, const Vec& x) {
  const std::size_t pad = 3 * (2 * sos.size() + 1);
  if (x.size() <= pad)
    throw data_error("trace too short for zero-phase filtering: need more than " +
                     std::to_string(pad) + " samples, got " + std::to_string(x.size()));
  const std::size_t n = x.size();
  Vec ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  Vec f = sos_filter_steady(sos, ext);
  std::reverse(f.begin(), f.end());
  f = sos_filter_steady(sos, f);
  std::reverse(f.begin(), f.end());

  return Vec(f.begin() + static_cast<std::ptrdiff_t>(pad),
             f.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

void SwrConfig::validate() const {
  if (!(fs_hz > 0.0)) throw config_error("fs_hz must be positive");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs_hz / 2.0))
    throw config_error("ripple band must satisfy 0 < low < high < fs/2");
  if (filter_order < 1) throw config_error("filter_order must be >= 1");
  if (!(threshold_sd > 0.0)) throw config_error("threshold_sd must be positive");
  if (!(0.0 <= min_duration_s && min_duration_s < max_duration_s))
    throw config_error("duration bounds must satisfy 0 <= min < max");
  if (!(0.0 <= min_amplitude_uv && min_amplitude_uv < max_amplitude_uv))
    throw config_error("amplitude bounds must satisfy 0 <= min < max");
  if (merge_gap_s < 0.0) throw config_error("merge_gap_s must be non-negative");
}

SwrResult detect_swr(const Vec& lfp_uv, double t0_s, const SwrConfig& cfg) {
  cfg.validate();
  const auto sos = butterworth_bandpass(cfg.filter_order, cfg.low_hz, cfg.high_hz, cfg.fs_hz);
  const Vec filtered = filtfilt(sos, lfp_uv);

  Vec env(filtered.size());
  for (std::size_t i = 0; i < filtered.size(); ++i) env[i] = std::abs(filtered[i]);

  double mean = 0.0;
  for (double v : env) mean += v;
  mean /= static_cast<double>(env.size());
  double var = 0.0;
  for (double v : env) var += (v - mean) * (v - mean);
  var /= static_cast<double>(env.size());
  const double sd = std::sqrt(var);

  SwrResult out;
  out.envelope_mean = mean;
  out.envelope_sd = sd;
  out.threshold_uv = mean + cfg.threshold_sd * sd;

  // Contiguous above-threshold runs as inclusive sample-index intervals.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t i = 0;
  while (i < env.size()) {
    if (env[i] > out.threshold_uv) {
      std::size_t j = i;
      while (j + 1 < env.size() && env[j + 1] > out.threshold_uv) ++j;
      runs.emplace_back(i, j);
      i = j + 1;
    } else {
      ++i;
    }
  }

  // Merge runs separated by less than the merge gap.
  std::vector<std::pair<std::size_t, std::size_t>> merged;
  for (const auto& r : runs) {
    if (!merged.empty() &&
        static_cast<double>(r.first - merged.back().second) / cfg.fs_hz < cfg.merge_gap_s) {
      merged.back().second = r.second;
    } else {
      merged.push_back(r);
    }
  }

  for (const auto& r : merged) {
    const double duration = static_cast<double>(r.second - r.first) / cfg.fs_hz;
    if (duration < cfg.min_duration_s || duration > cfg.max_duration_s) continue;
    std::size_t peak = r.first;
    for (std::size_t k = r.first + 1; k <= r.second; ++k)
      if (env[k] > env[peak]) peak = k;
    if (env[peak] < cfg.min_amplitude_uv || env[peak] > cfg.max_amplitude_uv) continue;
    SwrEvent e;
    e.start_s = t0_s + static_cast<double>(r.first) / cfg.fs_hz;
    e.end_s = t0_s + static_cast<double>(r.second) / cfg.fs_hz;
    e.peak_s = t0_s + static_cast<double>(peak) / cfg.fs_hz;
    e.peak_uv = env[peak];
    out.events.push_back(e);
  }
  return out;
}

void CorrelogramConfig::validate() const {
  if (!(bin_width_s > 0.0)) throw config_error("bin_width_s must be positive");
  if (!(max_lag_s >= bin_width_s / 2.0)) throw config_error("max_lag_s too small for bin width");
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw config_error("normal quantile needs p in (0, 1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

Correlogram cross_correlogram(const std::vector<double>& times_a, const std::vector<double>& times_b,
                              double duration_s, const CorrelogramConfig& cfg) {
  cfg.validate();
  if (!(duration_s > 0.0)) throw data_error("correlogram needs a positive recording duration");

  std::vector<double> b_sorted = times_b;
  std::sort(b_sorted.begin(), b_sorted.end());

  const double tau = cfg.bin_width_s;
  const int k_max = static_cast<int>(std::lround(cfg.max_lag_s / tau));
  const int n_bins = 2 * k_max + 1;
  const double alpha_bin = cfg.alpha / static_cast<double>(n_bins);
  const double z = normal_quantile(1.0 - alpha_bin / 2.0);
  const double sd_sqrt = 1.0 / std::sqrt(4.0 * duration_s * tau);

  Correlogram out;
  out.duration_s = duration_s;
  out.n_a = static_cast<int>(times_a.size());
  out.n_b = static_cast<int>(times_b.size());
  const double level =
      static_cast<double>(times_a.size()) * static_cast<double>(times_b.size()) /
      (duration_s * duration_s);
  out.independence_sqrt = std::sqrt(level);
  out.rows.reserve(static_cast<std::size_t>(n_bins));

  for (int k = -k_max; k <= k_max; ++k) {
    const double u = static_cast<double>(k) * tau;
    long long count = 0;
    for (double ta : times_a) {
      // Pair lags d = ta - tb fall in (u - tau/2, u + tau/2]; identical event
      // times are excluded so auto-correlograms do not count self-pairs.
      const double lo = ta - u - tau / 2.0;  // tb >= lo  <=>  d <= u + tau/2
      const double hi = ta - u + tau / 2.0;  // tb <  hi  <=>  d >  u - tau/2
      auto first = std::lower_bound(b_sorted.begin(), b_sorted.end(), lo);
      auto last = std::lower_bound(b_sorted.begin(), b_sorted.end(), hi);
      count += last - first;
      if (u - tau / 2.0 < 0.0 && 0.0 <= u + tau / 2.0) {
        auto eq = std::equal_range(b_sorted.begin(), b_sorted.end(), ta);
        count -= eq.second - eq.first;
      }
    }
    CorrelogramRow row;
    row.lag_s = u;
    row.pair_count = count;
    row.rho_hat = static_cast<double>(count) / (tau * duration_s);
    row.sqrt_rho = std::sqrt(row.rho_hat);
    row.independence_level = level;
    row.band_lo = std::max(0.0, out.independence_sqrt - z * sd_sqrt);
    row.band_hi = out.independence_sqrt + z * sd_sqrt;
    row.significant = row.sqrt_rho < row.band_lo || row.sqrt_rho > row.band_hi;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace ophmm
