#pragma once

#include <vector>

#include "ophmm/common.hpp"

namespace ophmm {

// One second-order IIR section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Butterworth band-pass filter of the given analogue-prototype order, realised
// as a cascade of `order` biquad sections (2*order poles total) via the
// bilinear transform with frequency pre-warping.
std::vector<Biquad> butterworth_bandpass(int order, double low_hz, double high_hz, double fs_hz);

// Complex gain magnitude of the cascade at frequency f (Hz).
double cascade_gain(const std::vector<Biquad>& sos, double f_hz, double fs_hz);

// Single forward pass of the cascade over x (zero initial state).
Vec sos_filter(const std::vector<Biquad>& sos, const Vec& x);

// Zero-phase filtering: odd-reflect padding, forward pass, time reversal,
// second pass, reversal, unpad.  Throws data_error when the trace is shorter
// than the warm-up pad.
Vec filtfilt(const std::vector<Biquad>& sos, const Vec& x);

struct SwrConfig {
  double fs_hz = 1250.0;          // sampling rate of the LFP trace
  double low_hz = 120.0;          // ripple band lower edge
  double high_hz = 250.0;         // ripple band upper edge
  int filter_order = 4;           // analogue prototype order
  double threshold_sd = 3.5;      // envelope threshold: mean + threshold_sd * SD
  double min_duration_s = 0.030;  // event duration bounds
  double max_duration_s = 0.500;
  double min_amplitude_uv = 20.0;  // peak envelope bounds
  double max_amplitude_uv = 800.0;
  double merge_gap_s = 0.050;  // events closer than this are merged

  void validate() const;
};

struct SwrEvent {
  double start_s = 0.0;
  double end_s = 0.0;
  double peak_s = 0.0;    // time of the envelope maximum; the event timestamp
  double peak_uv = 0.0;   // envelope value at the peak
};

struct SwrResult {
  std::vector<SwrEvent> events;
  double threshold_uv = 0.0;  // realised envelope threshold
  double envelope_mean = 0.0;
  double envelope_sd = 0.0;
};

// Detect sharp-wave ripple events in a raw LFP trace sampled at fs_hz starting
// at time t0_s.  Band-pass -> rectified envelope -> threshold crossings ->
// gap merging -> duration and amplitude gates.
SwrResult detect_swr(const Vec& lfp_uv, double t0_s, const SwrConfig& cfg);

struct CorrelogramConfig {
  double bin_width_s = 0.25;  // tau
  double max_lag_s = 5.0;
  double alpha = 0.05;  // family-wise error rate for the significance band

  void validate() const;
};

struct CorrelogramRow {
  double lag_s = 0.0;      // bin centre u
  long long pair_count = 0;  // J(u)
  double rho_hat = 0.0;      // J / (tau * duration)
  double sqrt_rho = 0.0;
  double independence_level = 0.0;  // expected rho under independence
  double band_lo = 0.0;  // significance band on the sqrt-rho scale
  double band_hi = 0.0;
  bool significant = false;  // sqrt_rho outside [band_lo, band_hi]
};

struct Correlogram {
  std::vector<CorrelogramRow> rows;
  double duration_s = 0.0;
  double independence_sqrt = 0.0;  // sqrt of the independence level
  int n_a = 0;
  int n_b = 0;
};

// Smoothed cross-correlation of two event-time series observed over
// [0, duration]: pair counts J(u) in windows (u - tau/2, u + tau/2] around the
// bin centres u = k*tau, k = -K..K with K = round(max_lag / tau), the rate
// estimate rho_hat, and a Bonferroni-corrected normal band for sqrt(rho_hat)
// around the independence level.
Correlogram cross_correlogram(const std::vector<double>& times_a, const std::vector<double>& times_b,
                              double duration_s, const CorrelogramConfig& cfg);

// Standard normal quantile function (Acklam's rational approximation refined
// with one Halley step; |error| < 1e-12 on (0, 1)).
double normal_quantile(double p);

}  // namespace ophmm
