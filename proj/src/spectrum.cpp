#include "nbode/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "nbode/errors.hpp"

namespace nbode {

std::vector<double> gaussian_smooth(std::span<const double> x, double sigma) {
  const auto n = static_cast<long>(x.size());
  if (n == 0 || sigma <= 0.0) return {x.begin(), x.end()};
  const long radius = static_cast<long>(4.0 * sigma + 0.5);
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  for (long k = -radius; k <= radius; ++k) {
    w[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * (k * k) / (sigma * sigma));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;

  // Half-sample symmetric reflection: ... x1 x0 | x0 x1 ...
  auto at = [&](long i) {
    const long period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    if (i >= n) i = period - 1 - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(x.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -radius; k <= radius; ++k) acc += w[static_cast<std::size_t>(k + radius)] * at(i + k);
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<std::size_t> find_peaks(std::span<const double> x) {
  std::vector<std::size_t> peaks;
  const std::size_t n = x.size();
  std::size_t i = 1;
  while (n >= 3 && i + 1 < n) {
    if (x[i - 1] < x[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && x[ahead] == x[i]) ++ahead;
      if (x[ahead] < x[i]) {
        peaks.push_back((i + ahead - 1) / 2);
        i = ahead;
      }
    }
    ++i;
  }
  return peaks;
}

std::vector<double> peak_prominences(std::span<const double> x, std::span<const std::size_t> peaks) {
  std::vector<double> prom;
  prom.reserve(peaks.size());
  for (std::size_t p : peaks) {
    const double h = x[p];
    double left_min = h;
    for (std::size_t j = p + 1; j-- > 0;) {
      if (x[j] > h) break;
      left_min = std::min(left_min, x[j]);
    }
    double right_min = h;
    for (std::size_t j = p; j < x.size(); ++j) {
      if (x[j] > h) break;
      right_min = std::min(right_min, x[j]);
    }
    prom.push_back(h - std::max(left_min, right_min));
  }
  return prom;
}

std::vector<double> magnitude_spectrum(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 4) throw EstimationError("signal too short for a spectrum");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  for (int i = 0; i < n; ++i) in[i] = x[static_cast<std::size_t>(i)] - mean;
  fftw_execute(plan);
  std::vector<double> mag(static_cast<std::size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) mag[static_cast<std::size_t>(k)] = std::hypot(out[k][0], out[k][1]);
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return mag;
}

double timescale_from_signals(const std::vector<RowMat>& signals, double sample_dt,
                              double smoothing_bins) {
  if (signals.empty()) throw EstimationError("no signals for timescale estimation");
  const Eigen::Index n = signals.front().rows();
  const Eigen::Index d = signals.front().cols();
  for (const auto& s : signals) {
    if (s.rows() != n || s.cols() != d) throw ArgumentError("signals must share shape");
  }
  const double freq_step = 1.0 / (static_cast<double>(n) * sample_dt);

  std::vector<double> periods;
  for (Eigen::Index dim = 0; dim < d; ++dim) {
    std::vector<double> avg(static_cast<std::size_t>(n / 2 + 1), 0.0);
    double scale = 0.0;
    for (const auto& s : signals) {
      std::vector<double> col(static_cast<std::size_t>(n));
      for (Eigen::Index r = 0; r < n; ++r) {
        col[static_cast<std::size_t>(r)] = s(r, dim);
        scale = std::max(scale, std::abs(s(r, dim)));
      }
      const auto mag = magnitude_spectrum(col);
      for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += mag[k];
    }
    for (double& v : avg) v /= static_cast<double>(signals.size());
    const auto smooth = gaussian_smooth(avg, smoothing_bins);
    const auto peaks = find_peaks(smooth);
    const auto prom = peak_prominences(smooth, peaks);
    // Round-off ripple in the spectrum of a (near) constant signal is not a peak.
    const double floor = 1e-10 * scale * static_cast<double>(n);
    // Mean removal zeroes bin 0, and smoothing then turns the low-frequency
    // edge of a broadband spectrum into a peak a few bins from DC.
    const auto edge = static_cast<std::size_t>(4.0 * smoothing_bins + 0.5);
    double best = floor;
    std::size_t best_bin = 0;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      if (peaks[i] > edge && prom[i] > best) {
        best = prom[i];
        best_bin = peaks[i];
      }
    }
    if (best_bin > 0) periods.push_back(1.0 / (static_cast<double>(best_bin) * freq_step));
  }
  if (periods.empty()) throw EstimationError("no spectral peak found in any dimension");
  std::sort(periods.begin(), periods.end());
  const std::size_t k = periods.size();
  return k % 2 == 1 ? periods[k / 2] : 0.5 * (periods[k / 2 - 1] + periods[k / 2]);
}

}  // namespace nbode
