#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nbode/types.hpp"

namespace nbode {

// Gaussian filter with reflecting boundaries, kernel truncated at 4 sigma.
std::vector<double> gaussian_smooth(std::span<const double> x, double sigma);

// Indices of local maxima; flat tops report their middle sample.
std::vector<std::size_t> find_peaks(std::span<const double> x);

// Topographic prominence of each peak.
std::vector<double> peak_prominences(std::span<const double> x, std::span<const std::size_t> peaks);

// Magnitude spectrum |rfft(x - mean(x))| of length N/2 + 1.
std::vector<double> magnitude_spectrum(std::span<const double> x);

/// Characteristic timescale of a set of uniformly sampled multivariate signals.
///
/// Each entry of `signals` is one trajectory (rows = samples, cols = dimensions).
/// Per dimension, the mean-removed magnitude spectra are averaged over
/// trajectories and smoothed; the most prominent peak beyond the smoothing
/// radius (4 * smoothing_bins bins from DC) gives a frequency, and the
/// result is the median over dimensions of the reciprocal frequencies.
/// Throws EstimationError if no dimension has a peak.
double timescale_from_signals(const std::vector<RowMat>& signals, double sample_dt,
                              double smoothing_bins = 2.0);

}  // namespace nbode
