// Copyright 2026 The are-bci Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Windowed-sinc FIR filtering and sample-rate conversion. Filters are
// applied zero-phase (filter, reverse, filter, reverse) so epoch timing is
// never skewed; that squares the magnitude response, which the designs
// below account for.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "are/errors.hpp"

namespace are {
namespace signal {

inline double sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  const double px = 3.14159265358979323846 * x;
  return std::sin(px) / px;
}

/// Hamming-windowed lowpass prototype, cutoff as a fraction of fs.
inline std::vector<double> lowpass_taps(double cutoff_frac, int n_taps) {
  std::vector<double> h(static_cast<size_t>(n_taps));
  const int m = n_taps - 1;
  double sum = 0.0;
  for (int i = 0; i < n_taps; ++i) {
    const double w =
        0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 * i / m);
    const double v = 2.0 * cutoff_frac * sinc(2.0 * cutoff_frac * (i - m / 2.0));
    h[static_cast<size_t>(i)] = v * w;
    sum += h[static_cast<size_t>(i)];
  }
  for (auto& v : h) v /= sum;  // unit DC gain
  return h;
}

/// Band-pass as the difference of two lowpass designs. Tap count scales
/// with the sample rate so the transition band stays ~4 Hz wide
/// (101 taps at 128 Hz).
inline std::vector<double> bandpass_taps(double lo_hz, double hi_hz,
                                         double fs_hz, int n_taps = 0) {
  if (!(lo_hz > 0.0) || !(hi_hz > lo_hz) || !(hi_hz < fs_hz / 2.0))
    throw ValidationError("bandpass: need 0 < lo < hi < fs/2");
  if (n_taps <= 0) {
    n_taps = static_cast<int>(std::lround(101.0 * fs_hz / 128.0));
    if (n_taps % 2 == 0) ++n_taps;
    n_taps = std::max(n_taps, 31);
  }
  auto hi = lowpass_taps(hi_hz / fs_hz, n_taps);
  auto lo = lowpass_taps(lo_hz / fs_hz, n_taps);
  for (size_t i = 0; i < hi.size(); ++i) hi[i] -= lo[i];
  return hi;
}

/// Single-pass FIR with zero padding, output length == input length,
/// group delay (n_taps-1)/2 left in place.
inline std::vector<float> fir_same(const std::vector<float>& x,
                                   const std::vector<double>& h) {
  const int n = static_cast<int>(x.size());
  const int nt = static_cast<int>(h.size());
  const int delay = (nt - 1) / 2;
  std::vector<float> y(static_cast<size_t>(n), 0.0f);
  for (int i = 0; i < n; ++i) {
    const int center = i + delay;
    double s = 0.0;
    const int k0 = std::max(0, center - n + 1);
    const int k1 = std::min(nt, center + 1);
    for (int k = k0; k < k1; ++k) s += h[static_cast<size_t>(k)] * x[static_cast<size_t>(center - k)];
    y[static_cast<size_t>(i)] = static_cast<float>(s);
  }
  return y;
}

/// Zero-phase application: forward pass, reverse, forward pass, reverse.
inline std::vector<float> filtfilt(const std::vector<float>& x,
                                   const std::vector<double>& h) {
  std::vector<float> y = fir_same(x, h);
  std::reverse(y.begin(), y.end());
  y = fir_same(y, h);
  std::reverse(y.begin(), y.end());
  return y;
}

/// Integer decimation with anti-alias lowpass (single forward-backward
/// pass). Output length: ceil(n / factor) starting at sample 0.
inline std::vector<float> decimate(const std::vector<float>& x, int factor) {
  if (factor < 1) throw ValidationError("decimate: factor must be >= 1");
  if (factor == 1) return x;
  const double cutoff = 0.45 / factor;
  auto h = lowpass_taps(cutoff, 1 + 32 * factor);
  auto filtered = filtfilt(x, h);
  std::vector<float> y;
  y.reserve(x.size() / static_cast<size_t>(factor) + 1);
  for (size_t i = 0; i < x.size(); i += static_cast<size_t>(factor))
    y.push_back(filtered[i]);
  return y;
}

/// Rational resampling: zero-stuff by up, lowpass, take every down-th
/// sample. Used for the 200 -> 128 Hz case (up=16, down=25).
inline std::vector<float> resample_rational(const std::vector<float>& x,
                                            int up, int down) {
  if (up < 1 || down < 1) throw ValidationError("resample: bad ratio");
  if (up == 1) return decimate(x, down);
  std::vector<float> stuffed(x.size() * static_cast<size_t>(up), 0.0f);
  for (size_t i = 0; i < x.size(); ++i)
    stuffed[i * static_cast<size_t>(up)] = x[i] * static_cast<float>(up);
  const double cutoff = 0.45 / std::max(up, down);
  auto h = lowpass_taps(cutoff, 1 + 16 * std::max(up, down));
  auto filtered = filtfilt(stuffed, h);
  const int64_t n_out = static_cast<int64_t>(
      std::llround(static_cast<double>(x.size()) * up / down));
  std::vector<float> y(static_cast<size_t>(n_out));
  for (int64_t i = 0; i < n_out; ++i) {
    const size_t src = static_cast<size_t>(i) * static_cast<size_t>(down);
    y[static_cast<size_t>(i)] = src < filtered.size() ? filtered[src] : 0.0f;
  }
  return y;
}

}  // namespace signal
}  // namespace are
