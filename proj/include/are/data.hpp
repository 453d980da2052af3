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
// Trial/TrialSet containers, the on-disk trial format, the synthetic
// multi-user EEG generator and the preprocessing chain (band-pass,
// resample, chronological calibration split).

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "are/errors.hpp"
#include "are/rng.hpp"
#include "are/signal.hpp"
#include "are/tensor.hpp"

namespace are {

/// One EEG epoch: channels x time, task label and user identity.
struct Trial {
  Tensor signal;  // [c, t]
  int label = 1;  // 1..K
  int user = 1;   // 1..U
  float sample_rate_hz = 128.0f;
};

/// Ordered trial collection. Order is chronological and meaningful: the
/// calibration split takes the first fraction of the stored order.
struct TrialSet {
  std::vector<Trial> trials;
  int c = 0, t = 0, K = 0, U = 0;
  std::string name;

  size_t size() const { return trials.size(); }

  void validate() const {
    for (const auto& tr : trials) {
      if (tr.signal.ndim() != 2 || tr.signal.shape[0] != c ||
          tr.signal.shape[1] != t)
        throw ValidationError("trial shape does not match set (c,t)");
      if (tr.label < 1 || tr.label > K)
        throw ValidationError("trial label out of range {1..K}");
      if (tr.user < 1 || tr.user > U)
        throw ValidationError("trial user out of range {1..U}");
      if (!tr.signal.all_finite())
        throw ValidationError("non-finite trial sample");
    }
  }
};

/// Synthetic multi-user benchmark spec, shaped like the real MI datasets.
/// Class identity: band-limited oscillatory power on a class-specific
/// channel pair. User identity: user-specific spatial mixing (so
/// alignment helps) plus a user-specific additive pattern (so user-ID is
/// learnable, enabling the privacy probe).
struct SynthSpec {
  int c = 8;
  int t = 512;
  int K = 4;
  int U = 7;
  int trials_per_class_per_user = 40;
  float sample_rate_hz = 128.0f;
  std::vector<std::pair<float, float>> class_band_hz;  // defaults fill [8,30]
  float user_offset_scale = 0.25f;  // spatial mixing distortion strength
  float user_pattern_amp = 0.35f;   // additive user signature amplitude
  float snr = 3.0f;
  uint64_t seed = 0;

  void validate() const {
    if (c < 1 || t < 1 || K < 1 || U < 1 || trials_per_class_per_user < 1)
      throw ValidationError("synth spec counts must be >= 1");
    if (!(snr > 0.0f)) throw ValidationError("synth spec snr must be > 0");
    if (!(sample_rate_hz > 0.0f))
      throw ValidationError("synth spec sample rate must be > 0");
    if (!class_band_hz.empty() &&
        static_cast<int>(class_band_hz.size()) != K)
      throw ValidationError("class_band_hz must have one band per class");
  }

  static SynthSpec bnci_like() {
    SynthSpec s;
    s.c = 22;
    s.t = 512;
    s.K = 4;
    s.U = 9;
    s.trials_per_class_per_user = 36;
    return s;
  }
};

namespace detail {

inline std::vector<std::pair<float, float>> default_bands(int k_classes) {
  // split the MI-relevant [8, 30] Hz range into K sub-bands
  std::vector<std::pair<float, float>> bands;
  const float lo = 8.0f, hi = 30.0f;
  const float w = (hi - lo) / static_cast<float>(k_classes);
  for (int k = 0; k < k_classes; ++k)
    bands.emplace_back(lo + w * k, lo + w * (k + 1));
  return bands;
}

inline std::vector<float> pink_noise(Rng& rng, int n) {
  // one-pole filtered white noise, rescaled to unit RMS
  std::vector<float> x(static_cast<size_t>(n));
  double state = 0.0;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    state = 0.95 * state + rng.normal();
    x[static_cast<size_t>(i)] = static_cast<float>(state);
    ss += state * state;
  }
  const double rms = std::sqrt(ss / n) + 1e-12;
  for (auto& v : x) v = static_cast<float>(v / rms);
  return x;
}

}  // namespace detail

/// Deterministic for a fixed spec (including seed): every random draw is
/// keyed hierarchically off (seed, user, class, trial).
inline TrialSet generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto bands = spec.class_band_hz.empty() ? detail::default_bands(spec.K)
                                                : spec.class_band_hz;
  const int c = spec.c, t = spec.t;
  const double fs = spec.sample_rate_hz;
  const double two_pi = 6.283185307179586476925286766559;

  TrialSet out;
  out.c = c;
  out.t = t;
  out.K = spec.K;
  out.U = spec.U;
  out.name = "synthetic";
  out.trials.reserve(static_cast<size_t>(spec.U) * spec.K *
                     spec.trials_per_class_per_user);

  for (int u = 1; u <= spec.U; ++u) {
    // user-specific spatial mixing A_u = I + scale * Q_u
    Rng mix_rng(seed_mix(seed_mix(spec.seed, "mix"), static_cast<uint64_t>(u)));
    Tensor mix = Tensor::identity(c);
    const float q = spec.user_offset_scale / std::sqrt(static_cast<float>(c));
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j)
        mix.at(i, j) += q * mix_rng.uniform_f(-1.0f, 1.0f);

    // user-specific additive signature: unit spatial vector x 3-sinusoid
    // temporal pattern, constant across the user's trials
    Rng pat_rng(seed_mix(seed_mix(spec.seed, "pattern"), static_cast<uint64_t>(u)));
    std::vector<float> spatial(static_cast<size_t>(c));
    double norm = 0.0;
    for (auto& v : spatial) {
      v = pat_rng.uniform_f(-1.0f, 1.0f);
      norm += double(v) * v;
    }
    norm = std::sqrt(norm) + 1e-12;
    for (auto& v : spatial) v = static_cast<float>(v / norm);
    double pf[3], pp[3];
    for (int j = 0; j < 3; ++j) {
      pf[j] = pat_rng.uniform(8.0, 30.0);
      pp[j] = pat_rng.uniform(0.0, two_pi);
    }
    std::vector<float> pattern_t(static_cast<size_t>(t));
    double prms = 0.0;
    for (int i = 0; i < t; ++i) {
      double v = 0.0;
      for (int j = 0; j < 3; ++j)
        v += std::sin(two_pi * pf[j] * i / fs + pp[j]);
      pattern_t[static_cast<size_t>(i)] = static_cast<float>(v);
      prms += v * v;
    }
    prms = std::sqrt(prms / t) + 1e-12;
    for (auto& v : pattern_t) v = static_cast<float>(v / prms);

    for (int rep = 0; rep < spec.trials_per_class_per_user; ++rep) {
      for (int k = 1; k <= spec.K; ++k) {
        Rng rng(seed_mix(seed_mix(seed_mix(spec.seed, static_cast<uint64_t>(u)),
                                  static_cast<uint64_t>(k)),
                         static_cast<uint64_t>(rep)));
        Tensor base({c, t});
        // class oscillation on 2 class-specific channels, fixed per-class
        // frequencies, small per-trial phase/amplitude jitter
        const auto [blo, bhi] = bands[static_cast<size_t>(k - 1)];
        const double f1 = blo + 0.3 * (bhi - blo);
        const double f2 = blo + 0.7 * (bhi - blo);
        const float amp = 1.0f + rng.uniform_f(-0.1f, 0.1f);
        const double ph1 = rng.uniform(-0.1, 0.1);
        const double ph2 = rng.uniform(-0.1, 0.1);
        for (int which = 0; which < 2; ++which) {
          const int ch = (2 * (k - 1) + which) % c;
          for (int i = 0; i < t; ++i) {
            const double tau = i / fs;
            base.at(ch, i) +=
                amp * static_cast<float>(std::sin(two_pi * f1 * tau + ph1) +
                                         0.6 * std::sin(two_pi * f2 * tau + ph2));
          }
        }
        // pink + white noise on every channel, scaled by 1/snr
        const float noise_amp = 1.0f / spec.snr;
        for (int ch = 0; ch < c; ++ch) {
          auto pink = detail::pink_noise(rng, t);
          for (int i = 0; i < t; ++i)
            base.at(ch, i) += noise_amp * (0.7f * pink[static_cast<size_t>(i)] +
                                           0.3f * static_cast<float>(rng.normal()));
        }
        // mix spatially, then add the user signature
        Tensor sig = matmul(mix, base);
        for (int ch = 0; ch < c; ++ch)
          for (int i = 0; i < t; ++i)
            sig.at(ch, i) += spec.user_pattern_amp * spatial[static_cast<size_t>(ch)] *
                             pattern_t[static_cast<size_t>(i)];
        Trial tr;
        tr.signal = std::move(sig);
        tr.label = k;
        tr.user = u;
        tr.sample_rate_hz = spec.sample_rate_hz;
        out.trials.push_back(std::move(tr));
      }
    }
  }
  return out;
}

/// Linear-phase FIR band-pass, zero-phase application.
inline Trial bandpass(const Trial& trial, double lo_hz, double hi_hz) {
  if (!(lo_hz > 0.0) || !(hi_hz > lo_hz) ||
      !(hi_hz < trial.sample_rate_hz / 2.0))
    throw ValidationError("bandpass: need 0 < lo < hi < fs/2");
  const auto taps = signal::bandpass_taps(lo_hz, hi_hz, trial.sample_rate_hz);
  const int c = trial.signal.shape[0], t = trial.signal.shape[1];
  Trial out = trial;
  for (int ch = 0; ch < c; ++ch) {
    std::vector<float> row(trial.signal.data.begin() + static_cast<long>(ch) * t,
                           trial.signal.data.begin() + static_cast<long>(ch + 1) * t);
    auto filtered = signal::filtfilt(row, taps);
    std::copy(filtered.begin(), filtered.end(),
              out.signal.data.begin() + static_cast<long>(ch) * t);
  }
  return out;
}

/// Downsampling only; integer decimation, with the rational zero-stuffing
/// path for ratios like 200 -> 128 Hz (x16 up, /25 down).
inline Trial resample(const Trial& trial, double target_hz) {
  const double fs = trial.sample_rate_hz;
  if (target_hz > fs)
    throw UnsupportedError("resample: upsampling is not supported");
  if (target_hz <= 0.0) throw ValidationError("resample: bad target rate");
  if (target_hz == fs) return trial;

  // reduce target/fs to a small rational up/down
  int up = 0, down = 0;
  for (int d = 1; d <= 64 && up == 0; ++d) {
    const double u = target_hz * d / fs;
    if (std::fabs(u - std::lround(u)) < 1e-9 && std::lround(u) >= 1) {
      up = static_cast<int>(std::lround(u));
      down = d;
    }
  }
  if (up == 0)
    throw UnsupportedError("resample: ratio has no small rational form");

  const int c = trial.signal.shape[0], t = trial.signal.shape[1];
  Trial out = trial;
  out.sample_rate_hz = static_cast<float>(target_hz);
  std::vector<std::vector<float>> rows;
  rows.reserve(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    std::vector<float> row(trial.signal.data.begin() + static_cast<long>(ch) * t,
                           trial.signal.data.begin() + static_cast<long>(ch + 1) * t);
    rows.push_back(up == 1 ? signal::decimate(row, down)
                           : signal::resample_rational(row, up, down));
  }
  const int t_out = static_cast<int>(rows[0].size());
  out.signal = Tensor({c, t_out});
  for (int ch = 0; ch < c; ++ch)
    std::copy(rows[static_cast<size_t>(ch)].begin(), rows[static_cast<size_t>(ch)].end(),
              out.signal.data.begin() + static_cast<long>(ch) * t_out);
  return out;
}

/// Chronological split: first floor(fraction*N) trials are calibration,
/// the rest are test. No shuffling.
inline std::pair<TrialSet, TrialSet> split_calibration(const TrialSet& ts,
                                                       double fraction) {
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw ValidationError("split fraction must be in (0,1)");
  const size_t n = ts.trials.size();
  const size_t n_cal = static_cast<size_t>(fraction * static_cast<double>(n));
  if (n_cal == 0 || n_cal == n)
    throw ValidationError("split leaves an empty side");
  TrialSet cal = ts, test = ts;
  cal.trials.assign(ts.trials.begin(), ts.trials.begin() + static_cast<long>(n_cal));
  test.trials.assign(ts.trials.begin() + static_cast<long>(n_cal), ts.trials.end());
  cal.name = ts.name + "/calibration";
  test.name = ts.name + "/test";
  return {std::move(cal), std::move(test)};
}

// ---- on-disk trial format -------------------------------------------------
// magic "EEGT", u16 version=1, LE u32 {n_trials, c, t, K, U},
// f32 sample_rate_hz, then per trial: u16 label, u16 user, c*t f32 samples.
// Sidecar JSON manifest at <basename>.json.

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

inline std::string manifest_path(const std::string& path) {
  auto dot = path.find_last_of('.');
  auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + ".json";
  return path.substr(0, dot) + ".json";
}

inline std::string utc_now() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace detail

inline void save_trialset(const TrialSet& ts, const std::string& path,
                          const nlohmann::json& manifest_extra = {}) {
  ts.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("EEGT", 4);
  detail::write_pod<uint16_t>(os, 1);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.trials.size()));
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.c));
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.t));
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.K));
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.U));
  const float fs = ts.trials.empty() ? 128.0f : ts.trials[0].sample_rate_hz;
  detail::write_pod<float>(os, fs);
  for (const auto& tr : ts.trials) {
    detail::write_pod<uint16_t>(os, static_cast<uint16_t>(tr.label));
    detail::write_pod<uint16_t>(os, static_cast<uint16_t>(tr.user));
    os.write(reinterpret_cast<const char*>(tr.signal.data.data()),
             static_cast<std::streamsize>(tr.signal.data.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
  os.close();

  nlohmann::json manifest = manifest_extra;
  manifest["name"] = ts.name;
  manifest["created_utc"] = detail::utc_now();
  std::ofstream ms(detail::manifest_path(path));
  if (!ms) throw IoError("cannot write manifest for: " + path);
  ms << manifest.dump(2) << "\n";
}

inline TrialSet load_trialset(const std::string& path,
                              nlohmann::json* manifest_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EEGT", 4) != 0)
    throw FormatError("bad magic: expected \"EEGT\"");
  const auto version = detail::read_pod<uint16_t>(is, "version");
  if (version != 1)
    throw FormatError("unsupported trial-file version " + std::to_string(version));
  TrialSet ts;
  const auto n = detail::read_pod<uint32_t>(is, "n_trials");
  ts.c = static_cast<int>(detail::read_pod<uint32_t>(is, "c"));
  ts.t = static_cast<int>(detail::read_pod<uint32_t>(is, "t"));
  ts.K = static_cast<int>(detail::read_pod<uint32_t>(is, "K"));
  ts.U = static_cast<int>(detail::read_pod<uint32_t>(is, "U"));
  const float fs = detail::read_pod<float>(is, "sample_rate_hz");
  if (ts.c <= 0 || ts.t <= 0 || ts.K <= 0 || ts.U <= 0)
    throw FormatError("non-positive dimension in header");
  ts.trials.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Trial tr;
    tr.label = detail::read_pod<uint16_t>(is, "label");
    tr.user = detail::read_pod<uint16_t>(is, "user");
    tr.sample_rate_hz = fs;
    std::vector<float> payload(static_cast<size_t>(ts.c) * ts.t);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!is)
      throw FormatError("truncated file: declared " + std::to_string(n) +
                        " trials, failed at trial " + std::to_string(i + 1));
    for (float v : payload)
      if (!std::isfinite(v))
        throw FormatError("non-finite sample in trial " + std::to_string(i + 1));
    tr.signal = Tensor({ts.c, ts.t}, std::move(payload));
    ts.trials.push_back(std::move(tr));
  }
  ts.validate();

  std::ifstream ms(detail::manifest_path(path));
  if (ms) {
    nlohmann::json manifest = nlohmann::json::parse(ms, nullptr, false);
    if (!manifest.is_discarded()) {
      if (manifest.contains("name")) ts.name = manifest["name"].get<std::string>();
      if (manifest_out) *manifest_out = manifest;
    }
  }
  return ts;
}

}  // namespace are
