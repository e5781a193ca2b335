#include "audeeg/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "audeeg/audio_io.h"
#include "audeeg/error.h"
#include "audeeg/rng.h"

namespace audeeg::synth {

using linalg::Matrix;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kAudioRate = 22050.0;
constexpr double kEegRate = 250.0;
constexpr std::size_t kEegChannels = 16;
constexpr std::size_t kComponents = 3;  // sinusoids per latent dimension

struct Trajectory {
  linalg::Vector mean;
  // [dim][component]
  std::vector<std::array<double, kComponents>> amp, freq, phase;

  double at(std::size_t k, double t) const {
    double v = mean[k];
    for (std::size_t j = 0; j < kComponents; ++j) v += amp[k][j] * std::sin(kTwoPi * freq[k][j] * t + phase[k][j]);
    return v;
  }
};

double stddev(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

void validate(const SynthSpec& s) {
  if (s.items < 1 || s.latent_dim < 1 || s.classes < 1 || s.classes > s.items) {
    throw ValidationError("synth needs items >= classes >= 1 and latent_dim >= 1");
  }
  if (!(s.seconds > 0.0) || !(s.noise_sigma >= 0.0)) {
    throw ValidationError("synth needs seconds > 0 and noise_sigma >= 0");
  }
  if (!(s.mains_hz > 0.0 && s.mains_hz < kEegRate / 2)) throw ValidationError("mains_hz must be below 125 Hz");
}

}  // namespace

std::vector<std::size_t> kmeans(const Matrix& p, std::size_t k, std::size_t iterations) {
  const std::size_t n = p.rows(), d = p.cols();
  if (k < 1 || k > n) throw ValidationError("kmeans needs 1 <= k <= points");
  Matrix centers(k, d);
  for (std::size_t c = 0; c < k; ++c)
    std::copy(p.row(c).begin(), p.row(c).end(), centers.row(c).begin());
  std::vector<std::size_t> assign(n, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < k; ++c) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) dist += (p(i, j) - centers(c, j)) * (p(i, j) - centers(c, j));
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    Matrix sum(k, d);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sum(assign[i], j) += p(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (count[c])
        for (std::size_t j = 0; j < d; ++j) centers(c, j) = sum(c, j) / static_cast<double>(count[c]);
  }
  return assign;
}

std::vector<SynthItem> generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t L = spec.latent_dim;

  // Maps shared by every item.
  Rng maps(mix_seed(spec.seed, 11));
  Matrix mix(kEegChannels, L);
  // Loadings share a positive part so that channels are coherent, as scalp
  // electrodes are through volume conduction.
  for (auto& v : mix.values()) v = (1.0 + 0.5 * maps.normal()) / std::sqrt(static_cast<double>(L));
  {
    // Neighbouring electrodes see similar mixtures.
    Matrix smooth(kEegChannels, L);
    for (std::size_t c = 0; c < kEegChannels; ++c)
      for (std::size_t k = 0; k < L; ++k) {
        const double left = mix(c == 0 ? c : c - 1, k);
        const double right = mix(c + 1 == kEegChannels ? c : c + 1, k);
        smooth(c, k) = 0.25 * left + 0.5 * mix(c, k) + 0.25 * right;
      }
    mix = smooth;
  }
  std::vector<double> carrier(L), carrier_phase(L), baseband(L);
  for (std::size_t k = 0; k < L; ++k) {
    carrier[k] = 200.0 + 150.0 * static_cast<double>(k);
    carrier_phase[k] = maps.uniform(0.0, kTwoPi);
    baseband[k] = maps.normal() / std::sqrt(static_cast<double>(L));
  }

  const std::size_t na = static_cast<std::size_t>(std::llround(spec.seconds * kAudioRate));
  const std::size_t ne = static_cast<std::size_t>(std::llround(spec.seconds * kEegRate));
  std::vector<SynthItem> items(spec.items);
  Matrix means(spec.items, L);
  for (std::size_t i = 0; i < spec.items; ++i) {
    Rng rng(mix_seed(spec.seed, 12, i));
    Trajectory z;
    z.mean.resize(L);
    z.amp.resize(L);
    z.freq.resize(L);
    z.phase.resize(L);
    for (std::size_t k = 0; k < L; ++k) {
      z.mean[k] = rng.normal();
      for (std::size_t j = 0; j < kComponents; ++j) {
        z.amp[k][j] = rng.uniform(0.5, 1.0);
        z.freq[k][j] = rng.uniform(1.0, 8.0);
        z.phase[k][j] = rng.uniform(0.0, kTwoPi);
      }
    }
    SynthItem& item = items[i];
    item.id = numbered("item", i, 3);
    item.subject = numbered("s", i / 2, 2);
    item.latent_mean = z.mean;
    std::copy(z.mean.begin(), z.mean.end(), means.row(i).begin());

    item.latent = Matrix(L, ne);
    dsp::SignalBuffer eeg(kEegChannels, ne, kEegRate);
    for (std::size_t t = 0; t < ne; ++t) {
      const double time = static_cast<double>(t) / kEegRate;
      for (std::size_t k = 0; k < L; ++k) item.latent(k, t) = z.at(k, time);
      for (std::size_t c = 0; c < kEegChannels; ++c) {
        double v = 0.0;
        for (std::size_t k = 0; k < L; ++k) v += mix(c, k) * item.latent(k, t);
        eeg.at(c, t) = v;
      }
    }
    dsp::SignalBuffer audio(1, na, kAudioRate);
    std::vector<double> zt(L);
    for (std::size_t t = 0; t < na; ++t) {
      const double time = static_cast<double>(t) / kAudioRate;
      double v = 0.0;
      for (std::size_t k = 0; k < L; ++k) {
        zt[k] = z.at(k, time);
        v += 0.3 * (1.0 + 0.3 * zt[k]) * std::cos(kTwoPi * carrier[k] * time + carrier_phase[k]);
        v += 0.3 * baseband[k] * zt[k];
      }
      audio.at(0, t) = v;
    }

    Rng noise(mix_seed(spec.seed, 13, i));
    if (spec.noise_sigma > 0.0) {
      const double sa = spec.noise_sigma * stddev(audio.channel(0));
      for (auto& v : audio.channel(0)) v += sa * noise.normal();
      double se = 0.0;
      for (std::size_t c = 0; c < kEegChannels; ++c) se += stddev(eeg.channel(c));
      se *= spec.noise_sigma / static_cast<double>(kEegChannels);
      for (std::size_t c = 0; c < kEegChannels; ++c)
        for (auto& v : eeg.channel(c)) v += se * noise.normal();
    }
    if (spec.artifacts) {
      Rng art(mix_seed(spec.seed, 14, i));
      double level = 0.0;
      for (std::size_t c = 0; c < kEegChannels; ++c) level += stddev(eeg.channel(c));
      level /= static_cast<double>(kEegChannels);
      for (std::size_t c = 0; c < kEegChannels; ++c) {
        const double ph = art.uniform(0.0, kTwoPi);
        for (std::size_t t = 0; t < ne; ++t)
          eeg.at(c, t) += level * std::sin(kTwoPi * spec.mains_hz * static_cast<double>(t) / kEegRate + ph);
      }
      const std::size_t spikes = std::max<std::size_t>(1, static_cast<std::size_t>(spec.seconds / 1.5));
      for (std::size_t s = 0; s < spikes; ++s) {
        const std::size_t c = static_cast<std::size_t>(art.below(kEegChannels));
        const std::size_t t = static_cast<std::size_t>(art.below(ne));
        eeg.at(c, t) += 20.0 * level * (art.uniform() < 0.5 ? -1.0 : 1.0);
      }
    }
    double peak = 0.0;
    for (double v : audio.channel(0)) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
      for (auto& v : audio.channel(0)) v *= 0.9 / peak;
    item.audio = std::move(audio);
    item.eeg = std::move(eeg);
  }
  const auto cls = kmeans(means, spec.classes);
  for (std::size_t i = 0; i < spec.items; ++i) items[i].label = numbered("c", cls[i], 1);
  return items;
}

std::vector<io::ManifestRecord> write_dataset(const std::vector<SynthItem>& items,
                                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "audio", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "eeg", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<io::ManifestRecord> records;
  for (const auto& item : items) {
    const std::string audio_rel = "audio/" + item.id + ".wav";
    const std::string eeg_rel = "eeg/" + item.id + ".csv";
    io::write_wav(out_dir / audio_rel, item.audio, io::WavFormat::pcm16);
    io::write_text_atomic(out_dir / eeg_rel, io::format_eeg_csv(item.eeg));
    records.push_back({audio_rel, eeg_rel, item.subject, item.label});
  }
  io::write_text_atomic(out_dir / "manifest.csv", io::format_manifest(records));
  return records;
}

FeaturePair generate_features(const FeatureSynthSpec& s) {
  if (s.items < 2 || s.latent_dim < 1 || s.dim_a < 1 || s.dim_b < 1 || s.classes < 1 ||
      s.classes > s.items || !(s.noise_sigma >= 0.0)) {
    throw ValidationError("invalid feature synth parameters");
  }
  Rng maps(mix_seed(s.seed, 21));
  Matrix wa(s.dim_a, s.latent_dim), wb(s.dim_b, s.latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.latent_dim));
  for (auto& v : wa.values()) v = maps.normal() * scale;
  for (auto& v : wb.values()) v = maps.normal() * scale;

  Rng rng(mix_seed(s.seed, 22));
  FeaturePair out;
  out.latent = Matrix(s.items, s.latent_dim);
  for (auto& v : out.latent.values()) v = rng.normal();
  auto view = [&](const Matrix& w, std::uint64_t stream) {
    Matrix x = linalg::matmul_nt(out.latent, w);
    Rng noise(mix_seed(s.seed, 23, stream));
    for (auto& v : x.values()) v = (s.linear ? v : std::tanh(v)) + s.noise_sigma * noise.normal();
    return x;
  };
  out.a.vectors = view(wa, 1);
  out.b.vectors = view(wb, 2);
  const auto cls = kmeans(out.latent, s.classes);
  for (std::size_t i = 0; i < s.items; ++i) {
    out.a.ids.push_back(numbered("item", i, 4));
    out.a.labels.push_back(numbered("c", cls[i], 1));
  }
  out.b.ids = out.a.ids;
  out.b.labels = out.a.labels;
  return out;
}

}  // namespace audeeg::synth
