#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "audeeg/dsp.h"
#include "audeeg/linalg.h"
#include "audeeg/retrieval.h"
#include "audeeg/table_io.h"

namespace audeeg::synth {

/// Paired audio/EEG items driven by a shared latent trajectory.
struct SynthSpec {
  std::size_t items = 30;
  std::size_t latent_dim = 4;
  double noise_sigma = 0.5;  ///< noise std as a multiple of each view's clean-signal std
  double seconds = 3.0;
  std::size_t classes = 4;
  bool artifacts = false;    ///< add mains hum and impulses to the EEG
  double mains_hz = 50.0;
  std::uint64_t seed = 1;

  bool operator==(const SynthSpec&) const = default;
};

struct SynthItem {
  std::string id;
  std::string subject;
  std::string label;
  dsp::SignalBuffer audio;  ///< 22050 Hz mono
  dsp::SignalBuffer eeg;    ///< 250 Hz, 16 channels
  linalg::Matrix latent;    ///< latent_dim × EEG samples, the shared source
  linalg::Vector latent_mean;
};

std::vector<SynthItem> generate(const SynthSpec& spec);

/// Writes audio/<id>.wav (16-bit PCM), eeg/<id>.csv and manifest.csv.
std::vector<io::ManifestRecord> write_dataset(const std::vector<SynthItem>& items,
                                              const std::filesystem::path& out_dir);

/// Two row-aligned feature views of a shared Gaussian latent:
/// view = tanh(W·z) + noise (or W·z + noise when `linear`).
struct FeatureSynthSpec {
  std::size_t items = 500;
  std::size_t latent_dim = 8;
  std::size_t dim_a = 32;
  std::size_t dim_b = 24;
  double noise_sigma = 0.1;
  std::size_t classes = 5;
  bool linear = false;
  std::uint64_t seed = 1;

  bool operator==(const FeatureSynthSpec&) const = default;
};

struct FeaturePair {
  retrieval::FeatureTable a;
  retrieval::FeatureTable b;
  linalg::Matrix latent;
};

FeaturePair generate_features(const FeatureSynthSpec& spec);

/// Deterministic k-means (first k points as seeds, fixed iteration cap).
std::vector<std::size_t> kmeans(const linalg::Matrix& points, std::size_t k,
                                std::size_t iterations = 100);

}  // namespace audeeg::synth
