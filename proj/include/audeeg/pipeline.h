#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "audeeg/dsp.h"
#include "audeeg/linalg.h"
#include "audeeg/nn.h"
#include "audeeg/optim.h"
#include "audeeg/wavelet.h"

namespace audeeg::pipeline {

inline constexpr double kAudioRate = 22050.0;
inline constexpr double kEegRate = 250.0;
inline constexpr std::size_t kEegChannels = 16;
inline constexpr double kChunkSeconds = 1.5;
inline constexpr std::size_t kEmbeddingDim = 128;

/// Samples per chunk at the given rate; 33075 for audio, 375 for EEG.
std::size_t chunk_samples(double rate, double seconds = kChunkSeconds);

std::vector<nn::LayerSpec> audio_branch();
std::vector<nn::LayerSpec> eeg_branch();
nn::Shape audio_input_shape();
nn::Shape eeg_input_shape();

struct PreprocessConfig {
  bool enabled = true;
  double highpass_hz = 0.5;
  double highpass_q = 0.7071067811865476;
  std::size_t highpass_cascade = 1;
  double notch_hz = 50.0;
  double notch_q = 30.0;
  std::size_t notch_cascade = 2;
  double war_multiplier = 5.0;
  bool war_zero = false;
  double wsd_threshold = 0.5;
  std::size_t wsd_window = 16;
  wavelet::Family family = wavelet::Family::db2;
  std::size_t wavelet_levels = 0;  ///< 0 = min(6, max admissible)

  bool operator==(const PreprocessConfig&) const = default;
};

/// High-pass, notch, WAR, per-channel scaling, then WSD.
dsp::SignalBuffer preprocess_eeg(const dsp::SignalBuffer& eeg, const PreprocessConfig& config);
/// Global min-max scaling of the whole song.
dsp::SignalBuffer preprocess_audio(const dsp::SignalBuffer& audio, const PreprocessConfig& config);

/// Consecutive non-overlapping chunks; a trailing partial chunk is dropped.
std::vector<dsp::SignalBuffer> chunk(const dsp::SignalBuffer& sig, double seconds = kChunkSeconds);

/// A preprocessed stimulus with its aligned recording.
struct Recording {
  std::string id;
  std::string subject;
  std::string label;
  dsp::SignalBuffer audio;
  dsp::SignalBuffer eeg;
};

/// Chunk tensors of every recording, stored once in 32-bit form
/// ([33075][1] audio and [375][16] EEG per chunk).
struct ChunkSet {
  std::vector<float> audio;
  std::vector<float> eeg;
  std::vector<std::size_t> source;       ///< recording index per chunk
  std::vector<std::size_t> chunk_index;  ///< position within the recording

  std::size_t size() const { return source.size(); }
};

/// Pairs chunk i of the audio with chunk i of the EEG, up to the shorter of
/// the two. Throws if a recording yields no chunk.
ChunkSet make_chunks(const std::vector<Recording>& recordings);

enum class Precision { f32, f64 };
std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 102;
  std::size_t folds = 5;
  std::size_t runs_per_fold = 5;
  double reg = 1e-4;
  double eigen_floor = 1e-12;
  optim::OptimizerConfig optimizer;
  double lr_decay = 1.0;  ///< learning rate multiplier applied after every epoch
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  Precision precision = Precision::f32;
  std::size_t eval_batch = 32;  ///< inference batch, affects memory only
  std::uint64_t seed = 1;

  bool operator==(const TrainConfig&) const = default;
};

/// Balanced test folds over recordings: a seeded shuffle dealt round-robin.
std::vector<std::vector<std::size_t>> partition_folds(std::size_t recordings, std::size_t folds,
                                                      std::uint64_t seed);

std::uint64_t run_seed(std::uint64_t seed, std::size_t fold, std::size_t run);

struct TrainedModel {
  nn::ParamStore<float> audio;
  nn::ParamStore<float> eeg;
  linalg::CcaModel cca;
  TrainConfig config;
  std::size_t fold = 0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  /// Held-out loss before the first update, then one entry per epoch.
  double initial_heldout_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> heldout_loss;
  std::vector<std::size_t> train_recordings;
  std::vector<std::size_t> test_recordings;
  /// Recordings whose chunks entered a gradient update.
  std::vector<std::size_t> gradient_sources;
  std::size_t skipped_batches = 0;
};

struct EpochReport {
  std::size_t fold = 0;
  std::size_t run = 0;
  std::size_t epoch = 0;  ///< 0 is the pre-training evaluation
  double train_loss = 0.0;
  double heldout_loss = 0.0;
};
using ProgressFn = std::function<void(const EpochReport&)>;

/// One fold/run: DCCA training of both branches on the chunks of the
/// non-test recordings, held-out evaluation every epoch, then a linear CCA
/// fit on the training outputs.
TrainedModel train_run(const ChunkSet& chunks, std::span<const std::size_t> test_recordings,
                       std::size_t n_recordings, const TrainConfig& config, std::size_t fold,
                       std::size_t run, const ProgressFn& progress = {});

/// Every fold × run of the protocol, in order.
std::vector<TrainedModel> train(const std::vector<Recording>& recordings, const TrainConfig& config,
                                const ProgressFn& progress = {});

struct Embedding {
  linalg::Vector embedding;  ///< mean chunk embedding, 128-dim
  linalg::Vector canonical;  ///< CCA projection of the mean embedding
};

Embedding embed_song(const TrainedModel& model, const dsp::SignalBuffer& audio,
                     const PreprocessConfig& preprocess);
Embedding embed_eeg(const TrainedModel& model, const dsp::SignalBuffer& eeg,
                    const PreprocessConfig& preprocess);

/// Branch outputs for already preprocessed chunk tensors, one row per chunk.
linalg::Matrix branch_outputs(const nn::ParamStore<float>& params, std::span<const float> chunks,
                              std::size_t count, const TrainConfig& config);

}  // namespace audeeg::pipeline
