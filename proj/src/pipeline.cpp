#include "audeeg/pipeline.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <type_traits>

#include "audeeg/dcca.h"
#include "audeeg/error.h"
#include "audeeg/rng.h"

namespace audeeg::pipeline {

using linalg::Matrix;
using nn::LayerSpec;
using nn::Padding;

std::size_t chunk_samples(double rate, double seconds) {
  return static_cast<std::size_t>(std::llround(rate * seconds));
}

std::vector<LayerSpec> audio_branch() {
  return {
      LayerSpec::batchnorm(), LayerSpec::conv(3, 3, 128, Padding::valid), LayerSpec::relu(),
      LayerSpec::batchnorm(), LayerSpec::conv(3, 1, 128, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(3),
      LayerSpec::batchnorm(), LayerSpec::conv(3, 1, 256, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(3),
      LayerSpec::batchnorm(), LayerSpec::conv(5, 1, 256, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(5),
      LayerSpec::batchnorm(), LayerSpec::conv(5, 1, 512, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(5),
      LayerSpec::batchnorm(), LayerSpec::conv(7, 1, 512, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(7),
      LayerSpec::batchnorm(), LayerSpec::conv(7, 1, 1024, Padding::same), LayerSpec::relu(),
      LayerSpec::maxpool(7),
      LayerSpec::batchnorm(), LayerSpec::conv(1, 1, 128, Padding::same),
  };
}

std::vector<LayerSpec> eeg_branch() {
  return {
      LayerSpec::batchnorm(), LayerSpec::conv(3, 3, 128, Padding::valid), LayerSpec::relu(),
      LayerSpec::batchnorm(), LayerSpec::conv(5, 1, 256, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(5),
      LayerSpec::batchnorm(), LayerSpec::conv(5, 1, 512, Padding::same),  LayerSpec::relu(),
      LayerSpec::maxpool(5),
      LayerSpec::batchnorm(), LayerSpec::conv(5, 1, 1024, Padding::same), LayerSpec::relu(),
      LayerSpec::maxpool(5),
      LayerSpec::batchnorm(), LayerSpec::conv(1, 1, 128, Padding::same),
  };
}

nn::Shape audio_input_shape() { return {chunk_samples(kAudioRate), 1}; }
nn::Shape eeg_input_shape() { return {chunk_samples(kEegRate), kEegChannels}; }

// ---- preprocessing ---------------------------------------------------------

dsp::SignalBuffer preprocess_eeg(const dsp::SignalBuffer& eeg, const PreprocessConfig& c) {
  eeg.validate();
  if (!c.enabled) return eeg;
  dsp::SignalBuffer s = dsp::filter_apply(
      eeg, dsp::BiquadSpec::highpass(c.highpass_hz, c.highpass_q, c.highpass_cascade));
  s = dsp::filter_apply(s, dsp::BiquadSpec::notch(c.notch_hz, c.notch_q, c.notch_cascade));
  s = wavelet::war(s, {c.war_multiplier, c.family, c.wavelet_levels, c.war_zero});
  s = dsp::scale_minmax(s, true);
  if (s.channels() >= 2) s = wavelet::wsd(s, {c.wsd_threshold, c.wsd_window, c.family, c.wavelet_levels});
  return s;
}

dsp::SignalBuffer preprocess_audio(const dsp::SignalBuffer& audio, const PreprocessConfig& c) {
  audio.validate();
  if (!c.enabled) return audio;
  return dsp::scale_minmax(audio, false);
}

std::vector<dsp::SignalBuffer> chunk(const dsp::SignalBuffer& sig, double seconds) {
  if (!(seconds > 0.0)) throw ValidationError("chunk length must be positive");
  const std::size_t len = chunk_samples(sig.rate(), seconds);
  if (len == 0 || sig.samples() < len) {
    throw ValidationError("signal of " + std::to_string(sig.samples()) + " samples at " +
                          std::to_string(sig.rate()) + " Hz is shorter than one " +
                          std::to_string(seconds) + " s chunk (" + std::to_string(len) +
                          " samples)");
  }
  const std::size_t count = sig.samples() / len;
  std::vector<dsp::SignalBuffer> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    dsp::SignalBuffer piece(sig.channels(), len, sig.rate());
    for (std::size_t c = 0; c < sig.channels(); ++c) {
      auto src = sig.channel(c).subspan(k * len, len);
      std::copy(src.begin(), src.end(), piece.channel(c).begin());
    }
    out.push_back(std::move(piece));
  }
  return out;
}

namespace {

void require_rate(const dsp::SignalBuffer& s, double rate, std::size_t channels, const char* what) {
  if (s.channels() != channels) {
    throw ValidationError(std::string(what) + " must have " + std::to_string(channels) +
                          " channel(s), got " + std::to_string(s.channels()));
  }
  if (std::abs(s.rate() - rate) > 1e-9) {
    throw ValidationError(std::string(what) + " must be sampled at " + std::to_string(rate) +
                          " Hz, got " + std::to_string(s.rate()) + " Hz (no resampling)");
  }
}

// Writes chunk `k` of `sig` as [length][channels] floats.
void append_chunk(const dsp::SignalBuffer& sig, std::size_t k, std::size_t len,
                  std::vector<float>& out) {
  const std::size_t base = out.size();
  out.resize(base + len * sig.channels());
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < sig.channels(); ++c)
      out[base + t * sig.channels() + c] = static_cast<float>(sig.at(c, k * len + t));
}

}  // namespace

ChunkSet make_chunks(const std::vector<Recording>& recordings) {
  const std::size_t alen = chunk_samples(kAudioRate);
  const std::size_t elen = chunk_samples(kEegRate);
  ChunkSet set;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const Recording& rec = recordings[r];
    require_rate(rec.audio, kAudioRate, 1, "audio");
    require_rate(rec.eeg, kEegRate, kEegChannels, "EEG");
    const std::size_t n = std::min(rec.audio.samples() / alen, rec.eeg.samples() / elen);
    if (n == 0) {
      throw ValidationError("recording '" + rec.id + "' yields no complete 1.5 s chunk pair");
    }
    for (std::size_t k = 0; k < n; ++k) {
      append_chunk(rec.audio, k, alen, set.audio);
      append_chunk(rec.eeg, k, elen, set.eeg);
      set.source.push_back(r);
      set.chunk_index.push_back(k);
    }
  }
  return set;
}

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32" || name == "float32") return Precision::f32;
  if (name == "f64" || name == "float64") return Precision::f64;
  throw ParseError("unknown precision '" + name + "' (expected f32 or f64)");
}

std::vector<std::vector<std::size_t>> partition_folds(std::size_t recordings, std::size_t folds,
                                                      std::uint64_t seed) {
  if (folds < 2) throw ValidationError("folds must be >= 2");
  if (recordings < folds) {
    throw ValidationError("cannot split " + std::to_string(recordings) + " recordings into " +
                          std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(recordings);
  for (std::size_t i = 0; i < recordings; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0xf01d));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < recordings; ++i) out[i % folds].push_back(order[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::uint64_t run_seed(std::uint64_t seed, std::size_t fold, std::size_t run) {
  return mix_seed(seed, fold + 1, run + 1);
}

// ---- training --------------------------------------------------------------

namespace {

template <typename T>
nn::Tensor3<T> gather(std::span<const float> store, nn::Shape shape,
                      std::span<const std::size_t> rows) {
  nn::Tensor3<T> t(rows.size(), shape.length, shape.channels);
  const std::size_t n = shape.length * shape.channels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float* src = store.data() + rows[i] * n;
    std::copy(src, src + n, t.data.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return t;
}

template <typename T>
Matrix to_matrix(const nn::Tensor3<T>& t) {
  Matrix m(t.batch, t.example_size());
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

template <typename T>
nn::Tensor3<T> from_matrix(const Matrix& m, nn::Shape shape) {
  nn::Tensor3<T> t(m.rows(), shape.length, shape.channels);
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

template <typename T>
Matrix outputs(nn::Network<T>& net, std::span<const float> store,
               std::span<const std::size_t> rows, std::size_t eval_batch) {
  Matrix out(rows.size(), net.output_shape().length * net.output_shape().channels);
  const std::size_t step = std::max<std::size_t>(1, eval_batch);
  for (std::size_t b = 0; b < rows.size(); b += step) {
    const auto part = rows.subspan(b, std::min(step, rows.size() - b));
    const auto y = net.forward(gather<T>(store, net.input_shape(), part), nn::Mode::infer);
    std::copy(y.data.begin(), y.data.end(), out.row(b).data());
  }
  return out;
}

nn::BatchNormConfig bn_config(const TrainConfig& c) { return {c.bn_momentum, c.bn_epsilon}; }

void validate(const TrainConfig& c) {
  if (c.batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (!(c.reg > 0.0)) throw ValidationError("reg must be positive");
  if (c.runs_per_fold < 1) throw ValidationError("runs_per_fold must be >= 1");
  if (!(c.lr_decay > 0.0)) throw ValidationError("lr_decay must be positive");
}

template <typename T>
TrainedModel train_impl(const ChunkSet& chunks, std::span<const std::size_t> test_recordings,
                        std::size_t n_recordings, const TrainConfig& config, std::size_t fold,
                        std::size_t run, const ProgressFn& progress) {
  validate(config);
  std::vector<bool> is_test(n_recordings, false);
  for (auto r : test_recordings) {
    if (r >= n_recordings) throw ValidationError("test recording index out of range");
    is_test[r] = true;
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks.source[i] >= n_recordings) throw ValidationError("chunk source out of range");
    (is_test[chunks.source[i]] ? test_rows : train_rows).push_back(i);
  }
  if (train_rows.size() < 2) throw ValidationError("fewer than 2 training chunks");
  if (test_rows.size() < 2) throw ValidationError("fewer than 2 held-out chunks");

  TrainedModel model;
  model.config = config;
  model.fold = fold;
  model.run = run;
  model.seed = run_seed(config.seed, fold, run);
  for (std::size_t r = 0; r < n_recordings; ++r)
    (is_test[r] ? model.test_recordings : model.train_recordings).push_back(r);

  const nn::BatchNormConfig bn = bn_config(config);
  nn::Network<T> audio(audio_branch(), audio_input_shape(), mix_seed(model.seed, 1), bn);
  nn::Network<T> eeg(eeg_branch(), eeg_input_shape(), mix_seed(model.seed, 2), bn);
  optim::Optimizer<T> opt_audio(config.optimizer), opt_eeg(config.optimizer);

  auto batches_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::span<const std::size_t>> out;
    for (std::size_t b = 0; b < rows.size(); b += config.batch_size)
      out.push_back(std::span<const std::size_t>(rows).subspan(
          b, std::min(config.batch_size, rows.size() - b)));
    return out;
  };
  auto heldout = [&]() {
    const Matrix x = outputs(audio, chunks.audio, test_rows, config.eval_batch);
    const Matrix y = outputs(eeg, chunks.eeg, test_rows, config.eval_batch);
    return -dcca::dcca_total_correlation(x, y, config.reg, config.eigen_floor);
  };

  // Running statistics start from the training data so that the epoch-0
  // held-out evaluation has something to normalize with.
  {
    std::vector<nn::Tensor3<T>> a, e;
    for (auto part : batches_of(train_rows)) {
      if (part.size() < 2) continue;
      a.push_back(gather<T>(chunks.audio, audio.input_shape(), part));
      e.push_back(gather<T>(chunks.eeg, eeg.input_shape(), part));
    }
    audio.calibrate(a);
    eeg.calibrate(e);
  }
  model.initial_heldout_loss = heldout();
  if (progress) progress({fold, run, 0, 0.0, model.initial_heldout_loss});

  std::set<std::size_t> touched;
  double lr = config.optimizer.learning_rate;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_rows;
    Rng(mix_seed(model.seed, 3, epoch)).shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (auto part : batches_of(order)) {
      if (part.size() < 2) {
        ++model.skipped_batches;
        continue;
      }
      const auto ya = audio.forward(gather<T>(chunks.audio, audio.input_shape(), part), nn::Mode::train);
      const auto ye = eeg.forward(gather<T>(chunks.eeg, eeg.input_shape(), part), nn::Mode::train);
      const auto r = dcca::dcca_loss(to_matrix(ya), to_matrix(ye), config.reg, config.eigen_floor);
      if (!std::isfinite(r.loss)) {
        throw NumericError("non-finite DCCA loss in fold " + std::to_string(fold) + " run " +
                           std::to_string(run) + " epoch " + std::to_string(epoch));
      }
      audio.zero_grad();
      eeg.zero_grad();
      audio.backward(from_matrix<T>(r.grad_x, audio.output_shape()));
      audio.release_cache();
      eeg.backward(from_matrix<T>(r.grad_y, eeg.output_shape()));
      eeg.release_cache();
      opt_audio.step(audio);
      opt_eeg.step(eeg);
      for (auto i : part) touched.insert(chunks.source[i]);
      loss_sum += r.loss * static_cast<double>(part.size());
      loss_n += part.size();
    }
    model.train_loss.push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    model.heldout_loss.push_back(heldout());
    if (progress) progress({fold, run, epoch, model.train_loss.back(), model.heldout_loss.back()});
    lr *= config.lr_decay;
    opt_audio.set_learning_rate(lr);
    opt_eeg.set_learning_rate(lr);
  }

  model.gradient_sources.assign(touched.begin(), touched.end());
  for (auto r : model.gradient_sources)
    if (is_test[r]) throw StateError("held-out recording " + std::to_string(r) + " reached a gradient update");

  const Matrix x = outputs(audio, chunks.audio, train_rows, config.eval_batch);
  const Matrix y = outputs(eeg, chunks.eeg, train_rows, config.eval_batch);
  linalg::CcaOptions cca_opts;
  cca_opts.eigen_floor = config.eigen_floor;
  model.cca = linalg::cca_fit(x, y, std::min(x.cols(), y.cols()), config.reg, cca_opts);

  if constexpr (std::is_same_v<T, float>) {
    model.audio = audio.params();
    model.eeg = eeg.params();
  } else {
    model.audio = audio.params().template cast<float>();
    model.eeg = eeg.params().template cast<float>();
  }
  return model;
}

}  // namespace

TrainedModel train_run(const ChunkSet& chunks, std::span<const std::size_t> test_recordings,
                       std::size_t n_recordings, const TrainConfig& config, std::size_t fold,
                       std::size_t run, const ProgressFn& progress) {
  if (config.precision == Precision::f64)
    return train_impl<double>(chunks, test_recordings, n_recordings, config, fold, run, progress);
  return train_impl<float>(chunks, test_recordings, n_recordings, config, fold, run, progress);
}

std::vector<TrainedModel> train(const std::vector<Recording>& recordings, const TrainConfig& config,
                                const ProgressFn& progress) {
  if (recordings.size() < 2) throw ValidationError("training needs at least 2 recordings");
  const ChunkSet chunks = make_chunks(recordings);
  const auto folds = partition_folds(recordings.size(), config.folds, config.seed);
  std::vector<TrainedModel> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    for (std::size_t r = 0; r < config.runs_per_fold; ++r)
      out.push_back(train_run(chunks, folds[f], recordings.size(), config, f, r, progress));
  return out;
}

// ---- embedding -------------------------------------------------------------

Matrix branch_outputs(const nn::ParamStore<float>& params, std::span<const float> chunks,
                      std::size_t count, const TrainConfig& config) {
  const nn::BatchNormConfig bn = bn_config(config);
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = i;
  const std::size_t n = params.input.length * params.input.channels;
  if (chunks.size() != count * n) throw DimensionError("chunk buffer does not match the branch input");
  if (config.precision == Precision::f64) {
    nn::Network<double> net(params.cast<double>(), bn);
    return outputs(net, chunks, rows, config.eval_batch);
  }
  nn::Network<float> net(params, bn);
  return outputs(net, chunks, rows, config.eval_batch);
}

namespace {

Embedding embed_view(const TrainedModel& model, const dsp::SignalBuffer& sig,
                     const nn::ParamStore<float>& params, linalg::View view) {
  const auto pieces = chunk(sig);
  std::vector<float> store;
  for (const auto& p : pieces) append_chunk(p, 0, p.samples(), store);
  const Matrix out = branch_outputs(params, store, pieces.size(), model.config);
  Embedding e;
  e.embedding = linalg::column_means(out);
  if (model.cca.components() > 0) {
    const Matrix row(1, e.embedding.size(), e.embedding);
    const Matrix c = linalg::cca_transform(model.cca, row, view);
    e.canonical.assign(c.data(), c.data() + c.size());
  }
  return e;
}

}  // namespace

Embedding embed_song(const TrainedModel& model, const dsp::SignalBuffer& audio,
                     const PreprocessConfig& preprocess) {
  require_rate(audio, kAudioRate, 1, "audio");
  return embed_view(model, preprocess_audio(audio, preprocess), model.audio, linalg::View::x);
}

Embedding embed_eeg(const TrainedModel& model, const dsp::SignalBuffer& eeg,
                    const PreprocessConfig& preprocess) {
  require_rate(eeg, kEegRate, kEegChannels, "EEG");
  return embed_view(model, preprocess_eeg(eeg, preprocess), model.eeg, linalg::View::y);
}

}  // namespace audeeg::pipeline
