// Acceptance suite. Every criterion prints a single "criterion N: PASS|FAIL"
// line followed by the measured values. Run all with no arguments or one
// with --criterion=N.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "audeeg/alloc.h"
#include "audeeg/audio_io.h"
#include "audeeg/cli.h"
#include "audeeg/config.h"
#include "audeeg/dcca.h"
#include "audeeg/dsp.h"
#include "audeeg/linalg.h"
#include "audeeg/nn.h"
#include "audeeg/pipeline.h"
#include "audeeg/retrieval.h"
#include "audeeg/rng.h"
#include "audeeg/synth.h"
#include "audeeg/table_io.h"
#include "audeeg/wavelet.h"

using namespace audeeg;
using linalg::Matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <typename T>
  Detail& operator()(const std::string& key, const T& value) {
    os_ << "  " << key << ": " << value << "\n";
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path scratch(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("audeeg_accept_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// ---- 1: gradients ----------------------------------------------------------

// Central differences through both branches with respect to sampled
// parameters; BN uses batch statistics without touching running ones.
struct BranchCheck {
  std::size_t probes = 0;
  double worst = 0.0;
};

template <typename Loss>
BranchCheck probe_branch(nn::Network<double>& net, const nn::Tensor3<double>& x, Loss&& loss,
                         std::size_t probes, double h, std::uint64_t seed) {
  std::vector<std::size_t> learnable;
  for (std::size_t i = 0; i < net.params().specs.size(); ++i) {
    const auto k = net.params().specs[i].kind;
    if (k == nn::LayerKind::conv1d || k == nn::LayerKind::dense || k == nn::LayerKind::batchnorm)
      learnable.push_back(i);
  }
  struct Probe {
    std::size_t layer, tensor, index;
    double analytic;
  };
  Rng rng(seed);
  std::vector<Probe> list;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t layer = learnable[p % learnable.size()];
    auto& g = net.grads()[layer];
    std::vector<std::vector<double>*> ts;
    for (auto* t : {&g.weights, &g.bias, &g.gain, &g.shift})
      if (!t->empty()) ts.push_back(t);
    const std::size_t ti = rng.below(ts.size());
    const std::size_t idx = rng.below(ts[ti]->size());
    const std::size_t tensor = ts[ti] == &g.weights ? 0 : ts[ti] == &g.bias ? 1 : ts[ti] == &g.gain ? 2 : 3;
    list.push_back({layer, tensor, idx, (*ts[ti])[idx]});
  }
  double scale = 0.0;
  for (const auto& p : list) scale = std::max(scale, std::abs(p.analytic));
  BranchCheck out;
  for (const auto& p : list) {
    auto& lp = net.params().layers[p.layer];
    std::vector<double>* t[] = {&lp.weights, &lp.bias, &lp.gain, &lp.shift};
    double& slot = (*t[p.tensor])[p.index];
    const double keep = slot;
    slot = keep + h;
    const double up = loss(net.forward(x, nn::Mode::train, false));
    slot = keep - h;
    const double down = loss(net.forward(x, nn::Mode::train, false));
    slot = keep;
    const double fd = (up - down) / (2 * h);
    // Gradients far below the largest one are judged against 1e-2 of it,
    // which keeps roundoff in tiny components from dominating.
    out.worst = std::max(out.worst, rel_err(p.analytic, fd, 1e-2 * scale));
    ++out.probes;
  }
  return out;
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Detail d;
  bool ok = true;

  // Loss level, three shapes, 120 probes each.
  double loss_worst = 0.0;
  std::size_t loss_probes = 0;
  Rng pick(1);
  for (auto [n, dx, dy, reg] : {std::tuple{40, 4, 3, 1e-4}, std::tuple{64, 8, 8, 1e-4}, std::tuple{16, 6, 6, 1e-2}}) {
    const Matrix x = gaussian(n, dx, 10 + n);
    Matrix y = gaussian(n, dy, 20 + n);
    for (int i = 0; i < n; ++i) y(i, 0) += x(i, 0) - 0.3 * x(i, 1);
    const auto r = dcca::dcca_loss(x, y, reg);
    double scale = std::max(linalg::max_abs(r.grad_x), linalg::max_abs(r.grad_y));
    for (int p = 0; p < 120; ++p) {
      const bool in_x = p % 2 == 0;
      const std::size_t i = pick.below(n), j = pick.below(in_x ? dx : dy);
      Matrix xp = x, xm = x, yp = y, ym = y;
      const double h = 1e-5;
      (in_x ? xp : yp)(i, j) += h;
      (in_x ? xm : ym)(i, j) -= h;
      const double fd = (dcca::dcca_loss(xp, yp, reg).loss - dcca::dcca_loss(xm, ym, reg).loss) / (2 * h);
      loss_worst = std::max(loss_worst, rel_err(in_x ? r.grad_x(i, j) : r.grad_y(i, j), fd, 1e-6 * scale));
      ++loss_probes;
    }
  }
  ok = ok && loss_worst < 1e-4;
  d("loss-level probes", loss_probes)("loss-level max relative error", loss_worst);

  // Both branches, 64-bit, dcca_loss on a batch of 6 chunks.
  const std::size_t batch = 6;
  const double reg = 1e-1;
  nn::Network<double> audio(pipeline::audio_branch(), pipeline::audio_input_shape(), 101);
  nn::Network<double> eeg(pipeline::eeg_branch(), pipeline::eeg_input_shape(), 102);
  Rng rng(103);
  nn::Tensor3<double> xa(batch, 33075, 1), xe(batch, 375, 16);
  for (double& v : xa.data) v = rng.uniform(-1, 1);
  for (double& v : xe.data) v = rng.uniform(-1, 1);
  auto as_matrix = [](const nn::Tensor3<double>& t) { return Matrix(t.batch, t.example_size(), t.data); };
  const auto ya = audio.forward(xa, nn::Mode::train, false);
  const auto ye = eeg.forward(xe, nn::Mode::train, false);
  const auto r = dcca::dcca_loss(as_matrix(ya), as_matrix(ye), reg);
  nn::Tensor3<double> ga(batch, 1, 128), ge(batch, 1, 128);
  ga.data.assign(r.grad_x.values().begin(), r.grad_x.values().end());
  ge.data.assign(r.grad_y.values().begin(), r.grad_y.values().end());
  audio.zero_grad();
  eeg.zero_grad();
  audio.backward(ga);
  eeg.backward(ge);
  audio.release_cache();
  eeg.release_cache();
  // Each branch is checked on phi(theta) = <dL/dy, y(theta)>, whose gradient
  // is exactly what backward returns for the DCCA upstream gradient. Unlike
  // the loss itself, phi carries no eigensolver roundoff, so the step can be
  // small enough to stay clear of ReLU and max-pool switch points.
  auto seeded = [](const nn::Tensor3<double>& g) {
    return [&g](const nn::Tensor3<double>& y) {
      double s = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) s += g.data[i] * y.data[i];
      return s;
    };
  };
  const double h = 1e-7;
  const auto ca = probe_branch(audio, xa, seeded(ga), 60, h, 104);
  const auto ce = probe_branch(eeg, xe, seeded(ge), 60, h, 105);
  ok = ok && ca.worst < 1e-3 && ce.worst < 1e-3 && ca.probes >= 50 && ce.probes >= 50;
  d("network loss value", r.loss)("audio branch probes", ca.probes)("audio branch max relative error", ca.worst)(
      "eeg branch probes", ce.probes)("eeg branch max relative error", ce.worst)("branch step h", h);
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 300.0;
  d("runtime s", elapsed);
  return {ok, d.str()};
}

// ---- 2: CCA oracle -----------------------------------------------------------

Outcome criterion2() {
  Detail d;
  const std::size_t n = 20000;
  const Matrix z = gaussian(n, 1, 21);
  const auto m = linalg::cca_fit(z + gaussian(n, 1, 22), z + gaussian(n, 1, 23), 1, 0.0);
  const double rho = m.correlations[0];
  const Matrix x = gaussian(500, 4, 24);
  const auto s = linalg::cca_fit(x, x, 4, 1e-6);
  double min_self = 1.0;
  for (double c : s.correlations) min_self = std::min(min_self, c);
  d("shared-latent leading correlation", rho)("closed form", 0.5)("self-correlation minimum", min_self);
  return {std::abs(rho - 0.5) <= 0.03 && min_self >= 0.999, d.str()};
}

// ---- 3: loss / CCA consistency ---------------------------------------------

Outcome criterion3() {
  Detail d;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 50 + 40 * seed, dx = 2 + seed % 5, dy = 3 + seed % 3;
    const Matrix x = gaussian(n, dx, 300 + seed);
    Matrix y = gaussian(n, dy, 400 + seed);
    for (std::size_t i = 0; i < n; ++i) y(i, 0) += 0.8 * x(i, 0);
    for (double reg : {1e-4, 1e-2}) {
      const auto m = linalg::cca_fit(x, y, std::min(dx, dy), reg);
      double s = 0.0;
      for (double r : m.correlations) s += r * r;
      worst = std::max(worst, std::abs(std::abs(dcca::dcca_loss(x, y, reg).loss) - std::sqrt(s)));
    }
  }
  d("cases", 20)("max |loss| - sqrt(sum rho^2)", worst);
  return {worst < 1e-6, d.str()};
}

// ---- 4: shape contracts -----------------------------------------------------

Outcome criterion4() {
  Detail d;
  bool ok = true;
  auto trace = [](const std::vector<nn::LayerSpec>& specs, nn::Shape in) {
    const auto shapes = nn::infer_shapes(specs, in);
    std::vector<nn::Shape> out{in};
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].kind == nn::LayerKind::conv1d || specs[i].kind == nn::LayerKind::maxpool1d) out.push_back(shapes[i + 1]);
    return out;
  };
  auto str = [](const std::vector<nn::Shape>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " -> ") + std::to_string(x.length) + "x" + std::to_string(x.channels);
    return s;
  };
  const std::vector<nn::Shape> audio_expect{{33075, 1}, {11025, 128}, {11025, 128}, {3675, 128}, {3675, 256},
                                            {1225, 256}, {1225, 256}, {245, 256},  {245, 512},  {49, 512},
                                            {49, 512},   {7, 512},    {7, 1024},   {1, 1024},   {1, 128}};
  const std::vector<nn::Shape> eeg_expect{{375, 16}, {125, 128}, {125, 256}, {25, 256}, {25, 512},
                                          {5, 512},  {5, 1024},  {1, 1024},  {1, 128}};
  const auto a = trace(pipeline::audio_branch(), pipeline::audio_input_shape());
  const auto e = trace(pipeline::eeg_branch(), pipeline::eeg_input_shape());
  ok = a == audio_expect && e == eeg_expect;
  d("audio", str(a))("eeg", str(e));

  // A real forward pass agrees with the static shapes.
  nn::Network<float> an(pipeline::audio_branch(), pipeline::audio_input_shape(), 1);
  nn::Network<float> en(pipeline::eeg_branch(), pipeline::eeg_input_shape(), 2);
  nn::Tensor3<float> xa(2, 33075, 1, 0.1f), xe(2, 375, 16, 0.1f);
  for (std::size_t i = 0; i < xa.data.size(); ++i) xa.data[i] = std::sin(0.001f * i);
  for (std::size_t i = 0; i < xe.data.size(); ++i) xe.data[i] = std::cos(0.01f * i);
  const auto ya = an.forward(xa, nn::Mode::train);
  const auto ye = en.forward(xe, nn::Mode::train);
  ok = ok && ya.length == 1 && ya.channels == 128 && ye.length == 1 && ye.channels == 128;
  d("audio forward output", std::to_string(ya.length) + "x" + std::to_string(ya.channels))(
      "eeg forward output", std::to_string(ye.length) + "x" + std::to_string(ye.channels));
  return {ok, d.str()};
}

// ---- 5: DSP ------------------------------------------------------------------

double central_rms(const dsp::SignalBuffer& s) {
  const auto ch = s.channel(0);
  const std::size_t lo = ch.size() / 10;
  return rms(ch.subspan(lo, ch.size() - 2 * lo));
}

Outcome criterion5() {
  Detail d;
  auto tone = [](double hz) {
    dsp::SignalBuffer s(1, 250 * 20, 250.0);
    for (std::size_t t = 0; t < s.samples(); ++t) s.at(0, t) = std::sin(2 * std::numbers::pi * hz * t / 250.0);
    return s;
  };
  const auto notch = dsp::BiquadSpec::notch(50.0, 30.0, 2);
  const double stop = 20 * std::log10(central_rms(dsp::filter_apply(tone(50.0), notch)) / central_rms(tone(50.0)));
  const double pass = 20 * std::log10(central_rms(dsp::filter_apply(tone(10.0), notch)) / central_rms(tone(10.0)));
  dsp::SignalBuffer dc(1, 250 * 60, 250.0);
  for (std::size_t t = 0; t < dc.samples(); ++t) dc.at(0, t) = 1.0;
  const auto hp = dsp::filter_apply(dc, dsp::BiquadSpec::highpass(0.5));
  double peak = 0.0;
  for (std::size_t t = hp.samples() / 10; t < hp.samples() - hp.samples() / 10; ++t) peak = std::max(peak, std::abs(hp.at(0, t)));
  d("notch attenuation at 50 Hz dB", stop)("notch gain at 10 Hz dB", pass)("high-pass residual DC", peak);
  return {stop <= -40.0 && std::abs(pass) <= 1.0 && peak < 1e-3, d.str()};
}

// ---- 6: wavelets -------------------------------------------------------------

Outcome criterion6() {
  Detail d;
  Rng rng(6);
  const std::size_t n = 375;
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  double pr = 0.0;
  for (auto fam : {wavelet::Family::haar, wavelet::Family::db2, wavelet::Family::db4}) {
    const auto y = wavelet::idwt(wavelet::dwt(x, fam));
    for (std::size_t i = 0; i < n; ++i) pr = std::max(pr, std::abs(x[i] - y[i]));
  }

  std::vector<double> clean(n);
  for (std::size_t t = 0; t < n; ++t) clean[t] = std::sin(2 * std::numbers::pi * 10.0 * t / 250.0);
  const auto war_clean = wavelet::war(dsp::SignalBuffer({clean}, 250.0));
  double diff = 0.0;
  for (std::size_t t = 0; t < n; ++t) diff += std::pow(war_clean.at(0, t) - clean[t], 2);
  const double sine_err = std::sqrt(diff / n) / rms(clean);

  auto spiked = clean;
  spiked[180] += 100.0;
  const auto war_spike = wavelet::war(dsp::SignalBuffer({spiked}, 250.0));
  double before = 0.0, after = 0.0;
  for (std::size_t t = 172; t <= 188; ++t) {
    before += std::pow(spiked[t] - clean[t], 2);
    after += std::pow(war_spike.at(0, t) - clean[t], 2);
  }
  const double impulse_cut = 1.0 - after / before;

  std::vector<std::vector<double>> ind(16, std::vector<double>(n));
  for (auto& ch : ind)
    for (double& v : ch) v = rng.normal();
  const dsp::SignalBuffer noise(ind, 250.0);
  auto energy = [](const dsp::SignalBuffer& s) {
    double e = 0.0;
    for (double v : s.values()) e += v * v;
    return e;
  };
  const auto w0 = wavelet::wsd(noise, {.threshold = 0.0});
  double id0 = 0.0;
  for (std::size_t i = 0; i < w0.values().size(); ++i) id0 = std::max(id0, std::abs(w0.values()[i] - noise.values()[i]));
  const double removed = 1.0 - energy(wavelet::wsd(noise)) / energy(noise);
  const dsp::SignalBuffer same(std::vector<std::vector<double>>(16, ind[0]), 250.0);
  const auto ws = wavelet::wsd(same);
  double id_same = 0.0;
  for (std::size_t i = 0; i < ws.values().size(); ++i) id_same = std::max(id_same, std::abs(ws.values()[i] - same.values()[i]));

  d("reconstruction max error", pr)("WAR sinusoid relative RMS change", sine_err)("WAR impulse energy removed", impulse_cut)(
      "WSD threshold 0 max change", id0)("WSD energy removed from independent noise", removed)(
      "WSD identical channels max change", id_same);
  return {pr < 1e-8 && sine_err <= 0.02 && impulse_cut >= 0.9 && id0 < 1e-8 && removed > 0.4 && id_same < 1e-6, d.str()};
}

// ---- 7: end-to-end learning progress ----------------------------------------

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  Detail d;
  config::ExperimentConfig cfg = config::ExperimentConfig{}.resolved();  // 30 items, 3 s, noise 0.5
  std::vector<pipeline::Recording> recs;
  for (auto& it : synth::generate(cfg.synth))
    recs.push_back({it.id, it.subject, it.label, pipeline::preprocess_audio(it.audio, cfg.preprocess),
                    pipeline::preprocess_eeg(it.eeg, cfg.preprocess)});
  const auto chunks = pipeline::make_chunks(recs);
  const auto folds = pipeline::partition_folds(recs.size(), cfg.train.folds, cfg.seed);
  d("recordings", recs.size())("chunks", chunks.size())("epochs", cfg.train.epochs)("batch", cfg.train.batch_size)(
      "precision", pipeline::precision_name(cfg.train.precision));
  std::size_t improved = 0, total = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t r = 0; r < cfg.train.runs_per_fold; ++r) {
      const auto m = pipeline::train_run(chunks, folds[f], recs.size(), cfg.train, f, r);
      const double before = -m.initial_heldout_loss, after = -m.heldout_loss.back();
      const bool up = after > before;
      improved += up;
      ++total;
      std::size_t held = 0;
      for (std::size_t i = 0; i < chunks.size(); ++i)
        held += std::find(folds[f].begin(), folds[f].end(), chunks.source[i]) != folds[f].end();
      char line[200];
      std::snprintf(line, sizeof line, "fold %zu run %zu: heldout %.9f -> %.9f (%s), ceiling sqrt(%zu-1) = %.9f",
                    f, r, before, after, up ? "up" : "down", held, std::sqrt(held - 1.0));
      std::cout << "    " << line << std::endl;
    }
  }
  const double elapsed = seconds_since(t0);
  d("runs improved", std::to_string(improved) + "/" + std::to_string(total))("runtime s", elapsed);
  return {improved >= 23 && total == 25 && elapsed < 7200.0, d.str()};
}

// ---- 8: retrieval ------------------------------------------------------------

Outcome criterion8() {
  Detail d;
  synth::FeatureSynthSpec fs;
  fs.items = 600;
  const auto pair = synth::generate_features(fs);
  std::vector<std::size_t> train_rows(500), test_rows(100);
  for (std::size_t i = 0; i < 500; ++i) train_rows[i] = i;
  for (std::size_t i = 0; i < 100; ++i) test_rows[i] = 500 + i;
  const auto a_train = pair.a.subset(train_rows), b_train = pair.b.subset(train_rows);
  const auto a_test = pair.a.subset(test_rows), b_test = pair.b.subset(test_rows);
  const retrieval::RetrievalConfig rc;  // 512/256/128/64, k = 32, 500 epochs

  const auto self_model = retrieval::retrieval_train(a_train, a_train, rc);
  const auto self = retrieval::evaluate(retrieval::rank_all(self_model, a_test, a_test), rc.canonical_k, rc.seed);
  const double self_mrr = std::min(self.instance_a_to_b, self.instance_b_to_a);

  Rng rng(8);
  std::vector<std::string> ids(100);
  for (int i = 0; i < 100; ++i) ids[i] = std::to_string(i);
  const std::vector<std::string> labels(100, "c");
  double sum = 0.0;
  for (int t = 0; t < 10000; ++t) {
    auto order = ids;
    rng.shuffle(order);
    sum += retrieval::reciprocal_rank({"0", "c", order, labels, {}}, retrieval::MrrMode::instance);
  }
  const double simulated = sum / 10000.0, analytic = retrieval::random_mrr(100);

  const auto model = retrieval::retrieval_train(a_train, b_train, rc);
  const auto held = retrieval::evaluate(retrieval::rank_all(model, a_test, b_test), rc.canonical_k, rc.seed);
  const double shared = std::min(held.instance_a_to_b, held.instance_b_to_a);

  d("identical-views held-out instance MRR (min direction)", self_mrr)("random MRR simulated", simulated)(
      "random MRR analytic", analytic)("shared-latent held-out instance MRR a->b", held.instance_a_to_b)(
      "shared-latent held-out instance MRR b->a", held.instance_b_to_a)("5x random baseline", 5 * analytic)(
      "shared-latent class MRR a->b", held.class_a_to_b);
  return {self_mrr >= 0.99 && std::abs(simulated - analytic) <= 0.005 && std::abs(analytic - 0.0519) < 5e-4 &&
              shared > 5 * analytic,
          d.str()};
}

// ---- 9: determinism -----------------------------------------------------------

Outcome criterion9() {
  Detail d;
  const auto root = scratch("det");
  const std::vector<std::string> train_set{"--set", "train.epochs=2",     "--set", "train.batch_size=3",
                                           "--set", "train.folds=2",      "--set", "train.runs_per_fold=2",
                                           "--set", "train.reg=0.01",     "--set", "synth.items=6",
                                           "--set", "synth.seconds=1.5",  "--set", "synth.artifacts=true"};
  const std::vector<std::string> ret_set{"--set", "features.items=120", "--set", "retrieval.layer_dims=64,32",
                                         "--set", "retrieval.canonical_k=8", "--set", "retrieval.epochs=30"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& extra) {
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  bool ok = true;
  for (const std::string rep : {"r1", "r2"}) {
    const auto p = (root / rep).string();
    const std::vector<std::vector<std::string>> cmds{
        with({"synth", "--out", p + "/ds"}, train_set),
        with({"preprocess", "--manifest", p + "/ds/manifest.csv", "--out", p + "/pre"}, train_set),
        with({"train", "--manifest", p + "/ds/manifest.csv", "--out", p + "/models"}, train_set),
        with({"embed", "--model", p + "/models/fold1_run1", "--manifest", p + "/ds/manifest.csv", "--out",
              p + "/emb.csv", "--canonical"}, train_set),
        with({"synth", "--kind", "features", "--out", p + "/feat"}, ret_set),
        with({"retrieve", "--a", p + "/feat/a.csv", "--b", p + "/feat/b.csv", "--out", p + "/rank.json",
              "--model-out", p + "/rmodel"}, ret_set),
        with({"eval", "--rankings", p + "/rank.json", "--out", p + "/report.json"}, ret_set),
        with({"eval", "--a", p + "/feat/a.csv", "--b", p + "/feat/b.csv", "--seeds", "2", "--out",
              p + "/report2.json"}, ret_set)};
    for (const auto& c : cmds) {
      const int code = cli::run(c);
      if (code != 0) {
        ok = false;
        d("command failed", c.front() + " exit " + std::to_string(code));
      }
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / "r1")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root / "r1");
    auto a = io::read_file(e.path());
    auto b = io::read_file(root / "r2" / rel);
    std::string sa(a.begin(), a.end()), sb(b.begin(), b.end());
    // Logs and reports name their own output directory.
    for (auto* s : {&sa, &sb}) {
      for (const std::string tag : {"/r1/", "/r2/"}) {
        for (auto pos = s->find(tag); pos != std::string::npos; pos = s->find(tag, pos)) s->replace(pos, tag.size(), "/rX/");
      }
    }
    ++files;
    if (sa != sb) {
      ++differing;
      d("differs", rel.string());
    }
  }
  std::filesystem::remove_all(root);
  d("files compared", files)("files differing", differing);
  return {ok && differing == 0 && files > 20, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--criterion=", 0) == 0) {
      only = std::stoi(a.substr(12));
    } else {
      std::cerr << "usage: acceptance [--criterion=N]\n";
      return 1;
    }
  }
  const std::vector<std::function<Outcome()>> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                  criterion6, criterion7, criterion8, criterion9};
  if (only < 0 || only > static_cast<int>(all.size())) {
    std::cerr << "criterion must be 1.." << all.size() << "\n";
    return 1;
  }
  bool ok = true;
  for (std::size_t k = 1; k <= all.size(); ++k) {
    if (only != 0 && static_cast<std::size_t>(only) != k) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("  error: ") + e.what() + "\n"};
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1f s", seconds_since(t0));
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << " (" << secs << ")\n" << o.detail << std::flush;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
