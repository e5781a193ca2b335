#include "audeeg/wavelet.h"

#include <algorithm>
#include <cmath>

#include "audeeg/error.h"

namespace audeeg::wavelet {

namespace {

FilterBank make_bank(std::vector<double> lo) {
  FilterBank b;
  const std::size_t f = lo.size();
  b.highpass.resize(f);
  for (std::size_t k = 0; k < f; ++k) {
    const double sign = (k % 2 == 0) ? -1.0 : 1.0;
    b.highpass[k] = sign * lo[f - 1 - k];
  }
  b.lowpass = std::move(lo);
  return b;
}

// Index into a half-sample symmetric extension of a length-n signal.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<std::ptrdiff_t>(n) ? k : period - 1 - k);
}

void analyze(std::span<const double> x, const FilterBank& bank, std::vector<double>& approx,
             std::vector<double>& detail) {
  const std::size_t n = x.size();
  const std::size_t f = bank.lowpass.size();
  const std::size_t m = (n + f - 1) / 2;
  approx.assign(m, 0.0);
  detail.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double a = 0.0, d = 0.0;
    const auto centre = static_cast<std::ptrdiff_t>(2 * k + 1);
    for (std::size_t j = 0; j < f; ++j) {
      const std::ptrdiff_t idx = centre - static_cast<std::ptrdiff_t>(j);
      const double v = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n))
                           ? x[static_cast<std::size_t>(idx)]
                           : x[reflect(idx, n)];
      a += bank.lowpass[j] * v;
      d += bank.highpass[j] * v;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

std::vector<double> synthesize(std::span<const double> approx, std::span<const double> detail,
                               const FilterBank& bank, std::size_t n) {
  const std::size_t f = bank.lowpass.size();
  const auto m = static_cast<std::ptrdiff_t>(approx.size());
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    // Filter tap j = 2k + 1 - t must lie in [0, f).
    const std::ptrdiff_t k_lo = ti / 2;
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(
        (ti + static_cast<std::ptrdiff_t>(f) - 2) / 2, m - 1);
    double s = 0.0;
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) {
      const std::ptrdiff_t j = 2 * k + 1 - ti;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(f)) continue;
      const auto ju = static_cast<std::size_t>(j);
      s += bank.lowpass[ju] * approx[static_cast<std::size_t>(k)] +
           bank.highpass[ju] * detail[static_cast<std::size_t>(k)];
    }
    x[t] = s;
  }
  return x;
}

}  // namespace

Family parse_family(const std::string& name) {
  if (name == "haar" || name == "db1") return Family::haar;
  if (name == "db2") return Family::db2;
  if (name == "db4") return Family::db4;
  throw ValidationError("unknown wavelet family '" + name + "'");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::haar: return "haar";
    case Family::db2: return "db2";
    case Family::db4: return "db4";
  }
  return "db4";
}

const FilterBank& filters(Family f) {
  static const FilterBank haar = make_bank({0.7071067811865476, 0.7071067811865476});
  static const FilterBank db2 = make_bank({-0.12940952255126037, 0.2241438680420134,
                                           0.8365163037378079, 0.48296291314453416});
  static const FilterBank db4 = make_bank(
      {-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
       -0.18703481171888114, -0.02798376941698385, 0.6308807679295904, 0.7148465705525415,
       0.23037781330885523});
  switch (f) {
    case Family::haar: return haar;
    case Family::db2: return db2;
    case Family::db4: return db4;
  }
  return db4;
}

std::size_t max_level(std::size_t length, Family f) {
  const std::size_t taps = filters(f).lowpass.size();
  if (length < taps - 1 || taps < 2) return 0;
  std::size_t level = 0;
  std::size_t span = taps - 1;
  while (span * 2 <= length) {
    span *= 2;
    ++level;
  }
  return level;
}

WaveletDecomposition dwt(std::span<const double> x, Family family, std::size_t levels) {
  const std::size_t admissible = max_level(x.size(), family);
  if (levels == 0) levels = std::min<std::size_t>(6, admissible);
  if (levels == 0 || levels > admissible) {
    throw ValidationError("dwt: signal of length " + std::to_string(x.size()) +
                          " is too short for " + std::to_string(std::max<std::size_t>(levels, 1)) +
                          " level(s) of " + family_name(family) + " (max " +
                          std::to_string(admissible) + ")");
  }
  const FilterBank& bank = filters(family);
  WaveletDecomposition d;
  d.family = family;
  d.levels = levels;
  d.original_length = x.size();
  d.bands.reserve(levels + 1);
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> approx, detail;
  for (std::size_t l = 0; l < levels; ++l) {
    d.lengths.push_back(current.size());
    analyze(current, bank, approx, detail);
    d.bands.push_back(detail);
    current = approx;
  }
  d.bands.push_back(std::move(current));
  return d;
}

std::vector<double> idwt(const WaveletDecomposition& d) {
  if (d.levels == 0 || d.bands.size() != d.levels + 1 || d.lengths.size() != d.levels) {
    throw ValidationError("idwt: inconsistent decomposition");
  }
  const FilterBank& bank = filters(d.family);
  std::vector<double> approx = d.bands.back();
  for (std::size_t l = d.levels; l-- > 0;) {
    const auto& detail = d.bands[l];
    if (detail.size() != approx.size()) {
      throw ValidationError("idwt: band length mismatch at level " + std::to_string(l + 1));
    }
    approx = synthesize(approx, detail, bank, d.lengths[l]);
  }
  return approx;
}

void war_band(std::span<double> band, double multiplier, bool replace_with_zero) {
  if (band.empty()) return;
  double mean = 0.0;
  for (double c : band) mean += c;
  mean /= static_cast<double>(band.size());
  double var = 0.0;
  for (double c : band) var += (c - mean) * (c - mean);
  const double sd = std::sqrt(var / static_cast<double>(band.size()));
  const double limit = multiplier * sd;
  const double replacement = replace_with_zero ? 0.0 : mean;
  for (double& c : band)
    if (std::abs(c - mean) > limit) c = replacement;
}

dsp::SignalBuffer war(const dsp::SignalBuffer& sig, const WarOptions& options) {
  if (!(options.multiplier > 0.0)) throw ValidationError("war: multiplier must be positive");
  dsp::SignalBuffer out = sig;
  for (std::size_t c = 0; c < sig.channels(); ++c) {
    WaveletDecomposition d = dwt(sig.channel(c), options.family, options.levels);
    for (auto& band : d.bands) war_band(band, options.multiplier, options.replace_with_zero);
    const std::vector<double> rec = idwt(d);
    std::copy(rec.begin(), rec.end(), out.channel(c).begin());
  }
  return out;
}

std::vector<std::vector<double>> semblance(std::span<const WaveletDecomposition> channels,
                                           std::size_t window) {
  if (channels.size() < 2) throw ValidationError("semblance: need at least 2 channels");
  if (window == 0) throw ValidationError("semblance: window must be positive");
  const std::size_t nbands = channels.front().bands.size();
  const std::size_t nch = channels.size();
  const double pairs = static_cast<double>(nch * (nch - 1));
  std::vector<std::vector<double>> scores(nbands);
  std::vector<double> inv_norm(nch);
  for (std::size_t b = 0; b < nbands; ++b) {
    const std::size_t len = channels.front().bands[b].size();
    for (const auto& ch : channels) {
      if (ch.bands.size() != nbands || ch.bands[b].size() != len) {
        throw ValidationError("semblance: channels decomposed with different layouts");
      }
    }
    auto& out = scores[b];
    out.resize(len);
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
    for (std::size_t i = 0; i < len; ++i) {
      const auto lo = static_cast<std::size_t>(
          std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - half));
      const std::size_t hi = std::min(len, lo + window);
      double nonzero = 0.0;
      for (std::size_t c = 0; c < nch; ++c) {
        const auto& band = channels[c].bands[b];
        double s = 0.0;
        for (std::size_t t = lo; t < hi; ++t) s += band[t] * band[t];
        inv_norm[c] = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0;
        if (s > 0.0) nonzero += 1.0;
      }
      // Σ_{c≠d} <u_c, u_d> = ‖Σ u_c‖² − Σ ‖u_c‖² for unit vectors u_c.
      double total = 0.0;
      for (std::size_t t = lo; t < hi; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < nch; ++c) acc += channels[c].bands[b][t] * inv_norm[c];
        total += acc * acc;
      }
      const double mean_cos = std::clamp((total - nonzero) / pairs, -1.0, 1.0);
      out[i] = 0.5 * (mean_cos + 1.0);
    }
  }
  return scores;
}

dsp::SignalBuffer wsd(const dsp::SignalBuffer& sig, const WsdOptions& options) {
  if (sig.channels() < 2) throw ValidationError("wsd: needs at least 2 channels");
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) {
    throw ValidationError("wsd: threshold must lie in [0, 1]");
  }
  std::vector<WaveletDecomposition> decomp;
  decomp.reserve(sig.channels());
  for (std::size_t c = 0; c < sig.channels(); ++c)
    decomp.push_back(dwt(sig.channel(c), options.family, options.levels));

  const auto scores = semblance(decomp, options.window);
  for (std::size_t b = 0; b < scores.size(); ++b)
    for (std::size_t i = 0; i < scores[b].size(); ++i)
      if (scores[b][i] < options.threshold)
        for (auto& d : decomp) d.bands[b][i] = 0.0;

  dsp::SignalBuffer out = sig;
  for (std::size_t c = 0; c < sig.channels(); ++c) {
    const std::vector<double> rec = idwt(decomp[c]);
    std::copy(rec.begin(), rec.end(), out.channel(c).begin());
  }
  return out;
}

}  // namespace audeeg::wavelet
