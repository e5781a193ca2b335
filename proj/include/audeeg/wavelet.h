#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "audeeg/dsp.h"

namespace audeeg::wavelet {

enum class Family { haar, db2, db4 };

Family parse_family(const std::string& name);
std::string family_name(Family f);

/// Orthogonal analysis filter pair.
struct FilterBank {
  std::vector<double> lowpass;
  std::vector<double> highpass;
};

const FilterBank& filters(Family f);

/// Deepest level whose input still spans the filter: ⌊log2(n / (taps − 1))⌋.
std::size_t max_level(std::size_t length, Family f);

struct WaveletDecomposition {
  Family family = Family::db2;
  std::size_t levels = 0;
  /// Detail bands from finest (level 1) to coarsest, then the approximation.
  std::vector<std::vector<double>> bands;
  /// Input length at each level; lengths[0] is the original length.
  std::vector<std::size_t> lengths;
  std::size_t original_length = 0;

  std::span<double> detail(std::size_t level) { return bands[level - 1]; }
  std::span<double> approximation() { return bands.back(); }
};

/// Multilevel analysis with half-sample symmetric extension.
/// `levels == 0` selects min(6, max_level(length)).
WaveletDecomposition dwt(std::span<const double> x, Family family = Family::db2,
                         std::size_t levels = 0);

std::vector<double> idwt(const WaveletDecomposition& d);

struct WarOptions {
  double multiplier = 5.0;
  Family family = Family::db2;
  std::size_t levels = 0;
  bool replace_with_zero = false;  ///< default pulls outliers to the band mean
};

/// Wavelet artifact removal: in every band, coefficients further than
/// multiplier·std from the band mean are replaced.
dsp::SignalBuffer war(const dsp::SignalBuffer& sig, const WarOptions& options = {});

/// Applies the WAR replacement rule to one band in place.
void war_band(std::span<double> band, double multiplier, bool replace_with_zero);

struct WsdOptions {
  double threshold = 0.5;
  std::size_t window = 16;
  Family family = Family::db2;
  std::size_t levels = 0;
};

/// Per band, per coefficient index: mean cosine over channel pairs of the
/// windowed coefficient vectors, mapped to [0, 1].
std::vector<std::vector<double>> semblance(std::span<const WaveletDecomposition> channels,
                                           std::size_t window);

/// Wavelet semblance denoising: coefficients whose cross-channel semblance
/// falls below the threshold are zeroed in every channel.
dsp::SignalBuffer wsd(const dsp::SignalBuffer& sig, const WsdOptions& options = {});

}  // namespace audeeg::wavelet
