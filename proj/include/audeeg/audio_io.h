#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "audeeg/dsp.h"

namespace audeeg::io {

enum class WavFormat { pcm16, float32 };

/// Raw RIFF/WAVE contents before any policy checks.
struct WavData {
  WavFormat format = WavFormat::pcm16;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::vector<double> interleaved;  ///< scaled to [-1, 1]
};

/// PCM16 is scaled by 1/32768; float32 is taken as is.
WavData parse_wav(std::span<const std::uint8_t> bytes);
WavData read_wav(const std::filesystem::path& path);

/// Mono 22050 Hz audio as a one-channel SignalBuffer. Any other layout
/// is rejected; nothing is resampled or mixed down.
dsp::SignalBuffer ingest_audio(const std::filesystem::path& path);

/// Mono or multichannel buffer to WAV. PCM16 rounds to nearest and clips.
std::vector<std::uint8_t> encode_wav(const dsp::SignalBuffer& sig, WavFormat format);
void write_wav(const std::filesystem::path& path, const dsp::SignalBuffer& sig, WavFormat format);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

}  // namespace audeeg::io
