#include "audeeg/audio_io.h"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "audeeg/error.h"

namespace audeeg::io {

namespace {

std::uint16_t u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
std::uint32_t u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}
bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

WavData parse_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) {
    throw ParseError("not a RIFF/WAVE file");
  }
  WavData wav;
  bool have_fmt = false;
  std::uint16_t code = 0, bits = 0, block_align = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) throw ParseError("WAV chunk at byte " + std::to_string(pos) + " is truncated");
    if (tag_is(b, pos, "fmt ")) {
      if (size < 16) throw ParseError("WAV fmt chunk too short");
      code = u16(b, body);
      wav.channels = u16(b, body + 2);
      wav.rate = u32(b, body + 4);
      block_align = u16(b, body + 12);
      bits = u16(b, body + 14);
      if (code == kFormatExtensible && size >= 26) code = u16(b, body + 24);
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      if (!have_fmt) throw ParseError("WAV data chunk precedes fmt chunk");
      if (code == kFormatPcm && bits == 16) {
        wav.format = WavFormat::pcm16;
      } else if (code == kFormatFloat && bits == 32) {
        wav.format = WavFormat::float32;
      } else {
        throw ValidationError("unsupported WAV encoding (format code " + std::to_string(code) +
                              ", " + std::to_string(bits) +
                              " bits); expected 16-bit PCM or 32-bit float");
      }
      if (wav.channels == 0 || block_align != wav.channels * bits / 8) {
        throw ParseError("inconsistent WAV block alignment");
      }
      const std::size_t n = size / (bits / 8);
      wav.interleaved.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (wav.format == WavFormat::pcm16) {
          const auto v = static_cast<std::int16_t>(u16(b, body + 2 * i));
          wav.interleaved[i] = static_cast<double>(v) / 32768.0;
        } else {
          wav.interleaved[i] = static_cast<double>(std::bit_cast<float>(u32(b, body + 4 * i)));
        }
      }
      return wav;
    }
    pos = body + size + (size & 1);
  }
  throw ParseError("WAV file has no data chunk");
}

WavData read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

dsp::SignalBuffer ingest_audio(const std::filesystem::path& path) {
  const WavData wav = read_wav(path);
  if (wav.channels != 1) {
    throw ValidationError(path.string() + ": audio must be mono, file has " +
                          std::to_string(wav.channels) + " channels");
  }
  if (wav.rate != 22050) {
    throw ValidationError(path.string() + ": audio must be sampled at 22050 Hz, file is " +
                          std::to_string(wav.rate) + " Hz (resampling is not supported)");
  }
  dsp::SignalBuffer sig({wav.interleaved}, static_cast<double>(wav.rate));
  sig.validate();
  return sig;
}

std::vector<std::uint8_t> encode_wav(const dsp::SignalBuffer& sig, WavFormat format) {
  const std::uint16_t ch = static_cast<std::uint16_t>(sig.channels());
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const auto rate = static_cast<std::uint32_t>(std::llround(sig.rate()));
  if (ch == 0 || std::abs(sig.rate() - rate) > 1e-9) {
    throw ValidationError("WAV needs at least one channel and an integer sample rate");
  }
  const std::uint32_t data = static_cast<std::uint32_t>(sig.samples() * ch * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data);
  put_tag(out, "RIFF");
  put32(out, 36 + data);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put16(out, ch);
  put32(out, rate);
  put32(out, rate * ch * (bits / 8));
  put16(out, static_cast<std::uint16_t>(ch * (bits / 8)));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data);
  for (std::size_t t = 0; t < sig.samples(); ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double v = sig.at(c, t);
      if (format == WavFormat::pcm16) {
        const double q = std::clamp(std::nearbyint(v * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const dsp::SignalBuffer& sig, WavFormat format) {
  write_file_atomic(path, encode_wav(sig, format));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace audeeg::io
