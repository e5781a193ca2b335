#include "audeeg/table_io.h"

#include <charconv>
#include <cmath>
#include <sstream>

#include "audeeg/audio_io.h"
#include "audeeg/error.h"

namespace audeeg::io {

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = end + 1;
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  if (!out.empty() && out.front().rfind("\xEF\xBB\xBF", 0) == 0) out.front().erase(0, 3);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

char detect_delimiter(const std::string& line) {
  for (char d : {',', ';', '\t'})
    if (line.find(d) != std::string::npos) return d;
  return ',';
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  out.push_back(cur);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

// ---- EEG -------------------------------------------------------------------

dsp::SignalBuffer parse_eeg_csv(const std::string& text, const std::string& origin) {
  constexpr std::size_t kChannels = 16;
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(origin + ": empty EEG file");
  const char delim = detect_delimiter(lines.front());
  std::vector<std::vector<double>> channels(kChannels);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv_line(lines[li], delim);
    if (cells.size() != kChannels) {
      throw ValidationError(origin + ": row " + std::to_string(li + 1) + " has " +
                            std::to_string(cells.size()) + " columns, EEG needs exactly 16");
    }
    std::vector<double> row(kChannels);
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (!parse_number(cells[c], row[c])) {
        numeric = false;
        bad = c;
        break;
      }
    }
    if (!numeric) {
      if (li == 0) continue;  // header
      throw ParseError(origin + ": row " + std::to_string(li + 1) + ", column " +
                       std::to_string(bad + 1) + ": '" + cells[bad] + "' is not a number");
    }
    for (std::size_t c = 0; c < kChannels; ++c) channels[c].push_back(row[c]);
  }
  if (channels[0].empty()) throw ParseError(origin + ": EEG file has no samples");
  return dsp::SignalBuffer(std::move(channels), 250.0);
}

dsp::SignalBuffer ingest_eeg(const std::filesystem::path& path) {
  return parse_eeg_csv(read_text(path), path.string());
}

std::string format_eeg_csv(const dsp::SignalBuffer& sig) {
  std::string out;
  for (std::size_t c = 0; c < sig.channels(); ++c) out += (c ? ",ch" : "ch") + std::to_string(c);
  out += '\n';
  for (std::size_t t = 0; t < sig.samples(); ++t) {
    for (std::size_t c = 0; c < sig.channels(); ++c) {
      if (c) out += ',';
      out += format_double(sig.at(c, t));
    }
    out += '\n';
  }
  return out;
}

// ---- feature tables --------------------------------------------------------

retrieval::FeatureTable parse_feature_table(const std::string& text, const std::string& origin) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(origin + ": empty feature table");
  const auto header = split_csv_line(lines.front());
  if (header.size() < 3 || trim(header[0]) != "id" || trim(header[1]) != "class") {
    throw ParseError(origin + ": header must be id,class,v0,...");
  }
  const std::size_t d = header.size() - 2;
  retrieval::FeatureTable t;
  std::vector<double> values;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != d + 2) {
      throw ParseError(origin + ": row " + std::to_string(li + 1) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(d + 2));
    }
    t.ids.push_back(cells[0]);
    t.labels.push_back(cells[1]);
    for (std::size_t c = 0; c < d; ++c) {
      double v;
      if (!parse_number(cells[c + 2], v)) {
        throw ParseError(origin + ": row " + std::to_string(li + 1) + ", column " +
                         std::to_string(c + 3) + ": '" + cells[c + 2] + "' is not a number");
      }
      values.push_back(v);
    }
  }
  t.vectors = linalg::Matrix(t.ids.size(), d, std::move(values));
  t.validate();
  return t;
}

retrieval::FeatureTable read_feature_table(const std::filesystem::path& path) {
  return parse_feature_table(read_text(path), path.string());
}

std::string format_feature_table(const retrieval::FeatureTable& t) {
  t.validate();
  std::string out = "id,class";
  for (std::size_t c = 0; c < t.dim(); ++c) out += ",v" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < t.size(); ++r) {
    out += quote(t.ids[r]) + "," + quote(t.labels[r]);
    for (double v : t.vectors.row(r)) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

// ---- manifest --------------------------------------------------------------

std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::string& origin) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(origin + ": empty manifest");
  const auto header = split_csv_line(lines.front());
  const std::vector<std::string> want{"audio_path", "eeg_path", "subject_id", "class_label"};
  std::vector<std::size_t> col(want.size(), header.size());
  for (std::size_t i = 0; i < header.size(); ++i)
    for (std::size_t w = 0; w < want.size(); ++w)
      if (trim(header[i]) == want[w]) col[w] = i;
  for (std::size_t w = 0; w < want.size(); ++w)
    if (col[w] == header.size()) throw ParseError(origin + ": manifest header lacks '" + want[w] + "'");
  std::vector<ManifestRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) {
      throw ParseError(origin + ": row " + std::to_string(li + 1) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(header.size()));
    }
    out.push_back({trim(cells[col[0]]), trim(cells[col[1]]), trim(cells[col[2]]), trim(cells[col[3]])});
  }
  return out;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  auto records = parse_manifest(read_text(path), path.string());
  const auto base = path.parent_path();
  for (auto& r : records) {
    if (std::filesystem::path(r.audio_path).is_relative()) r.audio_path = (base / r.audio_path).string();
    if (std::filesystem::path(r.eeg_path).is_relative()) r.eeg_path = (base / r.eeg_path).string();
  }
  return records;
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string out = "audio_path,eeg_path,subject_id,class_label\n";
  for (const auto& r : records)
    out += quote(r.audio_path) + "," + quote(r.eeg_path) + "," + quote(r.subject_id) + "," +
           quote(r.class_label) + "\n";
  return out;
}

std::string record_id(const ManifestRecord& r) {
  return std::filesystem::path(r.audio_path).stem().string();
}

}  // namespace audeeg::io
