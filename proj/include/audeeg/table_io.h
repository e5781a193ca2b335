#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "audeeg/dsp.h"
#include "audeeg/retrieval.h"

namespace audeeg::io {

/// Splits one line on `delim`. Fields may be double-quoted; "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line, char delim = ',');

/// 16-column EEG samples, one row per sample, at 250 Hz. A first row that
/// does not parse as numbers is taken as a header. Commas, semicolons and
/// tabs are accepted as delimiters.
dsp::SignalBuffer ingest_eeg(const std::filesystem::path& path);
dsp::SignalBuffer parse_eeg_csv(const std::string& text, const std::string& origin = "<eeg>");
std::string format_eeg_csv(const dsp::SignalBuffer& sig);

/// Header `id,class,v0..v{d-1}`.
retrieval::FeatureTable read_feature_table(const std::filesystem::path& path);
retrieval::FeatureTable parse_feature_table(const std::string& text,
                                            const std::string& origin = "<table>");
std::string format_feature_table(const retrieval::FeatureTable& table);

struct ManifestRecord {
  std::string audio_path;
  std::string eeg_path;
  std::string subject_id;
  std::string class_label;

  bool operator==(const ManifestRecord&) const = default;
};

/// CSV with header `audio_path,eeg_path,subject_id,class_label`. Relative
/// paths are resolved against the manifest's directory by read_manifest.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
std::vector<ManifestRecord> parse_manifest(const std::string& text,
                                           const std::string& origin = "<manifest>");
std::string format_manifest(const std::vector<ManifestRecord>& records);

/// Recording id used in outputs: the audio file stem.
std::string record_id(const ManifestRecord& r);

/// Shortest text form that reads back to the same double.
std::string format_double(double v);

}  // namespace audeeg::io
