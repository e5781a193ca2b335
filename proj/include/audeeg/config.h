#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "audeeg/pipeline.h"
#include "audeeg/retrieval.h"
#include "audeeg/synth.h"

namespace audeeg::config {

/// Every tunable of a run. The top-level seed is copied into the train,
/// retrieval and synth sections by resolved().
struct ExperimentConfig {
  std::uint64_t seed = 1;
  pipeline::PreprocessConfig preprocess;
  pipeline::TrainConfig train;
  retrieval::RetrievalConfig retrieval;
  synth::SynthSpec synth;
  synth::FeatureSynthSpec features;

  ExperimentConfig resolved() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// `key = value` lines grouped under `[section]` headers; `#` starts a
/// comment. Keys not set keep their defaults; unknown keys are errors.
ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load(const std::filesystem::path& path);
/// Full dump of every key in a fixed order; parse(serialize(c)) == c.
std::string serialize(const ExperimentConfig& c);

/// Applies one `section.key=value` override (or `seed=value`).
void apply_override(ExperimentConfig& c, const std::string& assignment);

/// 64-bit FNV-1a of serialize(c), as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

/// Names of every key as `section.key`, in serialization order.
std::vector<std::string> keys();

}  // namespace audeeg::config
