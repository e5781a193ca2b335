#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "audeeg/config.h"
#include "audeeg/linalg.h"
#include "audeeg/nn.h"
#include "audeeg/pipeline.h"
#include "audeeg/retrieval.h"

namespace audeeg::io {

/// Layer-ordered little-endian float32 blob: per layer weights, bias,
/// gain, shift, running mean, running variance.
std::vector<std::uint8_t> encode_params(const nn::ParamStore<float>& params);
/// JSON manifest text: input shape, seed, and per layer kind, geometry and
/// tensor sizes.
std::string params_manifest(const nn::ParamStore<float>& params);
nn::ParamStore<float> decode_params(const std::string& manifest, std::span<const std::uint8_t> blob);

/// Little-endian float64 blob of means, projections and correlations.
std::vector<std::uint8_t> encode_cca(const linalg::CcaModel& cca);
linalg::CcaModel decode_cca(std::size_t dx, std::size_t dy, std::size_t k,
                            std::span<const std::uint8_t> blob);

/// Model directory: manifest.json, audio.{json,bin}, eeg.{json,bin},
/// cca.bin. Written to a temporary sibling and renamed into place.
void save_model(const std::filesystem::path& dir, const pipeline::TrainedModel& model,
                const config::ExperimentConfig& config);

struct LoadedModel {
  pipeline::TrainedModel model;
  config::ExperimentConfig config;
};
LoadedModel load_model(const std::filesystem::path& dir);

/// Same layout for the retrieval model (branch_a/branch_b blobs).
void save_retrieval_model(const std::filesystem::path& dir, const retrieval::RetrievalModel& model,
                          const config::ExperimentConfig& config);
retrieval::RetrievalModel load_retrieval_model(const std::filesystem::path& dir);

/// Builds a directory under a temporary name and renames it to `dir`.
template <typename Fn>
void write_directory_atomic(const std::filesystem::path& dir, Fn&& fill);

void replace_directory(const std::filesystem::path& tmp, const std::filesystem::path& dir);
std::filesystem::path temp_sibling(const std::filesystem::path& dir);

template <typename Fn>
void write_directory_atomic(const std::filesystem::path& dir, Fn&& fill) {
  const auto tmp = temp_sibling(dir);
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);
  try {
    fill(tmp);
  } catch (...) {
    std::filesystem::remove_all(tmp);
    throw;
  }
  replace_directory(tmp, dir);
}

}  // namespace audeeg::io
