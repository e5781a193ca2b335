#include "audeeg/model_io.h"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <json.hpp>

#include "audeeg/audio_io.h"
#include "audeeg/error.h"

namespace audeeg::io {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

template <typename T, typename U>
void put(std::vector<std::uint8_t>& out, const std::vector<T>& v) {
  for (T x : v) {
    const U u = std::bit_cast<U>(x);
    for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<std::uint8_t>((u >> (8 * b)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <typename T, typename U>
  std::vector<T> take(std::size_t n) {
    if (pos_ + n * sizeof(U) > b_.size()) throw ParseError("binary blob is shorter than its manifest");
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      U u = 0;
      for (std::size_t k = 0; k < sizeof(U); ++k) u |= static_cast<U>(b_[pos_ + k]) << (8 * k);
      out[i] = std::bit_cast<T>(u);
      pos_ += sizeof(U);
    }
    return out;
  }
  void finish() const {
    if (pos_ != b_.size()) throw ParseError("binary blob is longer than its manifest");
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

json params_json(const nn::ParamStore<float>& p) {
  json layers = json::array();
  for (std::size_t i = 0; i < p.specs.size(); ++i) {
    const auto& s = p.specs[i];
    const auto& l = p.layers[i];
    layers.push_back({{"kind", nn::to_string(s.kind)},
                      {"width", s.width},
                      {"stride", s.stride},
                      {"out_channels", s.out_channels},
                      {"padding", nn::to_string(s.padding)},
                      {"weights", l.weights.size()},
                      {"bias", l.bias.size()},
                      {"gain", l.gain.size()},
                      {"shift", l.shift.size()},
                      {"running_mean", l.running_mean.size()},
                      {"running_var", l.running_var.size()},
                      {"stats_ready", l.stats_ready}});
  }
  return {{"format", "audeeg-params"},
          {"version", kFormatVersion},
          {"dtype", "float32-le"},
          {"input", {{"length", p.input.length}, {"channels", p.input.channels}}},
          {"seed", p.seed},
          {"parameter_count", p.parameter_count()},
          {"layers", layers}};
}

nn::ParamStore<float> params_from(const json& m, std::span<const std::uint8_t> blob) {
  try {
    if (m.at("format") != "audeeg-params") throw ParseError("not a parameter manifest");
    nn::ParamStore<float> p;
    p.input = {m.at("input").at("length").get<std::size_t>(), m.at("input").at("channels").get<std::size_t>()};
    p.seed = m.at("seed").get<std::uint64_t>();
    Reader r(blob);
    for (const auto& l : m.at("layers")) {
      nn::LayerSpec s;
      s.kind = nn::parse_layer_kind(l.at("kind").get<std::string>());
      s.width = l.at("width").get<std::size_t>();
      s.stride = l.at("stride").get<std::size_t>();
      s.out_channels = l.at("out_channels").get<std::size_t>();
      s.padding = nn::parse_padding(l.at("padding").get<std::string>());
      p.specs.push_back(s);
      nn::LayerParams<float> lp;
      lp.weights = r.take<float, std::uint32_t>(l.at("weights").get<std::size_t>());
      lp.bias = r.take<float, std::uint32_t>(l.at("bias").get<std::size_t>());
      lp.gain = r.take<float, std::uint32_t>(l.at("gain").get<std::size_t>());
      lp.shift = r.take<float, std::uint32_t>(l.at("shift").get<std::size_t>());
      lp.running_mean = r.take<float, std::uint32_t>(l.at("running_mean").get<std::size_t>());
      lp.running_var = r.take<float, std::uint32_t>(l.at("running_var").get<std::size_t>());
      lp.stats_ready = l.at("stats_ready").get<bool>();
      p.layers.push_back(std::move(lp));
    }
    r.finish();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("parameter manifest: ") + e.what());
  }
}

json cca_json(const linalg::CcaModel& c) {
  return {{"dx", c.mean_x.size()}, {"dy", c.mean_y.size()}, {"k", c.components()},
          {"dtype", "float64-le"}, {"correlations", c.correlations}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_params(const std::filesystem::path& dir, const std::string& name, const nn::ParamStore<float>& p) {
  write_text_atomic(dir / (name + ".json"), params_manifest(p));
  const auto blob = encode_params(p);
  write_file_atomic(dir / (name + ".bin"), blob);
}

nn::ParamStore<float> load_params(const std::filesystem::path& dir, const std::string& name) {
  return decode_params(read_text(dir / (name + ".json")), read_file(dir / (name + ".bin")));
}

linalg::CcaModel load_cca(const json& m, const std::filesystem::path& path) {
  try {
    return decode_cca(m.at("dx").get<std::size_t>(), m.at("dy").get<std::size_t>(),
                      m.at("k").get<std::size_t>(), read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(std::string("cca manifest: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_params(const nn::ParamStore<float>& p) {
  std::vector<std::uint8_t> out;
  out.reserve(p.parameter_count() * 4);
  for (const auto& l : p.layers) {
    put<float, std::uint32_t>(out, l.weights);
    put<float, std::uint32_t>(out, l.bias);
    put<float, std::uint32_t>(out, l.gain);
    put<float, std::uint32_t>(out, l.shift);
    put<float, std::uint32_t>(out, l.running_mean);
    put<float, std::uint32_t>(out, l.running_var);
  }
  return out;
}

std::string params_manifest(const nn::ParamStore<float>& p) { return params_json(p).dump(2) + "\n"; }

nn::ParamStore<float> decode_params(const std::string& manifest, std::span<const std::uint8_t> blob) {
  json m;
  try {
    m = json::parse(manifest);
  } catch (const json::exception& e) {
    throw ParseError(std::string("parameter manifest: ") + e.what());
  }
  return params_from(m, blob);
}

std::vector<std::uint8_t> encode_cca(const linalg::CcaModel& c) {
  std::vector<std::uint8_t> out;
  auto vec = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  put<double, std::uint64_t>(out, c.mean_x);
  put<double, std::uint64_t>(out, c.mean_y);
  put<double, std::uint64_t>(out, vec(c.proj_x.values()));
  put<double, std::uint64_t>(out, vec(c.proj_y.values()));
  put<double, std::uint64_t>(out, c.correlations);
  return out;
}

linalg::CcaModel decode_cca(std::size_t dx, std::size_t dy, std::size_t k,
                            std::span<const std::uint8_t> blob) {
  Reader r(blob);
  linalg::CcaModel c;
  c.mean_x = r.take<double, std::uint64_t>(dx);
  c.mean_y = r.take<double, std::uint64_t>(dy);
  c.proj_x = linalg::Matrix(dx, k, r.take<double, std::uint64_t>(dx * k));
  c.proj_y = linalg::Matrix(dy, k, r.take<double, std::uint64_t>(dy * k));
  c.correlations = r.take<double, std::uint64_t>(k);
  r.finish();
  return c;
}

std::filesystem::path temp_sibling(const std::filesystem::path& dir) {
  auto tmp = dir;
  if (!tmp.has_filename()) tmp = tmp.parent_path();
  tmp += ".tmp" + std::to_string(::getpid());
  return tmp;
}

void replace_directory(const std::filesystem::path& tmp, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::filesystem::rename(tmp, dir, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + dir.string() + ": " + ec.message());
}

void save_model(const std::filesystem::path& dir, const pipeline::TrainedModel& m,
                const config::ExperimentConfig& config) {
  json manifest = {{"format", "audeeg-model"},
                   {"version", kFormatVersion},
                   {"config", config::serialize(config)},
                   {"config_hash", config::config_hash(config)},
                   {"fold", m.fold},
                   {"run", m.run},
                   {"seed", m.seed},
                   {"initial_heldout_loss", m.initial_heldout_loss},
                   {"train_loss", m.train_loss},
                   {"heldout_loss", m.heldout_loss},
                   {"train_recordings", m.train_recordings},
                   {"test_recordings", m.test_recordings},
                   {"gradient_sources", m.gradient_sources},
                   {"skipped_batches", m.skipped_batches},
                   {"cca", cca_json(m.cca)},
                   {"files", {{"audio", "audio.bin"}, {"eeg", "eeg.bin"}, {"cca", "cca.bin"}}}};
  write_directory_atomic(dir, [&](const std::filesystem::path& tmp) {
    save_params(tmp, "audio", m.audio);
    save_params(tmp, "eeg", m.eeg);
    write_file_atomic(tmp / "cca.bin", encode_cca(m.cca));
    write_json(tmp / "manifest.json", manifest);
  });
}

LoadedModel load_model(const std::filesystem::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format") != "audeeg-model") throw ParseError(dir.string() + " is not a model directory");
    LoadedModel out;
    out.config = config::parse(m.at("config").get<std::string>(), (dir / "manifest.json").string());
    auto& t = out.model;
    t.config = out.config.train;
    t.fold = m.at("fold").get<std::size_t>();
    t.run = m.at("run").get<std::size_t>();
    t.seed = m.at("seed").get<std::uint64_t>();
    t.initial_heldout_loss = m.at("initial_heldout_loss").get<double>();
    t.train_loss = m.at("train_loss").get<std::vector<double>>();
    t.heldout_loss = m.at("heldout_loss").get<std::vector<double>>();
    t.train_recordings = m.at("train_recordings").get<std::vector<std::size_t>>();
    t.test_recordings = m.at("test_recordings").get<std::vector<std::size_t>>();
    t.gradient_sources = m.at("gradient_sources").get<std::vector<std::size_t>>();
    t.skipped_batches = m.at("skipped_batches").get<std::size_t>();
    t.audio = load_params(dir, "audio");
    t.eeg = load_params(dir, "eeg");
    t.cca = load_cca(m.at("cca"), dir / "cca.bin");
    return out;
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
}

void save_retrieval_model(const std::filesystem::path& dir, const retrieval::RetrievalModel& m,
                          const config::ExperimentConfig& config) {
  json manifest = {{"format", "audeeg-retrieval-model"},
                   {"version", kFormatVersion},
                   {"config", config::serialize(config)},
                   {"config_hash", config::config_hash(config)},
                   {"loss_history", m.loss_history},
                   {"mean_a", m.mean_a},
                   {"scale_a", m.scale_a},
                   {"mean_b", m.mean_b},
                   {"scale_b", m.scale_b},
                   {"cca", cca_json(m.cca)},
                   {"files", {{"branch_a", "branch_a.bin"}, {"branch_b", "branch_b.bin"}, {"cca", "cca.bin"}}}};
  write_directory_atomic(dir, [&](const std::filesystem::path& tmp) {
    save_params(tmp, "branch_a", m.branch_a.cast<float>());
    save_params(tmp, "branch_b", m.branch_b.cast<float>());
    write_file_atomic(tmp / "cca.bin", encode_cca(m.cca));
    write_json(tmp / "manifest.json", manifest);
  });
}

retrieval::RetrievalModel load_retrieval_model(const std::filesystem::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format") != "audeeg-retrieval-model") {
      throw ParseError(dir.string() + " is not a retrieval model directory");
    }
    retrieval::RetrievalModel out;
    out.config = config::parse(m.at("config").get<std::string>()).retrieval;
    out.loss_history = m.at("loss_history").get<std::vector<double>>();
    out.mean_a = m.at("mean_a").get<std::vector<double>>();
    out.scale_a = m.at("scale_a").get<std::vector<double>>();
    out.mean_b = m.at("mean_b").get<std::vector<double>>();
    out.scale_b = m.at("scale_b").get<std::vector<double>>();
    out.branch_a = load_params(dir, "branch_a").cast<double>();
    out.branch_b = load_params(dir, "branch_b").cast<double>();
    out.cca = load_cca(m.at("cca"), dir / "cca.bin");
    return out;
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace audeeg::io
