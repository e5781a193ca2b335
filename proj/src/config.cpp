#include "audeeg/config.h"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "audeeg/audio_io.h"
#include "audeeg/error.h"
#include "audeeg/table_io.h"

namespace audeeg::config {

namespace {

using Getter = std::function<std::string(const ExperimentConfig&)>;
using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct Field {
  std::string section;
  std::string key;
  Getter get;
  Setter set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ParseError("'" + v + "' is not a non-negative integer");
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ParseError("'" + v + "' is not a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError("'" + v + "' is not a boolean");
}

template <typename Acc>
Field size_field(std::string section, std::string key, Acc acc) {
  return {std::move(section), std::move(key),
          [acc](const ExperimentConfig& c) { return std::to_string(acc(const_cast<ExperimentConfig&>(c))); },
          [acc](ExperimentConfig& c, const std::string& v) { acc(c) = static_cast<std::size_t>(to_u64(v)); }};
}

template <typename Acc>
Field real_field(std::string section, std::string key, Acc acc) {
  return {std::move(section), std::move(key),
          [acc](const ExperimentConfig& c) { return io::format_double(acc(const_cast<ExperimentConfig&>(c))); },
          [acc](ExperimentConfig& c, const std::string& v) { acc(c) = to_double(v); }};
}

template <typename Acc>
Field bool_field(std::string section, std::string key, Acc acc) {
  return {std::move(section), std::move(key),
          [acc](const ExperimentConfig& c) { return acc(const_cast<ExperimentConfig&>(c)) ? "true" : "false"; },
          [acc](ExperimentConfig& c, const std::string& v) { acc(c) = to_bool(v); }};
}

template <typename Acc, typename Fmt, typename Parse>
Field enum_field(std::string section, std::string key, Acc acc, Fmt fmt, Parse parse) {
  return {std::move(section), std::move(key),
          [acc, fmt](const ExperimentConfig& c) { return fmt(acc(const_cast<ExperimentConfig&>(c))); },
          [acc, parse](ExperimentConfig& c, const std::string& v) { acc(c) = parse(v); }};
}

void add_optimizer(std::vector<Field>& f, const std::string& s,
                   std::function<optim::OptimizerConfig&(ExperimentConfig&)> o) {
  f.push_back(enum_field(s, "optimizer", [o](ExperimentConfig& c) -> optim::Kind& { return o(c).kind; },
                         optim::kind_name, optim::parse_kind));
  f.push_back(real_field(s, "learning_rate", [o](ExperimentConfig& c) -> double& { return o(c).learning_rate; }));
  f.push_back(real_field(s, "beta1", [o](ExperimentConfig& c) -> double& { return o(c).beta1; }));
  f.push_back(real_field(s, "beta2", [o](ExperimentConfig& c) -> double& { return o(c).beta2; }));
  f.push_back(real_field(s, "adam_epsilon", [o](ExperimentConfig& c) -> double& { return o(c).epsilon; }));
}

std::string dims_to_string(const std::vector<std::size_t>& d) {
  std::string out;
  for (std::size_t i = 0; i < d.size(); ++i) out += (i ? "," : "") + std::to_string(d[i]);
  return out;
}

std::vector<std::size_t> dims_from_string(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& cell : io::split_csv_line(v)) out.push_back(static_cast<std::size_t>(to_u64(trim(cell))));
  return out;
}

#define ACC(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"", "seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
                 [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }});

    const std::string p = "preprocess";
    f.push_back(bool_field(p, "enabled", ACC(preprocess.enabled)));
    f.push_back(real_field(p, "highpass_hz", ACC(preprocess.highpass_hz)));
    f.push_back(real_field(p, "highpass_q", ACC(preprocess.highpass_q)));
    f.push_back(size_field(p, "highpass_cascade", ACC(preprocess.highpass_cascade)));
    f.push_back(real_field(p, "notch_hz", ACC(preprocess.notch_hz)));
    f.push_back(real_field(p, "notch_q", ACC(preprocess.notch_q)));
    f.push_back(size_field(p, "notch_cascade", ACC(preprocess.notch_cascade)));
    f.push_back(real_field(p, "war_multiplier", ACC(preprocess.war_multiplier)));
    f.push_back(bool_field(p, "war_zero", ACC(preprocess.war_zero)));
    f.push_back(real_field(p, "wsd_threshold", ACC(preprocess.wsd_threshold)));
    f.push_back(size_field(p, "wsd_window", ACC(preprocess.wsd_window)));
    f.push_back(enum_field(p, "wavelet_family", ACC(preprocess.family), wavelet::family_name,
                           wavelet::parse_family));
    f.push_back(size_field(p, "wavelet_levels", ACC(preprocess.wavelet_levels)));

    const std::string t = "train";
    f.push_back(size_field(t, "epochs", ACC(train.epochs)));
    f.push_back(size_field(t, "batch_size", ACC(train.batch_size)));
    f.push_back(size_field(t, "folds", ACC(train.folds)));
    f.push_back(size_field(t, "runs_per_fold", ACC(train.runs_per_fold)));
    f.push_back(real_field(t, "reg", ACC(train.reg)));
    f.push_back(real_field(t, "eigen_floor", ACC(train.eigen_floor)));
    add_optimizer(f, t, [](ExperimentConfig& c) -> optim::OptimizerConfig& { return c.train.optimizer; });
    f.push_back(real_field(t, "lr_decay", ACC(train.lr_decay)));
    f.push_back(real_field(t, "bn_momentum", ACC(train.bn_momentum)));
    f.push_back(real_field(t, "bn_epsilon", ACC(train.bn_epsilon)));
    f.push_back(enum_field(t, "precision", ACC(train.precision), pipeline::precision_name,
                           pipeline::parse_precision));
    f.push_back(size_field(t, "eval_batch", ACC(train.eval_batch)));

    const std::string r = "retrieval";
    f.push_back(enum_field(r, "layer_dims", ACC(retrieval.layer_dims), dims_to_string, dims_from_string));
    f.push_back(size_field(r, "canonical_k", ACC(retrieval.canonical_k)));
    f.push_back(size_field(r, "epochs", ACC(retrieval.epochs)));
    f.push_back(size_field(r, "batch_size", ACC(retrieval.batch_size)));
    f.push_back(real_field(r, "reg", ACC(retrieval.reg)));
    f.push_back(real_field(r, "eigen_floor", ACC(retrieval.eigen_floor)));
    add_optimizer(f, r, [](ExperimentConfig& c) -> optim::OptimizerConfig& { return c.retrieval.optimizer; });
    f.push_back(enum_field(r, "similarity", ACC(retrieval.similarity), retrieval::similarity_name,
                           retrieval::parse_similarity));

    const std::string s = "synth";
    f.push_back(size_field(s, "items", ACC(synth.items)));
    f.push_back(size_field(s, "latent_dim", ACC(synth.latent_dim)));
    f.push_back(real_field(s, "noise_sigma", ACC(synth.noise_sigma)));
    f.push_back(real_field(s, "seconds", ACC(synth.seconds)));
    f.push_back(size_field(s, "classes", ACC(synth.classes)));
    f.push_back(bool_field(s, "artifacts", ACC(synth.artifacts)));
    f.push_back(real_field(s, "mains_hz", ACC(synth.mains_hz)));

    const std::string x = "features";
    f.push_back(size_field(x, "items", ACC(features.items)));
    f.push_back(size_field(x, "latent_dim", ACC(features.latent_dim)));
    f.push_back(size_field(x, "dim_a", ACC(features.dim_a)));
    f.push_back(size_field(x, "dim_b", ACC(features.dim_b)));
    f.push_back(real_field(x, "noise_sigma", ACC(features.noise_sigma)));
    f.push_back(size_field(x, "classes", ACC(features.classes)));
    f.push_back(bool_field(x, "linear", ACC(features.linear)));
    return f;
  }();
  return fields;
}

#undef ACC

const Field* find(const std::string& section, const std::string& key) {
  for (const auto& f : registry())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

}  // namespace

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  c.train.seed = seed;
  c.retrieval.seed = seed;
  c.synth.seed = seed;
  c.features.seed = seed;
  return c;
}

ExperimentConfig parse(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  std::string section;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find(section, key);
    if (!f) throw ParseError(where + "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    try {
      f->set(c, value);
    } catch (const Error& e) {
      throw ParseError(where + e.what());
    }
  }
  return c.resolved();
}

ExperimentConfig load(const std::filesystem::path& path) {
  return parse(io::read_text(path), path.string());
}

std::string serialize(const ExperimentConfig& config) {
  const ExperimentConfig c = config.resolved();
  std::string out;
  std::string section;
  for (const auto& f : registry()) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ParseError("override '" + assignment + "' is not key=value");
  const std::string name = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = name.find('.');
  const std::string section = dot == std::string::npos ? "" : name.substr(0, dot);
  const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
  const Field* f = find(section, key);
  if (!f) throw ParseError("unknown config key '" + name + "'");
  f->set(c, value);
  c = c.resolved();
}

std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& f : registry()) out.push_back(f.section.empty() ? f.key : f.section + "." + f.key);
  return out;
}

}  // namespace audeeg::config
