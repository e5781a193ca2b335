#include "audeeg/cli.h"

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <set>

#include "audeeg/audio_io.h"
#include "audeeg/config.h"
#include "audeeg/error.h"
#include "audeeg/model_io.h"
#include "audeeg/pipeline.h"
#include "audeeg/retrieval.h"
#include "audeeg/synth.h"
#include "audeeg/table_io.h"

namespace audeeg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string log_path;

  config::ExperimentConfig load() const {
    config::ExperimentConfig c = config_path.empty() ? config::ExperimentConfig{}.resolved()
                                                     : config::load(config_path);
    for (const auto& o : overrides) config::apply_override(c, o);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config file (key = value sections)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override one config key, e.g. train.epochs=2");
  cmd->add_option("--log", c.log_path, "Run log path (default next to the output)");
}

void write_log(const std::string& command, const config::ExperimentConfig& c, const json& metrics,
               const fs::path& path) {
  json log = {{"command", command},
              {"seed", c.seed},
              {"config_hash", config::config_hash(c)},
              {"config", config::serialize(c)},
              {"metrics", metrics}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text_atomic(path, log.dump(2) + "\n");
}

fs::path log_for_dir(const Common& c, const fs::path& dir) {
  return c.log_path.empty() ? dir / "run_log.json" : fs::path(c.log_path);
}

fs::path log_for_file(const Common& c, const fs::path& file) {
  if (!c.log_path.empty()) return c.log_path;
  auto p = file;
  p += ".log.json";
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<pipeline::Recording> load_recordings(const std::vector<io::ManifestRecord>& records,
                                                 const pipeline::PreprocessConfig& pre) {
  std::vector<pipeline::Recording> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    pipeline::Recording rec;
    rec.id = io::record_id(r);
    if (!seen.insert(rec.id).second) throw ValidationError("duplicate recording id '" + rec.id + "'");
    rec.subject = r.subject_id;
    rec.label = r.class_label;
    rec.audio = pipeline::preprocess_audio(io::ingest_audio(r.audio_path), pre);
    rec.eeg = pipeline::preprocess_eeg(io::ingest_eeg(r.eeg_path), pre);
    out.push_back(std::move(rec));
  }
  return out;
}

json ranked_json(const retrieval::RankedResult& r) {
  return {{"query_id", r.query_id},
          {"query_label", r.query_label},
          {"ranked_ids", r.ranked_ids},
          {"ranked_labels", r.ranked_labels},
          {"scores", r.scores}};
}

retrieval::RankedResult ranked_from(const json& j) {
  retrieval::RankedResult r;
  r.query_id = j.at("query_id").get<std::string>();
  r.query_label = j.at("query_label").get<std::string>();
  r.ranked_ids = j.at("ranked_ids").get<std::vector<std::string>>();
  r.ranked_labels = j.at("ranked_labels").get<std::vector<std::string>>();
  if (j.contains("scores")) r.scores = j.at("scores").get<std::vector<double>>();
  return r;
}

json rankings_json(const retrieval::Rankings& r, std::size_t k, std::uint64_t seed) {
  json a = json::array(), b = json::array();
  for (const auto& x : r.a_to_b) a.push_back(ranked_json(x));
  for (const auto& x : r.b_to_a) b.push_back(ranked_json(x));
  return {{"k", k}, {"seed", seed}, {"a_to_b", a}, {"b_to_a", b}};
}

json report_json(const retrieval::EvalReport& e) {
  return {{"instance_mrr_a_to_b", e.instance_a_to_b},
          {"instance_mrr_b_to_a", e.instance_b_to_a},
          {"class_mrr_a_to_b", e.class_a_to_b},
          {"class_mrr_b_to_a", e.class_b_to_a},
          {"n", e.n},
          {"k", e.k},
          {"seed", e.seed}};
}

struct Tables {
  retrieval::FeatureTable train_a, train_b, test_a, test_b;
};

Tables load_tables(const std::string& a, const std::string& b, const std::string& ta,
                   const std::string& tb) {
  if (ta.empty() != tb.empty()) throw ValidationError("--test-a and --test-b go together");
  Tables t;
  t.train_a = io::read_feature_table(a);
  t.train_b = io::read_feature_table(b);
  t.test_a = ta.empty() ? t.train_a : io::read_feature_table(ta);
  t.test_b = tb.empty() ? t.train_b : io::read_feature_table(tb);
  return t;
}

// ---- commands --------------------------------------------------------------

int cmd_synth(const Common& common, const std::string& out, const std::string& kind) {
  const auto c = common.load();
  const fs::path dir(out);
  json metrics;
  if (kind == "pairs") {
    const auto items = synth::generate(c.synth);
    const auto records = synth::write_dataset(items, dir);
    std::map<std::string, std::size_t> classes;
    for (const auto& r : records) ++classes[r.class_label];
    metrics = {{"items", records.size()}, {"classes", classes}, {"seconds", c.synth.seconds}};
  } else if (kind == "features") {
    const auto pair = synth::generate_features(c.features);
    fs::create_directories(dir);
    io::write_text_atomic(dir / "a.csv", io::format_feature_table(pair.a));
    io::write_text_atomic(dir / "b.csv", io::format_feature_table(pair.b));
    metrics = {{"items", pair.a.size()}, {"dim_a", pair.a.dim()}, {"dim_b", pair.b.dim()}};
  } else {
    throw ValidationError("--kind must be pairs or features");
  }
  write_log("synth", c, metrics, log_for_dir(common, dir));
  return kOk;
}

int cmd_preprocess(const Common& common, const std::string& manifest, const std::string& out) {
  const auto c = common.load();
  const auto records = io::read_manifest(manifest);
  const fs::path dir(out);
  fs::create_directories(dir / "audio");
  fs::create_directories(dir / "eeg");
  std::vector<io::ManifestRecord> written;
  json items = json::array();
  for (const auto& r : records) {
    const std::string id = io::record_id(r);
    const auto audio = pipeline::preprocess_audio(io::ingest_audio(r.audio_path), c.preprocess);
    const auto eeg = pipeline::preprocess_eeg(io::ingest_eeg(r.eeg_path), c.preprocess);
    io::write_wav(dir / "audio" / (id + ".wav"), audio, io::WavFormat::float32);
    io::write_text_atomic(dir / "eeg" / (id + ".csv"), io::format_eeg_csv(eeg));
    written.push_back({"audio/" + id + ".wav", "eeg/" + id + ".csv", r.subject_id, r.class_label});
    items.push_back({{"id", id}, {"audio_samples", audio.samples()}, {"eeg_samples", eeg.samples()}});
  }
  io::write_text_atomic(dir / "manifest.csv", io::format_manifest(written));
  write_log("preprocess", c, {{"records", written.size()}, {"items", items}}, log_for_dir(common, dir));
  return kOk;
}

std::string run_dir_name(std::size_t fold, std::size_t run) {
  return "fold" + std::to_string(fold) + "_run" + std::to_string(run);
}

int cmd_train(const Common& common, const std::string& manifest, const std::string& out,
              int only_fold, int only_run, int jobs) {
  const auto c = common.load();
  const auto recordings = load_recordings(io::read_manifest(manifest), c.preprocess);
  if (recordings.size() < 2) throw ValidationError("training needs at least 2 recordings");
  const auto chunks = pipeline::make_chunks(recordings);
  const auto folds = pipeline::partition_folds(recordings.size(), c.train.folds, c.seed);
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t f = 0; f < folds.size(); ++f)
    for (std::size_t r = 0; r < c.train.runs_per_fold; ++r)
      if ((only_fold < 0 || static_cast<std::size_t>(only_fold) == f) &&
          (only_run < 0 || static_cast<std::size_t>(only_run) == r))
        tasks.emplace_back(f, r);
  if (tasks.empty()) throw ValidationError("no fold/run matches the selection");

  const fs::path dir(out);
  fs::create_directories(dir);
  auto progress = [](const pipeline::EpochReport& e) {
    std::cerr << "fold " << e.fold << " run " << e.run << " epoch " << e.epoch
              << " train_loss " << e.train_loss << " heldout_loss " << e.heldout_loss << "\n";
  };
  auto do_task = [&](std::size_t i) {
    const auto [f, r] = tasks[i];
    const auto model = pipeline::train_run(chunks, folds[f], recordings.size(), c.train, f, r, progress);
    io::save_model(dir / run_dir_name(f, r), model, c);
  };

  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), 1, tasks.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) do_task(i);
  } else {
    std::cerr.flush();
    std::vector<pid_t> pids;
    for (std::size_t w = 0; w < workers; ++w) {
      const pid_t pid = ::fork();
      if (pid < 0) throw Error("fork failed");
      if (pid == 0) {
        int code = 0;
        try {
          for (std::size_t i = w; i < tasks.size(); i += workers) do_task(i);
        } catch (const std::exception& e) {
          std::cerr << "worker " << w << ": " << e.what() << "\n";
          code = kRuntime;
        }
        std::cerr.flush();
        ::_exit(code);
      }
      pids.push_back(pid);
    }
    bool ok = true;
    for (pid_t pid : pids) {
      int status = 0;
      ::waitpid(pid, &status, 0);
      ok = ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    if (!ok) throw Error("a training worker failed");
  }

  json runs = json::array();
  std::size_t improved = 0;
  for (const auto& [f, r] : tasks) {
    const json m = json::parse(io::read_text(dir / run_dir_name(f, r) / "manifest.json"));
    const double initial = -m.at("initial_heldout_loss").get<double>();
    const auto held = m.at("heldout_loss").get<std::vector<double>>();
    const double final_tc = held.empty() ? initial : -held.back();
    const bool up = final_tc > initial;
    improved += up ? 1 : 0;
    runs.push_back({{"fold", f},
                    {"run", r},
                    {"model", run_dir_name(f, r)},
                    {"initial_heldout_total_correlation", initial},
                    {"final_heldout_total_correlation", final_tc},
                    {"improved", up},
                    {"train_loss", m.at("train_loss")},
                    {"heldout_loss", m.at("heldout_loss")}});
  }
  write_log("train", c,
            {{"recordings", recordings.size()},
             {"chunks", chunks.size()},
             {"runs", runs},
             {"improved_runs", improved},
             {"total_runs", tasks.size()}},
            log_for_dir(common, dir));
  return kOk;
}

int cmd_embed(const Common& common, const std::string& model_dir, const std::string& manifest,
              const std::string& out, const std::string& view, bool canonical) {
  const auto c = common.load();
  if (view != "audio" && view != "eeg") throw ValidationError("--view must be audio or eeg");
  const auto loaded = io::load_model(model_dir);
  const auto records = io::read_manifest(manifest);
  retrieval::FeatureTable table;
  std::vector<double> values;
  std::size_t dim = 0;
  for (const auto& r : records) {
    const auto e = view == "audio"
                       ? pipeline::embed_song(loaded.model, io::ingest_audio(r.audio_path), c.preprocess)
                       : pipeline::embed_eeg(loaded.model, io::ingest_eeg(r.eeg_path), c.preprocess);
    const auto& v = canonical ? e.canonical : e.embedding;
    dim = v.size();
    values.insert(values.end(), v.begin(), v.end());
    table.ids.push_back(io::record_id(r));
    table.labels.push_back(r.class_label);
  }
  table.vectors = linalg::Matrix(table.ids.size(), dim, std::move(values));
  ensure_parent(out);
  io::write_text_atomic(out, io::format_feature_table(table));
  write_log("embed", c, {{"rows", table.size()}, {"dim", dim}, {"view", view}, {"canonical", canonical}},
            log_for_file(common, out));
  return kOk;
}

int cmd_retrieve(const Common& common, const std::string& a, const std::string& b,
                 const std::string& ta, const std::string& tb, const std::string& out,
                 const std::string& model_out) {
  const auto c = common.load();
  const auto t = load_tables(a, b, ta, tb);
  const auto model = retrieval::retrieval_train(t.train_a, t.train_b, c.retrieval);
  const auto rankings = retrieval::rank_all(model, t.test_a, t.test_b);
  ensure_parent(out);
  io::write_text_atomic(out, rankings_json(rankings, c.retrieval.canonical_k, c.seed).dump(2) + "\n");
  if (!model_out.empty()) io::save_retrieval_model(model_out, model, c);
  json metrics = report_json(retrieval::evaluate(rankings, c.retrieval.canonical_k, c.seed));
  metrics["final_train_loss"] = model.loss_history.empty() ? 0.0 : model.loss_history.back();
  metrics["train_items"] = t.train_a.size();
  write_log("retrieve", c, metrics, log_for_file(common, out));
  return kOk;
}

int cmd_eval(const Common& common, const std::string& rankings_path, const std::string& a,
             const std::string& b, const std::string& ta, const std::string& tb,
             const std::string& out, std::size_t seeds) {
  const auto c = common.load();
  std::vector<retrieval::EvalReport> reports;
  if (!rankings_path.empty()) {
    if (!a.empty() || !b.empty()) throw ValidationError("use either --rankings or --a/--b");
    json j;
    try {
      j = json::parse(io::read_text(rankings_path));
      retrieval::Rankings r;
      for (const auto& x : j.at("a_to_b")) r.a_to_b.push_back(ranked_from(x));
      for (const auto& x : j.at("b_to_a")) r.b_to_a.push_back(ranked_from(x));
      reports.push_back(retrieval::evaluate(r, j.at("k").get<std::size_t>(), j.at("seed").get<std::uint64_t>()));
    } catch (const json::exception& e) {
      throw ParseError(rankings_path + ": " + e.what());
    }
  } else {
    if (a.empty() || b.empty()) throw ValidationError("eval needs --rankings or both --a and --b");
    if (seeds < 1) throw ValidationError("--seeds must be >= 1");
    const auto t = load_tables(a, b, ta, tb);
    for (std::size_t s = 0; s < seeds; ++s) {
      auto rc = c.retrieval;
      rc.seed = c.seed + s;
      const auto model = retrieval::retrieval_train(t.train_a, t.train_b, rc);
      reports.push_back(retrieval::evaluate(retrieval::rank_all(model, t.test_a, t.test_b), rc.canonical_k, rc.seed));
    }
  }
  auto stats = [&](double retrieval::EvalReport::*field) {
    double mean = 0.0;
    for (const auto& r : reports) mean += r.*field;
    mean /= static_cast<double>(reports.size());
    double var = 0.0;
    for (const auto& r : reports) var += (r.*field - mean) * (r.*field - mean);
    const double sd = reports.size() > 1 ? std::sqrt(var / static_cast<double>(reports.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  const auto ia = stats(&retrieval::EvalReport::instance_a_to_b);
  const auto ib = stats(&retrieval::EvalReport::instance_b_to_a);
  const auto ca = stats(&retrieval::EvalReport::class_a_to_b);
  const auto cb = stats(&retrieval::EvalReport::class_b_to_a);
  json runs = json::array();
  for (const auto& r : reports) runs.push_back(report_json(r));
  json report = {{"instance_mrr_a_to_b", ia.first},
                 {"instance_mrr_b_to_a", ib.first},
                 {"class_mrr_a_to_b", ca.first},
                 {"class_mrr_b_to_a", cb.first},
                 {"std", {{"instance_mrr_a_to_b", ia.second},
                          {"instance_mrr_b_to_a", ib.second},
                          {"class_mrr_a_to_b", ca.second},
                          {"class_mrr_b_to_a", cb.second}}},
                 {"n", reports.front().n},
                 {"k", reports.front().k},
                 {"seed", reports.front().seed},
                 {"runs", runs}};
  ensure_parent(out);
  io::write_text_atomic(out, report.dump(2) + "\n");
  write_log("eval", c, report, log_for_file(common, out));
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Audio/EEG deep CCA pipeline and cross-modal retrieval"};
  app.require_subcommand(1);

  Common sc, pc, tc, ec, rc, vc;
  std::string synth_out, synth_kind = "pairs";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  add_common(synth, sc);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--kind", synth_kind, "pairs (audio+EEG) or features (two feature tables)");

  std::string pre_manifest, pre_out;
  auto* pre = app.add_subcommand("preprocess", "Filter, denoise and scale every recording");
  add_common(pre, pc);
  pre->add_option("--manifest", pre_manifest, "Input manifest CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Output directory")->required();

  std::string tr_manifest, tr_out;
  int tr_fold = -1, tr_run = -1, tr_jobs = 1;
  auto* train = app.add_subcommand("train", "DCCA training over the fold/run protocol");
  add_common(train, tc);
  train->add_option("--manifest", tr_manifest, "Input manifest CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", tr_out, "Output directory for model directories")->required();
  train->add_option("--fold", tr_fold, "Train only this fold");
  train->add_option("--run", tr_run, "Train only this run");
  train->add_option("--jobs", tr_jobs, "Worker processes");

  std::string em_model, em_manifest, em_out, em_view = "audio";
  bool em_canonical = false;
  auto* embed = app.add_subcommand("embed", "Song- or recording-level embeddings as a feature table");
  add_common(embed, ec);
  embed->add_option("--model", em_model, "Model directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--manifest", em_manifest, "Input manifest CSV")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", em_out, "Output feature table CSV")->required();
  embed->add_option("--view", em_view, "audio or eeg");
  embed->add_flag("--canonical", em_canonical, "Emit CCA projections instead of raw embeddings");

  std::string rt_a, rt_b, rt_ta, rt_tb, rt_out, rt_model;
  auto* retrieve = app.add_subcommand("retrieve", "Train the retrieval model and rank");
  add_common(retrieve, rc);
  retrieve->add_option("--a", rt_a, "View A training table")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--b", rt_b, "View B training table")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--test-a", rt_ta, "View A query table")->check(CLI::ExistingFile);
  retrieve->add_option("--test-b", rt_tb, "View B query table")->check(CLI::ExistingFile);
  retrieve->add_option("--out", rt_out, "Rankings JSON")->required();
  retrieve->add_option("--model-out", rt_model, "Also save the retrieval model here");

  std::string ev_rank, ev_a, ev_b, ev_ta, ev_tb, ev_out;
  std::size_t ev_seeds = 1;
  auto* eval = app.add_subcommand("eval", "Instance and class MRR report");
  add_common(eval, vc);
  eval->add_option("--rankings", ev_rank, "Rankings JSON from retrieve")->check(CLI::ExistingFile);
  eval->add_option("--a", ev_a, "View A training table")->check(CLI::ExistingFile);
  eval->add_option("--b", ev_b, "View B training table")->check(CLI::ExistingFile);
  eval->add_option("--test-a", ev_ta, "View A query table")->check(CLI::ExistingFile);
  eval->add_option("--test-b", ev_tb, "View B query table")->check(CLI::ExistingFile);
  eval->add_option("--seeds", ev_seeds, "Independent trainings to average");
  eval->add_option("--out", ev_out, "Report JSON")->required();

  std::vector<std::string> argv_store{"audeeg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(sc, synth_out, synth_kind);
    if (*pre) return cmd_preprocess(pc, pre_manifest, pre_out);
    if (*train) return cmd_train(tc, tr_manifest, tr_out, tr_fold, tr_run, tr_jobs);
    if (*embed) return cmd_embed(ec, em_model, em_manifest, em_out, em_view, em_canonical);
    if (*retrieve) return cmd_retrieve(rc, rt_a, rt_b, rt_ta, rt_tb, rt_out, rt_model);
    if (*eval) return cmd_eval(vc, ev_rank, ev_a, ev_b, ev_ta, ev_tb, ev_out, ev_seeds);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace audeeg::cli
