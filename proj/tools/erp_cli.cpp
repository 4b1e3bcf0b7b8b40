// erp: command-line front end for the ERP decoding pipeline.
//
//   erp synth      generate a synthetic oddball session (.erpc + events.csv)
//   erp preprocess decimate -> highpass -> epoch, writes epochs.erpe
//   erp train      balanced-partition ensemble training, writes model dir
//   erp evaluate   AUC of a trained model on an epoch file
//   erp gradcheck  finite-difference check of backprop
//   erp report     per-subject AUC table with mean/std and paired t-test
//
// Exit codes: 0 success, 1 runtime/data error, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "erp/erp.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  bool quiet = false;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& g) {
  cmd->add_option("--config", g.config, "key=value file of flag defaults (flags win)");
  cmd->add_option("--seed", g.seed, "random seed (auto-generated and echoed when omitted)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", g.out, "output directory");
  cmd->add_flag("--quiet", g.quiet, "suppress progress output");
}

std::uint64_t resolve_seed(GlobalFlags& g) {
  if (g.seed < 0) g.seed = static_cast<std::int64_t>(std::random_device{}() & 0x7FFFFFFF);
  return static_cast<std::uint64_t>(g.seed);
}

// Exclusive lock on an output directory for the lifetime of one run.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".erp.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    erp::require(f != nullptr, erp::ErrorCode::io,
                 "output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                     " if stale)");
    std::fclose(f);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

// Every effective option value, keyed by flag name so the file can be fed
// back through --config to replay the run.
std::string resolved_config(const CLI::App* cmd, const GlobalFlags& g) {
  std::ostringstream out;
  out << "# erp " << cmd->get_name() << "\n";
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out" || name == "quiet") continue;
    std::string value;
    if (name == "seed") {
      value = std::to_string(g.seed);
    } else if (opt->get_expected_min() == 0) {
      value = opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto results = opt->reduced_results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    } else {
      value = opt->get_default_str();
      if (value.empty()) continue;
    }
    out << name << "=" << value << "\n";
  }
  return out.str();
}

void echo_config(const CLI::App* cmd, const GlobalFlags& g) {
  const std::string text = resolved_config(cmd, g);
  if (!g.out.empty()) {
    std::ofstream f(fs::path(g.out) / "resolved-config.txt", std::ios::binary | std::ios::trunc);
    f << text;
    erp::require(static_cast<bool>(f), erp::ErrorCode::io, "cannot write resolved-config.txt");
  } else if (!g.quiet) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) std::cerr << (line.starts_with("#") ? "" : "# ") << line << "\n";
  }
}

std::string require_out(const GlobalFlags& g, const char* cmd) {
  if (g.out.empty()) throw UsageError(std::string(cmd) + ": --out is required");
  return g.out;
}

// "start:end" in milliseconds.
std::pair<double, double> parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--window must be START:END in ms, got '" + text + "'");
  try {
    return {erp::KeyValueFile::parse_double("window", text.substr(0, colon)),
            erp::KeyValueFile::parse_double("window", text.substr(colon + 1))};
  } catch (const erp::Error&) {
    throw UsageError("--window must be START:END in ms, got '" + text + "'");
  }
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

// Inserts config-file entries as --key=value right after the subcommand so
// that later command-line flags override them.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  const erp::KeyValueFile kv = erp::KeyValueFile::load(config_path);
  std::size_t sub = 0;
  while (sub < args.size() && args[sub].starts_with("-")) ++sub;
  std::vector<std::string> injected;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "config") continue;
    injected.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(sub + 1, args.size())), injected.begin(),
              injected.end());
  return args;
}

std::string infer_montage(std::size_t n_channels) {
  if (n_channels == erp::channel_count(erp::Montage::scalp)) return "scalp";
  if (n_channels == erp::channel_count(erp::Montage::ear)) return "ear";
  return "custom";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ERP decoding pipeline: synthetic data, preprocessing, ensemble CNN training, AUC evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  GlobalFlags g;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic oddball session");
  add_global_flags(synth, g);
  std::string synth_montage = "scalp";
  std::size_t n_trials = 300;
  double target_ratio = 0.2;
  double synth_fs = 500.0;
  double noise_std = 2.5;
  double p300_amp = 5.0;
  double p300_latency = 300.0;
  double p300_width = 150.0;
  bool gait = false;
  double gait_freq = 2.0;
  double gait_amp = 10.0;
  bool pair = false;
  std::string subject = "S1";
  std::uint64_t split_seed = 2024;
  synth->add_option("--montage", synth_montage, "scalp (32 ch) or ear (18 ch)")
      ->check(CLI::IsMember({"scalp", "ear"}));
  synth->add_option("--n-trials", n_trials, "number of stimuli")->check(CLI::PositiveNumber);
  synth->add_option("--target-ratio", target_ratio, "fraction of target stimuli, in (0, 1)")
      ->check(CLI::Validator(
          [](std::string& s) -> std::string {
            double v = 0.0;
            try {
              v = std::stod(s);
            } catch (...) {
              return "not a number";
            }
            return v > 0.0 && v < 1.0 ? "" : "must lie strictly between 0 and 1";
          },
          "(0,1)"));
  synth->add_option("--fs", synth_fs, "sampling rate in Hz")->check(CLI::PositiveNumber);
  synth->add_option("--noise-std", noise_std, "white noise std in uV")->check(CLI::NonNegativeNumber);
  synth->add_option("--p300-amplitude", p300_amp, "P300 peak in uV")->check(CLI::NonNegativeNumber);
  synth->add_option("--p300-latency", p300_latency, "P300 latency in ms");
  synth->add_option("--p300-width", p300_width, "P300 width in ms")->check(CLI::PositiveNumber);
  synth->add_flag("--gait", gait, "add walking artifact");
  synth->add_option("--gait-freq", gait_freq, "step frequency in Hz")->check(CLI::PositiveNumber);
  synth->add_option("--gait-amplitude", gait_amp, "artifact amplitude in uV")->check(CLI::NonNegativeNumber);
  synth->add_flag("--pair", pair,
                  "write preprocessed train.erpe/test.erpe (test with gait when --gait) and manifest.txt");
  synth->add_option("--subject", subject, "subject id for the manifest");
  synth->add_option("--split-seed", split_seed, "session split seed for --pair");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "decimate, highpass and epoch a continuous recording");
  add_global_flags(prep, g);
  std::string prep_input;
  std::string prep_events;
  std::string window = "0:800";
  erp::PreprocessConfig pcfg;
  std::string channels;
  prep->add_option("--input", prep_input, "continuous recording (.erpc)")->required();
  prep->add_option("--events", prep_events, "events CSV")->required();
  prep->add_option("--window", window, "epoch window START:END in ms");
  prep->add_option("--target-fs", pcfg.target_fs_hz, "output rate in Hz")->check(CLI::PositiveNumber);
  prep->add_option("--highpass", pcfg.highpass_cutoff_hz, "highpass cutoff in Hz")->check(CLI::PositiveNumber);
  prep->add_option("--highpass-taps", pcfg.highpass_taps, "highpass FIR length (odd)");
  prep->add_option("--antialias", pcfg.antialias_cutoff_hz, "anti-alias cutoff in Hz")->check(CLI::PositiveNumber);
  prep->add_option("--antialias-taps", pcfg.antialias_taps, "anti-alias FIR length (odd)");
  prep->add_option("--channels", channels, "comma-separated channel subset");

  // train
  auto* trn = app.add_subcommand("train", "train the ensemble CNN on an epoch file");
  add_global_flags(trn, g);
  std::string train_data;
  std::string train_manifest;
  std::string mode = "shared";
  erp::EnsembleConfig ecfg;
  std::int64_t shuffle_seed = -1;
  bool baseline = false;
  trn->add_option("--data", train_data, "training epochs (.erpe)");
  trn->add_option("--manifest", train_manifest, "dataset manifest; uses train_path");
  trn->add_option("--mode", mode, "shared or independent")->check(CLI::IsMember({"shared", "independent"}));
  trn->add_option("--groups", ecfg.n_groups, "number of non-target groups")->check(CLI::PositiveNumber);
  trn->add_option("--lr", ecfg.train.learning_rate, "learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--epochs", ecfg.train.epochs, "training passes")->check(CLI::NonNegativeNumber);
  trn->add_option("--batch", ecfg.train.batch_size, "batch size (even)")->check(CLI::PositiveNumber);
  trn->add_option("--shuffle-seed", shuffle_seed, "partition/batch seed (derived from --seed when omitted)")
      ->check(CLI::NonNegativeNumber);
  trn->add_flag("--baseline", baseline, "plain minibatch SGD on the imbalanced set instead of the ensemble");

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "AUC of a trained model on an epoch file");
  add_global_flags(evl, g);
  std::string model_dir;
  std::string eval_data;
  std::string eval_manifest;
  std::string eval_subject;
  std::string eval_montage;
  std::string roc_path;
  evl->add_option("--model", model_dir, "model directory written by train")->required();
  evl->add_option("--data", eval_data, "test epochs (.erpe)");
  evl->add_option("--manifest", eval_manifest, "dataset manifest; uses test_path, subject_id, montage");
  evl->add_option("--subject", eval_subject, "subject id for the report row");
  evl->add_option("--montage", eval_montage, "montage tag for the report row");
  evl->add_option("--roc", roc_path, "write ROC curve CSV (fpr,tpr)");

  // gradcheck
  auto* gck = app.add_subcommand("gradcheck", "compare backprop with central differences");
  add_global_flags(gck, g);
  double step = 1e-6;
  std::size_t n_seeds = 1;
  std::size_t gc_channels = 3;
  std::size_t gc_samples = 20;
  bool linear = false;
  gck->add_option("--step", step, "finite-difference step")->check(CLI::PositiveNumber);
  gck->add_option("--seeds", n_seeds, "number of consecutive seeds to sweep")->check(CLI::PositiveNumber);
  gck->add_option("--channels", gc_channels, "input channels")->check(CLI::PositiveNumber);
  gck->add_option("--samples", gc_samples, "input samples")->check(CLI::PositiveNumber);
  gck->add_flag("--linear", linear, "identity hidden activations");

  // report
  auto* rpt = app.add_subcommand("report", "aggregate per-subject AUC tables");
  add_global_flags(rpt, g);
  std::vector<std::string> inputs;
  rpt->add_option("--input", inputs, "report TSV files (subject, montage, auc rows)")
      ->required()
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto log = [&](const std::string& line) {
    if (!g.quiet) std::cout << line << "\n";
  };

  try {
    if (synth->parsed()) {
      const fs::path out = require_out(g, "synth");
      erp::SynthConfig cfg = erp::SynthConfig::for_montage(erp::parse_montage(synth_montage));
      cfg.n_trials = n_trials;
      cfg.target_ratio = target_ratio;
      cfg.fs_hz = synth_fs;
      cfg.noise_std_uv = noise_std;
      cfg.p300_amplitude_uv = p300_amp;
      cfg.p300_latency_ms = p300_latency;
      cfg.p300_width_ms = p300_width;
      if (gait) cfg.gait = erp::GaitArtifact{gait_freq, gait_amp};
      cfg.seed = resolve_seed(g);
      cfg.validate();
      DirectoryLock lock(out);
      echo_config(synth, g);
      if (pair) {
        const erp::SubjectPair sets = erp::generate_subject_pair(cfg, split_seed, gait);
        erp::save_epochs(sets.train, out / "train.erpe");
        erp::save_epochs(sets.test, out / "test.erpe");
        erp::DatasetManifest manifest{subject, gait ? "walking-1.6" : "standing", cfg.montage, "train.erpe",
                                      "test.erpe"};
        erp::save_manifest(manifest, out / "manifest.txt");
        log("synth: " + std::to_string(sets.train.n_epochs) + "+" + std::to_string(sets.test.n_epochs) +
            " epochs (" + std::to_string(sets.train.count(erp::Label::target)) + " targets each), " +
            std::to_string(sets.train.n_channels) + " channels x " + std::to_string(sets.train.n_samples) +
            " samples -> " + out.string());
      } else {
        const erp::SyntheticRecording rec = erp::generate(cfg);
        erp::save_continuous(rec.recording, out / "recording.erpc");
        erp::save_events(rec.events, out / "events.csv");
        log("synth: " + std::to_string(rec.events.size()) + " events (" + std::to_string(cfg.n_targets()) +
            " targets), " + std::to_string(rec.recording.n_channels) + " channels, " +
            std::to_string(rec.recording.n_samples) + " samples at " + std::to_string(cfg.fs_hz) + " Hz -> " +
            out.string());
      }
      return 0;
    }

    if (prep->parsed()) {
      const fs::path out = require_out(g, "preprocess");
      std::tie(pcfg.window_start_ms, pcfg.window_end_ms) = parse_window(window);
      if (pcfg.window_end_ms <= pcfg.window_start_ms) throw UsageError("--window END must exceed START");
      resolve_seed(g);
      DirectoryLock lock(out);
      echo_config(prep, g);
      erp::ContinuousRecording rec = erp::load_continuous(prep_input);
      const erp::EventList events = erp::load_events(prep_events);
      erp::EpochExtraction result = erp::preprocess(rec, events, pcfg);
      if (!channels.empty()) result.epochs = erp::select_channels(result.epochs, split_commas(channels));
      erp::save_epochs(result.epochs, out / "epochs.erpe");
      log("preprocess: " + std::to_string(result.epochs.n_epochs) + " epochs (dropped " +
          std::to_string(result.dropped) + "), " + std::to_string(result.epochs.n_channels) + " channels x " +
          std::to_string(result.epochs.n_samples) + " samples at " + std::to_string(result.epochs.fs_hz) +
          " Hz -> " + (out / "epochs.erpe").string());
      return 0;
    }

    if (trn->parsed()) {
      const fs::path out = require_out(g, "train");
      fs::path data_path = train_data;
      if (!train_manifest.empty()) {
        const erp::DatasetManifest m = erp::load_manifest(train_manifest);
        data_path = fs::path(train_manifest).parent_path() / m.train_path;
      }
      if (data_path.empty()) throw UsageError("train: --data or --manifest is required");
      ecfg.mode = erp::parse_ensemble_mode(mode);
      ecfg.train.init_seed = resolve_seed(g);
      if (shuffle_seed < 0) shuffle_seed = static_cast<std::int64_t>(erp::derive_seed(ecfg.train.init_seed, 7) >> 33);
      ecfg.shuffle_seed = static_cast<std::uint64_t>(shuffle_seed);
      if (ecfg.train.batch_size % 2 != 0) throw UsageError("--batch must be even");
      DirectoryLock lock(out);
      // the echo must carry the derived shuffle seed
      trn->get_option("--shuffle-seed")->clear();
      trn->get_option("--shuffle-seed")->add_result(std::to_string(shuffle_seed));
      echo_config(trn, g);
      const erp::EpochSet data = erp::load_epochs(data_path);
      if (ecfg.train.epochs == 0) std::cerr << "warning: --epochs 0, persisting initialization-only networks\n";
      erp::TrainedEnsemble ens;
      if (baseline) {
        erp::PlainTrainResult plain = erp::train_plain(data, ecfg.train, ecfg.shuffle_seed);
        ens.mode = erp::EnsembleMode::shared_weights;
        ens.networks.push_back(std::move(plain.network));
        ens.loss_trace = std::move(plain.loss_trace);
        ens.config = ecfg;
        ens.plan.n_groups = 1;
        ens.plan.shuffle_seed = ecfg.shuffle_seed;
      } else {
        ens = erp::train(data, ecfg);
      }
      erp::save_ensemble(ens, out);
      if (baseline) {
        erp::KeyValueFile kv = erp::KeyValueFile::load(out / "ensemble.txt");
        kv.set("trainer", "plain-sgd");
        kv.save(out / "ensemble.txt");
      }
      std::string last = ens.loss_trace.empty() ? "n/a" : std::to_string(ens.loss_trace.back());
      log("train: " + std::string(baseline ? "plain-sgd" : erp::to_string(ecfg.mode)) + ", " +
          std::to_string(ens.networks.size()) + " model(s), " + std::to_string(ens.loss_trace.size()) +
          " epochs, final loss " + last + " -> " + out.string());
      return 0;
    }

    if (evl->parsed()) {
      fs::path data_path = eval_data;
      if (!eval_manifest.empty()) {
        const erp::DatasetManifest m = erp::load_manifest(eval_manifest);
        data_path = fs::path(eval_manifest).parent_path() / m.test_path;
        if (eval_subject.empty()) eval_subject = m.subject_id;
        if (eval_montage.empty()) eval_montage = erp::to_string(m.montage);
        m.validate_against(erp::load_epochs(data_path));
      }
      if (data_path.empty()) throw UsageError("evaluate: --data or --manifest is required");
      resolve_seed(g);
      std::optional<DirectoryLock> lock;
      if (!g.out.empty()) lock.emplace(g.out);
      echo_config(evl, g);
      const erp::TrainedEnsemble ens = erp::load_ensemble(model_dir);
      const erp::EpochSet data = erp::load_epochs(data_path);
      const std::vector<double> scores = erp::predict(ens, data);
      const double value = erp::auc(scores, data.labels);
      if (eval_subject.empty()) eval_subject = data_path.stem().string();
      if (eval_montage.empty()) eval_montage = infer_montage(data.n_channels);
      const erp::EvalReport report = erp::build_report({{eval_subject, eval_montage, value}});
      if (!g.out.empty()) {
        std::ofstream f(fs::path(g.out) / "evaluation.tsv", std::ios::binary | std::ios::trunc);
        f << erp::render_tsv(report);
        erp::require(static_cast<bool>(f), erp::ErrorCode::io, "cannot write evaluation.tsv");
      }
      if (!roc_path.empty()) {
        std::ofstream f(roc_path, std::ios::binary | std::ios::trunc);
        f << erp::roc_csv(erp::roc_curve(scores, data.labels));
        erp::require(static_cast<bool>(f), erp::ErrorCode::io, "cannot write " + roc_path);
      }
      char line[128];
      std::snprintf(line, sizeof line, "evaluate: %s %s AUC=%.6f (%zu epochs)", eval_subject.c_str(),
                    eval_montage.c_str(), value, data.n_epochs);
      log(line);
      return 0;
    }

    if (gck->parsed()) {
      const std::uint64_t first = resolve_seed(g);
      std::optional<DirectoryLock> lock;
      if (!g.out.empty()) lock.emplace(g.out);
      echo_config(gck, g);
      double worst = 0.0;
      for (std::uint64_t s = first; s < first + n_seeds; ++s) {
        erp::Architecture arch = erp::Architecture::compact(gc_channels, gc_samples);
        if (linear) arch.activation = erp::Activation::identity;
        const erp::Network net = erp::init_network(arch, s);
        erp::SplitMix64 rng(erp::derive_seed(s, 99));
        erp::Matrix x(gc_channels, gc_samples);
        for (double& v : x.data) v = rng.normal();
        const erp::Label label = s % 2 ? erp::Label::target : erp::Label::nontarget;
        const erp::FiniteDiffReport r = erp::finite_diff_check(net, x, label, step);
        worst = std::max(worst, r.max_relative_error);
        char line[160];
        std::snprintf(line, sizeof line, "seed %llu: max relative error %.3e (parameter %zu of %zu)",
                      static_cast<unsigned long long>(s), r.max_relative_error, r.worst_parameter,
                      net.values.size());
        log(line);
      }
      const bool pass = worst <= 1e-6;
      char line[96];
      std::snprintf(line, sizeof line, "gradcheck: max relative error %.3e %s", worst, pass ? "PASS" : "FAIL");
      std::cout << line << "\n";
      return pass ? 0 : 1;
    }

    if (rpt->parsed()) {
      resolve_seed(g);
      std::optional<DirectoryLock> lock;
      if (!g.out.empty()) lock.emplace(g.out);
      echo_config(rpt, g);
      std::vector<erp::SubjectResult> rows;
      for (const auto& path : inputs) {
        std::ifstream in(path);
        erp::require(static_cast<bool>(in), erp::ErrorCode::io, "cannot open " + path);
        auto part = erp::parse_subject_rows(in, path);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      const std::string tsv = erp::render_tsv(erp::build_report(std::move(rows)));
      if (!g.out.empty()) {
        std::ofstream f(fs::path(g.out) / "report.tsv", std::ios::binary | std::ios::trunc);
        f << tsv;
        erp::require(static_cast<bool>(f), erp::ErrorCode::io, "cannot write report.tsv");
      }
      if (!g.quiet) std::cout << tsv;
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
