// Copyright 2026 The mrhubert Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once
// mrhubert: command-line front end.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "mrhubert/analysis.hpp"
#include "mrhubert/pipeline.hpp"

namespace {

using namespace mrhubert;
namespace fs = std::filesystem;

struct ConfigArgs {
  std::string preset;
  std::string config_file;
  std::vector<std::string> overrides;

  void Attach(CLI::App* app, const std::string& default_preset = "") {
    preset = default_preset;
    app->add_option("--preset", preset, "named configuration (see validate-config --list)");
    app->add_option("--config", config_file,
                    "config file (key = value lines); relative names are also looked up in $MRHUBERT_CONFIG_DIR");
    app->add_option("--set", overrides, "override one key, e.g. --set phi=0.5 (repeatable)");
  }

  ModelConfig Build() const {
    if (!preset.empty() && !config_file.empty()) throw Error(ErrorKind::kUsage, "--preset and --config are exclusive");
    ModelConfig c = preset.empty() ? ModelConfig{} : Preset(preset);
    if (!config_file.empty()) {
      std::string path = config_file;
      if (!fs::exists(path))
        if (const char* dir = std::getenv("MRHUBERT_CONFIG_DIR"); dir && fs::exists(fs::path(dir) / path))
          path = (fs::path(dir) / path).string();
      c = LoadConfigFile(path);
    }
    for (const auto& o : overrides) ApplyOverride(c, o);
    return c;
  }
};

void RequireValid(const ModelConfig& c) {
  const auto problems = Validate(c);
  if (!problems.empty()) throw Error(ErrorKind::kInvalidConfig, JoinList(problems, "; "));
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());
}

// ---- synth-data ----

struct SynthArgs {
  std::size_t n = 8;
  double min_s = 1.0, max_s = 2.0;
  std::uint64_t seed = 1;
  std::string out;
};

int RunSynth(const SynthArgs& a) {
  const Manifest m = SynthData(a.n, a.min_s, a.max_s, a.seed, a.out);
  std::cout << "wrote " << m.entries.size() << " utterances to " << (fs::path(a.out) / "manifest.tsv").string()
            << '\n';
  return 0;
}

// ---- prepare-units ----

struct UnitsArgs {
  ConfigArgs cfg;
  std::string manifest, out, checkpoint;
  std::size_t k = 0;
  std::uint64_t seed = 1;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

int RunPrepareUnits(const UnitsArgs& a) {
  ModelConfig cfg = a.cfg.Build();
  std::optional<MRModel<float>> source;
  if (!a.checkpoint.empty()) {
    const Checkpoint ck = ReadCheckpoint(a.checkpoint);
    source.emplace(ModelFromCheckpoint<float>(ck));
    cfg = source->config;
  }
  RequireValid(cfg);
  const std::size_t K = a.k > 0 ? a.k : cfg.codebook_size;
  const Manifest m = ReadManifest(a.manifest);
  const UnitPreparation prep = PrepareUnits(m, cfg, K, a.seed, a.out, source ? &source->frontend : nullptr,
                                            a.max_iters, a.tol);
  std::cout << "K=" << K << " iterations=" << prep.codebook.iterations
            << " inertia=" << config_detail::FormatDouble(prep.codebook.inertia) << '\n';
  for (int r : cfg.resolutions_ms) std::cout << "wrote " << (fs::path(a.out) / UnitFileName(r)).string() << '\n';
  return 0;
}

// ---- pretrain ----

struct PretrainArgs {
  ConfigArgs cfg;
  std::string manifest, units, out, resume;
  TrainRunConfig run;
  bool quiet = false;
};

int RunPretrain(PretrainArgs a) {
  const ModelConfig cfg = a.cfg.Build();
  RequireValid(cfg);
  a.run.out_dir = a.out;
  a.run.resume_from = a.resume;
  if (a.manifest.empty()) {
    if (a.run.max_steps != 0) throw Error(ErrorKind::kUsage, "--manifest and --units are required when --steps > 0");
    EnsureDir(a.out);
    MRModel<float> model = MRModel<float>::Init(cfg);
    Checkpoint ck;
    ck.config_text = Serialize(cfg);
    ck.seed = a.run.seed;
    ck.params = SnapshotParameters(model);
    const std::string path = (fs::path(a.out) / "checkpoint.bin").string();
    WriteCheckpoint(path, ck);
    std::cout << "wrote initial checkpoint " << path << " (" << model.NumParameters() << " parameters)\n";
    return 0;
  }
  if (a.units.empty()) throw Error(ErrorKind::kUsage, "--units is required with --manifest");
  std::string units = a.units;
  if (fs::is_directory(units)) units = (fs::path(units) / UnitFileName(cfg.resolutions_ms[0])).string();
  const Manifest m = ReadManifest(a.manifest);
  Trainer<float> trainer(cfg, a.run, LoadUtterances(m, ReadUnitFile(units)));
  const bool quiet = a.quiet;
  const auto reports = trainer.Run([quiet](const StepReport& r) {
    if (quiet) return;
    std::cout << "step " << r.step << " lr " << r.lr << " loss " << r.loss.total;
    for (const auto& p : r.loss.per_resolution) std::cout << " acc_" << p.resolution_ms << "ms " << p.masked_accuracy;
    std::cout << '\n';
  });
  std::cout << "trained to step " << trainer.step() << "; checkpoint " << (fs::path(a.out) / "checkpoint.bin").string()
            << '\n';
  return 0;
}

// ---- extract ----

struct ExtractArgs {
  std::string checkpoint, wav, manifest, out;
  bool with_frontend = false;
};

int RunExtract(const ExtractArgs& a) {
  if (a.wav.empty() == a.manifest.empty()) throw Error(ErrorKind::kUsage, "give exactly one of --wav or --manifest");
  MRModel<float> model = ModelFromCheckpoint<float>(ReadCheckpoint(a.checkpoint));
  if (!a.wav.empty()) {
    const auto states = model.ExtractFeatures(ReadWav(a.wav), a.with_frontend);
    WriteFeatures(a.out, states);
    std::cout << "wrote " << states.size() << " states to " << a.out << '\n';
    return 0;
  }
  EnsureDir(a.out);
  const Manifest m = ReadManifest(a.manifest);
  for (const auto& e : m.entries) {
    const std::string path = (fs::path(a.out) / (e.id + ".feat")).string();
    WriteFeatures(path, model.ExtractFeatures(ReadWav(m.Resolve(e)), a.with_frontend));
  }
  std::cout << "wrote " << m.entries.size() << " feature files to " << a.out << '\n';
  return 0;
}

// ---- profile ----

struct ProfileArgs {
  ConfigArgs cfg;
  std::vector<double> durations = DefaultDurations();
  std::string csv, baseline;
  bool include_attention = false;
};

int RunProfile(const ProfileArgs& a) {
  const ModelConfig cfg = a.cfg.Build();
  const CostReport r = Macs(cfg, a.durations, {a.include_attention});
  std::printf("%-20s %16s %10s\n", "module", "MACs", "G");
  for (const auto& m : r.modules)
    std::printf("%-20s %16llu %10.3f\n", m.c_str(), static_cast<unsigned long long>(r.module_macs.at(m)),
                Giga(r.module_macs.at(m)));
  for (std::size_t i = 0; i < r.durations_s.size(); ++i)
    std::printf("duration %-11s %16llu %10.3f\n", (config_detail::FormatDouble(r.durations_s[i]) + "s").c_str(),
                static_cast<unsigned long long>(r.duration_macs[i]), Giga(r.duration_macs[i]));
  std::printf("total MACs: %.2fG (%llu)\n", Giga(r.total_macs), static_cast<unsigned long long>(r.total_macs));
  std::printf("parameters: %.2fM (%zu)\n", double(r.params.at("total")) / 1e6, r.params.at("total"));
  if (!a.baseline.empty()) {
    const CostReport b = Macs(Preset(a.baseline), a.durations, {a.include_attention});
    std::printf("baseline %s: %.2fG; reduction %.2f%%; parameter change %+.2f%%\n", a.baseline.c_str(),
                Giga(b.total_macs), 100.0 * (1.0 - double(r.total_macs) / double(b.total_macs)),
                100.0 * (double(r.params.at("total")) / double(b.params.at("total")) - 1.0));
  }
  if (!a.csv.empty()) {
    std::ofstream os(a.csv);
    if (!os) throw Error(ErrorKind::kIo, "cannot write " + a.csv);
    os << "module,macs\n";
    for (const auto& m : r.modules) os << m << ',' << r.module_macs.at(m) << '\n';
    for (std::size_t i = 0; i < r.durations_s.size(); ++i)
      os << "duration_" << config_detail::FormatDouble(r.durations_s[i]) << "s," << r.duration_macs[i] << '\n';
    os << "total," << r.total_macs << '\n';
    for (const auto& [k, v] : r.params) os << "params_" << k << ',' << v << '\n';
  }
  return 0;
}

// ---- score ----

struct ScoreArgs {
  std::string anchors = "data/superb_anchors.csv";
  std::string metrics;
  std::string tasks = "understanding";
};

int RunScore(const ScoreArgs& a) {
  const double s = SuperbScore(LoadMetrics(a.metrics), LoadAnchors(a.anchors), TaskGroupingByName(a.tasks));
  std::printf("SUPERB %s score: %.1f\n", a.tasks.c_str(), s);
  return 0;
}

// ---- validate-config ----

struct ValidateArgs {
  ConfigArgs cfg;
  bool list = false, print = false;
};

int RunValidate(const ValidateArgs& a) {
  if (a.list) {
    for (const auto& n : PresetNames()) std::cout << n << '\n';
    return 0;
  }
  const ModelConfig c = a.cfg.Build();
  const auto problems = Validate(c);
  if (a.print) std::cout << Serialize(c);
  if (problems.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& p : problems) std::cerr << "error: invalid-config: " << p << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution masked-prediction speech encoder toolkit"};
  app.require_subcommand(1);
  bool quiet_warnings = false;
  app.add_flag("--no-warnings", quiet_warnings, "suppress warnings on stderr");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "generate a deterministic synthetic 16 kHz corpus");
  c_synth->add_option("--n", synth.n, "number of utterances")->required();
  c_synth->add_option("--min-duration", synth.min_s, "shortest utterance in seconds");
  c_synth->add_option("--max-duration", synth.max_s, "longest utterance in seconds");
  c_synth->add_option("--seed", synth.seed, "random seed");
  c_synth->add_option("--out", synth.out, "output directory")->required();

  UnitsArgs units;
  auto* c_units = app.add_subcommand("prepare-units", "fit K-means on frontend features and write unit files");
  units.cfg.Attach(c_units, "mono-base");
  c_units->add_option("--manifest", units.manifest, "manifest.tsv")->required();
  c_units->add_option("--k", units.k, "codebook size (default: config codebook_size)");
  c_units->add_option("--seed", units.seed, "K-means seed");
  c_units->add_option("--max-iters", units.max_iters, "Lloyd iteration cap");
  c_units->add_option("--tol", units.tol, "centroid-shift tolerance");
  c_units->add_option("--checkpoint", units.checkpoint, "take the frontend (and config) from this checkpoint");
  c_units->add_option("--out", units.out, "output directory")->required();

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "train with the multi-resolution masked-prediction objective");
  pre.cfg.Attach(c_pre, "mono-base");
  c_pre->add_option("--manifest", pre.manifest, "manifest.tsv");
  c_pre->add_option("--units", pre.units, "highest-resolution unit file, or the prepare-units directory");
  c_pre->add_option("--out", pre.out, "output directory")->required();
  c_pre->add_option("--steps", pre.run.max_steps, "number of updates");
  c_pre->add_option("--warmup", pre.run.warmup_steps, "warmup updates");
  c_pre->add_option("--lr", pre.run.peak_lr, "peak learning rate");
  c_pre->add_option("--decay-power", pre.run.decay_power, "polynomial decay power (1 = linear)");
  c_pre->add_option("--clip", pre.run.clip_norm, "gradient-norm clip (<= 0 disables)");
  c_pre->add_option("--weight-decay", pre.run.adam.weight_decay, "decoupled weight decay");
  c_pre->add_option("--batch-frames", pre.run.batch_max_frames, "frame budget per batch (0 = one utterance)");
  c_pre->add_option("--seed", pre.run.seed, "run seed (masks, dropout, data order)");
  c_pre->add_option("--checkpoint-interval", pre.run.checkpoint_interval, "write checkpoint_stepN.bin every N");
  c_pre->add_option("--resume", pre.resume, "continue from a checkpoint");
  c_pre->add_flag("--quiet", pre.quiet, "no per-step output");

  ExtractArgs ex;
  auto* c_ex = app.add_subcommand("extract", "write every hidden state to a feature container");
  c_ex->add_option("--checkpoint", ex.checkpoint, "model checkpoint")->required();
  c_ex->add_option("--wav", ex.wav, "single input WAV");
  c_ex->add_option("--manifest", ex.manifest, "manifest of inputs");
  c_ex->add_option("--out", ex.out, "output file (--wav) or directory (--manifest)")->required();
  c_ex->add_flag("--with-frontend", ex.with_frontend, "also emit the post-frontend features");

  ProfileArgs prof;
  auto* c_prof = app.add_subcommand("profile", "analytic MACs and parameter counts");
  prof.cfg.Attach(c_prof, "mono-base");
  c_prof->add_option("--durations", prof.durations, "audio durations in seconds")->delimiter(',');
  c_prof->add_option("--csv", prof.csv, "also write a CSV report");
  c_prof->add_option("--baseline", prof.baseline, "preset to compare against");
  c_prof->add_flag("--include-attention", prof.include_attention, "count attention score/value products");

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "SUPERB score from task metrics");
  c_score->add_option("--anchors", score.anchors, "anchor CSV (metric,fbank,sota,higher_is_better)");
  c_score->add_option("--metrics", score.metrics, "metric CSV (metric,value)")->required();
  c_score->add_option("--tasks", score.tasks, "understanding | enhancement | general");

  ValidateArgs val;
  auto* c_val = app.add_subcommand("validate-config", "check a configuration");
  val.cfg.Attach(c_val);
  c_val->add_flag("--list", val.list, "list preset names");
  c_val->add_flag("--print", val.print, "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (quiet_warnings) WarningsEnabled() = false;
  try {
    if (*c_synth) return RunSynth(synth);
    if (*c_units) return RunPrepareUnits(units);
    if (*c_pre) return RunPretrain(pre);
    if (*c_ex) return RunExtract(ex);
    if (*c_prof) return RunProfile(prof);
    if (*c_score) return RunScore(score);
    if (*c_val) return RunValidate(val);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
