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
#pragma once

#include <filesystem>
#include <functional>

#include "mrhubert/checkpoint.hpp"
#include "mrhubert/objective.hpp"

namespace mrhubert {

/// Linear warmup 0 -> peak, then (polynomial, default linear) decay to 0 at
/// max_steps.
inline double LrAt(std::size_t step, std::size_t warmup, double peak, std::size_t max_steps, double power = 1.0) {
  if (step < warmup) return peak * double(step) / double(warmup);
  if (step >= max_steps) return max_steps == warmup && step == warmup ? peak : 0.0;
  const double remaining = double(max_steps - step) / double(max_steps - warmup);
  return peak * std::pow(remaining, power);
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

template <RealScalar Real>
struct OptimizerState {
  std::size_t step = 0;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;

  void Reset(const std::vector<Parameter<Real>*>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
    }
  }
};

/// Global L2 norm of the gradients; rescales them to `max_norm` when larger.
/// max_norm <= 0 disables clipping.
template <RealScalar Real>
double ClipGradNorm(const std::vector<Parameter<Real>*>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (Real g : p->grad.storage()) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Real scale = static_cast<Real>(max_norm / (norm + 1e-6));
    for (auto* p : params)
      for (Real& g : p->grad.storage()) g *= scale;
  }
  return norm;
}

/// Decoupled weight decay (matrices and kernels only) plus bias-corrected Adam.
template <RealScalar Real>
void AdamWUpdate(const std::vector<Parameter<Real>*>& params, OptimizerState<Real>& st, double lr,
                 const AdamWConfig& cfg) {
  if (st.m.size() != params.size()) throw Error(ErrorKind::kShape, "optimizer state does not match parameters");
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.storage();
    const auto& g = params[i]->grad.storage();
    auto& m = st.m[i].storage();
    auto& v = st.v[i].storage();
    const bool decay = params[i]->value.rank() >= 2;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<Real>(cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk);
      v[k] = static_cast<Real>(cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk);
      double wk = w[k];
      if (decay) wk -= lr * cfg.weight_decay * wk;
      wk -= lr * (double(m[k]) / bc1) / (std::sqrt(double(v[k]) / bc2) + cfg.eps);
      w[k] = static_cast<Real>(wk);
    }
  }
}

struct Utterance {
  std::string id;
  Waveform wave;
  std::vector<int> units;  // highest-resolution targets
};

/// Reconciles unit and frame counts that differ by at most one frame by
/// truncating whichever is longer (the waveform is trimmed to the samples of
/// one fewer frame).
inline void AlignUtterance(Utterance& u, const ConvExtractorSpec& spec) {
  const std::size_t frames = OutputLength(u.wave.samples.size(), spec);
  if (frames == u.units.size()) return;
  const std::size_t diff = frames > u.units.size() ? frames - u.units.size() : u.units.size() - frames;
  if (diff > 1)
    throw Error(ErrorKind::kData, "utterance '" + u.id + "': " + std::to_string(u.units.size()) + " units for " +
                                      std::to_string(frames) + " frames");
  if (u.units.size() > frames) {
    u.units.resize(frames);
  } else {
    if (u.units.empty()) throw Error(ErrorKind::kData, "utterance '" + u.id + "' has no units");
    u.wave.samples.resize(MinimumSamples(spec) + (u.units.size() - 1) * spec.TotalStride());
  }
}

struct TrainRunConfig {
  std::size_t max_steps = 100;
  std::size_t warmup_steps = 10;
  double peak_lr = 5e-4;
  double decay_power = 1.0;
  double clip_norm = 10.0;
  AdamWConfig adam;
  std::size_t batch_max_frames = 0;  // 0: one utterance per step
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::string out_dir;                  // empty: nothing written
  std::string resume_from;
};

struct StepReport {
  std::size_t step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  LossBreakdown loss;
};

/// Owns the model, optimizer and data cursor of one training run.
template <RealScalar Real>
class Trainer {
 public:
  Trainer(ModelConfig cfg, TrainRunConfig run, std::vector<Utterance> data)
      : run_(std::move(run)), data_(std::move(data)), model_(MRModel<Real>::Init(cfg)) {
    if (data_.empty()) throw Error(ErrorKind::kData, "no training utterances");
    if (run_.warmup_steps > run_.max_steps) throw Error(ErrorKind::kInvalidConfig, "warmup_steps > max_steps");
    for (auto& u : data_) AlignUtterance(u, cfg.frontend);
    if (run_.batch_max_frames > 0)
      for (const auto& u : data_)
        if (u.units.size() > run_.batch_max_frames)
          throw Error(ErrorKind::kInvalidConfig, "batch_max_frames " + std::to_string(run_.batch_max_frames) +
                                                     " below utterance '" + u.id + "' (" +
                                                     std::to_string(u.units.size()) + " frames)");
    params_ = model_.TrainableParameters();
    opt_.Reset(params_);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  MRModel<Real>& model() { return model_; }
  std::size_t step() const { return step_; }
  const OptimizerState<Real>& optimizer() const { return opt_; }

  /// Utterance index of the g-th draw: a fresh seeded permutation per epoch.
  std::size_t UtteranceAt(std::uint64_t g) const {
    const std::size_t n = data_.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::seed_seq ss{std::uint64_t(run_.seed), std::uint64_t(g / n), std::uint64_t(0xda7a)};
    std::mt19937_64 rng(ss);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    return perm[g % n];
  }

  /// One optimizer update on the next batch.
  StepReport Step() {
    std::vector<std::size_t> batch{UtteranceAt(cursor_)};
    std::size_t frames = data_[batch[0]].units.size();
    while (run_.batch_max_frames > 0 && batch.size() < data_.size()) {
      const std::size_t next = UtteranceAt(cursor_ + batch.size());
      if (frames + data_[next].units.size() > run_.batch_max_frames) break;
      frames += data_[next].units.size();
      batch.push_back(next);
    }
    for (auto* p : model_.Parameters()) p->ZeroGrad();

    StepReport rep;
    rep.step = step_;
    const std::size_t N = model_.config.num_resolutions();
    rep.loss.per_resolution.resize(N);
    rep.loss.weights = model_.config.loss_weights;
    std::vector<double> acc_weighted(N, 0.0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Utterance& u = data_[batch[b]];
      std::seed_seq ss{std::uint64_t(run_.seed), std::uint64_t(step_), std::uint64_t(b), std::uint64_t(0x57e9)};
      std::mt19937_64 rng(ss);
      Tape<Real> tape;
      ForwardContext<Real> ctx{&tape, model_.config.dropout, &rng};
      typename MRModel<Real>::ForwardOptions opt;
      PretrainOutput<Real> out = model_.Forward(ctx, u.wave, rng, opt);
      LossBreakdown lb;
      Var<Real> loss = PretrainLoss(out, u.units, model_.config, &lb);
      if (batch.size() > 1) loss = ad::Scale(loss, static_cast<Real>(1.0 / double(batch.size())));
      tape.Backward(loss);
      for (std::size_t k = 0; k < N; ++k) {
        auto& dst = rep.loss.per_resolution[k];
        const auto& src = lb.per_resolution[k];
        dst.resolution_ms = src.resolution_ms;
        dst.loss += src.loss / double(batch.size());
        dst.masked_frames += src.masked_frames;
        acc_weighted[k] += src.masked_accuracy * double(src.masked_frames);
      }
      rep.loss.total += lb.total / double(batch.size());
    }
    for (std::size_t k = 0; k < N; ++k) {
      auto& r = rep.loss.per_resolution[k];
      r.vacuous = r.masked_frames == 0;
      r.masked_accuracy = r.vacuous ? 1.0 : acc_weighted[k] / double(r.masked_frames);
    }
    if (!std::isfinite(rep.loss.total))
      throw Error(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step_));
    rep.grad_norm = ClipGradNorm(params_, run_.clip_norm);
    rep.lr = LrAt(step_ + 1, run_.warmup_steps, run_.peak_lr, run_.max_steps, run_.decay_power);
    AdamWUpdate(params_, opt_, rep.lr, run_.adam);
    ++step_;
    cursor_ += batch.size();
    return rep;
  }

  Checkpoint MakeCheckpoint() {
    Checkpoint ck;
    ck.config_text = Serialize(model_.config);
    ck.step = step_;
    ck.cursor = cursor_;
    ck.seed = run_.seed;
    ck.params = SnapshotParameters(model_);
    ck.has_optimizer = true;
    ck.optimizer_step = opt_.step;
    auto all = model_.Parameters();
    for (auto* p : all) {
      const auto it = std::find(params_.begin(), params_.end(), p);
      if (it == params_.end()) {
        ck.first_moment.emplace_back(p->value.shape());
        ck.second_moment.emplace_back(p->value.shape());
      } else {
        const std::size_t i = std::size_t(it - params_.begin());
        ck.first_moment.push_back(opt_.m[i].template Cast<float>());
        ck.second_moment.push_back(opt_.v[i].template Cast<float>());
      }
    }
    return ck;
  }

  void Restore(const Checkpoint& ck) {
    if (ck.config_text != Serialize(model_.config))
      throw Error(ErrorKind::kData, "checkpoint config differs from the run config");
    if (ck.seed != run_.seed)
      throw Error(ErrorKind::kData, "checkpoint seed " + std::to_string(ck.seed) + " differs from run seed " +
                                        std::to_string(run_.seed));
    LoadParameters(model_, ck);
    step_ = ck.step;
    cursor_ = ck.cursor;
    opt_.Reset(params_);
    if (ck.has_optimizer) {
      opt_.step = ck.optimizer_step;
      auto all = model_.Parameters();
      for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::size_t j = std::size_t(std::find(all.begin(), all.end(), params_[i]) - all.begin());
        opt_.m[i] = ck.first_moment.at(j).template Cast<Real>();
        opt_.v[i] = ck.second_moment.at(j).template Cast<Real>();
      }
    }
  }

  static std::string MetricsHeader(const ModelConfig& cfg) {
    std::string h = "step\tlr\tloss_total";
    for (int r : cfg.resolutions_ms) {
      const std::string s = std::to_string(r) + "ms";
      h += "\tloss_" + s + "\tacc_" + s + "\tmasked_" + s;
    }
    return h + "\tgrad_norm";
  }

  static std::string MetricsLine(const StepReport& r) {
    using config_detail::FormatDouble;
    std::string line = std::to_string(r.step) + '\t' + FormatDouble(r.lr) + '\t' + FormatDouble(r.loss.total);
    for (const auto& p : r.loss.per_resolution)
      line += '\t' + FormatDouble(p.loss) + '\t' + FormatDouble(p.masked_accuracy) + '\t' +
              std::to_string(p.masked_frames);
    return line + '\t' + FormatDouble(r.grad_norm);
  }

  /// Trains to max_steps, writing metrics.tsv and checkpoints under out_dir.
  /// `on_step` (optional) observes every report.
  std::vector<StepReport> Run(const std::function<void(const StepReport&)>& on_step = {}) {
    namespace fs = std::filesystem;
    const bool write = !run_.out_dir.empty();
    if (!run_.resume_from.empty()) Restore(ReadCheckpoint(run_.resume_from));
    if (step_ > run_.max_steps)
      throw Error(ErrorKind::kInvalidConfig, "resume step " + std::to_string(step_) + " beyond max_steps");
    std::ofstream metrics;
    if (write) {
      std::error_code ec;
      fs::create_directories(run_.out_dir, ec);
      if (ec) throw Error(ErrorKind::kIo, "cannot create " + run_.out_dir + ": " + ec.message());
      const std::string path = (fs::path(run_.out_dir) / "metrics.tsv").string();
      std::vector<std::string> kept;
      if (step_ > 0) {
        std::ifstream old(path);
        std::string line;
        while (kept.size() < step_ + 1 && std::getline(old, line)) kept.push_back(line);
        if (kept.size() != step_ + 1)
          throw Error(ErrorKind::kData, path + ": fewer metrics lines than the resumed step");
      }
      metrics.open(path, std::ios::trunc);
      if (!metrics) throw Error(ErrorKind::kIo, "cannot write " + path);
      if (kept.empty()) kept.push_back(MetricsHeader(model_.config));
      for (const auto& l : kept) metrics << l << '\n';
    }
    std::vector<StepReport> reports;
    while (step_ < run_.max_steps) {
      StepReport r = Step();
      if (write) metrics << MetricsLine(r) << '\n' << std::flush;
      if (on_step) on_step(r);
      reports.push_back(std::move(r));
      if (write && run_.checkpoint_interval > 0 && step_ % run_.checkpoint_interval == 0 && step_ < run_.max_steps)
        WriteCheckpoint((fs::path(run_.out_dir) / ("checkpoint_step" + std::to_string(step_) + ".bin")).string(),
                        MakeCheckpoint());
    }
    if (write) {
      if (!metrics) throw Error(ErrorKind::kIo, "failed writing metrics log");
      WriteCheckpoint((fs::path(run_.out_dir) / "checkpoint.bin").string(), MakeCheckpoint());
    }
    return reports;
  }

 private:
  TrainRunConfig run_;
  std::vector<Utterance> data_;
  MRModel<Real> model_;
  std::vector<Parameter<Real>*> params_;
  OptimizerState<Real> opt_;
  std::size_t step_ = 0;
  std::uint64_t cursor_ = 0;
};

}  // namespace mrhubert
