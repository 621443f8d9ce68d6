#include "fluidfm/fm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fluidfm/tensor/optim.hpp"
#include "fluidfm/tensor/tape.hpp"
#include "fluidfm/util/errors.hpp"
#include "fluidfm/util/thread_pool.hpp"

namespace fluidfm::fm {

using namespace fluidfm::tensor;

namespace {

struct ItemResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

/// Loss and parameter gradients of one rollout item on a private tape.
ItemResult eval_item(const ForecasterWeights& w, const Tensor& input,
                     const std::vector<Tensor>& targets) {
  TapeScope scope;
  const ForecasterConfig& c = w.config;
  Tensor window = input;
  Tensor total;
  for (size_t k = 0; k < targets.size(); ++k) {
    Tensor pred = forward(w, window);
    Tensor step_loss = nrmse(pred, targets[k]);
    total = total.defined() ? add(total, step_loss) : step_loss;
    if (k + 1 < targets.size()) {
      Tensor frame = reshape(pred, {1, c.in_channels, c.input_h, c.input_w});
      const Tensor parts[2] = {slice(window, 0, 1, c.t_in - 1), frame};
      window = concat(std::span<const Tensor>(parts, 2), 0);
    }
  }
  total = mul_scalar(total, 1.0 / double(targets.size()));
  GradMap grads = scope.tape().backward(total);
  ItemResult result;
  result.loss = total.scalar_value();
  result.grads.reserve(w.params.size());
  for (const Tensor& p : w.params) result.grads.push_back(grads.grad(p));
  return result;
}

/// Deterministic in-order reduction of per-item gradients.
void reduce_and_step(ForecasterWeights& w, std::vector<ItemResult>& items, Sgd& opt,
                     double lr) {
  const double inv = 1.0 / double(items.size());
  std::vector<Tensor> batch_grads;
  batch_grads.reserve(w.params.size());
  for (size_t p = 0; p < w.params.size(); ++p) {
    std::vector<double> acc(items[0].grads[p].data());
    for (size_t i = 1; i < items.size(); ++i) {
      const auto& g = items[i].grads[p].data();
      for (size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
    for (double& v : acc) v *= inv;
    batch_grads.push_back(make_tensor(w.params[p].shape(), std::move(acc)));
  }
  opt.step(w.params, batch_grads, lr);
}

void check_divergence(double loss, double initial, int& streak, int64_t epoch) {
  if (initial > 0 && loss > 10.0 * initial) {
    ++streak;
  } else {
    streak = 0;
  }
  require(streak < 5, Err::DivergedTraining,
          "training loss exceeded 10x its initial value for 5 consecutive epochs (epoch " +
              std::to_string(epoch) + ")");
}

double validation_nrmse(const ForecasterWeights& w, const pde::Corpus& corpus,
                        pde::Family family, int64_t cap) {
  auto windows = corpus.validation_windows(family);
  if (windows.empty()) return 0.0;
  if (int64_t(windows.size()) > cap) windows.resize(static_cast<size_t>(cap));
  std::vector<double> scores(windows.size());
  parallel_for(int64_t(windows.size()), [&](int64_t i) {
    std::vector<double> input, target;
    corpus.window_data(windows[static_cast<size_t>(i)], input, target);
    const int64_t hw = corpus.resolution * corpus.resolution;
    Tensor in = Tensor::from_data({corpus.t_in, pde::kMaxChannels, corpus.resolution,
                                   corpus.resolution},
                                  std::move(input));
    Tensor pred = forward(w, in);
    // de-normalized nRMSE over the family's native channels
    const int64_t nc = corpus.native_channels(windows[static_cast<size_t>(i)]);
    double num = 0.0, den = 0.0;
    for (int64_t c = 0; c < nc; ++c) {
      for (int64_t j = 0; j < hw; ++j) {
        const double p = corpus.denormalize(pred.at(c * hw + j), c);
        const double t = corpus.denormalize(target[static_cast<size_t>(c * hw + j)], c);
        num += (p - t) * (p - t);
        den += t * t;
      }
    }
    scores[static_cast<size_t>(i)] = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
  });
  double mean = 0.0;
  for (double s : scores) mean += s;
  return mean / double(scores.size());
}

}  // namespace

void TrainLog::save_csv(const std::string& path) const {
  std::ofstream os(path);
  require(os.is_open(), Err::IoError, "cannot write training log: " + path);
  // union of validation keys, stable order
  std::vector<std::string> keys;
  for (const auto& e : epochs) {
    for (const auto& [k, v] : e.validation) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  os << "epoch,lr,train_loss";
  for (const auto& k : keys) os << ",val_" << k;
  os << "\n";
  char buf[64];
  for (const auto& e : epochs) {
    os << e.epoch;
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g", e.lr, e.train_loss);
    os << buf;
    for (const auto& k : keys) {
      auto it = e.validation.find(k);
      if (it == e.validation.end()) {
        os << ",";
      } else {
        std::snprintf(buf, sizeof buf, ",%.9g", it->second);
        os << buf;
      }
    }
    os << "\n";
  }
}

TrainLog pretrain(ForecasterWeights& w, const pde::Corpus& corpus,
                  const PretrainSchedule& schedule) {
  require(schedule.optimizer == "sgd", Err::ConfigError, "pretraining uses SGD");
  require(corpus.t_in == w.config.t_in, Err::ShapeMismatch, "corpus T_in mismatch");
  require(corpus.resolution == w.config.input_h && corpus.resolution == w.config.input_w,
          Err::ResolutionMismatch, "corpus resolution does not match the model");
  w.stats = corpus.stats;
  w.has_stats = true;

  const bool cosine = schedule.scheduler == "cosine";
  Sgd opt;
  TrainLog log;
  Rng sampler(derive_seed(schedule.seed, "pretrain_sampler"));
  double initial_loss = -1.0;
  int diverged_streak = 0;
  const int64_t hw = corpus.resolution * corpus.resolution;

  for (int64_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = cosine ? cosine_lr(schedule.lr, epoch, schedule.epochs) : schedule.lr;
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (int64_t done = 0; done < schedule.samples_per_epoch;
         done += schedule.batch_size) {
      const int64_t bs =
          std::min<int64_t>(schedule.batch_size, schedule.samples_per_epoch - done);
      // draw the batch up front so parallel evaluation stays deterministic
      std::vector<std::pair<Tensor, std::vector<Tensor>>> batch;
      batch.reserve(static_cast<size_t>(bs));
      for (int64_t b = 0; b < bs; ++b) {
        const pde::CorpusWindow win = corpus.sample_train(sampler);
        std::vector<double> input, target;
        corpus.window_data(win, input, target);
        Tensor in = Tensor::from_data({corpus.t_in, pde::kMaxChannels, corpus.resolution,
                                       corpus.resolution},
                                      std::move(input));
        Tensor tg = Tensor::from_data({pde::kMaxChannels, corpus.resolution,
                                       corpus.resolution},
                                      std::move(target));
        batch.emplace_back(std::move(in), std::vector<Tensor>{std::move(tg)});
      }
      std::vector<ItemResult> results(static_cast<size_t>(bs));
      parallel_for(bs, [&](int64_t i) {
        results[static_cast<size_t>(i)] = eval_item(w, batch[static_cast<size_t>(i)].first, batch[static_cast<size_t>(i)].second);
      });
      double batch_loss = 0.0;
      for (const auto& r : results) batch_loss += r.loss;
      epoch_loss += batch_loss / double(bs);
      ++batches;
      reduce_and_step(w, results, opt, lr);
    }
    epoch_loss /= double(std::max<int64_t>(batches, 1));
    if (initial_loss < 0) initial_loss = epoch_loss;
    check_divergence(epoch_loss, initial_loss, diverged_streak, epoch);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = epoch_loss;
    if (epoch % schedule.validate_every == 0 || epoch + 1 == schedule.epochs) {
      for (pde::Family f : corpus.families) {
        entry.validation[pde::family_name(f)] =
            validation_nrmse(w, corpus, f, schedule.val_windows_per_family);
      }
    }
    log.epochs.push_back(entry);
    w.trained_epochs = epoch + 1;

    if (!schedule.checkpoint_dir.empty() &&
        (epoch + 1 == schedule.epochs ||
         (schedule.checkpoint_every > 0 && epoch % schedule.checkpoint_every == 0))) {
      std::filesystem::create_directories(schedule.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%04lld.fmck", (long long)epoch);
      w.save((std::filesystem::path(schedule.checkpoint_dir) / name).string());
      log.save_csv(
          (std::filesystem::path(schedule.checkpoint_dir) / "pretrain_log.csv").string());
    }
  }
  return log;
}

int64_t curriculum_rollout_steps(int64_t epoch) {
  require(epoch >= 0, Err::InvalidAttr, "epoch must be nonnegative");
  return std::min<int64_t>(3 + epoch / 20, 8);
}

void ensure_video_stats(ForecasterWeights& w, const render::VideoSet& videos, int64_t nf) {
  if (w.has_stats) return;
  double sum = 0.0, sumsq = 0.0;
  int64_t count = 0;
  for (int cam : videos.training_cameras()) {
    for (int64_t t = 0; t < nf; ++t) {
      for (float v : videos.frame(cam, t).values) {
        sum += double(v);
        sumsq += double(v) * double(v);
        ++count;
      }
    }
  }
  require(count > 0, Err::EmptyTrainingSet, "no frames to compute statistics from");
  const double mu = sum / double(count);
  const double var = sumsq / double(count) - mu * mu;
  w.stats = pde::NormStats{};
  w.stats.mean[0] = mu;
  w.stats.stdev[0] = var > 1e-12 ? std::sqrt(var) : 1.0;
  w.has_stats = true;
}

Tensor frames_to_model_input(const ForecasterWeights& w,
                             std::span<const render::Frame> frames) {
  require(w.has_stats, Err::UnnormalizedInput,
          "weights carry no normalization statistics");
  const ForecasterConfig& c = w.config;
  require(!frames.empty(), Err::TooFewFrames, "no frames");
  const int64_t hw = c.input_h * c.input_w;
  std::vector<double> data(static_cast<size_t>(int64_t(frames.size()) * c.in_channels * hw), 0.0);
  const double mu = w.stats.mean[0], sd = w.stats.stdev[0];
  for (size_t t = 0; t < frames.size(); ++t) {
    require(frames[t].height == c.input_h && frames[t].width == c.input_w,
            Err::ShapeMismatch, "frame resolution mismatch");
    double* dst = data.data() + int64_t(t) * c.in_channels * hw;
    for (int64_t i = 0; i < hw; ++i) {
      dst[i] = (double(frames[t].values[static_cast<size_t>(i)]) - mu) / sd;
    }
  }
  return Tensor::from_data({int64_t(frames.size()), c.in_channels, c.input_h, c.input_w},
                           std::move(data));
}

render::Frame model_output_to_frame(const ForecasterWeights& w, const Tensor& pred,
                                    int camera_id, int64_t t) {
  require(w.has_stats, Err::UnnormalizedInput,
          "weights carry no normalization statistics");
  const ForecasterConfig& c = w.config;
  const int64_t hw = c.input_h * c.input_w;
  render::Frame frame;
  frame.height = c.input_h;
  frame.width = c.input_w;
  frame.t = t;
  frame.camera_id = camera_id;
  frame.values.resize(static_cast<size_t>(hw));
  const double mu = w.stats.mean[0], sd = w.stats.stdev[0];
  for (int64_t i = 0; i < hw; ++i) {
    const double v = pred.at(i) * sd + mu;
    frame.values[static_cast<size_t>(i)] = float(std::clamp(v, 0.0, 1.0));
  }
  return frame;
}

std::vector<render::Frame> forecast_frames(const ForecasterWeights& w,
                                           std::span<const render::Frame> history,
                                           int64_t n_steps, int camera_id,
                                           int64_t t_start) {
  require(history.size() >= 2, Err::TooFewFrames, "forecasting needs at least two frames");
  const ForecasterConfig& c = w.config;
  Tensor window = frames_to_model_input(w, history);
  if (int64_t(history.size()) < c.t_in) window = pad_to_input(window, c.t_in);
  Tensor preds = rollout(w, window, n_steps);
  std::vector<render::Frame> out;
  out.reserve(static_cast<size_t>(n_steps));
  const int64_t hw = c.input_h * c.input_w;
  for (int64_t k = 0; k < n_steps; ++k) {
    Tensor fr = slice(preds, 0, k, 1);
    out.push_back(model_output_to_frame(w, reshape(fr, {c.in_channels * hw}), camera_id,
                                        t_start + k));
  }
  return out;
}

TrainLog finetune(ForecasterWeights& w, const render::VideoSet& videos, int64_t nf,
                  const FinetuneSchedule& schedule,
                  const std::vector<AugmentedView>* augmented) {
  require(nf > w.config.t_in, Err::TooFewFrames, "need more frames than T_in");
  require(nf <= videos.n_frames(), Err::TooFewFrames, "videos are shorter than nf");
  ensure_video_stats(w, videos, nf);
  const ForecasterConfig& c = w.config;

  // per-camera timelines: real frames then gap-free augmented continuation
  const std::vector<int> cams = videos.training_cameras();
  std::vector<std::vector<render::Frame>> timeline(cams.size());
  for (size_t ci = 0; ci < cams.size(); ++ci) {
    for (int64_t t = 0; t < nf; ++t) {
      timeline[ci].push_back(videos.frame(cams[ci], t));
      w.manifest.add_real(cams[ci], t);
    }
  }
  if (augmented != nullptr) {
    for (size_t ci = 0; ci < cams.size(); ++ci) {
      std::vector<const AugmentedView*> mine;
      for (const auto& v : *augmented) {
        if (v.camera_id == cams[ci]) mine.push_back(&v);
      }
      std::sort(mine.begin(), mine.end(), [](const AugmentedView* a, const AugmentedView* b) {
        return a->time_index < b->time_index;
      });
      int64_t next_t = nf;
      for (const AugmentedView* v : mine) {
        if (v->time_index != next_t) break;  // keep the contiguous prefix
        timeline[ci].push_back(v->frame);
        w.manifest.add({v->camera_id, v->time_index, v->source, v->reliability, v->round});
        ++next_t;
      }
    }
  }

  Sgd opt;
  TrainLog log;
  Rng sampler(derive_seed(schedule.seed, "finetune_sampler"));
  double initial_loss = -1.0;
  int diverged_streak = 0;

  for (int64_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = cosine_lr(schedule.lr, epoch, schedule.epochs);
    const int64_t want_r =
        schedule.curriculum ? curriculum_rollout_steps(epoch) : schedule.fixed_rollout;

    double epoch_loss = 0.0;
    int64_t steps = 0;
    for (int64_t done = 0; done < schedule.items_per_epoch; done += schedule.batch_size) {
      const int64_t bs =
          std::min<int64_t>(schedule.batch_size, schedule.items_per_epoch - done);
      std::vector<std::pair<Tensor, std::vector<Tensor>>> batch;
      for (int64_t b = 0; b < bs; ++b) {
        const size_t ci = static_cast<size_t>(sampler.uniform_int(int64_t(cams.size())));
        const int64_t length = int64_t(timeline[ci].size());
        const int64_t r = std::max<int64_t>(1, std::min(want_r, length - c.t_in));
        const int64_t t0_max = length - c.t_in - r;
        const int64_t t0 = t0_max > 0 ? sampler.uniform_int(t0_max + 1) : 0;
        Tensor input = frames_to_model_input(
            w, std::span<const render::Frame>(timeline[ci].data() + t0, static_cast<size_t>(c.t_in)));
        std::vector<Tensor> targets;
        for (int64_t k = 0; k < r; ++k) {
          Tensor tg = frames_to_model_input(
              w, std::span<const render::Frame>(&timeline[ci][static_cast<size_t>(t0 + c.t_in + k)], 1));
          targets.push_back(reshape(tg, {c.in_channels, c.input_h, c.input_w}));
        }
        batch.emplace_back(std::move(input), std::move(targets));
      }
      std::vector<ItemResult> results(static_cast<size_t>(bs));
      parallel_for(bs, [&](int64_t i) {
        results[static_cast<size_t>(i)] = eval_item(w, batch[static_cast<size_t>(i)].first, batch[static_cast<size_t>(i)].second);
      });
      double batch_loss = 0.0;
      for (const auto& r : results) batch_loss += r.loss;
      epoch_loss += batch_loss / double(bs);
      ++steps;
      reduce_and_step(w, results, opt, lr);
    }
    epoch_loss /= double(std::max<int64_t>(steps, 1));
    if (initial_loss < 0) initial_loss = epoch_loss;
    check_divergence(epoch_loss, initial_loss, diverged_streak, epoch);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = epoch_loss;
    entry.validation["rollout_steps"] = double(want_r);
    log.epochs.push_back(entry);
    w.trained_epochs = epoch + 1;
  }
  return log;
}

}  // namespace fluidfm::fm
