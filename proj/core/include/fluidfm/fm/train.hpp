#pragma once

#include <map>
#include <optional>

#include "fluidfm/fm/forecaster.hpp"
#include "fluidfm/render/video.hpp"
#include "fluidfm/views.hpp"

namespace fluidfm::fm {

/// Multiphysics pretraining settings. Defaults follow the published recipe:
/// LR 0.1, batch 4, SGD with cosine decay, 500 epochs, one-step rollout.
/// samples_per_epoch is the desk-scale epoch length.
struct PretrainSchedule {
  double lr = 0.1;
  int64_t batch_size = 4;
  std::string optimizer = "sgd";
  std::string scheduler = "cosine";
  int64_t epochs = 500;
  int64_t rollout = 1;
  int64_t samples_per_epoch = 512;
  int64_t validate_every = 5;
  int64_t val_windows_per_family = 64;
  uint64_t seed = 0;
  std::string checkpoint_dir;  // empty: no checkpoints
  int64_t checkpoint_every = 0;
};

struct EpochLog {
  int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::map<std::string, double> validation;  // family -> de-normalized nRMSE
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  void save_csv(const std::string& path) const;
};

/// One-step-ahead nRMSE training over the corpus. Raises DivergedTraining
/// when the loss exceeds 10x its initial value for 5 consecutive epochs.
TrainLog pretrain(ForecasterWeights& weights, const pde::Corpus& corpus,
                  const PretrainSchedule& schedule);

/// Autoregressive-depth curriculum: 3 at epoch 0, +1 every 20 epochs, capped
/// at 8.
int64_t curriculum_rollout_steps(int64_t epoch);

/// Video fine-tuning settings (published recipe rows: v0 = 200 epochs with
/// the curriculum, v1 = 100 epochs at fixed rollout 8; LR 0.1, batch 1, SGD
/// cosine).
struct FinetuneSchedule {
  double lr = 0.1;
  int64_t batch_size = 1;
  int64_t epochs = 200;
  bool curriculum = true;
  int64_t fixed_rollout = 8;
  int64_t items_per_epoch = 4;
  uint64_t seed = 0;

  static FinetuneSchedule v0() { return FinetuneSchedule{}; }
  static FinetuneSchedule v1() {
    FinetuneSchedule s;
    s.epochs = 100;
    s.curriculum = false;
    s.fixed_rollout = 8;
    return s;
  }
};

/// Multi-step autoregressive fine-tuning on the first nf real frames of the
/// training cameras plus any augmented views; gradients flow through the
/// whole rollout. Each camera's sequence is an independent training item.
TrainLog finetune(ForecasterWeights& weights, const render::VideoSet& videos, int64_t nf,
                  const FinetuneSchedule& schedule,
                  const std::vector<AugmentedView>* augmented = nullptr);

// ---- video adapters ---------------------------------------------------------

/// Channel-0 statistics for video fine-tuning when the weights carry none
/// (scratch init); computed from the real training frames only.
void ensure_video_stats(ForecasterWeights& weights, const render::VideoSet& videos,
                        int64_t nf);

/// Frames -> normalized model input [n, C_max, H, W]: pixel values enter
/// channel 0, channels 1..3 stay zero. Raises UnnormalizedInput when the
/// weights carry no statistics.
tensor::Tensor frames_to_model_input(const ForecasterWeights& weights,
                                     std::span<const render::Frame> frames);

/// De-normalizes channel 0 of a prediction and clamps it into a [0,1] Frame.
render::Frame model_output_to_frame(const ForecasterWeights& weights,
                                    const tensor::Tensor& pred, int camera_id, int64_t t);

/// Autoregressive video forecast: history (>= 2 frames, padded to T_in via
/// pad_to_input when shorter) -> n_steps future frames starting at t_start.
std::vector<render::Frame> forecast_frames(const ForecasterWeights& weights,
                                           std::span<const render::Frame> history,
                                           int64_t n_steps, int camera_id, int64_t t_start);

}  // namespace fluidfm::fm
