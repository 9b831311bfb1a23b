#pragma once

#include <string>
#include <vector>

#include "mpl/adam.hpp"
#include "mpl/io.hpp"
#include "mpl/model.hpp"

namespace mpl {

struct TrainConfig {
  i64 batch_size = 32;
  i64 epochs = 20;
  double lr = 1e-4;
  std::vector<i64> decay_epochs{10, 15};  // 1-indexed, lr multiplied at start
  double decay_factor = 0.1;
  u64 seed = 1;
  bool shuffle = true;
  double eval_split_fraction = 0.05;  // held-out tail of the dataset
  double clip_norm = 0.0;             // 0 disables gradient clipping

  void validate() const;
  // Learning rate in effect during `epoch` (1-indexed).
  double lr_at_epoch(i64 epoch) const;
  std::string to_json() const;
};

struct EpochStats {
  i64 epoch = 0;
  double lr = 0.0;
  double train_mpjpe_mm = 0.0;
  double holdout_mpjpe_mm = 0.0;  // NaN when no holdout split
  double wall_seconds = 0.0;
};

struct TrainResult {
  ParamSet final_weights;
  ParamSet best_weights;
  i64 best_epoch = 0;
  std::vector<EpochStats> log;
};

enum class ModelKind { mpl, fc };

// Full training loop: deterministic seeded shuffling, mean-per-sample MPJPE
// loss (last partial batch kept), Adam with the step-decay schedule, per-epoch
// held-out monitoring on an immutable weight snapshot. TrainDiverged carries
// the offending epoch when the loss goes non-finite.
TrainResult train(ModelKind kind, const io::Dataset& dataset,
                  const CameraSet& cameras, const MplConfig& mpl_cfg,
                  const FcConfig& fc_cfg, const TrainConfig& tc,
                  const std::string& epoch_csv_path = "");

// Batched forward-only predictions (immutable weights snapshot).
std::vector<Skeleton3D> predict_mpl(const io::Dataset& ds,
                                    const std::vector<i64>& sample_indices,
                                    const std::vector<i64>& view_subset,
                                    const CameraSet& cameras,
                                    const ParamSet& weights,
                                    const MplConfig& cfg);
std::vector<Skeleton3D> predict_fc(const io::Dataset& ds,
                                   const std::vector<i64>& sample_indices,
                                   const std::vector<i64>& view_subset,
                                   const CameraSet& cameras,
                                   const ParamSet& weights,
                                   const FcConfig& cfg);

}  // namespace mpl
