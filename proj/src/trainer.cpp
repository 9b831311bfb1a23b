#include "mpl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "mpl/rng.hpp"

namespace mpl {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) raise(Err::config_error, "batch size must be >= 1");
  if (epochs < 1) raise(Err::config_error, "epochs must be >= 1");
  if (!(lr > 0.0)) raise(Err::config_error, "learning rate must be > 0");
  if (!(decay_factor > 0.0) || decay_factor > 1.0) {
    raise(Err::config_error, "decay factor must be in (0, 1]");
  }
  i64 prev = 0;
  for (i64 d : decay_epochs) {
    if (d <= prev || d >= epochs) {
      raise(Err::config_error,
            strfmt("decay epochs must be strictly increasing and < %lld "
                   "epochs",
                   (long long)epochs));
    }
    prev = d;
  }
  if (eval_split_fraction < 0.0 || eval_split_fraction >= 1.0) {
    raise(Err::config_error, "eval split fraction must be in [0, 1)");
  }
  if (clip_norm < 0.0) raise(Err::config_error, "clip norm must be >= 0");
}

double TrainConfig::lr_at_epoch(i64 epoch) const {
  double out = lr;
  for (i64 d : decay_epochs) {
    if (epoch >= d) out *= decay_factor;
  }
  return out;
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["decay_epochs"] = decay_epochs;
  j["decay_factor"] = decay_factor;
  j["seed"] = seed;
  j["shuffle"] = shuffle;
  j["eval_split_fraction"] = eval_split_fraction;
  j["clip_norm"] = clip_norm;
  return j.dump();
}

namespace {

struct BatchTensors {
  Tensor x;      // (B*V*K) x 2 normalized
  Tensor gt_mm;  // (B*K) x 3
};

BatchTensors make_batch(const io::Dataset& ds,
                        const std::vector<i64>& sample_indices, i64 begin,
                        i64 end, const std::vector<i64>& view_subset,
                        const CameraSet& cameras, bool with_gt) {
  const i64 batch = end - begin;
  const i64 joints = ds.joints;
  std::vector<const Skeleton2D*> flat;
  flat.reserve(size_t(batch * i64(view_subset.size())));
  for (i64 b = begin; b < end; ++b) {
    const auto& s = ds.samples[size_t(sample_indices[size_t(b)])];
    for (i64 v : view_subset) flat.push_back(&s.views[size_t(v)]);
  }
  BatchTensors out;
  out.x = normalized_input(flat, cameras, view_subset, batch, joints);
  if (with_gt) {
    out.gt_mm = Tensor({batch * joints, 3});
    i64 row = 0;
    for (i64 b = begin; b < end; ++b) {
      const auto& s = ds.samples[size_t(sample_indices[size_t(b)])];
      for (i64 k = 0; k < joints; ++k) {
        out.gt_mm.at(row, 0) = s.gt_mm.joints[size_t(k)].x;
        out.gt_mm.at(row, 1) = s.gt_mm.joints[size_t(k)].y;
        out.gt_mm.at(row, 2) = s.gt_mm.joints[size_t(k)].z;
        ++row;
      }
    }
  }
  return out;
}

std::vector<Skeleton3D> predict_batched(const io::Dataset& ds,
                                        const std::vector<i64>& sample_indices,
                                        const std::vector<i64>& view_subset,
                                        const CameraSet& cameras,
                                        const ParamSet& weights,
                                        const MplConfig* mpl_cfg,
                                        const FcConfig* fc_cfg) {
  const i64 total = i64(sample_indices.size());
  const i64 joints = ds.joints;
  std::vector<Skeleton3D> out;
  out.reserve(static_cast<size_t>(total));
  constexpr i64 kBatch = 256;
  for (i64 base = 0; base < total; base += kBatch) {
    const i64 end = std::min(total, base + kBatch);
    const i64 batch = end - base;
    BatchTensors bt =
        make_batch(ds, sample_indices, base, end, view_subset, cameras, false);
    Graph g(&weights);
    int pred;
    if (mpl_cfg) {
      MplModel model{mpl_cfg};
      pred = model.build(g, g.input(std::move(bt.x)), batch);
    } else {
      FcModel model{fc_cfg};
      const i64 width = fc_cfg->input_width();
      int x = g.input(std::move(bt.x));
      pred = model.build(g, g.reshape(x, {batch, width}), batch);
    }
    const Tensor& p = g.value(pred);
    for (i64 b = 0; b < batch; ++b) {
      Skeleton3D skel;
      skel.joints.resize(static_cast<size_t>(joints));
      for (i64 k = 0; k < joints; ++k) {
        const i64 r = b * joints + k;
        skel.joints[size_t(k)] = {p.at(r, 0), p.at(r, 1), p.at(r, 2)};
      }
      out.push_back(std::move(skel));
    }
  }
  return out;
}

}  // namespace

std::vector<Skeleton3D> predict_mpl(const io::Dataset& ds,
                                    const std::vector<i64>& sample_indices,
                                    const std::vector<i64>& view_subset,
                                    const CameraSet& cameras,
                                    const ParamSet& weights,
                                    const MplConfig& cfg) {
  if (i64(view_subset.size()) != cfg.views) {
    raise(Err::view_count_mismatch,
          strfmt("checkpoint expects %lld views, got %zu", (long long)cfg.views,
                 view_subset.size()));
  }
  return predict_batched(ds, sample_indices, view_subset, cameras, weights,
                         &cfg, nullptr);
}

std::vector<Skeleton3D> predict_fc(const io::Dataset& ds,
                                   const std::vector<i64>& sample_indices,
                                   const std::vector<i64>& view_subset,
                                   const CameraSet& cameras,
                                   const ParamSet& weights,
                                   const FcConfig& cfg) {
  if (i64(view_subset.size()) != cfg.views) {
    raise(Err::view_count_mismatch,
          strfmt("checkpoint expects %lld views, got %zu", (long long)cfg.views,
                 view_subset.size()));
  }
  return predict_batched(ds, sample_indices, view_subset, cameras, weights,
                         nullptr, &cfg);
}

TrainResult train(ModelKind kind, const io::Dataset& dataset,
                  const CameraSet& cameras, const MplConfig& mpl_cfg,
                  const FcConfig& fc_cfg, const TrainConfig& tc,
                  const std::string& epoch_csv_path) {
  tc.validate();
  const i64 views = kind == ModelKind::mpl ? mpl_cfg.views : fc_cfg.views;
  const i64 joints = kind == ModelKind::mpl ? mpl_cfg.joints : fc_cfg.joints;
  if (dataset.views != views) {
    raise(Err::view_count_mismatch,
          strfmt("dataset has %lld views, model config expects %lld",
                 (long long)dataset.views, (long long)views));
  }
  if (dataset.joints != joints) {
    raise(Err::shape_mismatch,
          strfmt("dataset has %lld joints, model config expects %lld",
                 (long long)dataset.joints, (long long)joints));
  }
  if (i64(cameras.size()) < views) {
    raise(Err::view_count_mismatch,
          strfmt("camera set has %zu cameras, need %lld", cameras.size(),
                 (long long)views));
  }
  for (const auto& s : dataset.samples) {
    if (s.gt_mm.joints.empty()) {
      raise(Err::schema_error, "training dataset lacks 3D ground truth");
    }
  }

  const i64 total = dataset.size();
  const i64 holdout = i64(std::llround(tc.eval_split_fraction * double(total)));
  const i64 train_count = total - holdout;
  if (train_count < 1) {
    raise(Err::config_error, "eval split leaves no training samples");
  }

  std::vector<i64> train_idx(static_cast<size_t>(train_count));
  for (i64 i = 0; i < train_count; ++i) train_idx[size_t(i)] = i;
  std::vector<i64> holdout_idx(static_cast<size_t>(holdout));
  for (i64 i = 0; i < holdout; ++i) holdout_idx[size_t(i)] = train_count + i;
  std::vector<i64> view_subset(static_cast<size_t>(views));
  for (i64 v = 0; v < views; ++v) view_subset[size_t(v)] = v;

  ParamSet weights = kind == ModelKind::mpl
                         ? init_mpl_weights(mpl_cfg, tc.seed)
                         : init_fc_weights(fc_cfg, tc.seed);
  ParamSet grads = weights.zeros_like();
  AdamState adam(weights);

  std::unique_ptr<io::FileWriter> csv;
  if (!epoch_csv_path.empty()) {
    csv = std::make_unique<io::FileWriter>(epoch_csv_path);
    csv->write_line("epoch,lr,train_mpjpe_mm,holdout_mpjpe_mm,wall_seconds");
  }

  TrainResult result;
  double best_metric = std::numeric_limits<double>::infinity();
  const double t_start = now_seconds();

  for (i64 epoch = 1; epoch <= tc.epochs; ++epoch) {
    const double lr = tc.lr_at_epoch(epoch);
    std::vector<i64> order = train_idx;
    if (tc.shuffle) {
      Rng rng = Rng::stream(tc.seed, 0x5e50ull + u64(epoch));
      for (i64 i = train_count - 1; i > 0; --i) {
        const i64 j = i64(rng.uniform_int(u64(i + 1)));
        std::swap(order[size_t(i)], order[size_t(j)]);
      }
    }

    double loss_sum = 0.0;
    i64 step = 0;
    for (i64 begin = 0; begin < train_count; begin += tc.batch_size, ++step) {
      const i64 end = std::min(train_count, begin + tc.batch_size);
      const i64 batch = end - begin;
      BatchTensors bt =
          make_batch(dataset, order, begin, end, view_subset, cameras, true);
      double loss_value;
      try {
        Graph g(&weights);
        int pred;
        u64 sm = tc.seed ^ (u64(epoch) << 32) ^ u64(step);
        const u64 dropout_seed = splitmix64(sm);
        if (kind == ModelKind::mpl) {
          MplModel model{&mpl_cfg};
          pred = model.build(g, g.input(std::move(bt.x)), batch, dropout_seed,
                             /*train=*/true);
        } else {
          FcModel model{&fc_cfg};
          int x = g.input(std::move(bt.x));
          pred = model.build(g, g.reshape(x, {batch, fc_cfg.input_width()}),
                             batch);
        }
        const int loss = g.mpjpe_loss(pred, g.input(std::move(bt.gt_mm)));
        loss_value = g.value(loss)[0];
        g.backward(loss, grads);
      } catch (const Error& e) {
        if (e.code() == Err::non_finite_value) {
          raise(Err::train_diverged,
                strfmt("loss became non-finite in epoch %lld: %s",
                       (long long)epoch, e.what()));
        }
        throw;
      }
      if (!std::isfinite(loss_value)) {
        raise(Err::train_diverged,
              strfmt("loss became non-finite in epoch %lld", (long long)epoch));
      }
      if (tc.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [name, gt] : grads) {
          for (i64 i = 0; i < gt.numel(); ++i) sq += gt[i] * gt[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > tc.clip_norm) {
          const double s = tc.clip_norm / norm;
          for (auto& [name, gt] : grads) {
            for (i64 i = 0; i < gt.numel(); ++i) gt[i] *= s;
          }
        }
      }
      adam_step(weights, grads, adam, lr);
      loss_sum += loss_value * double(batch);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_mpjpe_mm = loss_sum / double(train_count);
    stats.holdout_mpjpe_mm = std::numeric_limits<double>::quiet_NaN();
    if (holdout > 0) {
      const auto preds =
          kind == ModelKind::mpl
              ? predict_mpl(dataset, holdout_idx, view_subset, cameras,
                            weights, mpl_cfg)
              : predict_fc(dataset, holdout_idx, view_subset, cameras, weights,
                           fc_cfg);
      double acc = 0.0;
      for (size_t i = 0; i < preds.size(); ++i) {
        acc += mpjpe(preds[i],
                     dataset.samples[size_t(holdout_idx[i])].gt_mm);
      }
      stats.holdout_mpjpe_mm = acc / double(holdout);
    }
    stats.wall_seconds = now_seconds() - t_start;
    result.log.push_back(stats);
    if (csv) {
      csv->write_line(strfmt("%lld,%s,%s,%s,%.3f", (long long)epoch,
                             io::fmt_g17(lr).c_str(),
                             io::fmt_g17(stats.train_mpjpe_mm).c_str(),
                             io::fmt_g17(stats.holdout_mpjpe_mm).c_str(),
                             stats.wall_seconds));
    }
    MPL_INFO("epoch %lld/%lld lr %.2g train %.3f mm holdout %.3f mm",
             (long long)epoch, (long long)tc.epochs, lr, stats.train_mpjpe_mm,
             stats.holdout_mpjpe_mm);

    const double metric =
        holdout > 0 ? stats.holdout_mpjpe_mm : stats.train_mpjpe_mm;
    if (metric < best_metric) {
      best_metric = metric;
      result.best_weights = weights;
      result.best_epoch = epoch;
    }
  }
  if (csv) csv->close();
  result.final_weights = std::move(weights);
  if (result.best_epoch == 0) {
    result.best_weights = result.final_weights;
    result.best_epoch = tc.epochs;
  }
  return result;
}

}  // namespace mpl
