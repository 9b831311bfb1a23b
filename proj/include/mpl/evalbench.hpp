#pragma once

#include <string>
#include <vector>

#include "mpl/io.hpp"
#include "mpl/skeleton.hpp"
#include "mpl/synthgen.hpp"
#include "mpl/trainer.hpp"

namespace mpl {

struct JointStats {
  std::string name;
  double mean_err_mm = 0.0;     // over non-failed instances
  double visibility = 0.0;      // fraction visible in every evaluated view
  double err_visible_mm = 0.0;
  double err_invisible_mm = 0.0;
  i64 n_visible = 0;
  i64 n_invisible = 0;
  i64 n_failed = 0;
};

struct EvalReport {
  std::string method;
  std::vector<i64> views;
  i64 samples = 0;
  double mpjpe_all_mm = 0.0;     // mean of per-sample means
  double mpjpe_kpstar_mm = 0.0;
  std::vector<JointStats> joints;
  i64 failed_samples = 0;  // samples with at least one failed joint
  i64 failed_joints = 0;   // failed joint instances (excluded from means)
};

struct EvalMethod {
  enum class Kind { triangulation, mpl, fc };
  Kind kind = Kind::triangulation;
  std::string label = "triangulation";
  const ParamSet* weights = nullptr;
  const MplConfig* mpl_cfg = nullptr;
  const FcConfig* fc_cfg = nullptr;

  static EvalMethod triangulation() { return {}; }
  static EvalMethod mpl_model(const ParamSet& w, const MplConfig& c) {
    return {Kind::mpl, "mpl", &w, &c, nullptr};
  }
  static EvalMethod fc_model(const ParamSet& w, const FcConfig& c) {
    return {Kind::fc, "fc", &w, nullptr, &c};
  }
};

// Per-sample predictions over the chosen view subset, aggregated per joint
// and overall. A joint counts as visible for a sample iff its flag is set in
// every evaluated view. Per-joint triangulation failures are excluded from
// the means and tallied in failed_joints/failed_samples.
EvalReport evaluate(const EvalMethod& method, const io::Dataset& dataset,
                    const CameraSet& cameras,
                    const std::vector<i64>& view_subset,
                    const KeypointFormat& fmt);

void save_report_json(const EvalReport& rep, const std::string& path);
void save_report_csv(const EvalReport& rep, const std::string& path);
std::string report_summary_text(const EvalReport& rep);

// Per-joint visible/invisible error table across methods. Joints without
// both populations in the first report are omitted and listed in `omitted`.
struct VisibilityBreakdown {
  struct Row {
    std::string joint;
    double visibility = 0.0;
    std::vector<double> err_visible_mm;    // one entry per report
    std::vector<double> err_invisible_mm;
  };
  std::vector<std::string> methods;
  std::vector<Row> rows;
  std::vector<std::string> omitted;
};

VisibilityBreakdown visibility_breakdown(const std::vector<EvalReport>& reps);
std::string breakdown_to_csv(const VisibilityBreakdown& b);

// Room-size sweep: per room size, generate train/test sets, train the lifter,
// and compare against triangulation on the identical test set.
struct SweepRecipe {
  i64 train_samples = 4000;
  i64 test_samples = 800;
  MplConfig mpl;
  TrainConfig train_cfg;
};

struct SweepRow {
  double room_w = 0.0, room_d = 0.0;
  double visibility = 0.0;         // mean all-view visibility on the test set
  double mpjpe_triangulation = 0.0;
  double mpjpe_mpl = 0.0;
};

std::vector<SweepRow> room_size_sweep(
    const std::vector<std::pair<double, double>>& rooms,
    const GeneratorConfig& base, const SweepRecipe& recipe);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Inference speed in frames/second; a frame is one person across all views.
struct BenchRow {
  i64 views = 0;
  i64 batch = 0;
  double fps = 0.0;
};

std::vector<BenchRow> speed_benchmark(const MplConfig& base_cfg,
                                      const ParamSet* ckpt_weights,
                                      i64 ckpt_views,
                                      const std::vector<i64>& views_list,
                                      const std::vector<i64>& batch_list,
                                      i64 warmup, i64 iters);
std::string bench_to_csv(const std::vector<BenchRow>& rows);

// In-memory dataset assembly (sweep and tests).
io::Dataset dataset_from_samples(std::vector<PosePairSample> samples);

}  // namespace mpl
