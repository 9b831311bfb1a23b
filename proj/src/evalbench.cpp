#include "mpl/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "mpl/rng.hpp"

namespace mpl {

using nlohmann::json;

io::Dataset dataset_from_samples(std::vector<PosePairSample> samples) {
  io::Dataset ds;
  if (samples.empty()) raise(Err::config_error, "no samples");
  ds.joints = samples[0].gt_mm.joint_count();
  ds.views = i64(samples[0].views.size());
  ds.samples.reserve(samples.size());
  for (auto& s : samples) {
    io::DatasetSample d;
    d.id = s.id;
    d.gt_mm = std::move(s.gt_mm);
    d.views = std::move(s.views);
    for (i64 v = 0; v < ds.views; ++v) d.cams.push_back(v);
    ds.samples.push_back(std::move(d));
  }
  return ds;
}

EvalReport evaluate(const EvalMethod& method, const io::Dataset& dataset,
                    const CameraSet& cameras,
                    const std::vector<i64>& view_subset,
                    const KeypointFormat& fmt) {
  if (view_subset.empty()) {
    raise(Err::insufficient_views, "view subset is empty");
  }
  for (i64 v : view_subset) {
    if (v < 0 || v >= dataset.views) {
      raise(Err::view_count_mismatch,
            strfmt("view %lld outside dataset's %lld views", (long long)v,
                   (long long)dataset.views));
    }
    if (v >= i64(cameras.size())) {
      raise(Err::view_count_mismatch,
            strfmt("view %lld has no calibration (camera set has %zu)",
                   (long long)v, cameras.size()));
    }
  }
  if (method.kind == EvalMethod::Kind::triangulation &&
      view_subset.size() < 2) {
    raise(Err::insufficient_views, "triangulation requires >= 2 views");
  }
  if (dataset.joints != fmt.joint_count()) {
    raise(Err::shape_mismatch,
          strfmt("dataset has %lld joints, format has %lld",
                 (long long)dataset.joints, (long long)fmt.joint_count()));
  }
  for (const auto& s : dataset.samples) {
    if (s.gt_mm.joints.empty()) {
      raise(Err::schema_error, "evaluation dataset lacks 3D ground truth");
    }
  }

  const i64 joints = dataset.joints;
  const i64 total = dataset.size();
  const auto star = kp_star_mask(fmt);

  // Predictions.
  std::vector<Skeleton3D> preds;
  std::vector<std::vector<uint8_t>> failed(static_cast<size_t>(total));
  if (method.kind == EvalMethod::Kind::triangulation) {
    preds.reserve(static_cast<size_t>(total));
    for (i64 i = 0; i < total; ++i) {
      const auto& s = dataset.samples[size_t(i)];
      std::vector<std::pair<const CameraCalibration*, const Skeleton2D*>> views;
      for (i64 v : view_subset) {
        views.emplace_back(&cameras[size_t(v)], &s.views[size_t(v)]);
      }
      TriangulatedSkeleton tri = triangulate_skeleton(views);
      preds.push_back(std::move(tri.skeleton));
      failed[size_t(i)] = std::move(tri.failed);
    }
  } else {
    std::vector<i64> indices(static_cast<size_t>(total));
    for (i64 i = 0; i < total; ++i) indices[size_t(i)] = i;
    preds = method.kind == EvalMethod::Kind::mpl
                ? predict_mpl(dataset, indices, view_subset, cameras,
                              *method.weights, *method.mpl_cfg)
                : predict_fc(dataset, indices, view_subset, cameras,
                             *method.weights, *method.fc_cfg);
    for (auto& f : failed) f.assign(static_cast<size_t>(joints), 0);
  }

  // Aggregation.
  EvalReport rep;
  rep.method = method.label;
  rep.views = view_subset;
  rep.samples = total;
  rep.joints.resize(static_cast<size_t>(joints));
  std::vector<double> joint_err_sum(static_cast<size_t>(joints), 0.0);
  std::vector<i64> joint_err_n(static_cast<size_t>(joints), 0);
  std::vector<double> vis_err_sum(static_cast<size_t>(joints), 0.0);
  std::vector<double> invis_err_sum(static_cast<size_t>(joints), 0.0);

  double sample_mean_sum = 0.0;
  i64 sample_mean_n = 0;
  double star_mean_sum = 0.0;
  i64 star_mean_n = 0;

  for (i64 i = 0; i < total; ++i) {
    const auto& s = dataset.samples[size_t(i)];
    double err_sum = 0.0;
    i64 err_n = 0;
    double sstar_sum = 0.0;
    i64 sstar_n = 0;
    bool any_failed = false;
    for (i64 k = 0; k < joints; ++k) {
      if (failed[size_t(i)][size_t(k)]) {
        any_failed = true;
        rep.failed_joints += 1;
        rep.joints[size_t(k)].n_failed += 1;
        continue;
      }
      const double e =
          (preds[size_t(i)].joints[size_t(k)] - s.gt_mm.joints[size_t(k)])
              .norm();
      err_sum += e;
      err_n += 1;
      if (star[size_t(k)]) {
        sstar_sum += e;
        sstar_n += 1;
      }
      joint_err_sum[size_t(k)] += e;
      joint_err_n[size_t(k)] += 1;
      bool vis = true;
      for (i64 v : view_subset) {
        vis = vis && s.views[size_t(v)].visible[size_t(k)];
      }
      if (vis) {
        rep.joints[size_t(k)].n_visible += 1;
        vis_err_sum[size_t(k)] += e;
      } else {
        rep.joints[size_t(k)].n_invisible += 1;
        invis_err_sum[size_t(k)] += e;
      }
    }
    if (any_failed) rep.failed_samples += 1;
    if (err_n > 0) {
      sample_mean_sum += err_sum / double(err_n);
      sample_mean_n += 1;
    }
    if (sstar_n > 0) {
      star_mean_sum += sstar_sum / double(sstar_n);
      star_mean_n += 1;
    }
  }

  rep.mpjpe_all_mm =
      sample_mean_n > 0 ? sample_mean_sum / double(sample_mean_n) : 0.0;
  rep.mpjpe_kpstar_mm =
      star_mean_n > 0 ? star_mean_sum / double(star_mean_n) : 0.0;
  for (i64 k = 0; k < joints; ++k) {
    JointStats& js = rep.joints[size_t(k)];
    js.name = fmt.names[size_t(k)];
    js.mean_err_mm =
        joint_err_n[size_t(k)] > 0
            ? joint_err_sum[size_t(k)] / double(joint_err_n[size_t(k)])
            : 0.0;
    const i64 denom = js.n_visible + js.n_invisible;
    js.visibility = denom > 0 ? double(js.n_visible) / double(denom) : 0.0;
    js.err_visible_mm =
        js.n_visible > 0 ? vis_err_sum[size_t(k)] / double(js.n_visible) : 0.0;
    js.err_invisible_mm = js.n_invisible > 0
                              ? invis_err_sum[size_t(k)] / double(js.n_invisible)
                              : 0.0;
  }
  return rep;
}

static json report_to_json(const EvalReport& rep) {
  json j;
  j["method"] = rep.method;
  j["views"] = rep.views;
  j["samples"] = rep.samples;
  j["mpjpe_all_mm"] = rep.mpjpe_all_mm;
  j["mpjpe_kpstar_mm"] = rep.mpjpe_kpstar_mm;
  j["failed_samples"] = rep.failed_samples;
  j["failed_joints"] = rep.failed_joints;
  json joints = json::array();
  for (const auto& js : rep.joints) {
    joints.push_back({{"name", js.name},
                      {"mean_err_mm", js.mean_err_mm},
                      {"visibility", js.visibility},
                      {"err_visible_mm", js.err_visible_mm},
                      {"err_invisible_mm", js.err_invisible_mm},
                      {"n_visible", js.n_visible},
                      {"n_invisible", js.n_invisible},
                      {"n_failed", js.n_failed}});
  }
  j["joints"] = std::move(joints);
  return j;
}

void save_report_json(const EvalReport& rep, const std::string& path) {
  io::write_file(path, report_to_json(rep).dump(2) + "\n");
}

void save_report_csv(const EvalReport& rep, const std::string& path) {
  // csv-schema v1
  std::string s =
      "joint,mean_err_mm,visibility,err_visible_mm,err_invisible_mm,"
      "n_visible,n_invisible,n_failed\n";
  for (const auto& js : rep.joints) {
    s += strfmt("%s,%s,%s,%s,%s,%lld,%lld,%lld\n", js.name.c_str(),
                io::fmt_g17(js.mean_err_mm).c_str(),
                io::fmt_g17(js.visibility).c_str(),
                io::fmt_g17(js.err_visible_mm).c_str(),
                io::fmt_g17(js.err_invisible_mm).c_str(),
                (long long)js.n_visible, (long long)js.n_invisible,
                (long long)js.n_failed);
  }
  io::write_file(path, s);
}

std::string report_summary_text(const EvalReport& rep) {
  std::string views;
  for (size_t i = 0; i < rep.views.size(); ++i) {
    if (i) views += ",";
    views += std::to_string(rep.views[i]);
  }
  return strfmt(
      "method=%s views=%s samples=%lld\n"
      "  MPJPE (All KP): %.2f mm\n"
      "  MPJPE (KP*):    %.2f mm\n"
      "  failed samples: %lld (%lld joint instances)",
      rep.method.c_str(), views.c_str(), (long long)rep.samples,
      rep.mpjpe_all_mm, rep.mpjpe_kpstar_mm, (long long)rep.failed_samples,
      (long long)rep.failed_joints);
}

VisibilityBreakdown visibility_breakdown(const std::vector<EvalReport>& reps) {
  if (reps.empty()) raise(Err::config_error, "no reports to break down");
  VisibilityBreakdown out;
  for (const auto& r : reps) out.methods.push_back(r.method);
  const auto& first = reps[0];
  for (size_t k = 0; k < first.joints.size(); ++k) {
    const auto& js = first.joints[k];
    if (js.n_visible == 0 || js.n_invisible == 0) {
      out.omitted.push_back(js.name);
      continue;
    }
    VisibilityBreakdown::Row row;
    row.joint = js.name;
    row.visibility = js.visibility;
    for (const auto& r : reps) {
      row.err_visible_mm.push_back(r.joints[k].err_visible_mm);
      row.err_invisible_mm.push_back(r.joints[k].err_invisible_mm);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string breakdown_to_csv(const VisibilityBreakdown& b) {
  std::string s = "joint,visible_pct";
  for (const auto& m : b.methods) {
    s += ",err_visible_mm_" + m + ",err_invisible_mm_" + m;
  }
  s += "\n";
  for (const auto& row : b.rows) {
    s += row.joint + "," + io::fmt_g17(row.visibility * 100.0);
    for (size_t i = 0; i < b.methods.size(); ++i) {
      s += "," + io::fmt_g17(row.err_visible_mm[i]);
      s += "," + io::fmt_g17(row.err_invisible_mm[i]);
    }
    s += "\n";
  }
  return s;
}

std::vector<SweepRow> room_size_sweep(
    const std::vector<std::pair<double, double>>& rooms,
    const GeneratorConfig& base, const SweepRecipe& recipe) {
  if (rooms.size() < 2) {
    raise(Err::config_error, "sweep needs at least 2 room sizes");
  }
  const KeypointFormat fmt = builtin_coco17();
  std::vector<SweepRow> out;
  for (size_t ri = 0; ri < rooms.size(); ++ri) {
    GeneratorConfig train_cfg = base;
    train_cfg.room_width_m = rooms[ri].first;
    train_cfg.room_depth_m = rooms[ri].second;
    train_cfg.num_samples = recipe.train_samples;
    u64 sm1 = base.seed ^ (0x7357ull + u64(ri) * 2);
    train_cfg.seed = splitmix64(sm1);
    GeneratorConfig test_cfg = train_cfg;
    test_cfg.num_samples = recipe.test_samples;
    u64 sm2 = base.seed ^ (0x7357ull + u64(ri) * 2 + 1);
    test_cfg.seed = splitmix64(sm2);

    std::vector<PosePairSample> train_samples, test_samples;
    train_samples.reserve(static_cast<size_t>(train_cfg.num_samples));
    for (i64 i = 0; i < train_cfg.num_samples; ++i) {
      train_samples.push_back(generate_sample(train_cfg, i));
    }
    for (i64 i = 0; i < test_cfg.num_samples; ++i) {
      test_samples.push_back(generate_sample(test_cfg, i));
    }
    io::Dataset train_ds = dataset_from_samples(std::move(train_samples));
    io::Dataset test_ds = dataset_from_samples(std::move(test_samples));

    MplConfig mpl_cfg = recipe.mpl;
    mpl_cfg.views = i64(base.cameras.size());
    TrainResult tr = train(ModelKind::mpl, train_ds, base.cameras, mpl_cfg,
                           FcConfig{}, recipe.train_cfg);

    std::vector<i64> subset(static_cast<size_t>(test_ds.views));
    for (i64 v = 0; v < test_ds.views; ++v) subset[size_t(v)] = v;
    const EvalReport tri = evaluate(EvalMethod::triangulation(), test_ds,
                                    base.cameras, subset, fmt);
    const EvalReport mplr =
        evaluate(EvalMethod::mpl_model(tr.best_weights, mpl_cfg), test_ds,
                 base.cameras, subset, fmt);

    double vis = 0.0;
    for (const auto& js : mplr.joints) vis += js.visibility;
    vis /= double(mplr.joints.size());

    out.push_back({rooms[ri].first, rooms[ri].second, vis, tri.mpjpe_all_mm,
                   mplr.mpjpe_all_mm});
    MPL_INFO("sweep room %gx%g: visibility %.3f tri %.2f mm mpl %.2f mm",
             rooms[ri].first, rooms[ri].second, vis, tri.mpjpe_all_mm,
             mplr.mpjpe_all_mm);
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string s = "room_w,room_d,visibility,mpjpe_triangulation_mm,mpjpe_mpl_mm\n";
  for (const auto& r : rows) {
    s += strfmt("%s,%s,%s,%s,%s\n", io::fmt_g17(r.room_w).c_str(),
                io::fmt_g17(r.room_d).c_str(),
                io::fmt_g17(r.visibility).c_str(),
                io::fmt_g17(r.mpjpe_triangulation).c_str(),
                io::fmt_g17(r.mpjpe_mpl).c_str());
  }
  return s;
}

std::vector<BenchRow> speed_benchmark(const MplConfig& base_cfg,
                                      const ParamSet* ckpt_weights,
                                      i64 ckpt_views,
                                      const std::vector<i64>& views_list,
                                      const std::vector<i64>& batch_list,
                                      i64 warmup, i64 iters) {
  std::vector<BenchRow> out;
  for (i64 nv : views_list) {
    MplConfig cfg = base_cfg;
    cfg.views = nv;
    cfg.validate();
    ParamSet local;
    const ParamSet* weights = nullptr;
    if (ckpt_weights && nv == ckpt_views) {
      weights = ckpt_weights;
    } else {
      local = init_mpl_weights(cfg, 17);
      weights = &local;
    }
    for (i64 batch : batch_list) {
      Rng rng(u64(nv * 1000 + batch));
      Tensor x({batch * nv * cfg.joints, 2});
      for (i64 i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);
      MplModel model{&cfg};
      auto run_once = [&] {
        Graph g(weights);
        const int pred = model.build(g, g.input_view(&x), batch);
        (void)g.value(pred);
      };
      for (i64 i = 0; i < warmup; ++i) run_once();
      const auto t0 = std::chrono::steady_clock::now();
      for (i64 i = 0; i < iters; ++i) run_once();
      const double dt =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      out.push_back({nv, batch, double(batch * iters) / dt});
      MPL_INFO("bench views=%lld batch=%lld: %.1f frames/s", (long long)nv,
               (long long)batch, out.back().fps);
    }
  }
  return out;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::string s = "views,batch,frames_per_second\n";
  for (const auto& r : rows) {
    s += strfmt("%lld,%lld,%s\n", (long long)r.views, (long long)r.batch,
                io::fmt_g17(r.fps).c_str());
  }
  return s;
}

}  // namespace mpl
