#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mpl/geometry.hpp"
#include "mpl/model.hpp"
#include "mpl/skeleton.hpp"
#include "mpl/tensor.hpp"

namespace mpl {

struct PosePairSample;
struct NoiseModel;
struct GeneratorConfig;
struct DatasetSummary;
struct TrainConfig;

namespace io {

// ------------------------------------------------------------- calibration
// JSON contract: { "cameras": [ { "name", "K": 3x3, "R": 3x3,
// "t": [tx,ty,tz] (meters, world-to-camera, x_cam = R x_world + t),
// "width", "height" } ] }. Files carrying distortion fields are rejected.
CameraSet load_cameras(const std::string& path);
CameraSet parse_cameras_json(const std::string& text, const std::string& origin);
void save_cameras(const CameraSet& cams, const std::string& path);

// ------------------------------------------------------------ noise model
// Accepts preset names ("default", "none") or a JSON file path.
NoiseModel load_noise(const std::string& preset_or_path);

// ---------------------------------------------------------------- formats
KeypointFormat load_format(const std::string& path);

// ---------------------------------------------------------------- dataset
// JSONL, one object per line:
// { "id": int, "gt3d_mm": [[x,y,z] x K],
//   "views": [ { "cam": int, "kp2d_px": [[u,v] x K], "vis": [bool x K] } ] }
// Numbers carry 17 significant digits so values round-trip exactly.
struct DatasetSample {
  i64 id = 0;
  Skeleton3D gt_mm;               // empty when the file has no ground truth
  std::vector<Skeleton2D> views;
  std::vector<i64> cams;
};

struct Dataset {
  std::vector<DatasetSample> samples;
  i64 joints = 0;
  i64 views = 0;

  i64 size() const { return i64(samples.size()); }
};

std::string sample_to_jsonl(const PosePairSample& sample);
// `need_gt`: SchemaError (with line number) when a line lacks gt3d_mm.
Dataset load_dataset(const std::string& path, bool need_gt = true);

// Summary sidecar (written next to a generated dataset as
// "<dataset>.summary.json"): stats plus the generator configuration, which
// downstream commands reuse for camera calibration.
void save_summary(const GeneratorConfig& cfg, const DatasetSummary& summary,
                  const std::string& dataset_path);
std::string summary_path_for(const std::string& dataset_path);
CameraSet cameras_for_dataset(const std::string& dataset_path);

// 3D pose JSONL: {"id": int, "pose3d_mm": [[x,y,z] x K]}.
void save_poses3d(const std::vector<std::pair<i64, Skeleton3D>>& poses,
                  const std::string& path);
std::vector<Skeleton3D> load_poses3d(const std::string& path);

// -------------------------------------------------------------- checkpoint
// Binary container: magic, version, JSON header (model kind, configs, seed,
// named array directory), little-endian f64 payload, CRC-64 trailer.
struct Checkpoint {
  std::string model_kind;  // "mpl" | "fc"
  MplConfig mpl;
  FcConfig fc;
  u64 seed = 0;
  std::string train_config_json;  // schedule the weights were trained with
  ParamSet weights;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ------------------------------------------------------------------- misc
class FileWriter {
public:
  explicit FileWriter(const std::string& path);
  ~FileWriter();
  void write_line(const std::string& line);
  void write(const std::string& text);
  void close();

private:
  std::FILE* f_ = nullptr;
  std::string path_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// %.17g formatting used for every number in text outputs.
std::string fmt_g17(double v);

u64 crc64(const void* data, size_t len, u64 seed = 0);

}  // namespace io
}  // namespace mpl
