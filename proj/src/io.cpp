#include "mpl/io.hpp"

#include <cinttypes>
#include <cstring>

#include <json.hpp>

#include "mpl/synthgen.hpp"

namespace mpl::io {

using nlohmann::json;

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

u64 crc64(const void* data, size_t len, u64 seed) {
  // CRC-64/ECMA-182.
  static const auto table = [] {
    std::array<u64, 256> t{};
    for (u64 i = 0; i < 256; ++i) {
      u64 crc = i << 56;
      for (int b = 0; b < 8; ++b) {
        crc = (crc & 0x8000000000000000ull)
                  ? (crc << 1) ^ 0x42F0E1EBA9EA3693ull
                  : crc << 1;
      }
      t[size_t(i)] = crc;
    }
    return t;
  }();
  u64 crc = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    crc = table[size_t(((crc >> 56) ^ p[i]) & 0xff)] ^ (crc << 8);
  }
  return crc;
}

FileWriter::FileWriter(const std::string& path) : path_(path) {
  f_ = std::fopen(path.c_str(), "wb");
  if (!f_) raise(Err::io_error, "cannot open '" + path + "' for writing");
}

FileWriter::~FileWriter() {
  if (f_) std::fclose(f_);
}

void FileWriter::write_line(const std::string& line) {
  write(line);
  write("\n");
}

void FileWriter::write(const std::string& text) {
  if (!f_) raise(Err::io_error, "writer for '" + path_ + "' already closed");
  if (std::fwrite(text.data(), 1, text.size(), f_) != text.size()) {
    raise(Err::io_error, "short write to '" + path_ + "'");
  }
}

void FileWriter::close() {
  if (f_) {
    if (std::fclose(f_) != 0) raise(Err::io_error, "close failed for '" + path_ + "'");
    f_ = nullptr;
  }
}

std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) raise(Err::io_error, "cannot open '" + path + "'");
  std::string out;
  char buf[1 << 16];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  FileWriter w(path);
  w.write(content);
  w.close();
}

// --------------------------------------------------------------- cameras

namespace {

json parse_json(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    raise(Err::config_error, origin + ": invalid JSON");
  }
  return j;
}

Mat3 mat3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    raise(Err::config_error, what + " must be a 3x3 array");
  }
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const json& row = j[size_t(r)];
    if (!row.is_array() || row.size() != 3) {
      raise(Err::config_error, what + " must be a 3x3 array");
    }
    for (int c = 0; c < 3; ++c) {
      if (!row[size_t(c)].is_number()) {
        raise(Err::config_error, what + " entries must be numbers");
      }
      m(r, c) = row[size_t(c)].get<double>();
    }
  }
  return m;
}

const char* kDistortionKeys[] = {"dist",       "distortion", "dist_coeffs",
                                 "k1",         "k2",         "k3",
                                 "k4",         "k5",         "k6",
                                 "p1",         "p2",         "d"};

CameraSet cameras_from_json(const json& root, const std::string& origin) {
  if (!root.is_object() || !root.contains("cameras")) {
    raise(Err::config_error, origin + ": missing top-level \"cameras\" array");
  }
  const json& arr = root["cameras"];
  if (!arr.is_array() || arr.empty()) {
    raise(Err::config_error, origin + ": \"cameras\" must be a non-empty array");
  }
  CameraSet cams;
  for (size_t i = 0; i < arr.size(); ++i) {
    const json& jc = arr[i];
    if (!jc.is_object()) {
      raise(Err::config_error, strfmt("%s: camera %zu is not an object",
                                      origin.c_str(), i));
    }
    for (auto it = jc.begin(); it != jc.end(); ++it) {
      const std::string& key = it.key();
      for (const char* dk : kDistortionKeys) {
        if (key == dk) {
          raise(Err::config_error,
                strfmt("%s: camera %zu carries distortion field \"%s\"; lens "
                       "distortion is unsupported, undistort upstream",
                       origin.c_str(), i, key.c_str()));
        }
      }
      if (key != "name" && key != "K" && key != "R" && key != "t" &&
          key != "width" && key != "height") {
        raise(Err::config_error, strfmt("%s: camera %zu has unknown field \"%s\"",
                                        origin.c_str(), i, key.c_str()));
      }
    }
    CameraCalibration cam;
    cam.name = jc.value("name", strfmt("cam%zu", i));
    if (!jc.contains("K") || !jc.contains("R") || !jc.contains("t") ||
        !jc.contains("width") || !jc.contains("height")) {
      raise(Err::config_error,
            strfmt("%s: camera %zu must carry K, R, t, width, height",
                   origin.c_str(), i));
    }
    cam.intrinsics = mat3_from_json(jc["K"], strfmt("camera %zu K", i));
    cam.rotation = mat3_from_json(jc["R"], strfmt("camera %zu R", i));
    const json& jt = jc["t"];
    if (!jt.is_array() || jt.size() != 3) {
      raise(Err::config_error, strfmt("%s: camera %zu t must have 3 entries",
                                      origin.c_str(), i));
    }
    cam.translation = {jt[0].get<double>(), jt[1].get<double>(),
                       jt[2].get<double>()};
    cam.width = jc["width"].get<i64>();
    cam.height = jc["height"].get<i64>();
    cam.validate();
    cams.push_back(std::move(cam));
  }
  return cams;
}

json cameras_to_json(const CameraSet& cams) {
  json arr = json::array();
  for (const auto& cam : cams) {
    json jc;
    jc["name"] = cam.name;
    jc["K"] = {{cam.intrinsics(0, 0), cam.intrinsics(0, 1), cam.intrinsics(0, 2)},
               {cam.intrinsics(1, 0), cam.intrinsics(1, 1), cam.intrinsics(1, 2)},
               {cam.intrinsics(2, 0), cam.intrinsics(2, 1), cam.intrinsics(2, 2)}};
    jc["R"] = {{cam.rotation(0, 0), cam.rotation(0, 1), cam.rotation(0, 2)},
               {cam.rotation(1, 0), cam.rotation(1, 1), cam.rotation(1, 2)},
               {cam.rotation(2, 0), cam.rotation(2, 1), cam.rotation(2, 2)}};
    jc["t"] = {cam.translation.x, cam.translation.y, cam.translation.z};
    jc["width"] = cam.width;
    jc["height"] = cam.height;
    arr.push_back(std::move(jc));
  }
  return json{{"cameras", std::move(arr)}};
}

}  // namespace

CameraSet parse_cameras_json(const std::string& text,
                             const std::string& origin) {
  return cameras_from_json(parse_json(text, origin), origin);
}

CameraSet load_cameras(const std::string& path) {
  return parse_cameras_json(read_file(path), path);
}

void save_cameras(const CameraSet& cams, const std::string& path) {
  write_file(path, cameras_to_json(cams).dump(2) + "\n");
}

// ------------------------------------------------------------ noise model

NoiseModel load_noise(const std::string& preset_or_path) {
  if (preset_or_path == "default") return NoiseModel{};
  if (preset_or_path == "none" || preset_or_path == "zero") {
    return NoiseModel::none();
  }
  const json j = parse_json(read_file(preset_or_path), preset_or_path);
  if (!j.is_object()) {
    raise(Err::config_error, preset_or_path + ": noise file must be an object");
  }
  NoiseModel nm;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "sigma_px") nm.sigma_px = it->get<double>();
    else if (key == "outlier_prob") nm.outlier_prob = it->get<double>();
    else if (key == "outlier_sigma_px") nm.outlier_sigma_px = it->get<double>();
    else if (key == "swap_prob") nm.swap_prob = it->get<double>();
    else if (key == "oof_border_sigma_px") nm.oof_border_sigma_px = it->get<double>();
    else {
      raise(Err::config_error,
            strfmt("%s: unknown noise field \"%s\"", preset_or_path.c_str(),
                   key.c_str()));
    }
  }
  nm.validate();
  return nm;
}

// ---------------------------------------------------------------- formats

KeypointFormat load_format(const std::string& path) {
  const json j = parse_json(read_file(path), path);
  KeypointFormat fmt;
  if (!j.is_object() || !j.contains("names")) {
    raise(Err::config_error, path + ": format file must carry \"names\"");
  }
  fmt.names = j["names"].get<std::vector<std::string>>();
  if (j.contains("composites")) {
    for (const json& jc : j["composites"]) {
      fmt.composites.push_back(
          {jc.at("name").get<std::string>(),
           jc.at("sources").get<std::vector<std::string>>()});
    }
  }
  if (j.contains("kp_star")) fmt.kp_star = j["kp_star"].get<std::vector<i64>>();
  fmt.validate();
  return fmt;
}

// ----------------------------------------------------------------- dataset

std::string sample_to_jsonl(const PosePairSample& sample) {
  std::string s;
  s.reserve(4096);
  s += "{\"id\":";
  s += std::to_string(sample.id);
  s += ",\"gt3d_mm\":[";
  for (size_t k = 0; k < sample.gt_mm.joints.size(); ++k) {
    const Vec3& j = sample.gt_mm.joints[k];
    if (k) s += ',';
    s += '[';
    s += fmt_g17(j.x);
    s += ',';
    s += fmt_g17(j.y);
    s += ',';
    s += fmt_g17(j.z);
    s += ']';
  }
  s += "],\"views\":[";
  for (size_t v = 0; v < sample.views.size(); ++v) {
    const Skeleton2D& view = sample.views[v];
    if (v) s += ',';
    s += "{\"cam\":";
    s += std::to_string(v);
    s += ",\"kp2d_px\":[";
    for (size_t k = 0; k < view.joints.size(); ++k) {
      if (k) s += ',';
      s += '[';
      s += fmt_g17(view.joints[k].u);
      s += ',';
      s += fmt_g17(view.joints[k].v);
      s += ']';
    }
    s += "],\"vis\":[";
    for (size_t k = 0; k < view.visible.size(); ++k) {
      if (k) s += ',';
      s += view.visible[k] ? "true" : "false";
    }
    s += "]}";
  }
  s += "]}";
  return s;
}

Dataset load_dataset(const std::string& path, bool need_gt) {
  const std::string text = read_file(path);
  Dataset ds;
  size_t pos = 0;
  i64 line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;

    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      raise(Err::schema_error,
            strfmt("%s: line %lld is not a JSON object", path.c_str(),
                   (long long)line_no));
    }
    DatasetSample s;
    s.id = j.value("id", line_no - 1);
    if (j.contains("gt3d_mm")) {
      for (const json& jj : j["gt3d_mm"]) {
        if (!jj.is_array() || jj.size() != 3) {
          raise(Err::schema_error,
                strfmt("%s: line %lld gt3d_mm entries must be [x,y,z]",
                       path.c_str(), (long long)line_no));
        }
        s.gt_mm.joints.push_back(
            {jj[0].get<double>(), jj[1].get<double>(), jj[2].get<double>()});
      }
    } else if (need_gt) {
      raise(Err::schema_error,
            strfmt("%s: line %lld lacks gt3d_mm", path.c_str(),
                   (long long)line_no));
    }
    if (!j.contains("views") || !j["views"].is_array() || j["views"].empty()) {
      raise(Err::schema_error, strfmt("%s: line %lld lacks views", path.c_str(),
                                      (long long)line_no));
    }
    for (const json& jv : j["views"]) {
      Skeleton2D view;
      s.cams.push_back(jv.value("cam", i64(s.cams.size())));
      if (!jv.contains("kp2d_px")) {
        raise(Err::schema_error,
              strfmt("%s: line %lld view lacks kp2d_px", path.c_str(),
                     (long long)line_no));
      }
      for (const json& jj : jv["kp2d_px"]) {
        if (!jj.is_array() || jj.size() != 2) {
          raise(Err::schema_error,
                strfmt("%s: line %lld kp2d_px entries must be [u,v]",
                       path.c_str(), (long long)line_no));
        }
        view.joints.push_back({jj[0].get<double>(), jj[1].get<double>()});
      }
      if (jv.contains("vis")) {
        for (const json& jj : jv["vis"]) view.visible.push_back(jj.get<bool>());
        if (view.visible.size() != view.joints.size()) {
          raise(Err::schema_error,
                strfmt("%s: line %lld vis length differs from kp2d_px",
                       path.c_str(), (long long)line_no));
        }
      } else {
        view.visible.assign(view.joints.size(), 1);
      }
      s.views.push_back(std::move(view));
    }

    const i64 joints = s.views[0].joint_count();
    for (const auto& v : s.views) {
      if (v.joint_count() != joints) {
        raise(Err::schema_error,
              strfmt("%s: line %lld has views with differing joint counts",
                     path.c_str(), (long long)line_no));
      }
    }
    if (!s.gt_mm.joints.empty() && s.gt_mm.joint_count() != joints) {
      raise(Err::schema_error,
            strfmt("%s: line %lld gt3d_mm joint count differs from views",
                   path.c_str(), (long long)line_no));
    }
    if (ds.samples.empty()) {
      ds.joints = joints;
      ds.views = i64(s.views.size());
    } else if (joints != ds.joints || i64(s.views.size()) != ds.views) {
      raise(Err::schema_error,
            strfmt("%s: line %lld changes joint/view counts", path.c_str(),
                   (long long)line_no));
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    raise(Err::schema_error, path + ": dataset is empty");
  }
  return ds;
}

std::string summary_path_for(const std::string& dataset_path) {
  return dataset_path + ".summary.json";
}

void save_summary(const GeneratorConfig& cfg, const DatasetSummary& summary,
                  const std::string& dataset_path) {
  json j;
  j["num_samples"] = summary.num_samples;
  j["joints"] = summary.joints;
  j["views"] = summary.views;
  j["joint_visibility"] = summary.joint_visibility;
  j["mean_visibility"] = summary.mean_visibility;
  json jg;
  jg["room"] = {cfg.room_width_m, cfg.room_depth_m};
  jg["scene_center"] = {cfg.scene_center_x_m, cfg.scene_center_y_m};
  jg["seed"] = cfg.seed;
  jg["yaw_range"] = cfg.yaw_range;
  jg["jitter_sigma_mm"] = cfg.jitter_sigma_mm;
  jg["noise"] = {{"sigma_px", cfg.noise.sigma_px},
                 {"outlier_prob", cfg.noise.outlier_prob},
                 {"outlier_sigma_px", cfg.noise.outlier_sigma_px},
                 {"swap_prob", cfg.noise.swap_prob},
                 {"oof_border_sigma_px", cfg.noise.oof_border_sigma_px}};
  j["generator"] = std::move(jg);
  j["cameras"] = cameras_to_json(cfg.cameras)["cameras"];
  write_file(summary_path_for(dataset_path), j.dump(2) + "\n");
}

CameraSet cameras_for_dataset(const std::string& dataset_path) {
  const std::string spath = summary_path_for(dataset_path);
  const json j = parse_json(read_file(spath), spath);
  return cameras_from_json(j, spath);
}

void save_poses3d(const std::vector<std::pair<i64, Skeleton3D>>& poses,
                  const std::string& path) {
  FileWriter out(path);
  for (const auto& [id, skel] : poses) {
    std::string s = "{\"id\":" + std::to_string(id) + ",\"pose3d_mm\":[";
    for (size_t k = 0; k < skel.joints.size(); ++k) {
      const Vec3& jt = skel.joints[k];
      if (k) s += ',';
      s += '[';
      s += fmt_g17(jt.x);
      s += ',';
      s += fmt_g17(jt.y);
      s += ',';
      s += fmt_g17(jt.z);
      s += ']';
    }
    s += "]}";
    out.write_line(s);
  }
  out.close();
}

std::vector<Skeleton3D> load_poses3d(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<Skeleton3D> out;
  size_t pos = 0;
  i64 line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("pose3d_mm")) {
      raise(Err::schema_error,
            strfmt("%s: line %lld lacks pose3d_mm", path.c_str(),
                   (long long)line_no));
    }
    Skeleton3D skel;
    for (const json& jj : j["pose3d_mm"]) {
      skel.joints.push_back(
          {jj[0].get<double>(), jj[1].get<double>(), jj[2].get<double>()});
    }
    out.push_back(std::move(skel));
  }
  return out;
}

// --------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'M', 'P', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

json mpl_config_to_json(const MplConfig& c) {
  return {{"joints", c.joints},   {"views", c.views},
          {"dim", c.dim},         {"layers", c.layers},
          {"heads", c.heads},     {"mlp_ratio", c.mlp_ratio},
          {"dropout", c.dropout},
          {"scene_center", {c.scene_center.x, c.scene_center.y, c.scene_center.z}}};
}

MplConfig mpl_config_from_json(const json& j) {
  MplConfig c;
  c.joints = j.at("joints").get<i64>();
  c.views = j.at("views").get<i64>();
  c.dim = j.at("dim").get<i64>();
  c.layers = j.at("layers").get<i64>();
  c.heads = j.at("heads").get<i64>();
  c.mlp_ratio = j.at("mlp_ratio").get<i64>();
  c.dropout = j.at("dropout").get<double>();
  const auto sc = j.at("scene_center");
  c.scene_center = {sc[0].get<double>(), sc[1].get<double>(),
                    sc[2].get<double>()};
  return c;
}

json fc_config_to_json(const FcConfig& c) {
  return {{"joints", c.joints},
          {"views", c.views},
          {"hidden", c.hidden},
          {"scene_center", {c.scene_center.x, c.scene_center.y, c.scene_center.z}}};
}

FcConfig fc_config_from_json(const json& j) {
  FcConfig c;
  c.joints = j.at("joints").get<i64>();
  c.views = j.at("views").get<i64>();
  c.hidden = j.at("hidden").get<std::vector<i64>>();
  const auto sc = j.at("scene_center");
  c.scene_center = {sc[0].get<double>(), sc[1].get<double>(),
                    sc[2].get<double>()};
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["model"] = ckpt.model_kind;
  header["seed"] = ckpt.seed;
  if (!ckpt.train_config_json.empty()) {
    json jt = json::parse(ckpt.train_config_json, nullptr, false);
    if (!jt.is_discarded()) header["train"] = std::move(jt);
  }
  if (ckpt.model_kind == "mpl") {
    header["mpl"] = mpl_config_to_json(ckpt.mpl);
  } else if (ckpt.model_kind == "fc") {
    header["fc"] = fc_config_to_json(ckpt.fc);
  } else {
    raise(Err::config_error, "checkpoint model kind must be mpl or fc");
  }
  json params = json::array();
  for (const auto& [name, t] : ckpt.weights) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
  }
  header["params"] = std::move(params);
  const std::string htext = header.dump();

  std::string blob;
  blob.reserve(htext.size() + size_t(ckpt.weights.total_elements()) * 8);
  blob += htext;
  for (const auto& [name, t] : ckpt.weights) {
    blob.append(reinterpret_cast<const char*>(t.data()),
                size_t(t.numel()) * sizeof(double));
  }
  const u64 crc = crc64(blob.data(), blob.size());

  FileWriter out(path);
  out.write(std::string(kMagic, sizeof kMagic));
  uint32_t version = kVersion;
  u64 hlen = htext.size();
  out.write(std::string(reinterpret_cast<const char*>(&version), 4));
  out.write(std::string(reinterpret_cast<const char*>(&hlen), 8));
  out.write(blob);
  out.write(std::string(reinterpret_cast<const char*>(&crc), 8));
  out.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string raw = read_file(path);
  if (raw.size() < sizeof(kMagic) + 12 ||
      std::memcmp(raw.data(), kMagic, sizeof kMagic) != 0) {
    raise(Err::io_error, path + ": not a checkpoint file");
  }
  uint32_t version;
  std::memcpy(&version, raw.data() + 8, 4);
  if (version != kVersion) {
    raise(Err::version_mismatch,
          strfmt("%s: checkpoint version %u, expected %u", path.c_str(),
                 version, kVersion));
  }
  u64 hlen;
  std::memcpy(&hlen, raw.data() + 12, 8);
  const size_t blob_off = 20;
  if (raw.size() < blob_off + hlen + 8) {
    raise(Err::checksum_mismatch, path + ": file truncated");
  }
  const size_t blob_len = raw.size() - blob_off - 8;
  u64 stored_crc;
  std::memcpy(&stored_crc, raw.data() + raw.size() - 8, 8);
  if (crc64(raw.data() + blob_off, blob_len) != stored_crc) {
    raise(Err::checksum_mismatch, path + ": payload checksum mismatch");
  }

  json header = json::parse(raw.substr(blob_off, hlen), nullptr, false);
  if (header.is_discarded()) {
    raise(Err::io_error, path + ": corrupt checkpoint header");
  }
  Checkpoint ckpt;
  ckpt.model_kind = header.at("model").get<std::string>();
  ckpt.seed = header.at("seed").get<u64>();
  if (header.contains("train")) ckpt.train_config_json = header["train"].dump();
  if (ckpt.model_kind == "mpl") {
    ckpt.mpl = mpl_config_from_json(header.at("mpl"));
  } else if (ckpt.model_kind == "fc") {
    ckpt.fc = fc_config_from_json(header.at("fc"));
  } else {
    raise(Err::io_error, path + ": unknown model kind");
  }

  size_t off = blob_off + hlen;
  for (const json& jp : header.at("params")) {
    const std::string name = jp.at("name").get<std::string>();
    const auto shape = jp.at("shape").get<std::vector<i64>>();
    Tensor t(shape);
    const size_t bytes = size_t(t.numel()) * sizeof(double);
    if (off + bytes > raw.size() - 8) {
      raise(Err::checksum_mismatch, path + ": parameter payload truncated");
    }
    std::memcpy(t.data(), raw.data() + off, bytes);
    off += bytes;
    ckpt.weights.add(name, std::move(t));
  }
  if (off != raw.size() - 8) {
    raise(Err::checksum_mismatch, path + ": trailing bytes in payload");
  }
  return ckpt;
}

}  // namespace mpl::io
