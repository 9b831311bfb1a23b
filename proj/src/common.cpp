#include "mpl/common.hpp"

#include <atomic>
#include <cstdarg>
#include <ctime>
#include <vector>

namespace mpl {

const char* err_name(Err e) {
  switch (e) {
    case Err::shape_mismatch: return "ShapeMismatch";
    case Err::non_finite_value: return "NonFiniteValue";
    case Err::not_scalar_loss: return "NotScalarLoss";
    case Err::insufficient_views: return "InsufficientViews";
    case Err::degenerate_geometry: return "DegenerateGeometry";
    case Err::non_positive_depth: return "NonPositiveDepth";
    case Err::non_finite_result: return "NonFiniteResult";
    case Err::missing_source: return "MissingSource";
    case Err::empty_mask: return "EmptyMask";
    case Err::view_count_mismatch: return "ViewCountMismatch";
    case Err::empty_pose_source: return "EmptyPoseSource";
    case Err::resample_exhausted: return "ResampleExhausted";
    case Err::io_error: return "IoError";
    case Err::version_mismatch: return "VersionMismatch";
    case Err::checksum_mismatch: return "ChecksumMismatch";
    case Err::config_error: return "ConfigError";
    case Err::schema_error: return "SchemaError";
    case Err::train_diverged: return "TrainDiverged";
  }
  return "Error";
}

std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list args2;
  va_copy(args2, args);
  const int n = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::string out(n > 0 ? size_t(n) : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
  va_end(args2);
  return out;
}

namespace {
std::atomic<int> g_level{int(LogLevel::info)};
const char* level_tag(LogLevel lv) {
  switch (lv) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
  }
  return "?";
}
}  // namespace

void set_log_level(LogLevel lv) { g_level.store(int(lv)); }
LogLevel log_level() { return LogLevel(g_level.load()); }

LogLevel parse_log_level(const std::string& s) {
  if (s == "debug") return LogLevel::debug;
  if (s == "info") return LogLevel::info;
  if (s == "warn") return LogLevel::warn;
  if (s == "error") return LogLevel::error;
  raise(Err::config_error, strfmt("unknown log level '%s'", s.c_str()));
}

void log_msg(LogLevel lv, const char* fmt, ...) {
  if (int(lv) < g_level.load(std::memory_order_relaxed)) return;
  va_list args;
  va_start(args, fmt);
  va_list args2;
  va_copy(args2, args);
  const int n = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::vector<char> buf(n > 0 ? size_t(n) + 1 : 1);
  if (n > 0) std::vsnprintf(buf.data(), buf.size(), fmt, args2);
  va_end(args2);
  std::fprintf(stderr, "[%s] %s\n", level_tag(lv), buf.data());
}

}  // namespace mpl
