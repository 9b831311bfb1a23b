#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace mpl {

using i64 = std::int64_t;
using u64 = std::uint64_t;

enum class Err {
  shape_mismatch,
  non_finite_value,
  not_scalar_loss,
  insufficient_views,
  degenerate_geometry,
  non_positive_depth,
  non_finite_result,
  missing_source,
  empty_mask,
  view_count_mismatch,
  empty_pose_source,
  resample_exhausted,
  io_error,
  version_mismatch,
  checksum_mismatch,
  config_error,
  schema_error,
  train_diverged,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
public:
  Error(Err code, std::string msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + std::move(msg)),
        code_(code) {}
  Err code() const { return code_; }

private:
  Err code_;
};

std::string strfmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

[[noreturn]] inline void raise(Err code, std::string msg) {
  throw Error(code, std::move(msg));
}

// --------------------------------------------------------------------- logging
enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

void set_log_level(LogLevel lv);
LogLevel log_level();
LogLevel parse_log_level(const std::string& s);

void log_msg(LogLevel lv, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

#define MPL_DEBUG(...) ::mpl::log_msg(::mpl::LogLevel::debug, __VA_ARGS__)
#define MPL_INFO(...) ::mpl::log_msg(::mpl::LogLevel::info, __VA_ARGS__)
#define MPL_WARN(...) ::mpl::log_msg(::mpl::LogLevel::warn, __VA_ARGS__)
#define MPL_ERROR(...) ::mpl::log_msg(::mpl::LogLevel::error, __VA_ARGS__)

}  // namespace mpl
