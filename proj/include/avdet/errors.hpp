#pragma once
#include <stdexcept>
#include <string>

namespace avdet {

// Error categories; loader-facing codes are distinct so callers can branch on them.
enum class errc {
  config,
  range,
  shape,
  channel,
  numeric,
  model_state,
  io,
  missing_file,
  malformed_json,
  sample_rate_mismatch,
  bad_annotation,
  stage,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::config: return "config";
    case errc::range: return "range";
    case errc::shape: return "shape";
    case errc::channel: return "channel";
    case errc::numeric: return "numeric";
    case errc::model_state: return "model_state";
    case errc::io: return "io";
    case errc::missing_file: return "missing_file";
    case errc::malformed_json: return "malformed_json";
    case errc::sample_rate_mismatch: return "sample_rate_mismatch";
    case errc::bad_annotation: return "bad_annotation";
    case errc::stage: return "stage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace avdet
