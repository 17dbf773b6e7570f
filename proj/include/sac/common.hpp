#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace sac {

// Error categories double as CLI exit codes.
enum class Errc : int {
  config = 2,        // bad option / plan / loss form
  io = 3,            // unreadable or unwritable file
  parse = 4,         // malformed structured-text input
  pairing = 5,       // image without mask or vice versa
  consistency = 6,   // declared size / total mismatch
  shape = 7,         // incompatible array shapes
  degenerate = 8,    // empty reduction axis, 0/0 with no smoothing
  selection = 9,     // plan references a tag absent from the spec
  budget = 10,       // trial count exceeds grid
  search = 11,       // every trial failed
  contamination = 12,// training-split manifest in a zero-shot suite
  schedule = 13,     // step beyond schedule horizon
  numeric = 14,      // non-finite loss during training
  output = 15,       // cannot write results
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::config: return "config";
    case Errc::io: return "io";
    case Errc::parse: return "parse";
    case Errc::pairing: return "pairing";
    case Errc::consistency: return "consistency";
    case Errc::shape: return "shape";
    case Errc::degenerate: return "degenerate";
    case Errc::selection: return "selection";
    case Errc::budget: return "budget";
    case Errc::search: return "search";
    case Errc::contamination: return "contamination";
    case Errc::schedule: return "schedule";
    case Errc::numeric: return "numeric";
    case Errc::output: return "output";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

private:
  Errc code_;
};

inline std::string strf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return buf;
}

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace sac
