// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace cvgs {

// Runtime contract violation. Thrown by CVGS_CHECK and by explicit validation
// paths; the CLI maps it to a nonzero exit with the message on stderr.
class CheckError : public std::runtime_error {
 public:
  explicit CheckError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const char* file, int line,
                                      const std::string& msg) {
  std::ostringstream os;
  os << "check failed: " << expr << " at " << file << ":" << line;
  if (!msg.empty()) os << " (" << msg << ")";
  throw CheckError(os.str());
}
}  // namespace detail

}  // namespace cvgs

#define CVGS_CHECK(cond)                                                     \
  do {                                                                       \
    if (!(cond)) ::cvgs::detail::check_failed(#cond, __FILE__, __LINE__, ""); \
  } while (0)

#define CVGS_CHECK_MSG(cond, msg)                                  \
  do {                                                             \
    if (!(cond)) {                                                 \
      std::ostringstream os_;                                      \
      os_ << msg;                                                  \
      ::cvgs::detail::check_failed(#cond, __FILE__, __LINE__, os_.str()); \
    }                                                              \
  } while (0)
