#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace stjpda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Broad failure classes; the CLI maps these onto process exit codes.
enum class ErrorCode {
  InvalidArgument,  // bad configuration, malformed input, contract violation
  Io,               // file read/write problems
  Numerical,        // factorization failures, non-finite intermediates
  Combinatorial,    // association event enumeration exceeded its cap
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace stjpda
