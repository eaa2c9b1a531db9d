#ifndef UDIG_ERRORS_HPP
#define UDIG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace udig {

enum class ErrorCode {
  generic,
  io_unwritable,
  io_bad_magic,
  io_truncated_payload,
  io_version_mismatch,
  io_unsupported_dtype,
  shape_mismatch,
  invalid_argument,
  config_error,
  non_finite_loss,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

} // namespace udig

#endif // UDIG_ERRORS_HPP
