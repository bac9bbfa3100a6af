#pragma once

#include <stdexcept>
#include <string>

namespace drma {

/// Broad failure class. The CLI maps `data` to exit code 2 and `numerical`
/// to exit code 3.
enum class error_kind { data, numerical };

class error : public std::runtime_error {
public:
  error(error_kind kind, const std::string& what, std::string stage = {})
      : std::runtime_error(stage.empty() ? what : stage + ": " + what),
        kind_(kind), stage_(std::move(stage)) {}

  error_kind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

private:
  error_kind kind_;
  std::string stage_;
};

inline error data_error(const std::string& what) {
  return error(error_kind::data, what);
}

inline error numerical_error(const std::string& what) {
  return error(error_kind::numerical, what);
}

/// Re-label an error with the pipeline stage it escaped from.
inline error with_stage(const error& e, const std::string& stage) {
  return error(e.kind(), e.what(), stage);
}

} // namespace drma
