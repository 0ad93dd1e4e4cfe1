#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iclner {

/// Coarse failure class; the CLI maps each one to a distinct exit code.
enum class ErrorCategory { usage, config, data, backend };

enum class ErrorKind {
  // corpus
  malformed_line,
  illegal_tag_transition,
  unknown_type,
  span_out_of_range,
  duplicate_id,
  overlap_in_flat_mode,
  // embedstore
  dimension_mismatch,
  zero_vector,
  empty_query,
  k_too_large,
  bad_vector_file,
  // markup
  overlapping_spans,
  // promptkit
  budget_unsatisfiable,
  word_not_in_sentence,
  // llmgate
  timeout,
  rate_limited,
  auth_failure,
  context_overflow,
  unparseable_prompt,
  transport,
  // evalkit
  unknown_sentence_id,
  unsatisfiable,
  // shared
  io,
  invalid_argument,
  invalid_config,
};

std::string_view to_string(ErrorKind kind) noexcept;
ErrorCategory category_of(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace iclner
