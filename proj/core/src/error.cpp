#include "iclner/error.hpp"

namespace iclner {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::malformed_line: return "MalformedLine";
    case ErrorKind::illegal_tag_transition: return "IllegalTagTransition";
    case ErrorKind::unknown_type: return "UnknownType";
    case ErrorKind::span_out_of_range: return "SpanOutOfRange";
    case ErrorKind::duplicate_id: return "DuplicateId";
    case ErrorKind::overlap_in_flat_mode: return "OverlapInFlatMode";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::zero_vector: return "ZeroVector";
    case ErrorKind::empty_query: return "EmptyQuery";
    case ErrorKind::k_too_large: return "KTooLarge";
    case ErrorKind::bad_vector_file: return "BadVectorFile";
    case ErrorKind::overlapping_spans: return "OverlappingSpans";
    case ErrorKind::budget_unsatisfiable: return "BudgetUnsatisfiable";
    case ErrorKind::word_not_in_sentence: return "WordNotInSentence";
    case ErrorKind::timeout: return "Timeout";
    case ErrorKind::rate_limited: return "RateLimited";
    case ErrorKind::auth_failure: return "AuthFailure";
    case ErrorKind::context_overflow: return "ContextOverflow";
    case ErrorKind::unparseable_prompt: return "UnparseablePrompt";
    case ErrorKind::transport: return "TransportError";
    case ErrorKind::unknown_sentence_id: return "UnknownSentenceId";
    case ErrorKind::unsatisfiable: return "Unsatisfiable";
    case ErrorKind::io: return "IoError";
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::timeout:
    case ErrorKind::rate_limited:
    case ErrorKind::auth_failure:
    case ErrorKind::context_overflow:
    case ErrorKind::unparseable_prompt:
    case ErrorKind::transport:
      return ErrorCategory::backend;
    case ErrorKind::invalid_config:
      return ErrorCategory::config;
    case ErrorKind::invalid_argument:
      return ErrorCategory::usage;
    default:
      return ErrorCategory::data;
  }
}

}  // namespace iclner
