#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "iclner/corpus.hpp"

namespace iclner {

/// Generation-target formats. `at_marker` is the production format; the other two exist for ablations.
enum class OutputFormat { at_marker, bmes, entity_position };

std::string_view to_string(OutputFormat format) noexcept;
OutputFormat parse_output_format(std::string_view text);

struct MarkedText {
  std::string text;
  OutputFormat format = OutputFormat::at_marker;
};

enum class ParseIssueKind {
  surface_not_found,
  unbalanced_marker,
  length_mismatch,
  invalid_tag,
  position_repaired,
  position_missing,
};

std::string_view to_string(ParseIssueKind kind) noexcept;

struct ParseIssue {
  std::string surface;
  ParseIssueKind reason;

  friend bool operator==(const ParseIssue&, const ParseIssue&) = default;
};

/// Result of reading generated text back into spans. Every span is valid against the original sentence.
struct ParseReport {
  std::vector<EntitySpan> spans;
  std::vector<ParseIssue> dropped;   // output pieces that produced no span
  std::vector<ParseIssue> repaired;  // spans recovered after a correction
  bool mutated = false;              // non-marker text differs from the original sentence
};

// `@@...##` markers. Tokens that would collide with the markers are backslash-escaped.
MarkedText encode_atmarker(const Sentence& sentence, const std::vector<EntitySpan>& spans);
ParseReport parse_atmarker(const Sentence& original, std::string_view generated, std::string_view type);

// One tag per token: B-/M-/E-/S- plus O.
MarkedText encode_bmes(const Sentence& sentence, const std::vector<EntitySpan>& spans, std::string_view type);
ParseReport parse_bmes(const Sentence& original, std::string_view generated, std::string_view type);

// `surface (start), surface (start)` or `None`.
MarkedText encode_entpos(const Sentence& sentence, const std::vector<EntitySpan>& spans);
ParseReport parse_entpos(const Sentence& original, std::string_view generated, std::string_view type);

MarkedText encode(OutputFormat format, const Sentence& sentence, const std::vector<EntitySpan>& spans,
                  std::string_view type);
ParseReport parse(OutputFormat format, const Sentence& original, std::string_view generated, std::string_view type);

/// Reduces same-type spans to a non-nested set (outermost kept; among partial overlaps the earlier start).
std::vector<EntitySpan> outermost_spans(std::vector<EntitySpan> spans);

}  // namespace iclner
