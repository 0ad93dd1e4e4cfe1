#include "iclner/markup.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "iclner/error.hpp"
#include "iclner/text.hpp"

namespace iclner {

std::string_view to_string(OutputFormat format) noexcept {
  switch (format) {
    case OutputFormat::at_marker: return "atmarker";
    case OutputFormat::bmes: return "bmes";
    case OutputFormat::entity_position: return "entpos";
  }
  return "atmarker";
}

OutputFormat parse_output_format(std::string_view text) {
  const auto t = to_lower(text);
  if (t == "atmarker" || t == "at_marker" || t == "@@##") return OutputFormat::at_marker;
  if (t == "bmes") return OutputFormat::bmes;
  if (t == "entpos" || t == "entity_position" || t == "entity+position") return OutputFormat::entity_position;
  throw Error(ErrorKind::invalid_argument, "unknown output format '" + std::string(text) + "'");
}

std::string_view to_string(ParseIssueKind kind) noexcept {
  switch (kind) {
    case ParseIssueKind::surface_not_found: return "SurfaceNotFound";
    case ParseIssueKind::unbalanced_marker: return "UnbalancedMarker";
    case ParseIssueKind::length_mismatch: return "LengthMismatch";
    case ParseIssueKind::invalid_tag: return "InvalidTag";
    case ParseIssueKind::position_repaired: return "PositionRepaired";
    case ParseIssueKind::position_missing: return "PositionMissing";
  }
  return "Unknown";
}

namespace {

std::vector<EntitySpan> sorted_disjoint(std::vector<EntitySpan> spans, const Sentence& sentence) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return std::tie(a.start, a.end) < std::tie(b.start, b.end); });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start > spans[i].end || spans[i].end >= sentence.size()) {
      throw Error(ErrorKind::span_out_of_range, "span outside sentence " + std::to_string(sentence.id));
    }
    if (i && spans[i - 1].end >= spans[i].start) {
      throw Error(ErrorKind::overlapping_spans, "spans [" + std::to_string(spans[i - 1].start) + ", " +
                                                    std::to_string(spans[i - 1].end) + "] and [" +
                                                    std::to_string(spans[i].start) + ", " +
                                                    std::to_string(spans[i].end) + "] overlap");
    }
  }
  return spans;
}

// A token needs escaping if, copied verbatim, it could be read as (or merge into) a marker.
bool collides_with_markers(std::string_view tok) {
  return tok.find("@@") != std::string_view::npos || tok.find("##") != std::string_view::npos ||
         tok.find('\\') != std::string_view::npos || (!tok.empty() && tok.back() == '#');
}

std::string escape_token(const std::string& tok) {
  if (!collides_with_markers(tok)) return tok;
  std::string out;
  for (char c : tok) {
    if (c == '@' || c == '#' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

bool tokens_match_at(const std::vector<std::string>& tokens, std::size_t at, const std::vector<std::string>& needle) {
  if (needle.empty() || at + needle.size() > tokens.size()) return false;
  return std::equal(needle.begin(), needle.end(), tokens.begin() + static_cast<std::ptrdiff_t>(at));
}

std::optional<std::size_t> find_tokens(const std::vector<std::string>& tokens, const std::vector<std::string>& needle,
                                       std::size_t from) {
  if (needle.empty()) return std::nullopt;
  for (std::size_t i = from; i + needle.size() <= tokens.size(); ++i) {
    if (tokens_match_at(tokens, i, needle)) return i;
  }
  return std::nullopt;
}

void dedupe(std::vector<EntitySpan>& spans) {
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
}

struct Segment {
  std::size_t begin;  // byte offsets into the de-marked text
  std::size_t end;
};

struct MarkerScan {
  std::string plain;              // text with markers removed and escapes resolved
  std::vector<Segment> segments;  // balanced segments before the first orphan marker
  std::optional<std::string> orphan_tail;
};

MarkerScan scan_markers(std::string_view g) {
  MarkerScan scan;
  bool in_segment = false;
  bool stopped = false;
  std::size_t open_plain = 0;
  std::size_t open_raw = 0;

  for (std::size_t i = 0; i < g.size();) {
    if (g[i] == '\\') {
      if (i + 1 < g.size()) {
        scan.plain += g[i + 1];
        i += 2;
      } else {
        scan.plain += '\\';
        ++i;
      }
      continue;
    }
    const bool at_open = g.compare(i, 2, "@@") == 0;
    const bool at_close = g.compare(i, 2, "##") == 0;
    if (!at_open && !at_close) {
      scan.plain += g[i++];
      continue;
    }
    if (!stopped) {
      if (at_open && !in_segment) {
        in_segment = true;
        open_plain = scan.plain.size();
        open_raw = i;
      } else if (at_close && in_segment) {
        scan.segments.push_back({open_plain, scan.plain.size()});
        in_segment = false;
      } else {
        // "##" with nothing open, or "@@" inside an open segment.
        const std::size_t from = in_segment ? open_raw : i;
        scan.orphan_tail = std::string(g.substr(from));
        stopped = true;
        in_segment = false;
      }
    }
    i += 2;
  }
  if (in_segment && !stopped) scan.orphan_tail = std::string(g.substr(open_raw));
  return scan;
}

// Index of the plain-text token that begins at `offset`, or nullopt when `offset` is mid-token.
std::optional<std::size_t> token_index_at(std::string_view plain, std::size_t offset) {
  std::size_t pos = offset;
  while (pos < plain.size() && std::isspace(static_cast<unsigned char>(plain[pos]))) ++pos;
  if (offset > 0 && offset <= plain.size() && !std::isspace(static_cast<unsigned char>(plain[offset - 1])) &&
      pos == offset) {
    return std::nullopt;
  }
  return split_whitespace(plain.substr(0, pos)).size();
}

}  // namespace

MarkedText encode_atmarker(const Sentence& sentence, const std::vector<EntitySpan>& spans) {
  const auto ordered = sorted_disjoint(spans, sentence);
  std::vector<bool> opens(sentence.size(), false);
  std::vector<bool> closes(sentence.size(), false);
  for (const auto& s : ordered) {
    opens[s.start] = true;
    closes[s.end] = true;
  }
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    if (opens[i]) out += "@@";
    out += escape_token(sentence.tokens[i]);
    if (closes[i]) out += "##";
  }
  return {std::move(out), OutputFormat::at_marker};
}

ParseReport parse_atmarker(const Sentence& original, std::string_view generated, std::string_view type) {
  ParseReport report;
  const auto scan = scan_markers(generated);
  const auto plain_tokens = split_whitespace(scan.plain);
  report.mutated = plain_tokens != original.tokens;

  std::size_t cursor = 0;
  for (const auto& seg : scan.segments) {
    const std::string_view content = std::string_view(scan.plain).substr(seg.begin, seg.end - seg.begin);
    const auto needle = split_whitespace(content);
    if (needle.empty()) {
      report.dropped.push_back({std::string(content), ParseIssueKind::surface_not_found});
      continue;
    }
    std::optional<std::size_t> at;
    // Prefer the position the marker actually occupies; fall back to the earliest occurrence
    // at or after the cursor when the surrounding text was altered.
    if (auto hint = token_index_at(scan.plain, seg.begin); hint && *hint >= cursor &&
                                                           tokens_match_at(original.tokens, *hint, needle)) {
      at = hint;
    } else {
      at = find_tokens(original.tokens, needle, cursor);
    }
    if (!at) {
      report.dropped.push_back({join(needle, " "), ParseIssueKind::surface_not_found});
      continue;
    }
    report.spans.push_back(make_span(original, *at, *at + needle.size() - 1, std::string(type)));
    cursor = *at + needle.size();
  }
  if (scan.orphan_tail) report.dropped.push_back({*scan.orphan_tail, ParseIssueKind::unbalanced_marker});
  return report;
}

MarkedText encode_bmes(const Sentence& sentence, const std::vector<EntitySpan>& spans, std::string_view type) {
  const auto ordered = sorted_disjoint(spans, sentence);
  std::vector<std::string> tags(sentence.size(), "O");
  const std::string t(type);
  for (const auto& s : ordered) {
    if (s.start == s.end) {
      tags[s.start] = "S-" + t;
      continue;
    }
    tags[s.start] = "B-" + t;
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "M-" + t;
    tags[s.end] = "E-" + t;
  }
  return {join(tags, " "), OutputFormat::bmes};
}

ParseReport parse_bmes(const Sentence& original, std::string_view generated, std::string_view type) {
  ParseReport report;
  const auto tags = split_whitespace(generated);
  const std::size_t n = std::min(tags.size(), original.size());
  if (tags.size() != original.size()) {
    report.mutated = true;
    report.dropped.push_back({"expected " + std::to_string(original.size()) + " tags, got " +
                                  std::to_string(tags.size()),
                              ParseIssueKind::length_mismatch});
  }

  std::optional<std::size_t> open;
  auto close = [&](std::size_t end) {
    if (open) report.spans.push_back(make_span(original, *open, end, std::string(type)));
    open.reset();
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tag = tags[i];
    char prefix = 'O';
    if (tag != "O") {
      if (tag.size() >= 3 && tag[1] == '-' && std::string_view(tag).substr(2) == type &&
          std::string_view("BMESI").find(tag[0]) != std::string_view::npos) {
        prefix = tag[0] == 'I' ? 'M' : tag[0];
      } else {
        report.dropped.push_back({tag, ParseIssueKind::invalid_tag});
      }
    }
    switch (prefix) {
      case 'O':
        if (open) close(i - 1);
        break;
      case 'B':
        if (open) close(i - 1);
        open = i;
        break;
      case 'M':
        if (!open) open = i;
        break;
      case 'E':
        if (!open) open = i;
        close(i);
        break;
      case 'S':
        if (open) close(i - 1);
        open = i;
        close(i);
        break;
    }
  }
  if (open && n > 0) close(n - 1);
  return report;
}

MarkedText encode_entpos(const Sentence& sentence, const std::vector<EntitySpan>& spans) {
  const auto ordered = sorted_disjoint(spans, sentence);
  if (ordered.empty()) return {"None", OutputFormat::entity_position};
  std::string out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i) out += ", ";
    out += sentence.surface(ordered[i].start, ordered[i].end);
    out += " (" + std::to_string(ordered[i].start) + ")";
  }
  return {std::move(out), OutputFormat::entity_position};
}

namespace {

struct EntPosItem {
  std::string surface;
  std::optional<std::size_t> position;
};

// Finds "(digits)" followed by optional spaces and then ',' or end of text.
std::vector<EntPosItem> split_entpos_items(std::string_view g) {
  std::vector<EntPosItem> items;
  std::size_t item_begin = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] != '(') continue;
    std::size_t j = i + 1;
    while (j < g.size() && g[j] == ' ') ++j;
    const std::size_t digits_begin = j;
    while (j < g.size() && std::isdigit(static_cast<unsigned char>(g[j]))) ++j;
    if (j == digits_begin || j - digits_begin > 9) continue;
    const std::size_t digits_end = j;
    while (j < g.size() && g[j] == ' ') ++j;
    if (j >= g.size() || g[j] != ')') continue;
    std::size_t k = j + 1;
    while (k < g.size() && std::isspace(static_cast<unsigned char>(g[k]))) ++k;
    if (k < g.size() && g[k] != ',') continue;
    EntPosItem item;
    item.surface = std::string(trim(g.substr(item_begin, i - item_begin)));
    item.position = std::stoul(std::string(g.substr(digits_begin, digits_end - digits_begin)));
    items.push_back(std::move(item));
    item_begin = k < g.size() ? k + 1 : g.size();
    i = k;
  }
  // Anything left over carries no position; commas separate items there.
  std::string_view rest = trim(g.substr(std::min(item_begin, g.size())));
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto piece = trim(rest.substr(0, comma));
    if (!piece.empty()) items.push_back({std::string(piece), std::nullopt});
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return items;
}

}  // namespace

ParseReport parse_entpos(const Sentence& original, std::string_view generated, std::string_view type) {
  ParseReport report;
  const std::string_view g = trim(generated);
  if (g.empty() || to_lower(g) == "none" || to_lower(g) == "none.") return report;

  for (const auto& item : split_entpos_items(g)) {
    const auto needle = split_whitespace(item.surface);
    if (needle.empty()) {
      report.dropped.push_back({item.surface, ParseIssueKind::surface_not_found});
      continue;
    }
    if (item.position && tokens_match_at(original.tokens, *item.position, needle)) {
      report.spans.push_back(make_span(original, *item.position, *item.position + needle.size() - 1, std::string(type)));
      continue;
    }
    // Claimed position is wrong or absent: take the earliest occurrence not already emitted.
    std::optional<std::size_t> at;
    for (std::size_t from = 0;;) {
      at = find_tokens(original.tokens, needle, from);
      if (!at) break;
      const auto candidate = make_span(original, *at, *at + needle.size() - 1, std::string(type));
      if (std::find(report.spans.begin(), report.spans.end(), candidate) == report.spans.end()) break;
      from = *at + 1;
    }
    if (!at) {
      report.dropped.push_back({item.surface, ParseIssueKind::surface_not_found});
      continue;
    }
    report.spans.push_back(make_span(original, *at, *at + needle.size() - 1, std::string(type)));
    report.repaired.push_back(
        {item.surface, item.position ? ParseIssueKind::position_repaired : ParseIssueKind::position_missing});
  }
  dedupe(report.spans);
  return report;
}

MarkedText encode(OutputFormat format, const Sentence& sentence, const std::vector<EntitySpan>& spans,
                  std::string_view type) {
  switch (format) {
    case OutputFormat::at_marker: return encode_atmarker(sentence, spans);
    case OutputFormat::bmes: return encode_bmes(sentence, spans, type);
    case OutputFormat::entity_position: return encode_entpos(sentence, spans);
  }
  return encode_atmarker(sentence, spans);
}

ParseReport parse(OutputFormat format, const Sentence& original, std::string_view generated, std::string_view type) {
  switch (format) {
    case OutputFormat::at_marker: return parse_atmarker(original, generated, type);
    case OutputFormat::bmes: return parse_bmes(original, generated, type);
    case OutputFormat::entity_position: return parse_entpos(original, generated, type);
  }
  return parse_atmarker(original, generated, type);
}

std::vector<EntitySpan> outermost_spans(std::vector<EntitySpan> spans) {
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end > b.end;
  });
  std::vector<EntitySpan> kept;
  for (auto& s : spans) {
    if (!kept.empty() && kept.back().end >= s.start) continue;
    kept.push_back(std::move(s));
  }
  return kept;
}

}  // namespace iclner
