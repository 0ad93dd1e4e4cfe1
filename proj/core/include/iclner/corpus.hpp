#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iclner {

using SentenceId = std::uint32_t;

/// An entity label together with the natural-language phrase used for it in prompts.
struct EntityTypeSchema {
  std::string name;         // short tag, e.g. "LOC"
  std::string description;  // prompt phrase, e.g. "location"
  std::string annotation;   // optional extended guideline sentence
};

/// Ordered set of entity types. Order doubles as the default type priority.
class SchemaSet {
 public:
  SchemaSet() = default;
  explicit SchemaSet(std::vector<EntityTypeSchema> types);

  const std::vector<EntityTypeSchema>& types() const noexcept { return types_; }
  std::size_t size() const noexcept { return types_.size(); }
  bool empty() const noexcept { return types_.empty(); }

  bool contains(std::string_view name) const noexcept;
  const EntityTypeSchema& at(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const noexcept;
  const EntityTypeSchema* find_by_description(std::string_view description) const noexcept;
  std::vector<std::string> names() const;

 private:
  std::vector<EntityTypeSchema> types_;
};

/// LOC, ORG, PER, MISC with the conventional prompt phrases.
SchemaSet conll2003_schema();
/// Reads `[{"name": "LOC", "description": "location"}, ...]`.
SchemaSet load_schema(const std::filesystem::path& path);
SchemaSet parse_schema_json(std::string_view text);

struct Sentence {
  SentenceId id = 0;
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  /// Tokens joined by single spaces.
  std::string text() const;
  /// Space-joined tokens[start..=end].
  std::string surface(std::size_t start, std::size_t end) const;
};

/// Word-indexed, end-inclusive typed span.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;
  std::string surface;

  std::size_t length() const noexcept { return end - start + 1; }
  bool overlaps(const EntitySpan& other) const noexcept {
    return start <= other.end && other.start <= end;
  }

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

EntitySpan make_span(const Sentence& sentence, std::size_t start, std::size_t end, std::string type);

enum class CorpusMode { flat, nested };
enum class TagScheme { bio, bioes };

std::string_view to_string(CorpusMode mode) noexcept;
std::string_view to_string(TagScheme scheme) noexcept;
TagScheme parse_tag_scheme(std::string_view text);

struct LabeledCorpus {
  std::vector<Sentence> sentences;
  std::map<SentenceId, std::vector<EntitySpan>> gold;
  CorpusMode mode = CorpusMode::flat;
  SchemaSet schema;

  std::size_t size() const noexcept { return sentences.size(); }
  const Sentence* find(SentenceId id) const noexcept;
  /// Gold spans of one sentence (empty when none).
  const std::vector<EntitySpan>& spans_of(SentenceId id) const;
  std::vector<EntitySpan> spans_of(SentenceId id, std::string_view type) const;
  std::size_t token_count() const noexcept;
  std::size_t span_count() const noexcept;
  /// Sub-corpus over the given ids, kept in the order given.
  LabeledCorpus subset(const std::vector<SentenceId>& ids) const;
};

struct ConllOptions {
  /// When true an orphan I-X (or any illegal transition) is an error instead of being repaired.
  bool strict = false;
};

/// Non-fatal findings from a load, used by `validate-corpus`.
struct LoadDiagnostics {
  std::vector<std::string> warnings;
};

LabeledCorpus load_conll(const std::filesystem::path& path, const SchemaSet& schema,
                         const ConllOptions& options = {}, LoadDiagnostics* diagnostics = nullptr);
LabeledCorpus parse_conll(std::istream& in, const SchemaSet& schema, const ConllOptions& options = {},
                          LoadDiagnostics* diagnostics = nullptr);

LabeledCorpus load_nested_jsonl(const std::filesystem::path& path, const SchemaSet& schema);
LabeledCorpus parse_nested_jsonl(std::istream& in, const SchemaSet& schema);

/// Dispatches on extension: `.jsonl`/`.json` are nested JSON-lines, everything else CoNLL.
LabeledCorpus load_corpus(const std::filesystem::path& path, const SchemaSet& schema,
                          const ConllOptions& options = {}, LoadDiagnostics* diagnostics = nullptr);

/// Encodes non-overlapping spans into one tag per token.
std::vector<std::string> spans_to_tags(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                                       TagScheme scheme);

/// Decodes a BIO or BIOES tag run into spans. Both schemes are accepted on input.
/// `line_numbers`, when non-empty, is used for error messages only.
std::vector<EntitySpan> decode_tags(const Sentence& sentence, const std::vector<std::string>& tags,
                                    const ConllOptions& options = {},
                                    const std::vector<std::size_t>& line_numbers = {},
                                    std::vector<std::string>* warnings = nullptr);

/// Writes the corpus as two-column CoNLL text.
void write_conll(std::ostream& out, const LabeledCorpus& corpus, TagScheme scheme = TagScheme::bioes);

/// Writes the corpus as nested JSON-lines.
void write_nested_jsonl(std::ostream& out, const LabeledCorpus& corpus);

}  // namespace iclner
