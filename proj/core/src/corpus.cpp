#include "iclner/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "iclner/error.hpp"
#include "iclner/text.hpp"

namespace iclner {

using json = nlohmann::json;

SchemaSet::SchemaSet(std::vector<EntityTypeSchema> types) : types_(std::move(types)) {
  std::set<std::string> seen;
  for (const auto& t : types_) {
    if (t.name.empty() || has_whitespace(t.name)) {
      throw Error(ErrorKind::invalid_argument, "entity type name must be a non-empty word: '" + t.name + "'");
    }
    if (t.description.empty()) {
      throw Error(ErrorKind::invalid_argument, "entity type " + t.name + " has an empty description");
    }
    if (!seen.insert(t.name).second) {
      throw Error(ErrorKind::invalid_argument, "duplicate entity type name " + t.name);
    }
  }
}

bool SchemaSet::contains(std::string_view name) const noexcept { return index_of(name).has_value(); }

const EntityTypeSchema& SchemaSet::at(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw Error(ErrorKind::unknown_type, std::string(name));
  return types_[*idx];
}

std::optional<std::size_t> SchemaSet::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (types_[i].name == name) return i;
  }
  return std::nullopt;
}

const EntityTypeSchema* SchemaSet::find_by_description(std::string_view description) const noexcept {
  for (const auto& t : types_) {
    if (t.description == description) return &t;
  }
  return nullptr;
}

std::vector<std::string> SchemaSet::names() const {
  std::vector<std::string> out;
  out.reserve(types_.size());
  for (const auto& t : types_) out.push_back(t.name);
  return out;
}

SchemaSet conll2003_schema() {
  return SchemaSet({
      {"LOC", "location",
       "location entities are the name of politically or geographically defined locations such as cities, "
       "provinces, countries, international regions, bodies of water, mountains, etc"},
      {"ORG", "organization",
       "organization entities are limited to named corporate, governmental, or other organizational entities"},
      {"PER", "person", "person entities are named persons or family"},
      {"MISC", "miscellaneous", "miscellaneous entities include events, nationalities, products and works of art"},
  });
}

SchemaSet parse_schema_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_line, std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::malformed_line, "schema must be a JSON array");
  std::vector<EntityTypeSchema> types;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") || !item.contains("description")) {
      throw Error(ErrorKind::malformed_line, "schema entries need \"name\" and \"description\"");
    }
    EntityTypeSchema t;
    t.name = item.at("name").get<std::string>();
    t.description = item.at("description").get<std::string>();
    if (item.contains("annotation")) t.annotation = item.at("annotation").get<std::string>();
    types.push_back(std::move(t));
  }
  return SchemaSet(std::move(types));
}

SchemaSet load_schema(const std::filesystem::path& path) { return parse_schema_json(read_file(path)); }

std::string Sentence::text() const { return join(tokens, " "); }

std::string Sentence::surface(std::size_t start, std::size_t end) const {
  if (start > end || end >= tokens.size()) {
    throw Error(ErrorKind::span_out_of_range, "span [" + std::to_string(start) + ", " + std::to_string(end) +
                                                  "] outside sentence of length " + std::to_string(tokens.size()));
  }
  std::string out = tokens[start];
  for (std::size_t i = start + 1; i <= end; ++i) {
    out += ' ';
    out += tokens[i];
  }
  return out;
}

EntitySpan make_span(const Sentence& sentence, std::size_t start, std::size_t end, std::string type) {
  return EntitySpan{start, end, std::move(type), sentence.surface(start, end)};
}

std::string_view to_string(CorpusMode mode) noexcept { return mode == CorpusMode::flat ? "flat" : "nested"; }
std::string_view to_string(TagScheme scheme) noexcept { return scheme == TagScheme::bio ? "bio" : "bioes"; }

TagScheme parse_tag_scheme(std::string_view text) {
  const auto lower = to_lower(text);
  if (lower == "bio") return TagScheme::bio;
  if (lower == "bioes") return TagScheme::bioes;
  throw Error(ErrorKind::invalid_argument, "unknown tag scheme '" + std::string(text) + "'");
}

const Sentence* LabeledCorpus::find(SentenceId id) const noexcept {
  // Loaders assign ids in file order, so the common case is a direct hit.
  if (id < sentences.size() && sentences[id].id == id) return &sentences[id];
  auto it = std::find_if(sentences.begin(), sentences.end(), [id](const Sentence& s) { return s.id == id; });
  return it == sentences.end() ? nullptr : &*it;
}

const std::vector<EntitySpan>& LabeledCorpus::spans_of(SentenceId id) const {
  static const std::vector<EntitySpan> kEmpty;
  auto it = gold.find(id);
  return it == gold.end() ? kEmpty : it->second;
}

std::vector<EntitySpan> LabeledCorpus::spans_of(SentenceId id, std::string_view type) const {
  std::vector<EntitySpan> out;
  for (const auto& s : spans_of(id)) {
    if (s.type == type) out.push_back(s);
  }
  return out;
}

std::size_t LabeledCorpus::token_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::size_t LabeledCorpus::span_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [id, spans] : gold) n += spans.size();
  return n;
}

LabeledCorpus LabeledCorpus::subset(const std::vector<SentenceId>& ids) const {
  LabeledCorpus out;
  out.mode = mode;
  out.schema = schema;
  out.sentences.reserve(ids.size());
  for (SentenceId id : ids) {
    const Sentence* s = find(id);
    if (!s) throw Error(ErrorKind::unknown_sentence_id, std::to_string(id));
    out.sentences.push_back(*s);
    if (auto it = gold.find(id); it != gold.end()) out.gold[id] = it->second;
  }
  return out;
}

namespace {

struct ParsedTag {
  char prefix = 'O';  // O, B, I, E, S (M is folded into I)
  std::string type;
};

ParsedTag parse_tag(const std::string& tag, std::size_t line) {
  if (tag == "O") return {};
  if (tag.size() < 3 || tag[1] != '-') {
    throw Error(ErrorKind::malformed_line, "line " + std::to_string(line) + ": bad tag '" + tag + "'");
  }
  char p = tag[0];
  if (p == 'M') p = 'I';
  if (p != 'B' && p != 'I' && p != 'E' && p != 'S') {
    throw Error(ErrorKind::malformed_line, "line " + std::to_string(line) + ": bad tag prefix in '" + tag + "'");
  }
  return {p, tag.substr(2)};
}

}  // namespace

std::vector<EntitySpan> decode_tags(const Sentence& sentence, const std::vector<std::string>& tags,
                                    const ConllOptions& options, const std::vector<std::size_t>& line_numbers,
                                    std::vector<std::string>* warnings) {
  if (tags.size() != sentence.size()) {
    throw Error(ErrorKind::invalid_argument, "tag count " + std::to_string(tags.size()) + " != token count " +
                                                 std::to_string(sentence.size()));
  }
  std::vector<EntitySpan> spans;
  std::optional<std::size_t> open_start;
  std::string open_type;

  auto close_at = [&](std::size_t end) {
    if (open_start) spans.push_back(make_span(sentence, *open_start, end, open_type));
    open_start.reset();
  };
  auto line_of = [&](std::size_t i) { return i < line_numbers.size() ? line_numbers[i] : i + 1; };
  auto illegal = [&](std::size_t i, const std::string& what) {
    const std::string msg = "line " + std::to_string(line_of(i)) + ": " + what;
    if (options.strict) throw Error(ErrorKind::illegal_tag_transition, msg);
    spdlog::warn("repairing tag run: {}", msg);
    if (warnings) warnings->push_back(msg);
  };

  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag t = parse_tag(tags[i], line_of(i));
    switch (t.prefix) {
      case 'O':
        if (open_start) close_at(i - 1);
        break;
      case 'B':
        if (open_start) close_at(i - 1);
        open_start = i;
        open_type = t.type;
        break;
      case 'S':
        if (open_start) close_at(i - 1);
        spans.push_back(make_span(sentence, i, i, t.type));
        break;
      case 'I':
        if (!open_start || open_type != t.type) {
          illegal(i, "I-" + t.type + " does not continue an open " + t.type + " span; treated as B-" + t.type);
          if (open_start) close_at(i - 1);
          open_start = i;
          open_type = t.type;
        }
        break;
      case 'E':
        if (!open_start || open_type != t.type) {
          illegal(i, "E-" + t.type + " does not close an open " + t.type + " span; treated as S-" + t.type);
          if (open_start) close_at(i - 1);
          spans.push_back(make_span(sentence, i, i, t.type));
        } else {
          close_at(i);
        }
        break;
    }
  }
  if (open_start) close_at(tags.size() - 1);
  return spans;
}

std::vector<std::string> spans_to_tags(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                                       TagScheme scheme) {
  std::vector<std::string> tags(sentence.size(), "O");
  std::vector<bool> taken(sentence.size(), false);
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= sentence.size()) {
      throw Error(ErrorKind::span_out_of_range, "span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                                    "] in sentence " + std::to_string(sentence.id));
    }
    for (std::size_t i = s.start; i <= s.end; ++i) {
      if (taken[i]) {
        throw Error(ErrorKind::overlap_in_flat_mode,
                    "spans overlap at token " + std::to_string(i) + " of sentence " + std::to_string(sentence.id));
      }
      taken[i] = true;
    }
    if (scheme == TagScheme::bio) {
      tags[s.start] = "B-" + s.type;
      for (std::size_t i = s.start + 1; i <= s.end; ++i) tags[i] = "I-" + s.type;
    } else if (s.start == s.end) {
      tags[s.start] = "S-" + s.type;
    } else {
      tags[s.start] = "B-" + s.type;
      for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "I-" + s.type;
      tags[s.end] = "E-" + s.type;
    }
  }
  return tags;
}

namespace {

void check_types(const std::vector<EntitySpan>& spans, const SchemaSet& schema, const std::string& where) {
  for (const auto& s : spans) {
    if (!schema.contains(s.type)) throw Error(ErrorKind::unknown_type, where + ": " + s.type);
  }
}

}  // namespace

LabeledCorpus parse_conll(std::istream& in, const SchemaSet& schema, const ConllOptions& options,
                          LoadDiagnostics* diagnostics) {
  LabeledCorpus corpus;
  corpus.mode = CorpusMode::flat;
  corpus.schema = schema;

  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::vector<std::size_t> lines;

  auto flush = [&]() {
    if (tokens.empty()) return;
    Sentence sentence{static_cast<SentenceId>(corpus.sentences.size()), std::move(tokens)};
    auto spans = decode_tags(sentence, tags, options, lines, diagnostics ? &diagnostics->warnings : nullptr);
    check_types(spans, schema, "line " + std::to_string(lines.front()));
    if (!spans.empty()) corpus.gold[sentence.id] = std::move(spans);
    corpus.sentences.push_back(std::move(sentence));
    tokens.clear();
    tags.clear();
    lines.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_whitespace(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields.front() == "-DOCSTART-") {
      flush();
      continue;
    }
    if (fields.size() != 2) {
      throw Error(ErrorKind::malformed_line,
                  "line " + std::to_string(line_no) + ": expected 2 columns, found " + std::to_string(fields.size()));
    }
    tokens.push_back(fields[0]);
    tags.push_back(fields[1]);
    lines.push_back(line_no);
  }
  flush();
  return corpus;
}

LabeledCorpus load_conll(const std::filesystem::path& path, const SchemaSet& schema, const ConllOptions& options,
                         LoadDiagnostics* diagnostics) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_conll(in, schema, options, diagnostics);
}

LabeledCorpus parse_nested_jsonl(std::istream& in, const SchemaSet& schema) {
  LabeledCorpus corpus;
  corpus.mode = CorpusMode::nested;
  corpus.schema = schema;
  std::set<SentenceId> seen;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::malformed_line, where + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("tokens") || !obj["tokens"].is_array()) {
      throw Error(ErrorKind::malformed_line, where + ": expected an object with a \"tokens\" array");
    }
    Sentence sentence;
    if (obj.contains("id")) {
      if (!obj["id"].is_number_unsigned()) throw Error(ErrorKind::malformed_line, where + ": id must be unsigned");
      sentence.id = obj["id"].get<SentenceId>();
    } else {
      sentence.id = static_cast<SentenceId>(corpus.sentences.size());
    }
    if (!seen.insert(sentence.id).second) {
      throw Error(ErrorKind::duplicate_id, where + ": sentence id " + std::to_string(sentence.id));
    }
    for (const auto& tok : obj["tokens"]) {
      if (!tok.is_string()) throw Error(ErrorKind::malformed_line, where + ": tokens must be strings");
      auto t = tok.get<std::string>();
      if (t.empty() || has_whitespace(t)) {
        throw Error(ErrorKind::malformed_line, where + ": empty token or token with whitespace");
      }
      sentence.tokens.push_back(std::move(t));
    }
    if (sentence.tokens.empty()) throw Error(ErrorKind::malformed_line, where + ": sentence has no tokens");

    std::vector<EntitySpan> spans;
    if (obj.contains("entities")) {
      for (const auto& ent : obj["entities"]) {
        if (!ent.is_object() || !ent.contains("start") || !ent.contains("end") || !ent.contains("type")) {
          throw Error(ErrorKind::malformed_line, where + ": entities need start, end, type");
        }
        const auto start = ent["start"].get<long long>();
        const auto end = ent["end"].get<long long>();
        if (start < 0 || end < start || end >= static_cast<long long>(sentence.size())) {
          throw Error(ErrorKind::span_out_of_range, where + ": span [" + std::to_string(start) + ", " +
                                                        std::to_string(end) + "] on " +
                                                        std::to_string(sentence.size()) + " tokens");
        }
        auto type = ent["type"].get<std::string>();
        if (!schema.contains(type)) throw Error(ErrorKind::unknown_type, where + ": " + type);
        spans.push_back(make_span(sentence, static_cast<std::size_t>(start), static_cast<std::size_t>(end), type));
      }
    }
    std::sort(spans.begin(), spans.end());
    spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
    if (!spans.empty()) corpus.gold[sentence.id] = std::move(spans);
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

LabeledCorpus load_nested_jsonl(const std::filesystem::path& path, const SchemaSet& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_nested_jsonl(in, schema);
}

LabeledCorpus load_corpus(const std::filesystem::path& path, const SchemaSet& schema, const ConllOptions& options,
                          LoadDiagnostics* diagnostics) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return load_nested_jsonl(path, schema);
  return load_conll(path, schema, options, diagnostics);
}

void write_conll(std::ostream& out, const LabeledCorpus& corpus, TagScheme scheme) {
  bool first = true;
  for (const auto& s : corpus.sentences) {
    if (!first) out << '\n';
    first = false;
    const auto tags = spans_to_tags(s, corpus.spans_of(s.id), scheme);
    for (std::size_t i = 0; i < s.size(); ++i) out << s.tokens[i] << ' ' << tags[i] << '\n';
  }
}

void write_nested_jsonl(std::ostream& out, const LabeledCorpus& corpus) {
  for (const auto& s : corpus.sentences) {
    json ents = json::array();
    for (const auto& e : corpus.spans_of(s.id)) ents.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
    json obj = {{"id", s.id}, {"tokens", s.tokens}, {"entities", std::move(ents)}};
    out << obj.dump() << '\n';
  }
}

}  // namespace iclner
