#include "iclner/promptkit.hpp"

#include <cctype>
#include <cmath>

#include "iclner/error.hpp"
#include "iclner/text.hpp"

namespace iclner {

namespace {

constexpr std::string_view kLinguistLine = "I am an excellent linguist.";
constexpr std::string_view kTaskPrefix = "The task is to label ";
constexpr std::string_view kTaskSuffix = " entities in the given sentence.";
constexpr std::string_view kExamplesLine = "Below are some examples.";
constexpr std::string_view kInput = "Input: ";
constexpr std::string_view kOutput = "Output:";

constexpr std::string_view kVerifyPrefix = "The task is to verify whether the word is a ";
constexpr std::string_view kVerifySuffix = " entity extracted from the given sentence.";
constexpr std::string_view kSentencePrefix = "The input sentence: ";
constexpr std::string_view kQuestionPrefix = "Is the word \"";
constexpr std::string_view kQuestionMiddle = "\" in the input sentence a ";
constexpr std::string_view kQuestionSuffix = " entity? Please answer with yes or no.";

std::string sentence_case(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  if (!out.empty() && out.back() != '.') out += '.';
  return out;
}

std::string header(const PromptSpec& spec, bool with_examples) {
  std::string out;
  out += kLinguistLine;
  out += '\n';
  out += kTaskPrefix;
  out += spec.entity_type.description;
  out += kTaskSuffix;
  out += '\n';
  if (spec.use_annotation && !spec.entity_type.annotation.empty()) {
    out += sentence_case(spec.entity_type.annotation);
    out += '\n';
  }
  if (with_examples) {
    out += kExamplesLine;
    out += '\n';
  }
  return out;
}

std::string demo_block(const Demonstration& d) {
  std::string out;
  out += kInput;
  out += d.input;
  out += '\n';
  out += kOutput;
  out += ' ';
  out += d.output;
  out += '\n';
  return out;
}

std::string query_block(std::string_view query) {
  std::string out;
  out += kInput;
  out += query;
  out += '\n';
  out += kOutput;
  return out;
}

bool contains_word_sequence(const Sentence& sentence, std::string_view word) {
  const auto needle = split_whitespace(word);
  if (needle.empty() || needle.size() > sentence.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= sentence.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), sentence.tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

bool consume(std::string_view& s, std::string_view prefix) {
  if (s.substr(0, prefix.size()) != prefix) return false;
  s.remove_prefix(prefix.size());
  return true;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

std::size_t estimate_tokens(std::string_view text, double ratio) {
  if (!(ratio > 0)) throw Error(ErrorKind::invalid_argument, "tokens-per-word ratio must be positive");
  const auto words = split_whitespace(text).size();
  // The epsilon keeps exact products such as 100 * 1.3 from rounding up to 131.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(words) * ratio - 1e-9));
}

TokenEstimator word_ratio_estimator(double ratio) {
  if (!(ratio > 0)) throw Error(ErrorKind::invalid_argument, "tokens-per-word ratio must be positive");
  return [ratio](std::string_view text) { return estimate_tokens(text, ratio); };
}

std::string_view to_string(DemoOrder order) noexcept {
  return order == DemoOrder::nearest_last ? "nearest-last" : "nearest-first";
}

DemoOrder parse_demo_order(std::string_view text) {
  if (text == "nearest-last") return DemoOrder::nearest_last;
  if (text == "nearest-first") return DemoOrder::nearest_first;
  throw Error(ErrorKind::invalid_argument, "demo order must be nearest-last or nearest-first");
}

std::size_t trim_to_budget(const std::vector<std::size_t>& demo_costs, std::size_t fixed_parts_tokens,
                           std::size_t budget) {
  if (fixed_parts_tokens > budget) return 0;
  std::size_t used = fixed_parts_tokens;
  std::size_t kept = 0;
  for (std::size_t cost : demo_costs) {
    if (used + cost > budget) break;
    used += cost;
    ++kept;
  }
  return kept;
}

RenderedPrompt render_extraction_prompt(const PromptSpec& spec) {
  const TokenEstimator estimate = spec.estimator ? spec.estimator : word_ratio_estimator(spec.tokens_per_word);

  // Per-part estimates are summed; since ceil is subadditive the whole prompt never exceeds the sum.
  const std::size_t fixed = estimate(header(spec, !spec.demos.empty())) + estimate(query_block(spec.query));
  if (fixed > spec.budget) {
    throw Error(ErrorKind::budget_unsatisfiable, "prompt needs " + std::to_string(fixed) +
                                                     " tokens without demonstrations; budget is " +
                                                     std::to_string(spec.budget));
  }
  std::vector<std::string> blocks;
  std::vector<std::size_t> costs;
  blocks.reserve(spec.demos.size());
  for (const auto& d : spec.demos) {
    blocks.push_back(demo_block(d));
    costs.push_back(estimate(blocks.back()));
  }
  std::size_t kept = trim_to_budget(costs, fixed, spec.budget);

  RenderedPrompt out;
  for (;;) {
    out.text = header(spec, kept > 0);
    if (spec.order == DemoOrder::nearest_first) {
      for (std::size_t i = 0; i < kept; ++i) out.text += blocks[i];
    } else {
      for (std::size_t i = kept; i-- > 0;) out.text += blocks[i];
    }
    out.text += query_block(spec.query);
    out.estimated_tokens = estimate(out.text);
    // A non-additive custom estimator may still overshoot; shed demos until it fits.
    if (out.estimated_tokens <= spec.budget || kept == 0) break;
    --kept;
  }
  if (out.estimated_tokens > spec.budget) {
    throw Error(ErrorKind::budget_unsatisfiable, "prompt estimate " + std::to_string(out.estimated_tokens) +
                                                     " exceeds budget " + std::to_string(spec.budget));
  }
  out.demos_kept = kept;
  return out;
}

std::string render_verification_prompt(const EntityTypeSchema& entity_type, const std::vector<VerificationDemo>& demos,
                                       const Sentence& sentence, std::string_view word) {
  if (!contains_word_sequence(sentence, word)) {
    throw Error(ErrorKind::word_not_in_sentence, "\"" + std::string(word) + "\" not in \"" + sentence.text() + "\"");
  }
  auto question = [&](std::string_view w) {
    std::string q;
    q += kQuestionPrefix;
    q += w;
    q += kQuestionMiddle;
    q += entity_type.description;
    q += kQuestionSuffix;
    return q;
  };
  std::string out;
  out += kVerifyPrefix;
  out += entity_type.description;
  out += kVerifySuffix;
  out += '\n';
  for (const auto& d : demos) {
    out += kSentencePrefix;
    out += d.sentence;
    out += '\n';
    out += question(d.word);
    out += '\n';
    out += d.answer ? "Yes" : "No";
    out += '\n';
  }
  out += kSentencePrefix;
  out += sentence.text();
  out += '\n';
  out += question(word);
  return out;
}

std::optional<ExtractionPromptFields> parse_extraction_prompt(std::string_view prompt) {
  const auto lines = lines_of(prompt);
  if (lines.size() < 4 || lines[0] != kLinguistLine) return std::nullopt;
  std::string_view task = lines[1];
  if (!consume(task, kTaskPrefix) || task.size() <= kTaskSuffix.size() ||
      task.substr(task.size() - kTaskSuffix.size()) != kTaskSuffix) {
    return std::nullopt;
  }
  task.remove_suffix(kTaskSuffix.size());
  if (lines.back() != kOutput) return std::nullopt;
  std::string_view query = lines[lines.size() - 2];
  if (!consume(query, kInput)) return std::nullopt;
  return ExtractionPromptFields{std::string(task), std::string(query)};
}

std::optional<VerificationPromptFields> parse_verification_prompt(std::string_view prompt) {
  const auto lines = lines_of(prompt);
  if (lines.size() < 3) return std::nullopt;
  std::string_view task = lines[0];
  if (!consume(task, kVerifyPrefix) || task.size() <= kVerifySuffix.size() ||
      task.substr(task.size() - kVerifySuffix.size()) != kVerifySuffix) {
    return std::nullopt;
  }
  task.remove_suffix(kVerifySuffix.size());

  std::string_view sentence = lines[lines.size() - 2];
  std::string_view question = lines.back();
  if (!consume(sentence, kSentencePrefix) || !consume(question, kQuestionPrefix)) return std::nullopt;
  const std::string tail = std::string(kQuestionMiddle) + std::string(task) + std::string(kQuestionSuffix);
  if (question.size() < tail.size() || question.substr(question.size() - tail.size()) != tail) return std::nullopt;
  question.remove_suffix(tail.size());
  return VerificationPromptFields{std::string(task), std::string(sentence), std::string(question)};
}

YesNo parse_yes_no(std::string_view completion) {
  std::size_t i = 0;
  while (i < completion.size() && !std::isalpha(static_cast<unsigned char>(completion[i]))) ++i;
  std::size_t j = i;
  while (j < completion.size() && std::isalpha(static_cast<unsigned char>(completion[j]))) ++j;
  const auto word = to_lower(completion.substr(i, j - i));
  if (word == "yes") return YesNo::yes;
  if (word == "no") return YesNo::no;
  return YesNo::unknown;
}

}  // namespace iclner
