#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iclner/corpus.hpp"

namespace iclner {

/// Version tag of the prompt templates below. Bump whenever rendered bytes change.
inline constexpr std::string_view kPromptTemplateVersion = "extract-v1/verify-v1";

/// Approximate tokens per English word for budget estimates.
inline constexpr double kDefaultTokensPerWord = 1.3;

/// Counts tokens in a piece of prompt text. The default is ceil(words * ratio).
using TokenEstimator = std::function<std::size_t(std::string_view)>;

std::size_t estimate_tokens(std::string_view text, double ratio = kDefaultTokensPerWord);
TokenEstimator word_ratio_estimator(double ratio);

/// Context window split between prompt and completion.
struct PromptBudget {
  std::size_t context_window = 4096;
  std::size_t reserved_completion = 512;

  std::size_t max_prompt_tokens() const noexcept {
    return context_window > reserved_completion ? context_window - reserved_completion : 0;
  }
};

enum class DemoOrder { nearest_last, nearest_first };
std::string_view to_string(DemoOrder order) noexcept;
DemoOrder parse_demo_order(std::string_view text);

/// One extraction example: an input sentence and its encoded output.
struct Demonstration {
  std::string input;
  std::string output;
};

struct PromptSpec {
  EntityTypeSchema entity_type;
  std::vector<Demonstration> demos;  // ranked best-first
  std::string query;
  std::size_t budget = PromptBudget{}.max_prompt_tokens();
  double tokens_per_word = kDefaultTokensPerWord;
  DemoOrder order = DemoOrder::nearest_last;
  bool use_annotation = false;  // add the type's extended guideline line
  TokenEstimator estimator;     // overrides tokens_per_word when set
};

struct RenderedPrompt {
  std::string text;
  std::size_t demos_kept = 0;  // a prefix of the ranked demos
  std::size_t estimated_tokens = 0;
};

/// Longest prefix of `demo_costs` that fits in `budget` together with `fixed_parts_tokens`.
std::size_t trim_to_budget(const std::vector<std::size_t>& demo_costs, std::size_t fixed_parts_tokens,
                           std::size_t budget);

/// Renders the extraction prompt, dropping the farthest-ranked demos until it fits the budget.
RenderedPrompt render_extraction_prompt(const PromptSpec& spec);

struct VerificationDemo {
  std::string sentence;
  std::string word;
  bool answer = false;
};

std::string render_verification_prompt(const EntityTypeSchema& entity_type, const std::vector<VerificationDemo>& demos,
                                       const Sentence& sentence, std::string_view word);

/// Parsed back out of an extraction prompt (used by offline backends).
struct ExtractionPromptFields {
  std::string type_description;
  std::string query;
};

struct VerificationPromptFields {
  std::string type_description;
  std::string sentence;
  std::string word;
};

std::optional<ExtractionPromptFields> parse_extraction_prompt(std::string_view prompt);
std::optional<VerificationPromptFields> parse_verification_prompt(std::string_view prompt);

enum class YesNo { yes, no, unknown };
/// Reads the first alphabetic word of a completion.
YesNo parse_yes_no(std::string_view completion);

}  // namespace iclner
