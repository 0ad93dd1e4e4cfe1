#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "iclner/error.hpp"
#include "iclner/evalkit.hpp"
#include "iclner_cli/config.hpp"

namespace iclner::cli {

/// 1 usage, 2 config, 3 data, 4 backend.
int exit_code_for(ErrorCategory category) noexcept;

/// Entry point shared by the `iclner` binary and the tests. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct LoadedInputs {
  std::shared_ptr<const LabeledCorpus> test_full;
  std::shared_ptr<const LabeledCorpus> test;  // test_full, or its sampled subset
  RetrievalResources resources;
};

LoadedInputs load_inputs(const CliConfig& config);
Backends make_backends(const CliConfig& config, std::shared_ptr<const LabeledCorpus> gold);

/// Fixed-width table with four decimals, one row per type then the micro average.
std::string format_score_table(const ScoreReport& report, const std::vector<std::string>& type_order);

}  // namespace iclner::cli
