#include "iclner_cli/app.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "iclner/synth.hpp"
#include "iclner/text.hpp"

namespace iclner::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::usage: return 1;
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::backend: return 4;
  }
  return 3;
}

namespace {

SchemaSet schema_from(const fs::path& path) { return path.empty() ? conll2003_schema() : load_schema(path); }

std::shared_ptr<const Datastore> load_store(const fs::path& path, StoreLevel expected) {
  if (path.empty()) return nullptr;
  auto file = read_emb1(path);
  if (file.level != expected) {
    throw Error(ErrorKind::bad_vector_file, path.string() + " holds " + std::string(to_string(file.level)) +
                                                "-level vectors, expected " + std::string(to_string(expected)));
  }
  return std::make_shared<const Datastore>(Datastore::build(std::move(file.records)));
}

std::string four(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

json file_digests(const CliConfig& c) {
  json out = json::object();
  for (const fs::path* p : {&c.train, &c.test, &c.schema, &c.train_token_emb, &c.test_token_emb,
                            &c.train_sentence_emb, &c.test_sentence_emb, &c.query_entities,
                            &c.backend.scripted_fixture}) {
    if (!p->empty()) out[fs::absolute(*p).lexically_normal().string()] = sha256_hex(read_file(*p));
  }
  return out;
}

}  // namespace

LoadedInputs load_inputs(const CliConfig& c) {
  const auto schema = schema_from(c.schema);
  const ConllOptions opts{c.strict};
  LoadedInputs in;
  auto test_full = std::make_shared<LabeledCorpus>(load_corpus(c.test, schema, opts));
  in.test_full = test_full;
  if (c.test_sample > 0 && c.test_sample < test_full->size()) {
    in.test = std::make_shared<const LabeledCorpus>(sample_test_subset(*test_full, c.test_sample, c.run.seed));
  } else {
    in.test = test_full;
  }
  if (!c.train.empty()) in.resources.train = std::make_shared<const LabeledCorpus>(load_corpus(c.train, schema, opts));
  in.resources.train_tokens = load_store(c.train_token_emb, StoreLevel::token);
  in.resources.test_tokens = load_store(c.test_token_emb, StoreLevel::token);
  in.resources.train_sentences = load_store(c.train_sentence_emb, StoreLevel::sentence);
  in.resources.test_sentences = load_store(c.test_sentence_emb, StoreLevel::sentence);
  if (!c.query_entities.empty()) in.resources.query_entities = load_query_entities(c.query_entities);
  return in;
}

Backends make_backends(const CliConfig& c, std::shared_ptr<const LabeledCorpus> gold) {
  const auto& b = c.backend;
  auto throttle = std::make_shared<Throttle>(c.run.workers, b.requests_per_minute);
  std::shared_ptr<ResponseCache> cache;
  if (!c.cache_dir.empty()) cache = std::make_shared<ResponseCache>(c.cache_dir);

  auto build = [&](const std::string& kind) -> BackendPtr {
    BackendPtr backend;
    json ns = {{"backend", kind}};
    if (kind == "oracle") {
      backend = std::make_shared<OracleMock>(gold, c.run.format);
      ns["format"] = to_string(c.run.format);
      ns["gold"] = fs::absolute(c.test).string();
    } else if (kind == "copy") {
      backend = std::make_shared<CopyMock>();
    } else if (kind == "overpredict") {
      const auto seed = b.overpredict_seed.value_or(c.run.seed);
      backend = std::make_shared<OverpredictMock>(gold, b.overpredict_rate, seed, c.run.format);
      ns.update({{"format", to_string(c.run.format)}, {"gold", fs::absolute(c.test).string()},
                 {"rate", b.overpredict_rate}, {"seed", seed}});
    } else if (kind == "yesno-oracle") {
      backend = std::make_shared<YesNoOracleMock>(gold);
      ns["gold"] = fs::absolute(c.test).string();
    } else if (kind == "scripted") {
      backend = std::make_shared<ScriptedMock>(ScriptedMock::load(b.scripted_fixture));
      ns["fixture"] = sha256_hex(read_file(b.scripted_fixture));
    } else if (kind == "http") {
      HttpBackendConfig hc = http_config_from_env();
      if (!b.api_base.empty()) hc.base_url = b.api_base;
      hc.model = b.model;
      hc.api = b.api == "chat" ? ApiFlavor::chat : ApiFlavor::completions;
      hc.timeout = std::chrono::seconds(static_cast<long>(b.timeout_s + 0.999));
      hc.retry.max_attempts = b.max_retries;
      auto http = std::make_shared<HttpBackend>(hc);
      ns = http->cache_namespace();
      backend = http;
    } else {
      throw Error(ErrorKind::invalid_config, "unknown backend '" + kind + "'");
    }
    backend = std::make_shared<ThrottledBackend>(backend, throttle);
    if (cache) backend = std::make_shared<CachingBackend>(backend, cache, ns);
    return backend;
  };

  Backends out;
  out.extract = build(b.kind);
  if (!b.verify_kind.empty() && b.verify_kind != b.kind) out.verify = build(b.verify_kind);
  return out;
}

std::string format_score_table(const ScoreReport& report, const std::vector<std::string>& type_order) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %9s %9s %9s %7s %7s %7s\n", "type", "precision", "recall", "f1", "tp", "fp",
                "fn");
  out << buf;
  auto row = [&](const std::string& name, const ScoreTriple& s) {
    std::snprintf(buf, sizeof buf, "%-8s %9s %9s %9s %7zu %7zu %7zu\n", name.c_str(), four(s.precision).c_str(),
                  four(s.recall).c_str(), four(s.f1).c_str(), s.tp, s.fp, s.fn);
    out << buf;
  };
  std::set<std::string> shown;
  for (const auto& t : type_order) {
    if (auto it = report.per_type.find(t); it != report.per_type.end()) {
      row(t, it->second);
      shown.insert(t);
    }
  }
  for (const auto& [t, s] : report.per_type) {
    if (!shown.count(t)) row(t, s);
  }
  row("micro", report.micro);
  return out.str();
}

namespace {

struct Globals {
  int verbosity = 0;
};

// --- validate-corpus -------------------------------------------------------

struct ValidateArgs {
  std::string path;
  std::string schema;
  bool strict = false;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  LoadDiagnostics diag;
  const auto corpus = load_corpus(a.path, schema_from(a.schema), ConllOptions{a.strict}, &diag);
  std::map<std::string, std::size_t> per_type;
  for (const auto& [id, spans] : corpus.gold) {
    for (const auto& s : spans) ++per_type[s.type];
  }
  out << "file: " << a.path << "\n";
  out << "mode: " << to_string(corpus.mode) << "\n";
  out << "sentences: " << corpus.size() << "\n";
  out << "tokens: " << corpus.token_count() << "\n";
  out << "spans: " << corpus.span_count() << "\n";
  for (const auto& name : corpus.schema.names()) out << "  " << name << ": " << per_type[name] << "\n";
  for (const auto& w : diag.warnings) out << "warning: " << w << "\n";
  out << (diag.warnings.empty() ? "clean\n" : "not clean: " + std::to_string(diag.warnings.size()) + " warning(s)\n");
  return diag.warnings.empty() ? 0 : 3;
}

// --- index -----------------------------------------------------------------

struct IndexArgs {
  std::string level;
  std::string emb;
  std::string corpus;
  std::string schema;
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
  const auto level = parse_store_level(a.level);
  const auto corpus = load_corpus(a.corpus, schema_from(a.schema));
  auto file = read_emb1(a.emb);
  if (file.level != level) {
    throw Error(ErrorKind::bad_vector_file, a.emb + " is " + std::string(to_string(file.level)) +
                                                "-level, --level says " + std::string(to_string(level)));
  }
  std::map<SentenceId, std::size_t> records;
  for (const auto& r : file.records) ++records[r.sentence_id];
  const std::size_t n_records = file.records.size();
  const auto store = Datastore::build(std::move(file.records));

  std::vector<std::string> diffs;
  std::set<SentenceId> known;
  for (const auto& s : corpus.sentences) {
    known.insert(s.id);
    const std::size_t expected = level == StoreLevel::token ? s.size() : 1;
    const auto it = records.find(s.id);
    const std::size_t got = it == records.end() ? 0 : it->second;
    if (got != expected) {
      diffs.push_back("sentence " + std::to_string(s.id) + ": " + std::to_string(got) + " record(s), expected " +
                      std::to_string(expected));
    }
  }
  for (const auto& [id, n] : records) {
    if (!known.count(id)) diffs.push_back("sentence " + std::to_string(id) + ": " + std::to_string(n) +
                                          " record(s) for an id the corpus does not have");
  }
  if (level == StoreLevel::token) {
    for (std::size_t r = 0; r < store.size(); ++r) {
      const auto* s = corpus.find(store.sentence_id(r));
      if (s && store.token_index(r) >= s->size()) {
        diffs.push_back("sentence " + std::to_string(s->id) + ": token index " + std::to_string(store.token_index(r)) +
                        " beyond its " + std::to_string(s->size()) + " tokens");
      }
    }
  }

  const std::size_t expected_total = level == StoreLevel::token ? corpus.token_count() : corpus.size();
  out << "level: " << to_string(level) << "\n";
  out << "dim: " << store.dim() << "\n";
  out << "records: " << n_records << "\n";
  out << "corpus sentences: " << corpus.size() << "\n";
  out << "corpus tokens: " << corpus.token_count() << "\n";
  out << "expected records: " << expected_total << "\n";
  if (diffs.empty()) {
    out << "coverage: ok\n";
    return 0;
  }
  out << "coverage: MISMATCH (" << diffs.size() << " difference(s))\n";
  const std::size_t shown = std::min<std::size_t>(diffs.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) out << "  " << diffs[i] << "\n";
  if (diffs.size() > shown) out << "  ... " << diffs.size() - shown << " more\n";
  return 3;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string results;
  std::size_t workers = 0;
};

ScoreTriple print_score(const ScoreReport& report, const LabeledCorpus& gold, std::ostream& out) {
  out << format_score_table(report, gold.schema.names());
  return report.micro;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  auto overrides = a.overrides;
  if (!a.out.empty()) overrides.push_back("output=\"" + a.out + "\"");
  if (!a.results.empty()) overrides.push_back("results=\"" + a.results + "\"");
  if (a.workers) overrides.push_back("workers=" + std::to_string(a.workers));
  const auto config = load_config(a.config, overrides);
  config.validate();
  if (config.output.empty()) throw Error(ErrorKind::invalid_config, "no 'output' path (set it or pass --out)");

  const auto inputs = load_inputs(config);
  const auto backends = make_backends(config, inputs.test_full);
  auto run = run_corpus(*inputs.test, inputs.resources, config.run, backends);

  const auto report = score(run.predictions, *inputs.test);
  AblationRow row;
  row.dataset = config.dataset_name();
  row.config = config.run;
  row.run_id = run_id_for(row.dataset, config.run);
  row.score = report.micro;

  run.manifest["run_id"] = row.run_id;
  run.manifest["dataset"] = row.dataset;
  run.manifest["settings"] = config.to_json();
  run.manifest["settings_toml"] = config.to_toml();
  run.manifest["overrides"] = config.overrides;
  run.manifest["inputs"] = file_digests(config);
  run.manifest["score"] = {{"precision", report.micro.precision}, {"recall", report.micro.recall},
                           {"f1", report.micro.f1},           {"tp", report.micro.tp},
                           {"fp", report.micro.fp},           {"fn", report.micro.fn}};

  write_text(config.output, predictions_to_jsonl(run.predictions));
  write_text(config.manifest_path(), run.manifest.dump(2) + "\n");
  if (!config.results.empty()) write_text(config.results, results_csv({row}));

  out << "run: " << row.run_id << "\n";
  out << "sentences: " << run.predictions.size() << "\n";
  out << "backend calls: " << run.backend_calls << " (cached " << run.cached_calls << ")\n";
  out << "predictions: " << config.output.string() << "\n";
  print_score(report, *inputs.test, out);
  return 0;
}

// --- score -----------------------------------------------------------------

struct ScoreArgs {
  std::string pred;
  std::string gold;
  std::string schema;
  std::string csv;
  bool restrict = false;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const auto gold = load_corpus(a.gold, schema_from(a.schema));
  const auto preds = load_predictions_jsonl(a.pred);
  const auto report = score(preds, gold, ScoreOptions{a.restrict});
  out << format_score_table(report, gold.schema.names());
  if (!a.csv.empty()) {
    AblationRow row;
    row.dataset = fs::path(a.gold).stem().string();
    row.run_id = fs::path(a.pred).stem().string();
    row.score = report.micro;
    // Run settings come from the manifest written next to the predictions, when there is one.
    const fs::path manifest = a.pred + ".manifest.json";
    std::string csv;
    if (fs::exists(manifest)) {
      const auto m = json::parse(read_file(manifest));
      const auto& c = m.at("config");
      row.config.retrieval = parse_retrieval(c.at("retrieval").get<std::string>());
      row.config.format = parse_output_format(c.at("format").get<std::string>());
      row.config.k = c.at("k").get<std::size_t>();
      row.config.verification = parse_verification(c.at("verification").get<std::string>());
      row.run_id = m.value("run_id", row.run_id);
      row.dataset = m.value("dataset", row.dataset);
      csv = results_csv({row});
    } else {
      char buf[160];
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu,%zu,%zu\n", report.micro.precision, report.micro.recall,
                    report.micro.f1, report.micro.tp, report.micro.fp, report.micro.fn);
      csv = std::string(kResultsCsvHeader) + "\n" + row.run_id + "," + row.dataset + ",,,," + buf;
    }
    write_text(a.csv, csv);
  }
  return 0;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> sweeps;
  std::string out;
  std::string manifest_dir;
  std::size_t workers = 0;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& s : a.sweeps) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw Error(ErrorKind::invalid_argument, "--sweep must look like key=v1,v2,...; got '" + s + "'");
    }
    std::vector<std::string> values;
    std::stringstream ss(s.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) {
      if (!trim(v).empty()) values.emplace_back(trim(v));
    }
    axes.emplace_back(std::string(trim(std::string_view(s).substr(0, eq))), values);
  }
  if (axes.empty()) throw Error(ErrorKind::invalid_argument, "ablate needs at least one --sweep");

  // Cartesian product, last axis varying fastest.
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : values) {
        auto e = c;
        e.push_back(key + "=" + v);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }

  std::map<std::string, std::shared_ptr<LoadedInputs>> loaded;
  std::vector<AblationRow> rows;
  for (const auto& combo : combos) {
    auto overrides = a.overrides;
    if (a.workers) overrides.push_back("workers=" + std::to_string(a.workers));
    overrides.insert(overrides.end(), combo.begin(), combo.end());
    const auto config = load_config(a.config, overrides);
    config.validate();
    // Inputs are shared between runs that read the same files.
    const json input_key = {config.train.string(),          config.test.string(),
                            config.schema.string(),         config.strict,
                            config.test_sample,             config.run.seed,
                            config.train_token_emb.string(), config.test_token_emb.string(),
                            config.train_sentence_emb.string(), config.test_sentence_emb.string(),
                            config.query_entities.string()};
    auto& inputs = loaded[input_key.dump()];
    if (!inputs) inputs = std::make_shared<LoadedInputs>(load_inputs(config));

    AblationInputs ai;
    ai.dataset = config.dataset_name();
    ai.test = inputs->test.get();
    ai.resources = &inputs->resources;
    ai.backends = [&](const RunConfig&) { return make_backends(config, inputs->test_full); };
    auto result = run_sweep({config.run}, ai);
    for (auto& row : result) {
      for (const auto& [key, values] : axes) {
        if (key == "k" || key == "retrieval" || key == "format" || key == "verification") continue;
        row.run_id += "-" + key + "=" + config.to_json().at(key).dump();
      }
      row.manifest["settings"] = config.to_json();
      row.manifest["overrides"] = overrides;
      if (!a.manifest_dir.empty()) {
        write_text(fs::path(a.manifest_dir) / (row.run_id + ".manifest.json"), row.manifest.dump(2) + "\n");
      }
      out << "# " << row.run_id << "  f1=" << four(row.score.f1) << "\n";
      rows.push_back(std::move(row));
    }
  }
  const auto csv = results_csv(rows);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
    out << "results: " << a.out << "\n";
  }
  return 0;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthOptions options;
  std::uint32_t dim = 32;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const fs::path dir(a.out);
  const auto data = synth_dataset(a.options);
  auto conll = [](const LabeledCorpus& c) {
    std::ostringstream s;
    write_conll(s, c, TagScheme::bioes);
    return s.str();
  };
  write_text(dir / "train.conll", conll(data.train));
  write_text(dir / "test.conll", conll(data.test));
  write_emb1(dir / "train.tok.emb1", synth_embeddings(data.train, StoreLevel::token, a.dim, a.options.seed));
  write_emb1(dir / "test.tok.emb1", synth_embeddings(data.test, StoreLevel::token, a.dim, a.options.seed));
  write_emb1(dir / "train.sent.emb1", synth_embeddings(data.train, StoreLevel::sentence, a.dim, a.options.seed));
  write_emb1(dir / "test.sent.emb1", synth_embeddings(data.test, StoreLevel::sentence, a.dim, a.options.seed));
  std::vector<PredictionSet> tagger;
  for (const auto& [id, spans] : gold_entity_map(data.test)) {
    PredictionSet p;
    p.sentence_id = id;
    for (const auto& s : spans) p.spans.push_back({s, Provenance::raw});
    tagger.push_back(std::move(p));
  }
  write_text(dir / "test.tagger.jsonl", predictions_to_jsonl(tagger));
  write_text(dir / "config.toml",
             "dataset = \"synth\"\n"
             "train = \"train.conll\"\n"
             "test = \"test.conll\"\n"
             "train_token_emb = \"train.tok.emb1\"\n"
             "test_token_emb = \"test.tok.emb1\"\n"
             "train_sentence_emb = \"train.sent.emb1\"\n"
             "test_sentence_emb = \"test.sent.emb1\"\n"
             "query_entities = \"test.tagger.jsonl\"\n"
             "retrieval = \"entity\"\n"
             "k = 8\n"
             "backend = \"oracle\"\n"
             "output = \"predictions.jsonl\"\n");
  out << "wrote " << data.train.size() << " train and " << data.test.size() << " test sentences to " << dir.string()
      << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"In-context NER with retrieved demonstrations and self-verification", "iclner"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("-v,--verbose", g.verbosity, "More logging (repeat for debug)");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate-corpus", "Check a corpus file and report its contents");
  validate->add_option("path", va.path, "CoNLL or nested JSON-lines file")->required();
  validate->add_option("--schema", va.schema, "Entity type schema (JSON)");
  validate->add_flag("--strict", va.strict, "Treat repairable tag errors as failures");

  IndexArgs ia;
  auto* index = app.add_subcommand("index", "Load an EMB1 file and check it against its corpus");
  index->add_option("--level", ia.level, "sentence or token")->required()->check(CLI::IsMember({"sentence", "token"}));
  index->add_option("--emb", ia.emb, "EMB1 vector file")->required();
  index->add_option("--corpus", ia.corpus, "Corpus the vectors were computed from")->required();
  index->add_option("--schema", ia.schema, "Entity type schema (JSON)");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run extraction over a test set");
  run->add_option("--config", ra.config, "TOML configuration")->required();
  run->add_option("--override", ra.overrides, "key=value, repeatable")->allow_extra_args(false);
  run->add_option("--out", ra.out, "Predictions JSONL (overrides 'output')");
  run->add_option("--results", ra.results, "Results CSV (overrides 'results')");
  run->add_option("--workers", ra.workers, "Pipeline threads and backend in-flight cap (overrides 'workers')")
      ->check(CLI::PositiveNumber);

  ScoreArgs sa;
  auto* scorecmd = app.add_subcommand("score", "Score predictions against gold spans");
  scorecmd->add_option("--pred", sa.pred, "Predictions JSONL")->required();
  scorecmd->add_option("--gold", sa.gold, "Gold corpus")->required();
  scorecmd->add_option("--schema", sa.schema, "Entity type schema (JSON)");
  scorecmd->add_option("--csv", sa.csv, "Also write a results CSV row here");
  scorecmd->add_flag("--only-predicted", sa.restrict, "Score only the sentences present in the predictions");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Run one configuration per sweep point and collect a CSV");
  ablate->add_option("--config", aa.config, "TOML configuration")->required();
  ablate->add_option("--override", aa.overrides, "key=value, repeatable")->allow_extra_args(false);
  ablate->add_option("--sweep", aa.sweeps, "key=v1,v2,..., repeatable")->required()->allow_extra_args(false);
  ablate->add_option("--out", aa.out, "Results CSV (default: stdout)");
  ablate->add_option("--manifest-dir", aa.manifest_dir, "Write one manifest per run here");
  ablate->add_option("--workers", aa.workers, "Pipeline threads and backend in-flight cap (overrides 'workers')")
      ->check(CLI::PositiveNumber);

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a synthetic CoNLL-style dataset with EMB1 vectors");
  synth->add_option("--out", ya.out, "Output directory")->required();
  synth->add_option("--train", ya.options.train_sentences, "Training sentences");
  synth->add_option("--long", ya.options.long_train_sentences, "Extra long training sentences");
  synth->add_option("--test", ya.options.test_sentences, "Test sentences");
  synth->add_option("--seed", ya.options.seed, "Seed");
  synth->add_option("--dim", ya.dim, "Vector dimension")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store;
  argv_store.push_back("iclner");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  spdlog::set_level(g.verbosity >= 2 ? spdlog::level::debug : g.verbosity == 1 ? spdlog::level::info
                                                                              : spdlog::level::warn);

  try {
    if (*validate) return cmd_validate(va, out);
    if (*index) return cmd_index(ia, out);
    if (*run) return cmd_run(ra, out);
    if (*scorecmd) return cmd_score(sa, out);
    if (*ablate) return cmd_ablate(aa, out);
    if (*synth) return cmd_synth(ya, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace iclner::cli
