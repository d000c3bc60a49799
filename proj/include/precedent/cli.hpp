#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "precedent/error.hpp"
#include "precedent/pipeline.hpp"

namespace precedent::cli {

enum class ParamType { kUint, kDouble, kBool, kString };

struct ParamDef {
  std::string section;  // "" for global
  std::string key;      // JSON key in config files
  std::string flag;     // long flag without dashes
  ParamType type;
  ojson default_value;
  std::string help;
};

inline const std::vector<ParamDef>& param_table() {
  using T = ParamType;
  static const std::vector<ParamDef> table = {
      {"", "seed", "seed", T::kUint, 0, "global seed; sections without their own seed inherit it"},
      {"", "out", "out", T::kString, "", "output directory (default: $PRECEDENT_OUT_DIR or ./precedent_out)"},

      {"synth", "num_articles", "k", T::kUint, 4, "number of articles K"},
      {"synth", "n_train", "n-train", T::kUint, 200, "training cases"},
      {"synth", "n_validation", "n-validation", T::kUint, 0, "validation cases"},
      {"synth", "n_test", "n-test", T::kUint, 40, "test cases"},
      {"synth", "d1", "d1", T::kUint, 16, "embedding dimension"},
      {"synth", "claim_rate", "claim-rate", T::kDouble, 0.5, "probability an article is claimed"},
      {"synth", "positive_rate", "positive-rate", T::kDouble, 0.5, "probability a claim is found violated"},
      {"synth", "cite_per_test", "cite-per-test", T::kUint, 3, "citations per test case"},
      {"synth", "applied_bias", "applied-bias", T::kDouble, 0.9, "probability a citation is an applied partner"},
      {"synth", "noise_sigma", "noise-sigma", T::kDouble, 0.1, "embedding noise"},
      {"synth", "signal_scale", "signal-scale", T::kDouble, 1.0, "length of the outcome directions"},
      {"synth", "emit_text", "emit-text", T::kBool, false, "emit names, dockets and argument text"},
      {"synth", "max_retries", "max-retries", T::kUint, 100, "regeneration attempts per case"},
      {"synth", "seed", "synth-seed", T::kUint, 0, "generator seed"},

      {"ingest", "input", "input", T::kString, "", "corpus JSON-lines file"},
      {"ingest", "embeddings", "embeddings", T::kString, "", "sidecar embeddings JSON-lines file"},
      {"ingest", "patterns", "patterns", T::kString, "", "citation pattern JSON file"},
      {"ingest", "hash_dim", "hash-dim", T::kUint, 64, "hashing encoder dimension for text-only cases"},
      {"ingest", "hash_salt", "hash-salt", T::kUint, 0, "hashing encoder salt"},
      {"ingest", "strict_test_citations", "strict-test-citations", T::kBool, false, "reject test-to-test citations"},

      {"filter", "cited_by", "cited-by", T::kString, "any", "which citers keep a training case: any|test"},

      {"model", "head", "head", T::kString, "simple", "simple|joint"},
      {"model", "architecture", "architecture", T::kString, "mlp", "mlp|linear"},
      {"model", "d1", "model-d1", T::kUint, 0, "input dimension (0: from the corpus)"},
      {"model", "d2", "d2", T::kUint, 50, "hidden width"},
      {"model", "learning_rate", "lr", T::kDouble, 3e-4, "learning rate"},
      {"model", "l2_strength", "l2", T::kDouble, 0.0, "L2 strength lambda"},
      {"model", "dropout_rate", "dropout", T::kDouble, 0.1, "hidden-layer dropout"},
      {"model", "max_epochs", "epochs", T::kUint, 10, "maximum epochs"},
      {"model", "patience", "patience", T::kUint, 1, "early-stopping patience"},
      {"model", "batch_size", "batch-size", T::kUint, 16, "mini-batch size (0: full batch)"},
      {"model", "grad_tolerance", "grad-tol", T::kDouble, 0.0, "stop when the gradient norm falls below"},
      {"model", "threshold", "threshold", T::kDouble, 0.5, "simple-head decision threshold"},
      {"model", "seed", "model-seed", T::kUint, 0, "initialisation and shuffling seed"},

      {"influence", "method", "solver", T::kString, "cg", "exact|cg|lissa"},
      {"influence", "damping", "damping", T::kDouble, 0.01, "damping delta"},
      {"influence", "cg_tol", "cg-tol", T::kDouble, 1e-10, "CG relative tolerance"},
      {"influence", "cg_max_iter", "cg-max-iter", T::kUint, 1000, "CG iteration cap"},
      {"influence", "lissa_depth", "lissa-depth", T::kUint, 1000, "LiSSA recursion depth"},
      {"influence", "lissa_samples", "lissa-samples", T::kUint, 1, "LiSSA repetitions"},
      {"influence", "lissa_scale", "lissa-scale", T::kDouble, 10.0, "LiSSA scale"},
      {"influence", "lissa_batch", "lissa-batch", T::kUint, 0, "LiSSA HVP batch (0: full)"},
      {"influence", "lissa_tol", "lissa-tol", T::kDouble, 1e-2, "LiSSA acceptance residual"},
      {"influence", "exact_param_cap", "exact-cap", T::kUint, 5000, "largest P for the exact solver"},
      {"influence", "write_csv", "csv", T::kBool, false, "also write influence.csv"},
      {"influence", "seed", "influence-seed", T::kUint, 0, "LiSSA sampling seed"},

      {"label", "rule", "rule", T::kString, "existential", "per-case aggregation: existential|strict"},

      {"correlate", "orientation", "orientation", T::kString, "helpfulness", "rank -iota (helpfulness) or iota (raw)"},
      {"correlate", "correctness", "correct", T::kString, "exact-vector", "exact-vector|per-article"},

      {"classify", "lambda", "lambda", T::kDouble, 1e-4, "tie-break penalty"},
      {"classify", "orientation", "classify-orientation", T::kString, "helpfulness", "helpfulness|raw"},
  };
  return table;
}

inline const std::map<std::string, std::vector<std::string>>& command_sections() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"synth", {"synth"}},
      {"ingest", {"ingest"}},
      {"filter", {"filter"}},
      {"train", {"model"}},
      {"influence", {"influence"}},
      {"label", {"label"}},
      {"correlate", {"correlate"}},
      {"classify", {"classify"}},
      {"report", {}},
      {"pipeline", {"synth", "ingest", "filter", "model", "influence", "label", "correlate", "classify"}},
  };
  return m;
}

struct RunConfig {
  std::string command;
  ojson values = ojson::object();      // section -> key -> value; globals at top level
  ojson provenance = ojson::object();  // "section.key" -> default|file|flag|global|derived
  std::filesystem::path out_dir;

  const ojson& section(const std::string& name) const { return values.at(name); }

  ojson echo() const {
    return {{"command", command}, {"out_dir", out_dir.string()}, {"config", values}, {"provenance", provenance}};
  }
};

namespace detail {

inline ojson convert(const ParamDef& def, const std::string& text) {
  auto bad = [&] {
    return Error(ErrorCode::kInvalidConfig, "--" + def.flag + ": cannot parse \"" + text + "\"");
  };
  try {
    std::size_t used = 0;
    switch (def.type) {
      case ParamType::kUint: {
        if (text.empty() || text[0] == '-') throw bad();
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw bad();
        return v;
      }
      case ParamType::kDouble: {
        const double v = std::stod(text, &used);
        if (used != text.size()) throw bad();
        return v;
      }
      case ParamType::kBool:
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad();
      case ParamType::kString: return text;
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  throw bad();
}

inline bool type_matches(const ParamDef& def, const nlohmann::json& v) {
  switch (def.type) {
    case ParamType::kUint: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case ParamType::kDouble: return v.is_number();
    case ParamType::kBool: return v.is_boolean();
    case ParamType::kString: return v.is_string();
  }
  return false;
}

inline std::string qualified(const ParamDef& def) { return def.section.empty() ? def.key : def.section + "." + def.key; }

}  // namespace detail

/// Applies defaults, then the config file, then flags, for the sections the
/// command uses; `flags` maps flag names to their raw text.
inline RunConfig resolve(const std::string& command, const std::map<std::string, std::string>& flags,
                         const std::optional<nlohmann::json>& file) {
  const auto it = command_sections().find(command);
  if (it == command_sections().end()) throw Error(ErrorCode::kUnknownFlag, "unknown command \"" + command + "\"");
  std::vector<std::string> sections = it->second;
  sections.insert(sections.begin(), "");
  auto uses = [&](const std::string& s) { return std::find(sections.begin(), sections.end(), s) != sections.end(); };

  if (file) {
    if (!file->is_object()) throw Error(ErrorCode::kInvalidConfig, "config file must hold a JSON object");
    for (const auto& [name, body] : file->items()) {
      const bool is_section = std::any_of(param_table().begin(), param_table().end(),
                                          [&](const ParamDef& d) { return !d.section.empty() && d.section == name; });
      const bool is_global = std::any_of(param_table().begin(), param_table().end(),
                                         [&](const ParamDef& d) { return d.section.empty() && d.key == name; });
      if (!is_section && !is_global) throw Error(ErrorCode::kUnknownFlag, "config file: unknown key \"" + name + "\"");
      if (is_section) {
        if (!body.is_object()) throw Error(ErrorCode::kInvalidConfig, "config file: \"" + name + "\" must be an object");
        for (const auto& [key, _] : body.items())
          if (std::none_of(param_table().begin(), param_table().end(),
                           [&](const ParamDef& d) { return d.section == name && d.key == key; }))
            throw Error(ErrorCode::kUnknownFlag, "config file: unknown key \"" + name + "." + key + "\"");
      }
    }
  }

  RunConfig rc;
  rc.command = command;
  for (const auto& def : param_table()) {
    if (!uses(def.section)) continue;
    ojson value = def.default_value;
    std::string source = "default";
    if (file) {
      const nlohmann::json* node = nullptr;
      if (def.section.empty()) {
        if (file->contains(def.key)) node = &file->at(def.key);
      } else if (file->contains(def.section) && file->at(def.section).contains(def.key)) {
        node = &file->at(def.section).at(def.key);
      }
      if (node) {
        if (!detail::type_matches(def, *node))
          throw Error(ErrorCode::kInvalidConfig, "config file: \"" + detail::qualified(def) + "\" has the wrong type");
        value = *node;
        source = "file";
      }
    }
    if (auto f = flags.find(def.flag); f != flags.end()) {
      value = detail::convert(def, f->second);
      source = "flag";
    }
    if (def.section.empty()) rc.values[def.key] = value;
    else rc.values[def.section][def.key] = value;
    rc.provenance[detail::qualified(def)] = source;
  }

  // Section seeds left at their default follow the global seed.
  for (const auto& s : {"synth", "model", "influence"}) {
    if (!uses(s)) continue;
    const std::string q = std::string(s) + ".seed";
    if (rc.provenance[q] == "default") {
      rc.values[s]["seed"] = rc.values["seed"];
      rc.provenance[q] = "global";
    }
  }

  if (uses("model")) {
    auto& m = rc.values["model"];
    if (m["architecture"] == "linear") {
      if (rc.provenance["model.d2"] != "default")
        throw Error(ErrorCode::kConflictingValues, "--d2 has no meaning for the linear architecture");
      if (m["dropout_rate"].get<double>() > 0.0) {
        if (rc.provenance["model.dropout_rate"] != "default")
          throw Error(ErrorCode::kConflictingValues, "dropout needs a hidden layer; the linear architecture has none");
        m["dropout_rate"] = 0.0;
        rc.provenance["model.dropout_rate"] = "derived";
      }
    }
  }

  std::string out = rc.values["out"].get<std::string>();
  if (out.empty()) {
    const char* env = std::getenv("PRECEDENT_OUT_DIR");
    out = env && *env ? env : "precedent_out";
    rc.values["out"] = out;
    rc.provenance["out"] = env && *env ? "env" : "default";
  }
  rc.out_dir = out;
  return rc;
}

// Typed views of a resolved config.

inline SynthConfig synth_config(const RunConfig& rc) { return synth_config_from_json(rc.section("synth")); }

inline IngestParams ingest_params(const RunConfig& rc) {
  const auto& s = rc.section("ingest");
  IngestParams p;
  p.input = s.at("input").get<std::string>();
  if (auto e = s.at("embeddings").get<std::string>(); !e.empty()) p.embeddings = e;
  if (auto e = s.at("patterns").get<std::string>(); !e.empty()) p.patterns = e;
  p.hash_dim = s.at("hash_dim").get<std::size_t>();
  p.hash_salt = s.at("hash_salt").get<std::uint64_t>();
  p.strict_test_citations = s.at("strict_test_citations").get<bool>();
  if (p.hash_dim == 0) throw Error(ErrorCode::kInvalidConfig, "--hash-dim must be >= 1");
  return p;
}

inline TrainParams train_params(const RunConfig& rc) {
  ojson m = rc.section("model");
  TrainParams p;
  p.threshold = m.at("threshold").get<double>();
  if (!(p.threshold > 0.0 && p.threshold < 1.0)) throw Error(ErrorCode::kInvalidConfig, "--threshold must be in (0, 1)");
  m.erase("threshold");
  m["num_articles"] = 0;
  try {
    p.model = model_config_from_json(m);
  } catch (const Error& e) {
    throw Error(e.code() == ErrorCode::kUnknownFlag ? e.code() : ErrorCode::kInvalidConfig, e.what());
  }
  return p;
}

inline InfluenceParams influence_params(const RunConfig& rc) {
  ojson s = rc.section("influence");
  InfluenceParams p;
  p.write_csv = s.at("write_csv").get<bool>();
  s.erase("write_csv");
  p.solver = inverse_hvp_config_from_json(s);
  return p;
}

inline CorrelateParams correlate_params(const RunConfig& rc) {
  const auto& s = rc.section("correlate");
  return {parse_orientation(s.at("orientation").get<std::string>()), parse_correctness(s.at("correctness").get<std::string>())};
}

inline ClassifyParams classify_params(const RunConfig& rc) {
  const auto& s = rc.section("classify");
  ClassifyParams p{s.at("lambda").get<double>(), parse_orientation(s.at("orientation").get<std::string>())};
  if (!(p.lambda > 0.0)) throw Error(ErrorCode::kInvalidConfig, "--lambda must be > 0");
  return p;
}

/// Validates every section the command uses before any stage runs.
inline void check(const RunConfig& rc) {
  const auto& sections = command_sections().at(rc.command);
  for (const auto& s : sections) {
    if (s == "synth") synth_config(rc);
    if (s == "ingest" && rc.command != "pipeline") {
      if (rc.section("ingest").at("input").get<std::string>().empty())
        throw Error(ErrorCode::kMissingRequired, "ingest needs --input");
      ingest_params(rc);
    }
    if (s == "filter") parse_cited_by(rc.section("filter").at("cited_by").get<std::string>());
    if (s == "model") {
      const auto p = train_params(rc);
      parse_head(to_string(p.model.head));
      if (!(p.model.learning_rate > 0.0)) throw Error(ErrorCode::kInvalidConfig, "--lr must be positive");
    }
    if (s == "influence") influence_params(rc);
    if (s == "label") parse_rule(rc.section("label").at("rule").get<std::string>());
    if (s == "correlate") correlate_params(rc);
    if (s == "classify") classify_params(rc);
  }
}

inline std::vector<StageResult> execute(const RunConfig& rc) {
  ArtifactDir dir(rc.out_dir);
  std::vector<StageResult> done;
  const std::string& c = rc.command;
  const bool all = c == "pipeline";
  if (c == "synth" || all) done.push_back(stage_synth(dir, synth_config(rc)));
  if (c == "ingest" || all) {
    IngestParams p = ingest_params(rc);
    if (all && p.input.empty()) p.input = dir.path("synth_corpus.jsonl").string();
    done.push_back(stage_ingest(dir, p));
  }
  if (c == "filter" || all) done.push_back(stage_filter(dir, parse_cited_by(rc.section("filter").at("cited_by").get<std::string>())));
  if (c == "train" || all) done.push_back(stage_train(dir, train_params(rc)));
  if (c == "influence" || all) done.push_back(stage_influence(dir, influence_params(rc)));
  if (c == "label" || all) done.push_back(stage_label(dir, parse_rule(rc.section("label").at("rule").get<std::string>())));
  if (c == "correlate" || all) done.push_back(stage_correlate(dir, correlate_params(rc)));
  if (c == "classify" || all) done.push_back(stage_classify(dir, classify_params(rc)));
  if (c == "report" || all) done.push_back(stage_report(dir));
  return done;
}

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kUnknownFlag:
    case ErrorCode::kConflictingValues:
    case ErrorCode::kMissingRequired: return 2;
    case ErrorCode::kMissingArtifact: return 3;
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kNonFiniteGradient:
    case ErrorCode::kNotConverged:
    case ErrorCode::kSingularHessian: return 4;
    default: return 1;
  }
}

namespace detail {

inline void report_error(const std::string& command, const std::optional<std::filesystem::path>& out_dir,
                         std::string_view name, const std::string& message, int code, std::ostream& err) {
  const ojson j = {{"error", name}, {"message", message}, {"command", command}, {"exit_code", code}};
  err << j.dump() << '\n';
  if (!out_dir) return;
  std::error_code ec;
  std::filesystem::create_directories(*out_dir, ec);
  std::ofstream f(*out_dir / "error.json");
  if (f) f << j.dump(2) << '\n';
}

}  // namespace detail

/// Parses argv, resolves the configuration and runs the command. Returns the
/// process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Influence of training cases on test decisions, compared with precedent"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> bools;
  std::string config_path;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> descriptions = {
      {"synth", "generate a synthetic corpus with planted precedent"},
      {"ingest", "load a corpus, attach embeddings, extract citations"},
      {"filter", "keep cited training cases and citing test cases"},
      {"train", "train the outcome model"},
      {"influence", "compute the influence matrix"},
      {"label", "label train-test pairs with precedent kinds"},
      {"correlate", "Spearman correlations between influence and labels"},
      {"classify", "fit the influence-threshold precedent classifier"},
      {"report", "aggregate results into report.json and report.tsv"},
      {"pipeline", "run every stage from synth to report"},
  };
  for (const auto& [name, sections] : command_sections()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    subs[name] = sub;
    sub->add_option("--config", config_path, "JSON config file; flags override it");
    for (const auto& def : param_table()) {
      if (!def.section.empty() && std::find(sections.begin(), sections.end(), def.section) == sections.end()) continue;
      const std::string flag = "--" + def.flag;
      if (sub->get_option_no_throw(flag)) continue;
      if (def.type == ParamType::kBool) {
        sub->add_flag(flag, bools[def.flag], def.help);
      } else {
        sub->add_option_function<std::string>(flag, [&raw, key = def.flag](const std::string& v) { raw[key] = v; },
                                              def.help);
      }
    }
  }

  std::string command;
  try {
    app.parse(argc, argv);
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) command = name;
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const bool unknown = dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr;
    const bool missing = dynamic_cast<const CLI::RequiredError*>(&e) != nullptr;
    const ErrorCode code = unknown ? ErrorCode::kUnknownFlag : missing ? ErrorCode::kMissingRequired : ErrorCode::kInvalidConfig;
    detail::report_error(command, std::nullopt, to_string(code), e.what(), 2, err);
    return 2;
  }
  if (command.empty()) {
    // A help flag on a subcommand is handled inside CLI11; nothing to run.
    return 0;
  }
  for (const auto& [flag, value] : bools)
    if (const auto* opt = subs[command]->get_option_no_throw("--" + flag); opt && opt->count() > 0)
      raw[flag] = value ? "true" : "false";

  std::optional<std::filesystem::path> out_dir;
  try {
    std::optional<nlohmann::json> file;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::kMissingRequired, "cannot read config file " + config_path);
      try {
        file = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidConfig, config_path + ": " + e.what());
      }
    }
    RunConfig rc = resolve(command, raw, file);
    out_dir = rc.out_dir;
    check(rc);
    ArtifactDir dir(rc.out_dir);
    dir.write_json("run_config.json", rc.echo());
    dir.commit();
    const auto stages = execute(rc);
    ojson summary = ojson::array();
    for (const auto& s : stages) summary.push_back({{"stage", s.stage}, {"config_hash", s.config_hash}, {"artifacts", s.artifacts}});
    out << ojson{{"command", command}, {"out_dir", rc.out_dir.string()}, {"stages", summary}}.dump() << '\n';
    return 0;
  } catch (const Error& e) {
    const int code = exit_code(e.code());
    detail::report_error(command, out_dir, to_string(e.code()), e.what(), code, err);
    return code;
  } catch (const std::exception& e) {
    detail::report_error(command, out_dir, "InternalError", e.what(), 1, err);
    return 1;
  }
}

}  // namespace precedent::cli
