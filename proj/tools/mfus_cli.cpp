// Command-line front end over the C API. Prints the command's JSON summary on
// stdout; failures print {"error", "message", "exit_code"} on stderr.

#include <array>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfus/mfus.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<long long> seed;
  std::size_t threads = 1;
  std::map<std::string, std::string> inputs;
  std::optional<std::string> ablation;
  std::optional<std::string> encoder;
};

void print_error(const std::string& kind, const std::string& message, int code) {
  nlohmann::json e = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << e.dump() << "\n";
}

int exit_code_for(mfus_status st) {
  switch (st) {
    case MFUS_ERR_INVARIANT: return kExitInvariant;
    case MFUS_ERR_CONFIG:
    case MFUS_ERR_ARGUMENT: return kExitUsage;
    default: return kExitFailure;
  }
}

void add_input(CLI::App* sub, Flags& flags, const std::string& flag, const std::string& key,
               const std::string& help) {
  sub->add_option_function<std::string>(
      "--" + flag, [&flags, key](const std::string& v) { flags.inputs[key] = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-facet relation embeddings: training, scoring and evaluation"};
  app.set_version_flag("--version", std::string(mfus_version()));
  app.require_subcommand(1);
  Flags flags;

  struct Spec {
    const char* name;
    const char* help;
    std::vector<std::array<const char*, 3>> inputs;  // flag, option key, help
  };
  const std::vector<Spec> specs = {
      {"train", "Train a facet model on a co-occurrence matrix",
       {{"matrix", "matrix", "co-occurrence TSV"},
        {"embeddings", "embeddings", "word embedding text file"},
        {"split", "split", "row split file (train/validation)"}}},
      {"eval-re", "Relation extraction with tuned per-relation thresholds",
       {{"eval-validation", "eval_validation", "validation instances TSV"},
        {"eval-test", "eval_test", "test instances TSV"},
        {"uschema", "uschema", "factorization checkpoint for the max ensemble"},
        {"matrix", "matrix", "training matrix (needed with --uschema)"}}},
      {"eval-entail", "Entailment AP and direction accuracy",
       {{"candidates", "candidates", "candidate TSV"},
        {"annotations", "annotations", "label TSV merged into the candidates"}}},
      {"score", "Asym, sim and direction scores for row pairs",
       {{"matrix", "matrix", "co-occurrence TSV"}, {"pairs", "pairs", "row index pairs TSV"}}},
      {"entail-mine", "Mine entailment candidates with a hypernym lexicon",
       {{"matrix", "matrix", "co-occurrence TSV"},
        {"lexicon", "lexicon", "hypernym lexicon TSV"},
        {"annotations", "annotations", "label TSV merged into the candidates"}}},
      {"synth", "Generate a synthetic benchmark with known facets", {}},
      {"project", "2-D MDS of facets and entity pairs",
       {{"matrix", "matrix", "co-occurrence TSV"}}},
      {"hpo", "Coordinate-descent hyperparameter search",
       {{"matrix", "matrix", "co-occurrence TSV"},
        {"embeddings", "embeddings", "word embedding text file"},
        {"eval-validation", "eval_validation", "validation instances TSV"}}},
      {"gradcheck", "Finite-difference check of the full loss gradient",
       {{"matrix", "matrix", "co-occurrence TSV (default: built-in toy corpus)"}}},
      {"uschema-train", "Train the matrix-factorization baseline",
       {{"matrix", "matrix", "co-occurrence TSV"}}},
  };

  for (const auto& spec : specs) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    sub->add_option("--config", flags.config, "run config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { flags.out = v; },
                                          "output directory");
    sub->add_option_function<long long>("--seed", [&](long long v) { flags.seed = v; },
                                        "override the config seed");
    sub->add_option("--threads", flags.threads, "worker cap for scoring fan-out")
        ->check(CLI::PositiveNumber);
    const std::string name = spec.name;
    if (name == "train" || name == "hpo" || name == "gradcheck") {
      sub->add_option_function<std::string>(
             "--ablation", [&](const std::string& v) { flags.ablation = v; }, "training ablation")
          ->check(CLI::IsMember({"none", "no_autoencoder", "k11"}));
      sub->add_option_function<std::string>(
             "--encoder", [&](const std::string& v) { flags.encoder = v; }, "encoder family")
          ->check(CLI::IsMember({"transformer", "bilstm"}));
    }
    if (name == "eval-re" || name == "eval-entail" || name == "score" || name == "project")
      add_input(sub, flags, "checkpoint", "checkpoint", "facet model checkpoint");
    for (const auto& in : spec.inputs) add_input(sub, flags, in[0], in[1], in[2]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  nlohmann::json opts = {{"config", flags.config}, {"threads", flags.threads}};
  if (flags.out) opts["out"] = *flags.out;
  if (flags.seed) {
    if (*flags.seed < 0) {
      print_error("usage", "--seed must be non-negative", kExitUsage);
      return kExitUsage;
    }
    opts["seed"] = static_cast<unsigned long long>(*flags.seed);
  }
  if (flags.ablation) opts["ablation"] = *flags.ablation;
  if (flags.encoder) opts["encoder"] = *flags.encoder;
  for (const auto& [k, v] : flags.inputs) opts[k] = v;

  char* result = nullptr;
  const mfus_status st = mfus_run_command(command.c_str(), opts.dump().c_str(), &result);
  if (st != MFUS_OK) {
    const int code = exit_code_for(st);
    print_error(mfus_status_name(st), mfus_last_error(), code);
    return code;
  }
  std::cout << result << "\n";
  mfus_string_free(result);
  return 0;
}
