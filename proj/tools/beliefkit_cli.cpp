// beliefkit: ground, train, evaluate and compare belief models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beliefkit/experiment.hpp"
#include "beliefkit/kb.hpp"
#include "beliefkit/synthetic.hpp"

namespace bk = beliefkit;
namespace fs = std::filesystem;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

/// Flags shared by run, compare and eval; unset ones leave the config alone.
struct Overrides {
  std::string config;
  std::string out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<double> weight_decay;
  std::optional<int> batch_size;
  std::optional<std::string> split;
  std::optional<double> fraction;
  std::optional<std::string> model;
  std::optional<int> dim;
  std::optional<std::string> endpoint;
  std::optional<std::string> parameters;
  std::vector<std::string> methods;

  void add_to(CLI::App* cmd, bool with_methods) {
    cmd->add_option("-c,--config", config, "Experiment config (JSON)")->required();
    cmd->add_option("-o,--out", out, "Output directory");
    cmd->add_option("-j,--jobs", jobs, "Worker threads for evaluation");
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--lr", learning_rate, "Learning rate");
    cmd->add_option("--weight-decay", weight_decay);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--split", split, "t1 or t1t2");
    cmd->add_option("--fraction", fraction, "Training fraction for t1t2");
    cmd->add_option("--model", model, "tabular, embedding or provider");
    cmd->add_option("--dim", dim, "Embedding dimension");
    cmd->add_option("--endpoint", endpoint, "Provider endpoint (exec:CMD or tcp:HOST:PORT)");
    cmd->add_option("--parameters", parameters, "Saved model parameters to start from");
    if (with_methods) {
      cmd->add_option("-m,--methods", methods,
                      "sft, loco, maxsat-baseline, zero-train (comma separated)")
          ->delimiter(',');
    }
  }

  bk::ExperimentConfig resolve() const {
    bk::ExperimentConfig c = bk::load_config(config);
    if (!out.empty()) c.out = out;
    if (jobs) c.jobs = *jobs;
    if (seed) c.seed = *seed;
    if (epochs) c.train.epochs = *epochs;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (weight_decay) c.train.weight_decay = *weight_decay;
    if (batch_size) c.train.batch_size = *batch_size;
    if (split) c.split = *split;
    if (fraction) c.fraction = *fraction;
    if (model) c.model.kind = *model;
    if (dim) c.model.dim = *dim;
    if (endpoint) c.model.endpoint = *endpoint;
    if (parameters) c.model.parameters = *parameters;
    if (!methods.empty()) {
      c.methods.clear();
      for (const auto& m : methods) c.methods.push_back(bk::parse_method(m));
    }
    return c;
  }
};

int cmd_ground(const std::string& facts_path, const std::string& constraints_path,
               const std::string& format, const std::string& out) {
  for (const auto& p : {facts_path, constraints_path}) {
    if (!fs::exists(p)) throw bk::MissingInput(p);
  }
  bk::DataFormat f = bk::DataFormat::kAuto;
  if (format == "canonical") f = bk::DataFormat::kCanonical;
  else if (format == "beliefbank") f = bk::DataFormat::kBeliefBank;
  else if (format != "auto") throw bk::ConfigError("unknown format '" + format + "'");

  const auto start = std::chrono::steady_clock::now();
  const bk::FactSet facts = bk::load_facts(facts_path, f);
  const bk::ConstraintSet constraints = bk::load_constraints(constraints_path, f);
  const bk::GroundSummary s = bk::ground_summary(facts, constraints);
  std::printf("facts: %zu over %zu subjects\n", facts.size(), facts.subjects().size());
  std::printf("constraints: %zu\n", constraints.size());
  std::printf("antecedent facts: %zu\n", s.antecedent_facts);
  std::printf("consequent facts: %zu\n", s.consequent_facts);
  std::printf("excluded facts: %zu\n", s.excluded_facts);
  std::printf("grounded constraints: %zu\n", s.grounded);
  std::printf("skipped (contradicted by evidence): %zu\n", s.skipped);
  if (!out.empty()) {
    fs::create_directories(out);
    const auto g = bk::ground_constraints(constraints, facts, true);
    bk::write_file((fs::path(out) / "grounded.json").string(), bk::write_grounded(g));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "ground: %.2f s\n", seconds);
  return 0;
}

int cmd_run(const bk::ExperimentConfig& config, bool timed) {
  const auto results = bk::run_experiment(config);
  std::vector<bk::TableRow> rows;
  const std::string subset = config.split == "t1" ? "T1" : "T1+T2";
  for (const auto& r : results) {
    std::fprintf(stderr, "%s: %zu epoch(s), %.2f s\n", bk::to_string(r.method).c_str(),
                 r.history.epochs.size(), r.seconds);
    rows.push_back({bk::to_string(r.method), subset, r.eval ? *r.eval : r.train,
                    timed ? r.seconds : -1.0});
  }
  const std::string table = bk::format_table(rows);
  std::cout << table;
  if (timed) bk::write_file((fs::path(config.out) / "compare.txt").string(), table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate belief models for logical consistency"};
  app.require_subcommand(1);

  std::string facts, constraints, format = "auto", ground_out;
  auto* ground = app.add_subcommand("ground", "Ground constraints and print split counts");
  ground->add_option("--facts", facts, "Facts file")->required();
  ground->add_option("--constraints", constraints, "Constraints file")->required();
  ground->add_option("--format", format, "auto, canonical or beliefbank");
  ground->add_option("-o,--out", ground_out, "Write grounded.json here");

  Overrides run_opts, compare_opts, eval_opts;
  auto* run = app.add_subcommand("run", "Train, evaluate and write reports");
  run_opts.add_to(run, true);
  auto* compare = app.add_subcommand("compare", "Run several methods into one timed table");
  compare_opts.add_to(compare, true);
  auto* eval = app.add_subcommand("eval", "Evaluate a saved model or provider without training");
  eval_opts.add_to(eval, false);

  std::string synth_out;
  bk::SyntheticOptions synth_options;
  auto* synth = app.add_subcommand("synth", "Write a synthetic knowledge base");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_options.seed);
  synth->add_option("--calibration-subjects", synth_options.calibration_subjects);
  synth->add_option("--silver-subjects", synth_options.silver_subjects);
  synth->add_option("--facts-per-subject", synth_options.facts_per_subject);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*ground) return cmd_ground(facts, constraints, format, ground_out);
    if (*synth) {
      bk::write_synthetic(synth_out, synth_options);
      return 0;
    }
    if (*run) return cmd_run(run_opts.resolve(), false);
    if (*compare) {
      if (compare_opts.methods.empty()) {
        throw bk::ConfigError("compare needs --methods with at least one method");
      }
      return cmd_run(compare_opts.resolve(), true);
    }
    if (*eval) {
      auto config = eval_opts.resolve();
      config.methods = {bk::Method::kZeroTrain};
      return cmd_run(config, false);
    }
  } catch (const bk::MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const bk::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}
