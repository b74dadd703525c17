#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "parl/pipeline.hpp"

namespace {

// exit codes: 0 success, 1 user error (bad arguments, missing stage inputs),
// 2 internal error.

std::string default_out_dir() {
  if (const char* env = std::getenv("PARL_OUT")) return env;
  return "runs";
}

parl::RunConfig make_config(const std::string& config_path,
                            const std::vector<std::string>& overrides, bool seed_set,
                            std::uint64_t seed) {
  parl::RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + config_path);
    nlohmann::json j;
    in >> j;
    cfg = parl::RunConfig::from_json(j);
  }
  for (const std::string& kv : overrides) cfg.apply_override(kv);
  if (seed_set) cfg.seed = seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parl: adaptive policy retrieval experiments"};
  app.require_subcommand(1);

  std::string out_dir = default_out_dir();
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 7;
  bool seed_set = false;
  app.add_option("--out", out_dir, "output directory (default: $PARL_OUT or ./runs)");
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides, "override a config key, e.g. --set cql.alpha=0.5");
  app.add_option("--seed", seed, "master seed")->each([&seed_set](const std::string&) {
    seed_set = true;
  });

  auto* cmd_gen_corpus = app.add_subcommand("gen-corpus", "build the synthetic policy corpus");
  std::string sidecar;
  cmd_gen_corpus->add_option("--embed-override", sidecar,
                             "JSONL sidecar of {id, embedding} overriding chunk embeddings");

  auto* cmd_gen_requests = app.add_subcommand("gen-requests", "generate synthetic PA requests");
  std::string split = "train";
  cmd_gen_requests->add_option("--split", split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));

  auto* cmd_collect = app.add_subcommand("collect", "roll out behavior policies into a dataset");
  double collect_lambda = -1.0;
  cmd_collect->add_option("--lambda", collect_lambda, "step cost baked into rewards");

  auto* cmd_train = app.add_subcommand("train", "train a policy on the offline dataset");
  std::string algo;
  double train_lambda = -1.0;
  cmd_train->add_option("algo", algo, "bc | cql | iql | dpo")
      ->required()
      ->check(CLI::IsMember({"bc", "cql", "iql", "dpo"}));
  cmd_train->add_option("--lambda", train_lambda, "dataset step cost to train against");

  auto* cmd_eval = app.add_subcommand("eval", "on-policy evaluation on the test requests");
  std::string policy_spec;
  cmd_eval
      ->add_option("--policy", policy_spec,
                   "trained label (bc|cql|iql|dpo), builtin (fixedk:K, heuristic:T, random), or "
                   "checkpoint path")
      ->required();

  auto* cmd_ope = app.add_subcommand("ope", "WIS and FQE estimates on the training buffer");
  auto* cmd_sig = app.add_subcommand("significance", "paired t-tests between policies");

  auto* cmd_ablate = app.add_subcommand("ablate", "sweep lambda, beta, or alpha");
  std::string ablate_kind;
  cmd_ablate->add_option("kind", ablate_kind, "lambda | beta | alpha")
      ->required()
      ->check(CLI::IsMember({"lambda", "beta", "alpha"}));
  std::string grid_csv;
  cmd_ablate->add_option("--grid", grid_csv, "comma-separated parameter grid");

  auto* cmd_report = app.add_subcommand("report", "assemble tables from prior stage outputs");
  auto* cmd_run_all = app.add_subcommand("run-all", "run the full default pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    parl::RunConfig cfg = make_config(config_path, overrides, seed_set, seed);

    if (cmd_gen_corpus->parsed()) {
      if (!sidecar.empty()) cfg.embedding_sidecar = sidecar;
      parl::pipeline::gen_corpus(cfg, out_dir);
    } else if (cmd_gen_requests->parsed()) {
      parl::pipeline::gen_requests(cfg, out_dir, split == "test");
    } else if (cmd_collect->parsed()) {
      parl::pipeline::collect(cfg, out_dir, collect_lambda > 0 ? collect_lambda : cfg.lambda);
    } else if (cmd_train->parsed()) {
      parl::pipeline::train(cfg, out_dir, algo, train_lambda > 0 ? train_lambda : cfg.lambda);
    } else if (cmd_eval->parsed()) {
      parl::pipeline::eval(cfg, out_dir, policy_spec);
    } else if (cmd_ope->parsed()) {
      parl::pipeline::ope(cfg, out_dir);
    } else if (cmd_sig->parsed()) {
      parl::pipeline::significance(cfg, out_dir);
    } else if (cmd_ablate->parsed()) {
      if (!grid_csv.empty()) {
        std::vector<double> grid;
        std::stringstream ss(grid_csv);
        std::string item;
        while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
        if (ablate_kind == "lambda") {
          cfg.lambda_grid = grid;
        } else if (ablate_kind == "alpha") {
          cfg.alpha_grid = grid;
        } else {
          // For beta, keep each point's epoch budget if it is already in the
          // configured grid; otherwise fall back to the default epochs.
          std::vector<std::pair<double, int>> beta_grid;
          for (double b : grid) {
            int epochs = cfg.dpo.epochs;
            for (const auto& [known_beta, known_epochs] : cfg.beta_grid) {
              if (known_beta == b) epochs = known_epochs;
            }
            beta_grid.push_back({b, epochs});
          }
          cfg.beta_grid = beta_grid;
        }
      }
      parl::pipeline::ablate(cfg, out_dir, ablate_kind);
    } else if (cmd_report->parsed()) {
      parl::pipeline::report(cfg, out_dir);
    } else if (cmd_run_all->parsed()) {
      parl::pipeline::run_all(cfg, out_dir);
    }
  } catch (const parl::MissingStageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
