#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "parl/corpus.hpp"
#include "parl/dataset.hpp"
#include "parl/eval.hpp"
#include "parl/trainers.hpp"

namespace parl {

// Raised when a stage's inputs are missing; names the stage to run first.
struct MissingStageError : std::runtime_error {
  explicit MissingStageError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  std::uint64_t seed = 7;
  double lambda = 0.1;
  int train_requests = 2000;
  int test_requests = 200;
  std::array<double, 3> outcome_weights = {0.376, 0.119, 0.505};
  std::string embedding_sidecar;  // optional chunk-embedding override file

  CorpusConfig corpus = default_corpus_config();
  std::vector<MixtureEntry> mixture = default_mixture();

  BcConfig bc;
  CqlConfig cql;
  IqlConfig iql;
  DpoConfig dpo;
  FqeConfig fqe;

  double wis_clip_lo = 0.01;
  double wis_clip_hi = 100.0;
  int bootstrap_resamples = 10000;

  std::vector<double> lambda_grid = {0.05, 0.1, 0.2};
  std::vector<double> alpha_grid = {0.1, 0.5, 1.0};
  // (beta, epochs) pairs; the epoch budget grows with beta.
  std::vector<std::pair<double, int>> beta_grid = {{0.5, 500}, {1.0, 1000}, {3.0, 2000}};

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  // "cql.alpha=0.5" style dotted-path override; the value is parsed as JSON
  // when possible and as a string otherwise.
  void apply_override(const std::string& key_equals_value);
};

nlohmann::json corpus_config_to_json(const CorpusConfig& cfg);
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

// Canonical stage file names under an output directory.
namespace paths {
std::string corpus(const std::string& dir);
std::string requests(const std::string& dir, bool test);
std::string dataset(const std::string& dir, double lambda);
std::string checkpoint(const std::string& dir, const std::string& label);
std::string metrics(const std::string& dir, const std::string& label);
std::string eval_report(const std::string& dir, const std::string& label);
std::string ope(const std::string& dir);
std::string significance(const std::string& dir);
std::string ablation(const std::string& dir, const std::string& kind);
std::string report_json(const std::string& dir);
std::string report_text(const std::string& dir);
}  // namespace paths

// All seven Table-2 policies, canonical order.
std::vector<std::string> main_policy_labels();

namespace pipeline {

void gen_corpus(const RunConfig& cfg, const std::string& dir);
void gen_requests(const RunConfig& cfg, const std::string& dir, bool test);
void collect(const RunConfig& cfg, const std::string& dir, double lambda);

// algo in {bc, cql, iql, dpo}; trains on the dataset collected at `lambda`
// and writes ckpt_<label>.bin plus metrics_<label>.json. `label` defaults to
// the algo name; ablations pass suffixed labels.
void train(const RunConfig& cfg, const std::string& dir, const std::string& algo, double lambda,
           const std::string& label = "");

// policy_spec: trained label ("cql"), builtin ("fixedk:5"), or checkpoint path.
void eval(const RunConfig& cfg, const std::string& dir, const std::string& policy_spec);

void ope(const RunConfig& cfg, const std::string& dir);
void significance(const RunConfig& cfg, const std::string& dir);
void ablate(const RunConfig& cfg, const std::string& dir, const std::string& kind);
void report(const RunConfig& cfg, const std::string& dir);

// The full default experiment: corpus, requests, collection, four trainers,
// seven evaluations, OPE, significance, lambda/alpha/beta ablations, report.
void run_all(const RunConfig& cfg, const std::string& dir);

}  // namespace pipeline

}  // namespace parl
