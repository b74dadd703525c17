#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "parl/corpus.hpp"
#include "parl/dataset.hpp"
#include "parl/policy.hpp"

namespace parl {

struct EpisodeRecord {
  int request_id = 0;
  std::string cpt;
  bool correct = false;
  int steps = 0;
  double episode_return = 0.0;
  Decision decision = Decision::pend;
};

struct EvalReport {
  std::string policy_label;
  double lambda = 0.1;
  double accuracy = 0.0;
  double mean_return = 0.0;
  double mean_steps = 0.0;
  std::map<std::string, double> per_procedure_accuracy;
  std::vector<EpisodeRecord> episodes;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Greedy on-policy rollouts, one per request. Deterministic except for the
// random baseline, which draws from a per-episode stream of `seed`.
EvalReport evaluate_policy(const Corpus& corpus, const std::vector<PARequest>& requests,
                           const PolicyArtifact& policy, double lambda, std::uint64_t seed = 0);

// Self-normalized importance sampling over logged episodes. The target policy
// is the deterministic greedy indicator, so per-step ratios are 1/b or 0,
// clipped into [clip_lo, clip_hi].
double wis_estimate(const Corpus& corpus, const std::vector<PARequest>& requests,
                    const Dataset& dataset, const PolicyArtifact& policy, double clip_lo = 0.01,
                    double clip_hi = 100.0, std::uint64_t seed = 0);

struct FqeConfig {
  int epochs = 200;
  int batch = 256;
  double lr = 1e-3;
  double gamma = 1.0;
  int target_sync_every = 10;
  double clip = 1.0;
};

// Fits a fresh Q-network to the dataset under the evaluated policy's greedy
// action selection and reads out the mean Q at episode-initial states.
double fqe_estimate(const Dataset& dataset, const PolicyArtifact& policy, const FqeConfig& cfg,
                    std::uint64_t seed);

struct SignificanceReport {
  std::string comparison;
  double delta_accuracy_pp = 0.0;  // percentage points
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool p_valid = false;  // false when every paired difference is zero
  std::array<double, 2> ci95_pp{0.0, 0.0};
  int n = 0;

  nlohmann::json to_json() const;
};

// Paired t-test on per-episode correctness indicators plus a seeded paired
// bootstrap CI (percentile method) on the accuracy difference.
SignificanceReport paired_t_test(const std::vector<int>& correct_a,
                                 const std::vector<int>& correct_b, std::uint64_t seed,
                                 int bootstrap_resamples = 10000);

// Indices of the non-dominated (steps, accuracy) points; lower steps and
// higher accuracy are better, exact ties are kept.
std::vector<std::size_t> pareto_frontier(const std::vector<std::pair<double, double>>& points);

// policy x procedure accuracy matrix; `hard_procedures` lists procedures
// where every learned policy stays below 100%.
struct PerProcedureTable {
  std::vector<std::string> procedures;
  std::vector<std::string> policies;
  std::vector<std::vector<double>> accuracy;  // [policy][procedure]
  std::vector<std::string> hard_procedures;

  nlohmann::json to_json() const;
};

PerProcedureTable per_procedure_report(const std::vector<EvalReport>& reports,
                                       const std::vector<PolicyKind>& kinds);

}  // namespace parl
