#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "parl/dataset.hpp"
#include "parl/mlp.hpp"
#include "parl/policy.hpp"

namespace parl {

struct BcConfig {
  double lr = 1e-3;
  int epochs = 100;
  int batch = 256;
  double clip = 1.0;
  int steps_per_epoch = 1;
  nlohmann::json to_json() const;
  static BcConfig from_json(const nlohmann::json& j);
};

struct CqlConfig {
  double alpha = 1.0;   // conservative coefficient
  double gamma = 1.0;
  double lr = 3e-4;
  int epochs = 200;
  int batch = 256;
  int target_sync_every = 10;
  double clip = 1.0;
  int steps_per_epoch = 1;
  nlohmann::json to_json() const;
  static CqlConfig from_json(const nlohmann::json& j);
};

struct IqlConfig {
  double tau = 0.9;          // expectile
  double beta = 10.0;        // advantage inverse temperature
  double adv_clamp = 100.0;  // cap on exp(beta * A)
  double gamma = 1.0;
  double lr = 1e-3;
  int epochs = 1000;
  int batch = 256;
  int target_sync_every = 10;
  double clip = 1.0;
  int steps_per_epoch = 1;
  nlohmann::json to_json() const;
  static IqlConfig from_json(const nlohmann::json& j);
};

enum class DpoPairing { transition, trajectory };

struct DpoConfig {
  double beta = 3.0;  // KL constraint strength
  int warmup_epochs = 200;
  double warmup_lr = 1e-3;
  int epochs = 2000;
  double lr = 1e-4;
  int batch = 256;
  double clip = 1.0;
  DpoPairing pairing = DpoPairing::transition;
  int steps_per_epoch = 1;
  nlohmann::json to_json() const;
  static DpoConfig from_json(const nlohmann::json& j);
};

// A gathered mini-batch in struct-of-arrays form.
struct TransitionBatch {
  int n = 0;
  std::vector<double> obs;       // n * 768
  std::vector<double> next_obs;  // n * 768
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<char> done;
  std::vector<std::array<bool, kTopK + 1>> legal_next;
};

TransitionBatch gather_batch(const Dataset& dataset, const std::vector<std::size_t>& flat_indices);

// ---- loss functions (value + gradient in one pass; grads may be null) ----

// Mean cross-entropy of the logged actions.
double bc_loss_and_grad(const Mlp& policy, const TransitionBatch& batch,
                        std::vector<double>* grads);

struct CqlLossParts {
  double total = 0.0;
  double td = 0.0;
  double conservative = 0.0;
  double mean_q = 0.0;
};

// total = td + alpha * conservative. The Bellman max runs over legal actions
// of the successor state; the conservative log-sum-exp runs over all actions.
CqlLossParts cql_loss_and_grad(const Mlp& q, const Mlp& q_target, const TransitionBatch& batch,
                               double alpha, double gamma, std::vector<double>* grads);

struct IqlLossParts {
  double v_loss = 0.0;
  double q_loss = 0.0;
  double policy_loss = 0.0;
};

// Expectile value regression, SARSA-style Q regression onto r + gamma V(s'),
// and advantage-weighted cloning with exp(beta*A) clamped. All targets use
// the nets as passed in (no in-batch coupling between the three updates).
IqlLossParts iql_losses_and_grads(const Mlp& q, const Mlp& q_target, const Mlp& v,
                                  const Mlp& policy, const TransitionBatch& batch,
                                  const IqlConfig& cfg, std::vector<double>* grads_q,
                                  std::vector<double>* grads_v, std::vector<double>* grads_policy);

// Preference data. Transition mode pairs one winner state with one loser
// state per pair; trajectory mode sums log-ratios over whole episodes, so a
// pair may own several rows on each side (pair index per row).
struct PreferenceBatch {
  int n_pairs = 0;
  std::vector<double> w_obs;
  std::vector<int> w_actions;
  std::vector<int> w_pair;
  std::vector<double> l_obs;
  std::vector<int> l_actions;
  std::vector<int> l_pair;
};

struct DpoLossParts {
  double loss = 0.0;
  double preference_accuracy = 0.0;  // ties count one half
};

DpoLossParts dpo_loss_and_grad(const Mlp& policy, const Mlp& reference,
                               const PreferenceBatch& batch, double beta,
                               std::vector<double>* grads);

// One winner/loser state pair at a shared retrieval depth.
struct PreferenceTuple {
  int w_episode = 0;
  int w_step = 0;
  int l_episode = 0;
  int l_step = 0;
};

struct EpisodePair {
  int w_episode = 0;
  int l_episode = 0;
};

// All winner/loser episode pairs with strictly different returns. The pool
// for an episode is the other episodes of the same request when the request
// was collected more than once, otherwise the episodes of the same procedure.
std::vector<EpisodePair> build_episode_pairs(const Dataset& dataset,
                                             const std::vector<PARequest>& requests);

// Transition-mode expansion: one tuple per shared depth t < min(len_w, len_l).
std::vector<PreferenceTuple> build_preference_pairs(const Dataset& dataset,
                                                    const std::vector<PARequest>& requests);

// ---- training loops ----

struct TrainResult {
  PolicyArtifact policy;
  nlohmann::json metrics;  // per-epoch scalar arrays
};

TrainResult train_bc(const Dataset& dataset, const BcConfig& cfg, std::uint64_t seed);
TrainResult train_cql(const Dataset& dataset, const CqlConfig& cfg, std::uint64_t seed);
TrainResult train_iql(const Dataset& dataset, const IqlConfig& cfg, std::uint64_t seed);
TrainResult train_dpo(const Dataset& dataset, const std::vector<PARequest>& requests,
                      const DpoConfig& cfg, std::uint64_t seed);

}  // namespace parl
