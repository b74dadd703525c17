#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "parl/corpus.hpp"
#include "parl/env.hpp"
#include "parl/rng.hpp"

namespace parl {

// Data-collecting policies. EpsGreedy wraps a deterministic base so that the
// logged propensity of the chosen action is exact.
struct BehaviorPolicy {
  enum class Kind { random, fixed_k, heuristic, eps_greedy };

  Kind kind = Kind::random;
  int k = 0;               // fixed_k
  double threshold = 0.0;  // heuristic
  double eps = 0.0;        // eps_greedy
  std::shared_ptr<const BehaviorPolicy> base;  // eps_greedy

  static BehaviorPolicy random();
  static BehaviorPolicy fixed_k(int k);
  static BehaviorPolicy heuristic(double threshold);
  static BehaviorPolicy eps_greedy(BehaviorPolicy base_policy, double eps);

  std::string label() const;
  nlohmann::json to_json() const;
  static BehaviorPolicy from_json(const nlohmann::json& j);
  static BehaviorPolicy from_label(const std::string& label);
};

struct ActionChoice {
  int action = 0;
  double propensity = 1.0;
};

// The action the policy takes in `state` plus the exact probability it
// assigns to that action.
ActionChoice behavior_action(const BehaviorPolicy& policy, const RetrievalEnv& env,
                             const EnvState& state, Rng& rng);

// Deterministic action of a fixed_k / heuristic policy (the eps-greedy base).
int base_action(const BehaviorPolicy& policy, const RetrievalEnv& env, const EnvState& state);

struct Transition {
  std::vector<double> observation;       // 768, recomputable
  int action = 0;
  double reward = 0.0;                   // step cost baked in at collection
  std::vector<double> next_observation;  // 768
  bool done = false;
  double behavior_propensity = 1.0;
  int episode_id = 0;
  int step_index = 0;
  int request_id = 0;
  std::vector<int> retrieved_ids_so_far;  // before the action
};

struct Episode {
  int request_id = 0;
  std::string behavior_label;
  std::vector<Transition> transitions;
  double total_return = 0.0;
  int steps_total = 0;
  Decision decision = Decision::pend;
  bool correct = false;
};

struct MixtureEntry {
  BehaviorPolicy policy;
  double weight = 1.0;
};

// FixedK(3), FixedK(5), Heuristic(0.8), EpsGreedy(FixedK(5), 0.1),
// EpsGreedy(Heuristic(0.8), 0.3), equally weighted.
std::vector<MixtureEntry> default_mixture();

struct DatasetHeader {
  std::uint64_t seed = 0;
  double lambda = 0.1;
  nlohmann::json mixture;
  std::string corpus_hash;
  int corpus_size = 0;
  int n_episodes = 0;
  int n_transitions = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Episode> episodes;

  // (episode index, step index) for every transition; built lazily.
  const std::vector<std::pair<int, int>>& flat() const;
  const Transition& transition(std::size_t flat_index) const;
  int n_transitions() const;

 private:
  mutable std::vector<std::pair<int, int>> flat_;
};

// Legal-action mask (11 slots) at the transition's state / successor state.
// Retrieval slots close when the horizon leaves room for only the forced stop.
std::array<bool, kTopK + 1> legal_mask_at(const Transition& t, int corpus_size);
std::array<bool, kTopK + 1> legal_mask_after(const Transition& t, int corpus_size);

// Rolls out n_episodes over the request list (episode i uses request i mod n),
// sampling one mixture policy per episode. Deterministic per seed; episode
// RNG streams are independent, so ordering is canonical by episode index.
Dataset collect_dataset(const Corpus& corpus, const std::vector<PARequest>& requests,
                        std::uint64_t seed, int n_episodes,
                        const std::vector<MixtureEntry>& mixture, double lambda);

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

// Re-simulates every episode and checks stored observations, rewards,
// propensities, and decisions against freshly computed values. Throws on any
// drift.
void verify_dataset(const Dataset& dataset, const Corpus& corpus,
                    const std::vector<PARequest>& requests);

}  // namespace parl
