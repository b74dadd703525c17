#pragma once

#include <array>
#include <optional>
#include <string>

#include "json.hpp"
#include "parl/env.hpp"
#include "parl/mlp.hpp"
#include "parl/rng.hpp"

namespace parl {

enum class PolicyKind { bc, cql, iql, dpo, fixedk, heuristic, random };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);

// A deployable policy: a trained net (bc/cql/iql/dpo) or a rule baseline.
// act() always returns a legal action: scores are argmaxed under the
// environment's legal-action mask.
struct PolicyArtifact {
  PolicyKind kind = PolicyKind::fixedk;
  std::optional<Mlp> net;
  int k = 0;                // fixedk
  double threshold = 0.0;   // heuristic
  nlohmann::json config;    // training config snapshot
  std::string corpus_hash;  // provenance of the training corpus

  std::string label() const;

  int act(const RetrievalEnv& env, const EnvState& state, Rng* rng = nullptr) const;

  // Greedy action from a raw observation under an explicit mask; defined for
  // net-backed kinds only (used by FQE, which has no environment state).
  int act_from_observation(std::span<const double> observation,
                           const std::array<bool, kTopK + 1>& legal) const;
};

PolicyArtifact fixedk_policy(int k);
PolicyArtifact heuristic_policy(double threshold);
PolicyArtifact random_policy();

// "fixedk:5", "heuristic:0.8", "random", or a checkpoint path.
bool is_builtin_policy_spec(const std::string& spec);
PolicyArtifact builtin_policy_from_spec(const std::string& spec);

void save_policy(const std::string& path, const PolicyArtifact& artifact,
                 const nlohmann::json& extra_meta = nlohmann::json::object());
PolicyArtifact load_policy(const std::string& path);

}  // namespace parl
