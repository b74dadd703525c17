#include "parl/policy.hpp"

#include <sstream>
#include <stdexcept>

#include "parl/checkpoint.hpp"

namespace parl {

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::bc: return "bc";
    case PolicyKind::cql: return "cql";
    case PolicyKind::iql: return "iql";
    case PolicyKind::dpo: return "dpo";
    case PolicyKind::fixedk: return "fixedk";
    case PolicyKind::heuristic: return "heuristic";
    case PolicyKind::random: return "random";
  }
  throw std::logic_error("bad PolicyKind");
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "bc") return PolicyKind::bc;
  if (s == "cql") return PolicyKind::cql;
  if (s == "iql") return PolicyKind::iql;
  if (s == "dpo") return PolicyKind::dpo;
  if (s == "fixedk") return PolicyKind::fixedk;
  if (s == "heuristic") return PolicyKind::heuristic;
  if (s == "random") return PolicyKind::random;
  throw std::invalid_argument("unknown policy kind: " + s);
}

std::string PolicyArtifact::label() const {
  switch (kind) {
    case PolicyKind::fixedk: return "fixedk" + std::to_string(k);
    case PolicyKind::heuristic: {
      std::ostringstream os;
      os << "heuristic" << threshold;
      return os.str();
    }
    default: return to_string(kind);
  }
}

int PolicyArtifact::act(const RetrievalEnv& env, const EnvState& state, Rng* rng) const {
  const std::set<int> legal = env.legal_actions(state);
  const bool can_retrieve = legal.count(0) > 0;
  switch (kind) {
    case PolicyKind::fixedk:
      return (can_retrieve && static_cast<int>(state.retrieved_ids.size()) < k) ? 0 : kStopAction;
    case PolicyKind::heuristic:
      return (can_retrieve && !state.candidate_scores.empty() &&
              state.candidate_scores[0] >= threshold)
                 ? 0
                 : kStopAction;
    case PolicyKind::random: {
      if (!rng) throw std::invalid_argument("random policy needs an RNG");
      std::vector<int> actions(legal.begin(), legal.end());
      return actions[static_cast<std::size_t>(rng->uniform_index(actions.size()))];
    }
    default: {
      if (!net) throw std::logic_error("learned policy without network");
      const std::vector<double> scores = net->forward(state.observation());
      int best = -1;
      for (int a : legal) {
        if (best < 0 || scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(best)]) {
          best = a;
        }
      }
      return best;
    }
  }
}

int PolicyArtifact::act_from_observation(std::span<const double> observation,
                                         const std::array<bool, kTopK + 1>& legal) const {
  if (!net) throw std::logic_error("act_from_observation requires a net-backed policy");
  const std::vector<double> scores = net->forward(observation);
  int best = -1;
  for (int a = 0; a <= kTopK; ++a) {
    if (!legal[static_cast<std::size_t>(a)]) continue;
    if (best < 0 || scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(best)]) {
      best = a;
    }
  }
  if (best < 0) throw std::logic_error("act_from_observation: empty legal mask");
  return best;
}

PolicyArtifact fixedk_policy(int k) {
  PolicyArtifact p;
  p.kind = PolicyKind::fixedk;
  p.k = k;
  return p;
}

PolicyArtifact heuristic_policy(double threshold) {
  PolicyArtifact p;
  p.kind = PolicyKind::heuristic;
  p.threshold = threshold;
  return p;
}

PolicyArtifact random_policy() {
  PolicyArtifact p;
  p.kind = PolicyKind::random;
  return p;
}

bool is_builtin_policy_spec(const std::string& spec) {
  return spec == "random" || spec.rfind("fixedk:", 0) == 0 || spec.rfind("heuristic:", 0) == 0;
}

PolicyArtifact builtin_policy_from_spec(const std::string& spec) {
  if (spec == "random") return random_policy();
  if (spec.rfind("fixedk:", 0) == 0) return fixedk_policy(std::stoi(spec.substr(7)));
  if (spec.rfind("heuristic:", 0) == 0) return heuristic_policy(std::stod(spec.substr(10)));
  throw std::invalid_argument("not a builtin policy spec: " + spec);
}

void save_policy(const std::string& path, const PolicyArtifact& artifact,
                 const nlohmann::json& extra_meta) {
  Checkpoint ckpt;
  ckpt.meta = extra_meta;
  ckpt.meta["kind"] = to_string(artifact.kind);
  ckpt.meta["k"] = artifact.k;
  ckpt.meta["threshold"] = artifact.threshold;
  ckpt.meta["config"] = artifact.config;
  ckpt.meta["corpus_hash"] = artifact.corpus_hash;
  ckpt.net = artifact.net;
  save_checkpoint(path, ckpt);
}

PolicyArtifact load_policy(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  PolicyArtifact p;
  p.kind = policy_kind_from_string(ckpt.meta.at("kind").get<std::string>());
  p.k = ckpt.meta.value("k", 0);
  p.threshold = ckpt.meta.value("threshold", 0.0);
  p.config = ckpt.meta.value("config", nlohmann::json::object());
  p.corpus_hash = ckpt.meta.value("corpus_hash", "");
  p.net = ckpt.net;
  return p;
}

}  // namespace parl
