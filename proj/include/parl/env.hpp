#pragma once

#include <optional>
#include <set>
#include <vector>

#include "parl/corpus.hpp"
#include "parl/vec.hpp"

namespace parl {

inline constexpr int kTopK = 10;          // candidate slots per step
inline constexpr int kHorizon = 20;       // max total actions per episode
inline constexpr int kStopAction = kTopK; // action index that terminates

struct EnvState {
  Embedding request_embedding;            // e_req
  Embedding history_mean;                 // mean of retrieved chunk embeddings
  std::vector<int> retrieved_ids;         // in retrieval order
  int actions_taken = 0;
  std::vector<int> candidates;            // <= K chunk ids, best first
  std::vector<double> candidate_scores;   // cosine(e_req, candidate)

  // concat(e_req, history_mean), dimension 768
  std::vector<double> observation() const;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  std::optional<Decision> decision;       // present iff done
  EnvState next_state;
};

// Finite-horizon retrieval MDP over an immutable corpus. One instance drives
// one episode; many instances over the same corpus may run in parallel.
class RetrievalEnv {
 public:
  RetrievalEnv(const Corpus& corpus, double lambda);

  EnvState reset(const PARequest& request);

  // Retrieval slots are legal while candidates remain and at least two
  // actions fit in the horizon; stop is always legal. At actions_taken ==
  // H-1 only stop remains, forcing termination with an oracle decision.
  std::set<int> legal_actions(const EnvState& state) const;

  StepOutcome step(const EnvState& state, int action, const PARequest& request) const;

  double lambda() const { return lambda_; }
  const Corpus& corpus() const { return corpus_; }

 private:
  void fill_candidates(EnvState& state) const;

  const Corpus& corpus_;
  double lambda_;
  // Static ranking of all chunks for the episode's request (cosine to e_req
  // does not depend on the retrieval history).
  std::vector<int> ranking_;
  std::vector<double> ranking_scores_;
};

// G = r_T - lambda * n_retrievals (gamma = 1).
double episode_return(double terminal_reward, int n_retrievals, double lambda);

}  // namespace parl
