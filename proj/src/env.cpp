#include "parl/env.hpp"

#include <algorithm>
#include <stdexcept>

namespace parl {

std::vector<double> EnvState::observation() const {
  std::vector<double> obs;
  obs.reserve(2 * kEmbeddingDim);
  obs.insert(obs.end(), request_embedding.begin(), request_embedding.end());
  obs.insert(obs.end(), history_mean.begin(), history_mean.end());
  return obs;
}

RetrievalEnv::RetrievalEnv(const Corpus& corpus, double lambda)
    : corpus_(corpus), lambda_(lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("RetrievalEnv: lambda must be positive");
}

EnvState RetrievalEnv::reset(const PARequest& request) {
  EnvState state;
  state.request_embedding = request_embedding(corpus_, request);
  state.history_mean.assign(kEmbeddingDim, 0.0);
  state.actions_taken = 0;

  ranking_ = ranked_chunks(corpus_, state.request_embedding);
  ranking_scores_.clear();
  ranking_scores_.reserve(ranking_.size());
  for (int id : ranking_) {
    ranking_scores_.push_back(cosine_similarity(state.request_embedding, corpus_.chunk(id).embedding));
  }
  fill_candidates(state);
  return state;
}

void RetrievalEnv::fill_candidates(EnvState& state) const {
  state.candidates.clear();
  state.candidate_scores.clear();
  for (std::size_t i = 0; i < ranking_.size() && state.candidates.size() < kTopK; ++i) {
    const int id = ranking_[i];
    if (std::find(state.retrieved_ids.begin(), state.retrieved_ids.end(), id) !=
        state.retrieved_ids.end()) {
      continue;
    }
    state.candidates.push_back(id);
    state.candidate_scores.push_back(ranking_scores_[i]);
  }
}

std::set<int> RetrievalEnv::legal_actions(const EnvState& state) const {
  std::set<int> legal{kStopAction};
  if (state.actions_taken < kHorizon - 1) {
    for (int i = 0; i < static_cast<int>(state.candidates.size()); ++i) legal.insert(i);
  }
  return legal;
}

StepOutcome RetrievalEnv::step(const EnvState& state, int action, const PARequest& request) const {
  const std::set<int> legal = legal_actions(state);
  if (!legal.count(action)) {
    throw std::invalid_argument("RetrievalEnv::step: illegal action " + std::to_string(action));
  }

  StepOutcome out;
  out.next_state = state;
  out.next_state.actions_taken = state.actions_taken + 1;

  if (action == kStopAction) {
    out.done = true;
    out.decision = oracle_decide(corpus_, request, state.retrieved_ids);
    out.reward = (*out.decision == request.ground_truth) ? 1.0 : -1.0;
    return out;
  }

  const int chunk_id = state.candidates[static_cast<std::size_t>(action)];
  out.next_state.retrieved_ids.push_back(chunk_id);
  std::vector<const Embedding*> retrieved;
  retrieved.reserve(out.next_state.retrieved_ids.size());
  for (int id : out.next_state.retrieved_ids) retrieved.push_back(&corpus_.chunk(id).embedding);
  out.next_state.history_mean = mean_pool(retrieved);
  fill_candidates(out.next_state);
  out.reward = -lambda_;
  out.done = false;
  return out;
}

double episode_return(double terminal_reward, int n_retrievals, double lambda) {
  if (n_retrievals < 0 || n_retrievals > kHorizon - 1) {
    throw std::invalid_argument("episode_return: retrieval count out of range");
  }
  return terminal_reward - lambda * n_retrievals;
}

}  // namespace parl
