#include "parl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace parl {

using nlohmann::json;

BehaviorPolicy BehaviorPolicy::random() {
  BehaviorPolicy p;
  p.kind = Kind::random;
  return p;
}

BehaviorPolicy BehaviorPolicy::fixed_k(int k) {
  if (k < 0) throw std::invalid_argument("fixed_k: k must be non-negative");
  BehaviorPolicy p;
  p.kind = Kind::fixed_k;
  p.k = k;
  return p;
}

BehaviorPolicy BehaviorPolicy::heuristic(double threshold) {
  BehaviorPolicy p;
  p.kind = Kind::heuristic;
  p.threshold = threshold;
  return p;
}

BehaviorPolicy BehaviorPolicy::eps_greedy(BehaviorPolicy base_policy, double eps) {
  if (base_policy.kind != Kind::fixed_k && base_policy.kind != Kind::heuristic) {
    throw std::invalid_argument("eps_greedy: base must be deterministic (fixed_k or heuristic)");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("eps_greedy: eps out of range");
  BehaviorPolicy p;
  p.kind = Kind::eps_greedy;
  p.eps = eps;
  p.base = std::make_shared<BehaviorPolicy>(std::move(base_policy));
  return p;
}

namespace {

std::string format_g(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string BehaviorPolicy::label() const {
  switch (kind) {
    case Kind::random: return "random";
    case Kind::fixed_k: return "fixedk" + std::to_string(k);
    case Kind::heuristic: return "heuristic" + format_g(threshold);
    case Kind::eps_greedy: return "eps(" + base->label() + "," + format_g(eps) + ")";
  }
  throw std::logic_error("bad BehaviorPolicy kind");
}

json BehaviorPolicy::to_json() const {
  json j;
  switch (kind) {
    case Kind::random:
      j["kind"] = "random";
      break;
    case Kind::fixed_k:
      j["kind"] = "fixed_k";
      j["k"] = k;
      break;
    case Kind::heuristic:
      j["kind"] = "heuristic";
      j["threshold"] = threshold;
      break;
    case Kind::eps_greedy:
      j["kind"] = "eps_greedy";
      j["eps"] = eps;
      j["base"] = base->to_json();
      break;
  }
  return j;
}

BehaviorPolicy BehaviorPolicy::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "random") return random();
  if (kind == "fixed_k") return fixed_k(j.at("k").get<int>());
  if (kind == "heuristic") return heuristic(j.at("threshold").get<double>());
  if (kind == "eps_greedy") {
    return eps_greedy(from_json(j.at("base")), j.at("eps").get<double>());
  }
  throw std::invalid_argument("unknown behavior policy kind: " + kind);
}

BehaviorPolicy BehaviorPolicy::from_label(const std::string& label) {
  if (label == "random") return random();
  if (label.rfind("fixedk", 0) == 0) return fixed_k(std::stoi(label.substr(6)));
  if (label.rfind("heuristic", 0) == 0) return heuristic(std::stod(label.substr(9)));
  if (label.rfind("eps(", 0) == 0 && label.back() == ')') {
    const std::string inner = label.substr(4, label.size() - 5);
    const std::size_t comma = inner.rfind(',');
    if (comma != std::string::npos) {
      return eps_greedy(from_label(inner.substr(0, comma)), std::stod(inner.substr(comma + 1)));
    }
  }
  throw std::invalid_argument("unknown behavior policy label: " + label);
}

int base_action(const BehaviorPolicy& policy, const RetrievalEnv& env, const EnvState& state) {
  const std::set<int> legal = env.legal_actions(state);
  const bool can_retrieve = legal.count(0) > 0;
  switch (policy.kind) {
    case BehaviorPolicy::Kind::fixed_k:
      return (can_retrieve && static_cast<int>(state.retrieved_ids.size()) < policy.k) ? 0
                                                                                       : kStopAction;
    case BehaviorPolicy::Kind::heuristic:
      return (can_retrieve && !state.candidate_scores.empty() &&
              state.candidate_scores[0] >= policy.threshold)
                 ? 0
                 : kStopAction;
    default:
      throw std::invalid_argument("base_action: policy is not deterministic");
  }
}

ActionChoice behavior_action(const BehaviorPolicy& policy, const RetrievalEnv& env,
                             const EnvState& state, Rng& rng) {
  const std::set<int> legal = env.legal_actions(state);
  if (legal.empty()) throw std::logic_error("behavior_action: no legal actions");

  switch (policy.kind) {
    case BehaviorPolicy::Kind::fixed_k:
    case BehaviorPolicy::Kind::heuristic:
      return {base_action(policy, env, state), 1.0};
    case BehaviorPolicy::Kind::random: {
      std::vector<int> actions(legal.begin(), legal.end());
      const int a = actions[static_cast<std::size_t>(rng.uniform_index(actions.size()))];
      return {a, 1.0 / static_cast<double>(actions.size())};
    }
    case BehaviorPolicy::Kind::eps_greedy: {
      const int greedy = base_action(*policy.base, env, state);
      int chosen;
      if (rng.uniform01() < policy.eps) {
        std::vector<int> actions(legal.begin(), legal.end());
        chosen = actions[static_cast<std::size_t>(rng.uniform_index(actions.size()))];
      } else {
        chosen = greedy;
      }
      const double uniform_part = policy.eps / static_cast<double>(legal.size());
      const double propensity = (chosen == greedy) ? (1.0 - policy.eps) + uniform_part : uniform_part;
      return {chosen, propensity};
    }
  }
  throw std::logic_error("bad BehaviorPolicy kind");
}

std::vector<MixtureEntry> default_mixture() {
  return {
      {BehaviorPolicy::fixed_k(3), 1.0},
      {BehaviorPolicy::fixed_k(5), 1.0},
      {BehaviorPolicy::heuristic(0.8), 1.0},
      {BehaviorPolicy::eps_greedy(BehaviorPolicy::fixed_k(5), 0.1), 1.0},
      {BehaviorPolicy::eps_greedy(BehaviorPolicy::heuristic(0.8), 0.3), 1.0},
  };
}

const std::vector<std::pair<int, int>>& Dataset::flat() const {
  if (flat_.empty()) {
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      for (std::size_t t = 0; t < episodes[e].transitions.size(); ++t) {
        flat_.push_back({static_cast<int>(e), static_cast<int>(t)});
      }
    }
  }
  return flat_;
}

const Transition& Dataset::transition(std::size_t flat_index) const {
  const auto& [e, t] = flat().at(flat_index);
  return episodes[static_cast<std::size_t>(e)].transitions[static_cast<std::size_t>(t)];
}

int Dataset::n_transitions() const { return static_cast<int>(flat().size()); }

std::array<bool, kTopK + 1> legal_mask_at(const Transition& t, int corpus_size) {
  std::array<bool, kTopK + 1> mask{};
  mask[kStopAction] = true;
  if (t.step_index < kHorizon - 1) {
    const int remaining = corpus_size - static_cast<int>(t.retrieved_ids_so_far.size());
    const int slots = std::min(kTopK, std::max(0, remaining));
    for (int i = 0; i < slots; ++i) mask[static_cast<std::size_t>(i)] = true;
  }
  return mask;
}

std::array<bool, kTopK + 1> legal_mask_after(const Transition& t, int corpus_size) {
  std::array<bool, kTopK + 1> mask{};
  mask[kStopAction] = true;
  const int next_actions_taken = t.step_index + 1;
  if (next_actions_taken < kHorizon - 1) {
    const int retrieved_next =
        static_cast<int>(t.retrieved_ids_so_far.size()) + (t.action < kStopAction ? 1 : 0);
    const int remaining = corpus_size - retrieved_next;
    const int slots = std::min(kTopK, std::max(0, remaining));
    for (int i = 0; i < slots; ++i) mask[static_cast<std::size_t>(i)] = true;
  }
  return mask;
}

Dataset collect_dataset(const Corpus& corpus, const std::vector<PARequest>& requests,
                        std::uint64_t seed, int n_episodes,
                        const std::vector<MixtureEntry>& mixture, double lambda) {
  if (requests.empty()) throw std::invalid_argument("collect_dataset: no requests");
  if (n_episodes < 1) throw std::invalid_argument("collect_dataset: n_episodes must be >= 1");
  std::vector<double> weights;
  double wsum = 0.0;
  for (const MixtureEntry& m : mixture) {
    if (m.weight < 0.0) throw std::invalid_argument("collect_dataset: negative mixture weight");
    weights.push_back(m.weight);
    wsum += m.weight;
  }
  if (wsum <= 0.0) throw std::invalid_argument("collect_dataset: mixture weights sum to zero");

  Dataset ds;
  ds.header.seed = seed;
  ds.header.lambda = lambda;
  {
    json jm = json::array();
    for (const MixtureEntry& m : mixture) {
      jm.push_back({{"policy", m.policy.to_json()}, {"weight", m.weight}});
    }
    ds.header.mixture = jm;
  }
  {
    std::ostringstream os;
    os << std::hex << corpus.content_hash();
    ds.header.corpus_hash = os.str();
  }
  ds.header.corpus_size = static_cast<int>(corpus.size());
  ds.header.n_episodes = n_episodes;

  RetrievalEnv env(corpus, lambda);
  int transition_count = 0;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(derive_seed(seed, "collect", static_cast<std::uint64_t>(e)));
    const PARequest& request = requests[static_cast<std::size_t>(e) % requests.size()];
    const MixtureEntry& entry = mixture[static_cast<std::size_t>(rng.weighted_index(weights))];

    Episode ep;
    ep.request_id = request.request_id;
    ep.behavior_label = entry.policy.label();

    EnvState state = env.reset(request);
    while (true) {
      const ActionChoice choice = behavior_action(entry.policy, env, state, rng);
      const StepOutcome outcome = env.step(state, choice.action, request);

      Transition tr;
      tr.observation = state.observation();
      tr.action = choice.action;
      tr.reward = outcome.reward;
      tr.next_observation = outcome.next_state.observation();
      tr.done = outcome.done;
      tr.behavior_propensity = choice.propensity;
      tr.episode_id = e;
      tr.step_index = state.actions_taken;
      tr.request_id = request.request_id;
      tr.retrieved_ids_so_far = state.retrieved_ids;
      ep.transitions.push_back(std::move(tr));

      if (outcome.done) {
        ep.decision = *outcome.decision;
        break;
      }
      state = outcome.next_state;
    }
    ep.steps_total = static_cast<int>(ep.transitions.size());
    ep.correct = ep.decision == request.ground_truth;
    const double terminal = ep.transitions.back().reward;
    ep.total_return = episode_return(terminal, ep.steps_total - 1, lambda);
    transition_count += ep.steps_total;
    ds.episodes.push_back(std::move(ep));
  }
  ds.header.n_transitions = transition_count;
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  json header;
  header["format"] = "parl-dataset";
  header["version"] = 1;
  header["seed"] = ds.header.seed;
  header["lambda"] = ds.header.lambda;
  header["mixture"] = ds.header.mixture;
  header["corpus_hash"] = ds.header.corpus_hash;
  header["corpus_size"] = ds.header.corpus_size;
  header["counts"] = {{"episodes", ds.header.n_episodes}, {"transitions", ds.header.n_transitions}};
  out << header.dump() << '\n';

  for (const Episode& ep : ds.episodes) {
    for (const Transition& t : ep.transitions) {
      json j;
      j["observation"] = t.observation;
      j["action"] = t.action;
      j["reward"] = t.reward;
      j["next_observation"] = t.next_observation;
      j["done"] = t.done;
      j["behavior_propensity"] = t.behavior_propensity;
      j["episode_id"] = t.episode_id;
      j["step_index"] = t.step_index;
      j["request_id"] = t.request_id;
      j["retrieved_ids_so_far"] = t.retrieved_ids_so_far;
      j["behavior"] = ep.behavior_label;
      out << j.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: missing header in " + path);
  const json header = json::parse(line);
  if (header.value("format", "") != "parl-dataset") {
    throw std::runtime_error("dataset: bad header in " + path);
  }

  Dataset ds;
  ds.header.seed = header.at("seed").get<std::uint64_t>();
  ds.header.lambda = header.at("lambda").get<double>();
  ds.header.mixture = header.at("mixture");
  ds.header.corpus_hash = header.at("corpus_hash").get<std::string>();
  ds.header.corpus_size = header.at("corpus_size").get<int>();
  ds.header.n_episodes = header.at("counts").at("episodes").get<int>();
  ds.header.n_transitions = header.at("counts").at("transitions").get<int>();

  std::unordered_map<int, std::size_t> episode_index;
  int transitions = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Transition t;
    t.observation = j.at("observation").get<std::vector<double>>();
    t.action = j.at("action").get<int>();
    t.reward = j.at("reward").get<double>();
    t.next_observation = j.at("next_observation").get<std::vector<double>>();
    t.done = j.at("done").get<bool>();
    t.behavior_propensity = j.at("behavior_propensity").get<double>();
    t.episode_id = j.at("episode_id").get<int>();
    t.step_index = j.at("step_index").get<int>();
    t.request_id = j.at("request_id").get<int>();
    t.retrieved_ids_so_far = j.at("retrieved_ids_so_far").get<std::vector<int>>();

    auto it = episode_index.find(t.episode_id);
    if (it == episode_index.end()) {
      episode_index[t.episode_id] = ds.episodes.size();
      Episode ep;
      ep.request_id = t.request_id;
      ep.behavior_label = j.at("behavior").get<std::string>();
      ds.episodes.push_back(std::move(ep));
      it = episode_index.find(t.episode_id);
    }
    ds.episodes[it->second].transitions.push_back(std::move(t));
    ++transitions;
  }
  if (transitions != ds.header.n_transitions ||
      static_cast<int>(ds.episodes.size()) != ds.header.n_episodes) {
    throw std::runtime_error("dataset: counts in header do not match contents of " + path);
  }

  for (Episode& ep : ds.episodes) {
    ep.steps_total = static_cast<int>(ep.transitions.size());
    const Transition& last = ep.transitions.back();
    if (!last.done) throw std::runtime_error("dataset: episode without terminal transition");
    ep.total_return = episode_return(last.reward, ep.steps_total - 1, ds.header.lambda);
    ep.correct = last.reward > 0.0;
    // The stored decision is implicit; verify_dataset recovers and checks it.
  }
  return ds;
}

void verify_dataset(const Dataset& ds, const Corpus& corpus,
                    const std::vector<PARequest>& requests) {
  std::unordered_map<int, const PARequest*> by_id;
  for (const PARequest& r : requests) by_id[r.request_id] = &r;

  {
    std::ostringstream os;
    os << std::hex << corpus.content_hash();
    if (os.str() != ds.header.corpus_hash) {
      throw std::runtime_error("verify_dataset: corpus hash mismatch");
    }
  }

  RetrievalEnv env(corpus, ds.header.lambda);
  for (const Episode& ep : ds.episodes) {
    const auto it = by_id.find(ep.request_id);
    if (it == by_id.end()) {
      throw std::runtime_error("verify_dataset: unknown request " + std::to_string(ep.request_id));
    }
    const PARequest& request = *it->second;
    const BehaviorPolicy policy = BehaviorPolicy::from_label(ep.behavior_label);

    EnvState state = env.reset(request);
    for (const Transition& t : ep.transitions) {
      if (t.observation != state.observation() || t.retrieved_ids_so_far != state.retrieved_ids) {
        throw std::runtime_error("verify_dataset: stored observation drifted from recomputation");
      }
      // Propensity re-derivation: probability the logged policy assigns to
      // the logged action in this state.
      double expect = 1.0;
      const std::set<int> legal = env.legal_actions(state);
      switch (policy.kind) {
        case BehaviorPolicy::Kind::fixed_k:
        case BehaviorPolicy::Kind::heuristic:
          expect = (t.action == base_action(policy, env, state)) ? 1.0 : 0.0;
          break;
        case BehaviorPolicy::Kind::random:
          expect = 1.0 / static_cast<double>(legal.size());
          break;
        case BehaviorPolicy::Kind::eps_greedy: {
          const int greedy = base_action(*policy.base, env, state);
          const double uniform_part = policy.eps / static_cast<double>(legal.size());
          expect = (t.action == greedy) ? (1.0 - policy.eps) + uniform_part : uniform_part;
          break;
        }
      }
      if (std::abs(expect - t.behavior_propensity) > 1e-12 || expect == 0.0) {
        throw std::runtime_error("verify_dataset: propensity mismatch");
      }

      const StepOutcome outcome = env.step(state, t.action, request);
      if (outcome.reward != t.reward || outcome.done != t.done ||
          t.next_observation != outcome.next_state.observation()) {
        throw std::runtime_error("verify_dataset: transition drifted from recomputation");
      }
      state = outcome.next_state;
    }
  }
}

}  // namespace parl
