#include "parl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "parl/adam.hpp"
#include "parl/stats.hpp"
#include "parl/trainers.hpp"

namespace parl {

using nlohmann::json;

json EvalReport::to_json() const {
  json j;
  j["policy"] = policy_label;
  j["lambda"] = lambda;
  j["accuracy"] = accuracy;
  j["mean_return"] = mean_return;
  j["mean_steps"] = mean_steps;
  j["per_procedure_accuracy"] = per_procedure_accuracy;
  json eps = json::array();
  for (const EpisodeRecord& e : episodes) {
    eps.push_back({{"request_id", e.request_id},
                   {"cpt", e.cpt},
                   {"correct", e.correct},
                   {"steps", e.steps},
                   {"return", e.episode_return},
                   {"decision", to_string(e.decision)}});
  }
  j["episodes"] = eps;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.policy_label = j.at("policy").get<std::string>();
  r.lambda = j.at("lambda").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_return = j.at("mean_return").get<double>();
  r.mean_steps = j.at("mean_steps").get<double>();
  r.per_procedure_accuracy =
      j.at("per_procedure_accuracy").get<std::map<std::string, double>>();
  for (const json& e : j.at("episodes")) {
    EpisodeRecord rec;
    rec.request_id = e.at("request_id").get<int>();
    rec.cpt = e.at("cpt").get<std::string>();
    rec.correct = e.at("correct").get<bool>();
    rec.steps = e.at("steps").get<int>();
    rec.episode_return = e.at("return").get<double>();
    rec.decision = decision_from_string(e.at("decision").get<std::string>());
    r.episodes.push_back(std::move(rec));
  }
  return r;
}

EvalReport evaluate_policy(const Corpus& corpus, const std::vector<PARequest>& requests,
                           const PolicyArtifact& policy, double lambda, std::uint64_t seed) {
  if (requests.empty()) throw std::invalid_argument("evaluate_policy: no requests");
  RetrievalEnv env(corpus, lambda);

  EvalReport report;
  report.policy_label = policy.label();
  report.lambda = lambda;

  std::map<std::string, std::pair<int, int>> per_proc;  // cpt -> (correct, total)
  double return_sum = 0.0, steps_sum = 0.0;
  int correct_count = 0;

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const PARequest& request = requests[i];
    Rng rng(derive_seed(seed, "eval-episode", i));
    EnvState state = env.reset(request);
    double terminal = 0.0;
    Decision decision = Decision::pend;
    while (true) {
      const int action = policy.act(env, state, &rng);
      const StepOutcome out = env.step(state, action, request);
      if (out.done) {
        terminal = out.reward;
        decision = *out.decision;
        state = out.next_state;
        break;
      }
      state = out.next_state;
    }
    EpisodeRecord rec;
    rec.request_id = request.request_id;
    rec.cpt = request.cpt;
    rec.steps = state.actions_taken;
    rec.episode_return = episode_return(terminal, rec.steps - 1, lambda);
    rec.correct = terminal > 0.0;
    rec.decision = decision;

    return_sum += rec.episode_return;
    steps_sum += rec.steps;
    correct_count += rec.correct ? 1 : 0;
    auto& [c, t] = per_proc[request.cpt];
    c += rec.correct ? 1 : 0;
    t += 1;
    report.episodes.push_back(std::move(rec));
  }

  const double n = static_cast<double>(requests.size());
  report.accuracy = correct_count / n;
  report.mean_return = return_sum / n;
  report.mean_steps = steps_sum / n;
  for (const auto& [cpt, ct] : per_proc) {
    report.per_procedure_accuracy[cpt] = static_cast<double>(ct.first) / ct.second;
  }
  return report;
}

double wis_estimate(const Corpus& corpus, const std::vector<PARequest>& requests,
                    const Dataset& dataset, const PolicyArtifact& policy, double clip_lo,
                    double clip_hi, std::uint64_t seed) {
  if (dataset.episodes.empty()) throw std::invalid_argument("wis_estimate: empty dataset");
  std::unordered_map<int, const PARequest*> by_id;
  for (const PARequest& r : requests) by_id[r.request_id] = &r;

  RetrievalEnv env(corpus, dataset.header.lambda);
  double weight_sum = 0.0, weighted_return = 0.0;
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e) {
    const Episode& ep = dataset.episodes[e];
    const auto it = by_id.find(ep.request_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("wis_estimate: unknown request " + std::to_string(ep.request_id));
    }
    Rng rng(derive_seed(seed, "wis-episode", e));
    EnvState state = env.reset(*it->second);
    double w = 1.0;
    for (const Transition& t : ep.transitions) {
      const int greedy = policy.act(env, state, &rng);
      const double ratio = (greedy == t.action ? 1.0 : 0.0) / t.behavior_propensity;
      w *= std::clamp(ratio, clip_lo, clip_hi);
      if (!t.done) state = env.step(state, t.action, *it->second).next_state;
    }
    weight_sum += w;
    weighted_return += w * ep.total_return;
  }
  return weighted_return / weight_sum;
}

double fqe_estimate(const Dataset& ds, const PolicyArtifact& policy, const FqeConfig& cfg,
                    std::uint64_t seed) {
  if (ds.n_transitions() == 0) throw std::invalid_argument("fqe_estimate: empty dataset");
  if (!policy.net) throw std::invalid_argument("fqe_estimate: requires a net-backed policy");

  const MlpDims dims{2 * kEmbeddingDim, 256, 256, kTopK + 1};
  Mlp q = Mlp::init(dims, derive_seed(seed, "fqe-init"));
  Mlp target = q;
  AdamState adam(q.flat().size(), cfg.lr);
  Rng rng(derive_seed(seed, "fqe-batches"));

  const int out = dims.out;
  std::vector<double> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.target_sync_every > 0 && epoch % cfg.target_sync_every == 0) target = q;

    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(ds.flat().size()));
    const TransitionBatch b = gather_batch(ds, idx);

    BatchCache cache, target_cache;
    forward_batch(q, b.obs, b.n, cache);
    forward_batch(target, b.next_obs, b.n, target_cache);

    std::vector<double> dout(static_cast<std::size_t>(b.n) * out, 0.0);
    double loss = 0.0;
    for (int i = 0; i < b.n; ++i) {
      double bootstrap = 0.0;
      if (!b.done[static_cast<std::size_t>(i)]) {
        const std::span<const double> next_obs{b.next_obs.data() + static_cast<std::size_t>(i) * dims.in,
                                               static_cast<std::size_t>(dims.in)};
        const int pi_a = policy.act_from_observation(next_obs, b.legal_next[static_cast<std::size_t>(i)]);
        bootstrap = target_cache.out[static_cast<std::size_t>(i) * out + pi_a];
      }
      const double y = b.rewards[static_cast<std::size_t>(i)] + cfg.gamma * bootstrap;
      const int a = b.actions[static_cast<std::size_t>(i)];
      const double diff = cache.out[static_cast<std::size_t>(i) * out + a] - y;
      loss += diff * diff;
      dout[static_cast<std::size_t>(i) * out + a] = 2.0 * diff / b.n;
    }
    if (!std::isfinite(loss)) throw std::runtime_error("divergence detected: FQE loss");
    backward_batch(q, cache, dout, grads);
    adam_step(q.flat(), grads, adam, cfg.clip);
  }

  // Mean Q(s0, pi(s0)) over episode-initial states.
  double total = 0.0;
  for (const Episode& ep : ds.episodes) {
    const Transition& first = ep.transitions.front();
    const std::vector<double> scores = q.forward(first.observation);
    const int a =
        policy.act_from_observation(first.observation, legal_mask_at(first, ds.header.corpus_size));
    total += scores[static_cast<std::size_t>(a)];
  }
  return total / static_cast<double>(ds.episodes.size());
}

json SignificanceReport::to_json() const {
  json j;
  j["comparison"] = comparison;
  j["delta_accuracy_pp"] = delta_accuracy_pp;
  j["t_statistic"] = t_statistic;
  j["p_value"] = p_valid ? json(p_value) : json();
  j["p_valid"] = p_valid;
  j["ci95_pp"] = ci95_pp;
  j["n"] = n;
  return j;
}

SignificanceReport paired_t_test(const std::vector<int>& correct_a,
                                 const std::vector<int>& correct_b, std::uint64_t seed,
                                 int bootstrap_resamples) {
  if (correct_a.size() != correct_b.size()) {
    throw std::invalid_argument("paired_t_test: length mismatch");
  }
  const std::size_t n = correct_a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");

  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = static_cast<double>(correct_a[i]) - static_cast<double>(correct_b[i]);
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double di : d) ss += (di - mean) * (di - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  SignificanceReport rep;
  rep.n = static_cast<int>(n);
  rep.delta_accuracy_pp = mean * 100.0;
  if (sd == 0.0) {
    // All paired differences identical: the statistic is undefined; reported
    // as not-applicable.
    rep.p_valid = false;
    rep.t_statistic = 0.0;
    rep.p_value = 1.0;
  } else {
    rep.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    rep.p_value = student_t_two_sided_p(rep.t_statistic, static_cast<double>(n - 1));
    rep.p_valid = true;
  }

  // Seeded paired bootstrap, percentile method, in percentage points.
  Rng rng(derive_seed(seed, "bootstrap"));
  std::vector<double> resampled(static_cast<std::size_t>(bootstrap_resamples));
  for (int r = 0; r < bootstrap_resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += d[static_cast<std::size_t>(rng.uniform_int(n))];
    resampled[static_cast<std::size_t>(r)] = 100.0 * sum / static_cast<double>(n);
  }
  std::sort(resampled.begin(), resampled.end());
  auto percentile = [&resampled](double p) {
    const std::size_t m = resampled.size();
    const std::size_t idx = std::min(
        m - 1, static_cast<std::size_t>(std::ceil(p * static_cast<double>(m))) == 0
                   ? 0
                   : static_cast<std::size_t>(std::ceil(p * static_cast<double>(m))) - 1);
    return resampled[idx];
  };
  rep.ci95_pp = {percentile(0.025), percentile(0.975)};
  return rep;
}

std::vector<std::size_t> pareto_frontier(const std::vector<std::pair<double, double>>& points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (j == i) continue;
      const bool no_worse =
          points[j].first <= points[i].first && points[j].second >= points[i].second;
      const bool strictly_better =
          points[j].first < points[i].first || points[j].second > points[i].second;
      dominated = no_worse && strictly_better;
    }
    if (!dominated) keep.push_back(i);
  }
  return keep;
}

json PerProcedureTable::to_json() const {
  json j;
  j["procedures"] = procedures;
  j["policies"] = policies;
  j["accuracy"] = accuracy;
  j["hard_procedures"] = hard_procedures;
  return j;
}

PerProcedureTable per_procedure_report(const std::vector<EvalReport>& reports,
                                       const std::vector<PolicyKind>& kinds) {
  if (reports.empty()) throw std::invalid_argument("per_procedure_report: no reports");
  if (kinds.size() != reports.size()) {
    throw std::invalid_argument("per_procedure_report: kinds/reports size mismatch");
  }

  PerProcedureTable table;
  std::set<std::string> procs;
  for (const auto& [cpt, acc] : reports[0].per_procedure_accuracy) procs.insert(cpt);
  for (const EvalReport& r : reports) {
    std::set<std::string> here;
    for (const auto& [cpt, acc] : r.per_procedure_accuracy) here.insert(cpt);
    if (here != procs) throw std::invalid_argument("per_procedure_report: reports disagree on test set");
  }
  table.procedures.assign(procs.begin(), procs.end());
  for (const EvalReport& r : reports) table.policies.push_back(r.policy_label);

  for (const EvalReport& r : reports) {
    std::vector<double> row;
    for (const std::string& cpt : table.procedures) {
      row.push_back(r.per_procedure_accuracy.at(cpt));
    }
    table.accuracy.push_back(std::move(row));
  }

  auto learned = [](PolicyKind k) {
    return k == PolicyKind::bc || k == PolicyKind::cql || k == PolicyKind::iql ||
           k == PolicyKind::dpo;
  };
  for (std::size_t p = 0; p < table.procedures.size(); ++p) {
    bool any_learned = false;
    bool all_below = true;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (!learned(kinds[i])) continue;
      any_learned = true;
      if (table.accuracy[i][p] >= 1.0) all_below = false;
    }
    if (any_learned && all_below) table.hard_procedures.push_back(table.procedures[p]);
  }
  return table;
}

}  // namespace parl
