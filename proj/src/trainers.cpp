#include "parl/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

#include "parl/adam.hpp"
#include "parl/losses.hpp"

namespace parl {

using nlohmann::json;

json BcConfig::to_json() const {
  return {{"lr", lr}, {"epochs", epochs}, {"batch", batch}, {"clip", clip},
          {"steps_per_epoch", steps_per_epoch}};
}

BcConfig BcConfig::from_json(const json& j) {
  BcConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.clip = j.value("clip", c.clip);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  return c;
}

json CqlConfig::to_json() const {
  return {{"alpha", alpha}, {"gamma", gamma},         {"lr", lr},
          {"epochs", epochs}, {"batch", batch},       {"target_sync_every", target_sync_every},
          {"clip", clip},     {"steps_per_epoch", steps_per_epoch}};
}

CqlConfig CqlConfig::from_json(const json& j) {
  CqlConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.gamma = j.value("gamma", c.gamma);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.target_sync_every = j.value("target_sync_every", c.target_sync_every);
  c.clip = j.value("clip", c.clip);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  return c;
}

json IqlConfig::to_json() const {
  return {{"tau", tau},       {"beta", beta},   {"adv_clamp", adv_clamp},
          {"gamma", gamma},   {"lr", lr},       {"epochs", epochs},
          {"batch", batch},   {"target_sync_every", target_sync_every},
          {"clip", clip},     {"steps_per_epoch", steps_per_epoch}};
}

IqlConfig IqlConfig::from_json(const json& j) {
  IqlConfig c;
  c.tau = j.value("tau", c.tau);
  c.beta = j.value("beta", c.beta);
  c.adv_clamp = j.value("adv_clamp", c.adv_clamp);
  c.gamma = j.value("gamma", c.gamma);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.target_sync_every = j.value("target_sync_every", c.target_sync_every);
  c.clip = j.value("clip", c.clip);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  return c;
}

json DpoConfig::to_json() const {
  return {{"beta", beta},
          {"warmup_epochs", warmup_epochs},
          {"warmup_lr", warmup_lr},
          {"epochs", epochs},
          {"lr", lr},
          {"batch", batch},
          {"clip", clip},
          {"pairing", pairing == DpoPairing::transition ? "transition" : "trajectory"},
          {"steps_per_epoch", steps_per_epoch}};
}

DpoConfig DpoConfig::from_json(const json& j) {
  DpoConfig c;
  c.beta = j.value("beta", c.beta);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.warmup_lr = j.value("warmup_lr", c.warmup_lr);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.clip = j.value("clip", c.clip);
  const std::string p = j.value("pairing", "transition");
  if (p == "transition") {
    c.pairing = DpoPairing::transition;
  } else if (p == "trajectory") {
    c.pairing = DpoPairing::trajectory;
  } else {
    throw std::invalid_argument("unknown DPO pairing mode: " + p);
  }
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  return c;
}

TransitionBatch gather_batch(const Dataset& ds, const std::vector<std::size_t>& flat_indices) {
  TransitionBatch b;
  b.n = static_cast<int>(flat_indices.size());
  const int dim = 2 * kEmbeddingDim;
  b.obs.reserve(static_cast<std::size_t>(b.n) * dim);
  b.next_obs.reserve(static_cast<std::size_t>(b.n) * dim);
  for (std::size_t idx : flat_indices) {
    const Transition& t = ds.transition(idx);
    b.obs.insert(b.obs.end(), t.observation.begin(), t.observation.end());
    b.next_obs.insert(b.next_obs.end(), t.next_observation.begin(), t.next_observation.end());
    b.actions.push_back(t.action);
    b.rewards.push_back(t.reward);
    b.done.push_back(t.done ? 1 : 0);
    b.legal_next.push_back(legal_mask_after(t, ds.header.corpus_size));
  }
  return b;
}

double bc_loss_and_grad(const Mlp& policy, const TransitionBatch& batch,
                        std::vector<double>* grads) {
  const int n = batch.n;
  const int out = policy.dims().out;
  BatchCache cache;
  forward_batch(policy, batch.obs, n, cache);

  double loss = 0.0;
  std::vector<double> dout;
  if (grads) dout.assign(static_cast<std::size_t>(n) * out, 0.0);
  std::vector<double> probs(static_cast<std::size_t>(out));
  for (int i = 0; i < n; ++i) {
    const std::span<const double> logits{cache.out.data() + static_cast<std::size_t>(i) * out,
                                         static_cast<std::size_t>(out)};
    loss += softmax_cross_entropy(logits, batch.actions[static_cast<std::size_t>(i)]);
    if (grads) {
      softmax(logits, probs);
      double* d = dout.data() + static_cast<std::size_t>(i) * out;
      for (int a = 0; a < out; ++a) d[a] = probs[static_cast<std::size_t>(a)] / n;
      d[batch.actions[static_cast<std::size_t>(i)]] -= 1.0 / n;
    }
  }
  loss /= n;
  if (grads) backward_batch(policy, cache, dout, *grads);
  return loss;
}

CqlLossParts cql_loss_and_grad(const Mlp& q, const Mlp& q_target, const TransitionBatch& batch,
                               double alpha, double gamma, std::vector<double>* grads) {
  const int n = batch.n;
  const int out = q.dims().out;
  BatchCache cache;
  forward_batch(q, batch.obs, n, cache);
  BatchCache target_cache;
  forward_batch(q_target, batch.next_obs, n, target_cache);

  CqlLossParts parts;
  std::vector<double> dout;
  if (grads) dout.assign(static_cast<std::size_t>(n) * out, 0.0);
  std::vector<double> probs(static_cast<std::size_t>(out));

  for (int i = 0; i < n; ++i) {
    const double* qi = cache.out.data() + static_cast<std::size_t>(i) * out;
    const int a = batch.actions[static_cast<std::size_t>(i)];

    double bootstrap = 0.0;
    if (!batch.done[static_cast<std::size_t>(i)]) {
      const double* qt = target_cache.out.data() + static_cast<std::size_t>(i) * out;
      bool first = true;
      for (int ap = 0; ap < out; ++ap) {
        if (!batch.legal_next[static_cast<std::size_t>(i)][static_cast<std::size_t>(ap)]) continue;
        if (first || qt[ap] > bootstrap) {
          bootstrap = qt[ap];
          first = false;
        }
      }
    }
    const double y = batch.rewards[static_cast<std::size_t>(i)] + gamma * bootstrap;
    const double diff = qi[a] - y;
    parts.td += diff * diff;

    const std::span<const double> logits{qi, static_cast<std::size_t>(out)};
    const double lse = log_sum_exp(logits);
    parts.conservative += lse - qi[a];
    for (int ap = 0; ap < out; ++ap) parts.mean_q += qi[ap];

    if (grads) {
      softmax(logits, probs);
      double* d = dout.data() + static_cast<std::size_t>(i) * out;
      for (int ap = 0; ap < out; ++ap) d[ap] = alpha * probs[static_cast<std::size_t>(ap)] / n;
      d[a] += (2.0 * diff - alpha) / n;
    }
  }
  parts.td /= n;
  parts.conservative /= n;
  parts.mean_q /= static_cast<double>(n) * out;
  parts.total = parts.td + alpha * parts.conservative;
  if (grads) backward_batch(q, cache, dout, *grads);
  return parts;
}

IqlLossParts iql_losses_and_grads(const Mlp& q, const Mlp& q_target, const Mlp& v,
                                  const Mlp& policy, const TransitionBatch& batch,
                                  const IqlConfig& cfg, std::vector<double>* grads_q,
                                  std::vector<double>* grads_v, std::vector<double>* grads_policy) {
  const int n = batch.n;
  const int out = q.dims().out;

  BatchCache q_cache, qt_cache, v_cache, vnext_cache, pi_cache;
  forward_batch(q, batch.obs, n, q_cache);
  forward_batch(q_target, batch.obs, n, qt_cache);
  forward_batch(v, batch.obs, n, v_cache);
  forward_batch(v, batch.next_obs, n, vnext_cache);
  forward_batch(policy, batch.obs, n, pi_cache);

  IqlLossParts parts;
  std::vector<double> dq, dv, dpi;
  if (grads_q) dq.assign(static_cast<std::size_t>(n) * out, 0.0);
  if (grads_v) dv.assign(static_cast<std::size_t>(n), 0.0);
  if (grads_policy) dpi.assign(static_cast<std::size_t>(n) * out, 0.0);
  std::vector<double> probs(static_cast<std::size_t>(out));

  for (int i = 0; i < n; ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    const double qt_a = qt_cache.out[static_cast<std::size_t>(i) * out + a];
    const double v_s = v_cache.out[static_cast<std::size_t>(i)];
    const double u = qt_a - v_s;  // advantage under the target critic

    // Value: asymmetric expectile regression toward Q_target(s, a).
    const double w_exp = (u < 0.0) ? (1.0 - cfg.tau) : cfg.tau;
    parts.v_loss += w_exp * u * u;
    if (grads_v) dv[static_cast<std::size_t>(i)] = -2.0 * w_exp * u / n;

    // Critic: TD toward r + gamma V(s').
    const double v_next =
        batch.done[static_cast<std::size_t>(i)] ? 0.0 : vnext_cache.out[static_cast<std::size_t>(i)];
    const double y = batch.rewards[static_cast<std::size_t>(i)] + cfg.gamma * v_next;
    const double q_a = q_cache.out[static_cast<std::size_t>(i) * out + a];
    parts.q_loss += (q_a - y) * (q_a - y);
    if (grads_q) dq[static_cast<std::size_t>(i) * out + a] = 2.0 * (q_a - y) / n;

    // Actor: advantage-weighted cloning with clamped weights.
    const double w_adv = std::min(std::exp(cfg.beta * u), cfg.adv_clamp);
    const std::span<const double> logits{pi_cache.out.data() + static_cast<std::size_t>(i) * out,
                                         static_cast<std::size_t>(out)};
    parts.policy_loss += w_adv * softmax_cross_entropy(logits, a);
    if (grads_policy) {
      softmax(logits, probs);
      double* d = dpi.data() + static_cast<std::size_t>(i) * out;
      for (int ap = 0; ap < out; ++ap) d[ap] = w_adv * probs[static_cast<std::size_t>(ap)] / n;
      d[a] -= w_adv / n;
    }
  }
  parts.v_loss /= n;
  parts.q_loss /= n;
  parts.policy_loss /= n;

  if (grads_q) backward_batch(q, q_cache, dq, *grads_q);
  if (grads_v) backward_batch(v, v_cache, dv, *grads_v);
  if (grads_policy) backward_batch(policy, pi_cache, dpi, *grads_policy);
  return parts;
}

DpoLossParts dpo_loss_and_grad(const Mlp& policy, const Mlp& reference,
                               const PreferenceBatch& batch, double beta,
                               std::vector<double>* grads) {
  if (batch.n_pairs <= 0) throw std::invalid_argument("dpo_loss_and_grad: empty batch");
  const int out = policy.dims().out;
  const int nw = static_cast<int>(batch.w_actions.size());
  const int nl = static_cast<int>(batch.l_actions.size());

  BatchCache w_cache, l_cache, w_ref, l_ref;
  forward_batch(policy, batch.w_obs, nw, w_cache);
  forward_batch(policy, batch.l_obs, nl, l_cache);
  forward_batch(reference, batch.w_obs, nw, w_ref);
  forward_batch(reference, batch.l_obs, nl, l_ref);

  auto log_prob = [out](const BatchCache& c, int row, int action) {
    const std::span<const double> logits{c.out.data() + static_cast<std::size_t>(row) * out,
                                         static_cast<std::size_t>(out)};
    return -softmax_cross_entropy(logits, action);
  };

  // Per-pair log-ratio difference.
  std::vector<double> delta(static_cast<std::size_t>(batch.n_pairs), 0.0);
  for (int r = 0; r < nw; ++r) {
    delta[static_cast<std::size_t>(batch.w_pair[static_cast<std::size_t>(r)])] +=
        log_prob(w_cache, r, batch.w_actions[static_cast<std::size_t>(r)]) -
        log_prob(w_ref, r, batch.w_actions[static_cast<std::size_t>(r)]);
  }
  for (int r = 0; r < nl; ++r) {
    delta[static_cast<std::size_t>(batch.l_pair[static_cast<std::size_t>(r)])] -=
        log_prob(l_cache, r, batch.l_actions[static_cast<std::size_t>(r)]) -
        log_prob(l_ref, r, batch.l_actions[static_cast<std::size_t>(r)]);
  }

  DpoLossParts parts;
  std::vector<double> pair_coeff(static_cast<std::size_t>(batch.n_pairs), 0.0);
  for (int p = 0; p < batch.n_pairs; ++p) {
    const double d = delta[static_cast<std::size_t>(p)];
    parts.loss += -log_sigmoid(beta * d);
    if (d > 0.0) {
      parts.preference_accuracy += 1.0;
    } else if (d == 0.0) {
      parts.preference_accuracy += 0.5;
    }
    // d/dDelta of -log sigmoid(beta*Delta)
    pair_coeff[static_cast<std::size_t>(p)] = -beta * sigmoid(-beta * d) / batch.n_pairs;
  }
  parts.loss /= batch.n_pairs;
  parts.preference_accuracy /= batch.n_pairs;

  if (grads) {
    std::vector<double> probs(static_cast<std::size_t>(out));
    std::vector<double> dw(static_cast<std::size_t>(nw) * out, 0.0);
    std::vector<double> dl(static_cast<std::size_t>(nl) * out, 0.0);
    for (int r = 0; r < nw; ++r) {
      const double coeff = pair_coeff[static_cast<std::size_t>(batch.w_pair[static_cast<std::size_t>(r)])];
      const std::span<const double> logits{w_cache.out.data() + static_cast<std::size_t>(r) * out,
                                           static_cast<std::size_t>(out)};
      softmax(logits, probs);
      double* d = dw.data() + static_cast<std::size_t>(r) * out;
      // dDelta/dlogits_w = onehot(a_w) - softmax
      for (int a = 0; a < out; ++a) d[a] = -coeff * probs[static_cast<std::size_t>(a)];
      d[batch.w_actions[static_cast<std::size_t>(r)]] += coeff;
    }
    for (int r = 0; r < nl; ++r) {
      const double coeff = pair_coeff[static_cast<std::size_t>(batch.l_pair[static_cast<std::size_t>(r)])];
      const std::span<const double> logits{l_cache.out.data() + static_cast<std::size_t>(r) * out,
                                           static_cast<std::size_t>(out)};
      softmax(logits, probs);
      double* d = dl.data() + static_cast<std::size_t>(r) * out;
      // dDelta/dlogits_l = -(onehot(a_l) - softmax)
      for (int a = 0; a < out; ++a) d[a] = coeff * probs[static_cast<std::size_t>(a)];
      d[batch.l_actions[static_cast<std::size_t>(r)]] -= coeff;
    }
    std::vector<double> gw, gl;
    backward_batch(policy, w_cache, dw, gw);
    backward_batch(policy, l_cache, dl, gl);
    grads->assign(gw.size(), 0.0);
    for (std::size_t i = 0; i < gw.size(); ++i) (*grads)[i] = gw[i] + gl[i];
  }
  return parts;
}

std::vector<EpisodePair> build_episode_pairs(const Dataset& ds,
                                             const std::vector<PARequest>& requests) {
  std::map<int, std::string> cpt_of_request;
  for (const PARequest& r : requests) cpt_of_request[r.request_id] = r.cpt;

  std::map<int, std::vector<int>> by_request;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    by_request[ds.episodes[e].request_id].push_back(static_cast<int>(e));
  }

  auto orient = [&ds](int a, int b) -> std::optional<EpisodePair> {
    const double ra = ds.episodes[static_cast<std::size_t>(a)].total_return;
    const double rb = ds.episodes[static_cast<std::size_t>(b)].total_return;
    if (ra == rb) return std::nullopt;  // equal returns: no preference
    return ra > rb ? EpisodePair{a, b} : EpisodePair{b, a};
  };

  std::vector<EpisodePair> pairs;
  std::map<std::string, std::vector<int>> procedure_pool;
  for (const auto& [request_id, eps] : by_request) {
    if (eps.size() >= 2) {
      for (std::size_t i = 0; i < eps.size(); ++i) {
        for (std::size_t j = i + 1; j < eps.size(); ++j) {
          if (auto p = orient(eps[i], eps[j])) pairs.push_back(*p);
        }
      }
    } else {
      const auto it = cpt_of_request.find(request_id);
      if (it == cpt_of_request.end()) {
        throw std::invalid_argument("build_episode_pairs: episode references unknown request " +
                                    std::to_string(request_id));
      }
      procedure_pool[it->second].push_back(eps[0]);
    }
  }
  for (const auto& [cpt, eps] : procedure_pool) {
    for (std::size_t i = 0; i < eps.size(); ++i) {
      for (std::size_t j = i + 1; j < eps.size(); ++j) {
        if (auto p = orient(eps[i], eps[j])) pairs.push_back(*p);
      }
    }
  }
  return pairs;
}

std::vector<PreferenceTuple> build_preference_pairs(const Dataset& ds,
                                                    const std::vector<PARequest>& requests) {
  std::vector<PreferenceTuple> tuples;
  for (const EpisodePair& p : build_episode_pairs(ds, requests)) {
    const int depth =
        static_cast<int>(std::min(ds.episodes[static_cast<std::size_t>(p.w_episode)].transitions.size(),
                                  ds.episodes[static_cast<std::size_t>(p.l_episode)].transitions.size()));
    for (int t = 0; t < depth; ++t) tuples.push_back({p.w_episode, t, p.l_episode, t});
  }
  return tuples;
}

namespace {

constexpr MlpDims kPolicyDims{2 * kEmbeddingDim, 256, 256, kTopK + 1};
constexpr MlpDims kValueDims{2 * kEmbeddingDim, 256, 256, 1};

void check_finite_params(const Mlp& net, const std::string& who) {
  for (double p : net.flat()) {
    if (!std::isfinite(p)) {
      throw std::runtime_error("divergence detected: non-finite parameters in " + who);
    }
  }
}

void check_finite_loss(double loss, const std::string& who, int epoch) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("divergence detected: non-finite loss in " + who + " at epoch " +
                             std::to_string(epoch));
  }
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t pool, int n) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(pool));
  return idx;
}

// Shared BC loop; also drives the DPO warmup.
Mlp run_bc_loop(const Dataset& ds, double lr, int epochs, int batch, double clip,
                int steps_per_epoch, std::uint64_t init_seed, std::uint64_t batch_seed,
                std::vector<double>& loss_log) {
  if (ds.n_transitions() == 0) throw std::invalid_argument("train_bc: empty dataset");
  Mlp net = Mlp::init(kPolicyDims, init_seed);
  AdamState adam(net.flat().size(), lr);
  Rng rng(batch_seed);
  std::vector<double> grads;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double loss = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const TransitionBatch b =
          gather_batch(ds, sample_indices(rng, static_cast<std::size_t>(ds.n_transitions()), batch));
      loss = bc_loss_and_grad(net, b, &grads);
      adam_step(net.flat(), grads, adam, clip);
    }
    check_finite_loss(loss, "bc", epoch);
    loss_log.push_back(loss);
    if (epoch % 50 == 0) check_finite_params(net, "bc");
  }
  check_finite_params(net, "bc");
  return net;
}

}  // namespace

TrainResult train_bc(const Dataset& ds, const BcConfig& cfg, std::uint64_t seed) {
  std::vector<double> losses;
  Mlp net = run_bc_loop(ds, cfg.lr, cfg.epochs, cfg.batch, cfg.clip, cfg.steps_per_epoch,
                        derive_seed(seed, "bc-init"), derive_seed(seed, "bc-batches"), losses);
  TrainResult result;
  result.policy.kind = PolicyKind::bc;
  result.policy.net = std::move(net);
  result.policy.config = cfg.to_json();
  result.metrics = {{"loss", losses}};
  return result;
}

TrainResult train_cql(const Dataset& ds, const CqlConfig& cfg, std::uint64_t seed) {
  if (ds.n_transitions() == 0) throw std::invalid_argument("train_cql: empty dataset");
  Mlp q = Mlp::init(kPolicyDims, derive_seed(seed, "cql-init"));
  Mlp target = q;
  AdamState adam(q.flat().size(), cfg.lr);
  Rng rng(derive_seed(seed, "cql-batches"));

  std::vector<double> total_log, td_log, cons_log, meanq_log;
  std::vector<double> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.target_sync_every > 0 && epoch % cfg.target_sync_every == 0) target = q;
    CqlLossParts parts;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      const TransitionBatch b = gather_batch(
          ds, sample_indices(rng, static_cast<std::size_t>(ds.n_transitions()), cfg.batch));
      parts = cql_loss_and_grad(q, target, b, cfg.alpha, cfg.gamma, &grads);
      adam_step(q.flat(), grads, adam, cfg.clip);
    }
    check_finite_loss(parts.total, "cql", epoch);
    total_log.push_back(parts.total);
    td_log.push_back(parts.td);
    cons_log.push_back(parts.conservative);
    meanq_log.push_back(parts.mean_q);
    if (epoch % 50 == 0) check_finite_params(q, "cql");
  }
  check_finite_params(q, "cql");

  TrainResult result;
  result.policy.kind = PolicyKind::cql;
  result.policy.net = std::move(q);
  result.policy.config = cfg.to_json();
  result.metrics = {{"total", total_log},
                    {"td", td_log},
                    {"conservative", cons_log},
                    {"mean_q", meanq_log}};
  return result;
}

TrainResult train_iql(const Dataset& ds, const IqlConfig& cfg, std::uint64_t seed) {
  if (ds.n_transitions() == 0) throw std::invalid_argument("train_iql: empty dataset");
  Mlp q = Mlp::init(kPolicyDims, derive_seed(seed, "iql-q-init"));
  Mlp target = q;
  Mlp v = Mlp::init(kValueDims, derive_seed(seed, "iql-v-init"));
  Mlp policy = Mlp::init(kPolicyDims, derive_seed(seed, "iql-pi-init"));
  AdamState adam_q(q.flat().size(), cfg.lr);
  AdamState adam_v(v.flat().size(), cfg.lr);
  AdamState adam_pi(policy.flat().size(), cfg.lr);
  Rng rng(derive_seed(seed, "iql-batches"));

  std::vector<double> v_log, q_log, pi_log;
  std::vector<double> gq, gv, gpi;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.target_sync_every > 0 && epoch % cfg.target_sync_every == 0) target = q;
    IqlLossParts parts;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      const TransitionBatch b = gather_batch(
          ds, sample_indices(rng, static_cast<std::size_t>(ds.n_transitions()), cfg.batch));
      parts = iql_losses_and_grads(q, target, v, policy, b, cfg, &gq, &gv, &gpi);
      adam_step(v.flat(), gv, adam_v, cfg.clip);
      adam_step(q.flat(), gq, adam_q, cfg.clip);
      adam_step(policy.flat(), gpi, adam_pi, cfg.clip);
    }
    check_finite_loss(parts.v_loss + parts.q_loss + parts.policy_loss, "iql", epoch);
    v_log.push_back(parts.v_loss);
    q_log.push_back(parts.q_loss);
    pi_log.push_back(parts.policy_loss);
    if (epoch % 50 == 0) {
      check_finite_params(q, "iql-q");
      check_finite_params(v, "iql-v");
      check_finite_params(policy, "iql-policy");
    }
  }
  check_finite_params(policy, "iql-policy");

  TrainResult result;
  result.policy.kind = PolicyKind::iql;
  result.policy.net = std::move(policy);
  result.policy.config = cfg.to_json();
  result.metrics = {{"v_loss", v_log}, {"q_loss", q_log}, {"policy_loss", pi_log}};
  return result;
}

TrainResult train_dpo(const Dataset& ds, const std::vector<PARequest>& requests,
                      const DpoConfig& cfg, std::uint64_t seed) {
  if (ds.n_transitions() == 0) throw std::invalid_argument("train_dpo: empty dataset");

  std::vector<double> warmup_losses;
  Mlp reference =
      run_bc_loop(ds, cfg.warmup_lr, cfg.warmup_epochs, cfg.batch, cfg.clip, cfg.steps_per_epoch,
                  derive_seed(seed, "dpo-init"), derive_seed(seed, "dpo-warmup"), warmup_losses);
  json metrics = {{"warmup_loss", warmup_losses}};
  if (!warmup_losses.empty() && warmup_losses.back() >= 1.5) {
    std::cerr << "warning: reference not converged (warmup loss "
              << warmup_losses.back() << " >= 1.5)\n";
    metrics["warnings"] = {"reference not converged"};
  }

  Mlp policy = reference;  // policy starts from the frozen reference

  const std::vector<EpisodePair> pairs = build_episode_pairs(ds, requests);
  std::vector<PreferenceTuple> tuples;
  if (cfg.pairing == DpoPairing::transition) {
    tuples = build_preference_pairs(ds, requests);
    if (tuples.empty()) throw std::invalid_argument("train_dpo: no preference pairs");
  } else if (pairs.empty()) {
    throw std::invalid_argument("train_dpo: no preference pairs");
  }

  AdamState adam(policy.flat().size(), cfg.lr);
  Rng rng(derive_seed(seed, "dpo-batches"));
  std::vector<double> loss_log, acc_log;
  std::vector<double> grads;
  const int dim = 2 * kEmbeddingDim;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DpoLossParts parts;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      PreferenceBatch batch;
      batch.n_pairs = cfg.batch;
      if (cfg.pairing == DpoPairing::transition) {
        for (int i = 0; i < cfg.batch; ++i) {
          const PreferenceTuple& t = tuples[static_cast<std::size_t>(rng.uniform_int(tuples.size()))];
          const Transition& w =
              ds.episodes[static_cast<std::size_t>(t.w_episode)].transitions[static_cast<std::size_t>(t.w_step)];
          const Transition& l =
              ds.episodes[static_cast<std::size_t>(t.l_episode)].transitions[static_cast<std::size_t>(t.l_step)];
          batch.w_obs.insert(batch.w_obs.end(), w.observation.begin(), w.observation.end());
          batch.w_actions.push_back(w.action);
          batch.w_pair.push_back(i);
          batch.l_obs.insert(batch.l_obs.end(), l.observation.begin(), l.observation.end());
          batch.l_actions.push_back(l.action);
          batch.l_pair.push_back(i);
        }
      } else {
        for (int i = 0; i < cfg.batch; ++i) {
          const EpisodePair& p = pairs[static_cast<std::size_t>(rng.uniform_int(pairs.size()))];
          for (const Transition& w : ds.episodes[static_cast<std::size_t>(p.w_episode)].transitions) {
            batch.w_obs.insert(batch.w_obs.end(), w.observation.begin(), w.observation.end());
            batch.w_actions.push_back(w.action);
            batch.w_pair.push_back(i);
          }
          for (const Transition& l : ds.episodes[static_cast<std::size_t>(p.l_episode)].transitions) {
            batch.l_obs.insert(batch.l_obs.end(), l.observation.begin(), l.observation.end());
            batch.l_actions.push_back(l.action);
            batch.l_pair.push_back(i);
          }
        }
      }
      (void)dim;
      parts = dpo_loss_and_grad(policy, reference, batch, cfg.beta, &grads);
      adam_step(policy.flat(), grads, adam, cfg.clip);
    }
    check_finite_loss(parts.loss, "dpo", epoch);
    loss_log.push_back(parts.loss);
    acc_log.push_back(parts.preference_accuracy);
    if (epoch % 50 == 0) check_finite_params(policy, "dpo");
  }
  check_finite_params(policy, "dpo");

  metrics["loss"] = loss_log;
  metrics["preference_accuracy"] = acc_log;

  TrainResult result;
  result.policy.kind = PolicyKind::dpo;
  result.policy.net = std::move(policy);
  result.policy.config = cfg.to_json();
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace parl
