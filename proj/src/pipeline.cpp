#include "parl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "parl/policy.hpp"

namespace parl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_g(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

json read_json_file(const std::string& path, const std::string& missing_stage_hint) {
  std::ifstream in(path);
  if (!in) {
    throw MissingStageError("missing input file '" + path + "' — run stage: " + missing_stage_hint);
  }
  json j;
  in >> j;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

json corpus_config_to_json(const CorpusConfig& cfg) {
  json rows = json::array();
  for (const ProcedureConfig& p : cfg.procedures) {
    rows.push_back({{"cpt", p.cpt},
                    {"name", p.name},
                    {"name_tokens", p.name_tokens},
                    {"chunk_count", p.chunk_count},
                    {"shared_count", p.shared_count},
                    {"train_requests", p.train_requests},
                    {"test_requests", p.test_requests},
                    {"age_span", {p.age_span.min, p.age_span.max}}});
  }
  return {{"procedures", rows},
          {"shared_total", cfg.shared_total},
          {"coverage_total", cfg.coverage_total},
          {"billing_total", cfg.billing_total},
          {"exclusion_total", cfg.exclusion_total},
          {"boiler_tokens_chunk", cfg.boiler_tokens_chunk},
          {"boiler_tokens_request", cfg.boiler_tokens_request},
          {"filler_min", cfg.filler_min},
          {"filler_max", cfg.filler_max},
          {"codes_per_unique_coverage", cfg.codes_per_unique_coverage},
          {"codes_per_shared_owner", cfg.codes_per_shared_owner},
          {"exclusion_codes", cfg.exclusion_codes},
          {"uncovered_codes", cfg.uncovered_codes}};
}

CorpusConfig corpus_config_from_json(const json& j) {
  CorpusConfig cfg;
  cfg.procedures.clear();
  for (const json& row : j.at("procedures")) {
    ProcedureConfig p;
    p.cpt = row.at("cpt").get<std::string>();
    p.name = row.at("name").get<std::string>();
    p.name_tokens = row.at("name_tokens").get<std::vector<std::string>>();
    p.chunk_count = row.at("chunk_count").get<int>();
    p.shared_count = row.at("shared_count").get<int>();
    p.train_requests = row.at("train_requests").get<int>();
    p.test_requests = row.at("test_requests").get<int>();
    const auto span = row.at("age_span").get<std::vector<int>>();
    p.age_span = {span.at(0), span.at(1)};
    cfg.procedures.push_back(std::move(p));
  }
  cfg.shared_total = j.at("shared_total").get<int>();
  cfg.coverage_total = j.at("coverage_total").get<int>();
  cfg.billing_total = j.at("billing_total").get<int>();
  cfg.exclusion_total = j.at("exclusion_total").get<int>();
  cfg.boiler_tokens_chunk = j.at("boiler_tokens_chunk").get<int>();
  cfg.boiler_tokens_request = j.at("boiler_tokens_request").get<int>();
  cfg.filler_min = j.at("filler_min").get<int>();
  cfg.filler_max = j.at("filler_max").get<int>();
  cfg.codes_per_unique_coverage = j.at("codes_per_unique_coverage").get<int>();
  cfg.codes_per_shared_owner = j.at("codes_per_shared_owner").get<int>();
  cfg.exclusion_codes = j.at("exclusion_codes").get<int>();
  cfg.uncovered_codes = j.at("uncovered_codes").get<int>();
  return cfg;
}

json RunConfig::to_json() const {
  json jm = json::array();
  for (const MixtureEntry& m : mixture) {
    jm.push_back({{"policy", m.policy.to_json()}, {"weight", m.weight}});
  }
  json jbeta = json::array();
  for (const auto& [beta, epochs] : beta_grid) jbeta.push_back({{"beta", beta}, {"epochs", epochs}});
  return {{"seed", seed},
          {"lambda", lambda},
          {"train_requests", train_requests},
          {"test_requests", test_requests},
          {"outcome_weights", outcome_weights},
          {"embedding_sidecar", embedding_sidecar},
          {"corpus", corpus_config_to_json(corpus)},
          {"mixture", jm},
          {"bc", bc.to_json()},
          {"cql", cql.to_json()},
          {"iql", iql.to_json()},
          {"dpo", dpo.to_json()},
          {"fqe",
           {{"epochs", fqe.epochs},
            {"batch", fqe.batch},
            {"lr", fqe.lr},
            {"gamma", fqe.gamma},
            {"target_sync_every", fqe.target_sync_every},
            {"clip", fqe.clip}}},
          {"wis_clip_lo", wis_clip_lo},
          {"wis_clip_hi", wis_clip_hi},
          {"bootstrap_resamples", bootstrap_resamples},
          {"lambda_grid", lambda_grid},
          {"alpha_grid", alpha_grid},
          {"beta_grid", jbeta}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.train_requests = j.value("train_requests", cfg.train_requests);
  cfg.test_requests = j.value("test_requests", cfg.test_requests);
  if (j.contains("outcome_weights")) {
    const auto w = j.at("outcome_weights").get<std::vector<double>>();
    if (w.size() != 3) throw std::invalid_argument("config: outcome_weights must have 3 entries");
    cfg.outcome_weights = {w[0], w[1], w[2]};
  }
  cfg.embedding_sidecar = j.value("embedding_sidecar", cfg.embedding_sidecar);
  if (j.contains("corpus")) cfg.corpus = corpus_config_from_json(j.at("corpus"));
  if (j.contains("mixture")) {
    cfg.mixture.clear();
    for (const json& m : j.at("mixture")) {
      cfg.mixture.push_back(
          {BehaviorPolicy::from_json(m.at("policy")), m.value("weight", 1.0)});
    }
  }
  if (j.contains("bc")) cfg.bc = BcConfig::from_json(j.at("bc"));
  if (j.contains("cql")) cfg.cql = CqlConfig::from_json(j.at("cql"));
  if (j.contains("iql")) cfg.iql = IqlConfig::from_json(j.at("iql"));
  if (j.contains("dpo")) cfg.dpo = DpoConfig::from_json(j.at("dpo"));
  if (j.contains("fqe")) {
    const json& f = j.at("fqe");
    cfg.fqe.epochs = f.value("epochs", cfg.fqe.epochs);
    cfg.fqe.batch = f.value("batch", cfg.fqe.batch);
    cfg.fqe.lr = f.value("lr", cfg.fqe.lr);
    cfg.fqe.gamma = f.value("gamma", cfg.fqe.gamma);
    cfg.fqe.target_sync_every = f.value("target_sync_every", cfg.fqe.target_sync_every);
    cfg.fqe.clip = f.value("clip", cfg.fqe.clip);
  }
  cfg.wis_clip_lo = j.value("wis_clip_lo", cfg.wis_clip_lo);
  cfg.wis_clip_hi = j.value("wis_clip_hi", cfg.wis_clip_hi);
  cfg.bootstrap_resamples = j.value("bootstrap_resamples", cfg.bootstrap_resamples);
  if (j.contains("lambda_grid")) cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  if (j.contains("alpha_grid")) cfg.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
  if (j.contains("beta_grid")) {
    cfg.beta_grid.clear();
    for (const json& b : j.at("beta_grid")) {
      cfg.beta_grid.push_back({b.at("beta").get<double>(), b.at("epochs").get<int>()});
    }
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& key_equals_value) {
  const std::size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("--set expects key=value, got: " + key_equals_value);
  }
  std::string key = key_equals_value.substr(0, eq);
  const std::string value = key_equals_value.substr(eq + 1);

  std::string pointer = "/";
  for (char c : key) pointer.push_back(c == '.' ? '/' : c);

  json j = to_json();
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain string
  }
  j[json::json_pointer(pointer)] = parsed;
  *this = from_json(j);
}

namespace paths {

std::string corpus(const std::string& dir) { return dir + "/corpus.jsonl"; }
std::string requests(const std::string& dir, bool test) {
  return dir + (test ? "/requests_test.jsonl" : "/requests_train.jsonl");
}
std::string dataset(const std::string& dir, double lambda) {
  return dir + "/dataset_lam" + format_g(lambda) + ".jsonl";
}
std::string checkpoint(const std::string& dir, const std::string& label) {
  return dir + "/ckpt_" + label + ".bin";
}
std::string metrics(const std::string& dir, const std::string& label) {
  return dir + "/metrics_" + label + ".json";
}
std::string eval_report(const std::string& dir, const std::string& label) {
  return dir + "/eval_" + label + ".json";
}
std::string ope(const std::string& dir) { return dir + "/ope.json"; }
std::string significance(const std::string& dir) { return dir + "/significance.json"; }
std::string ablation(const std::string& dir, const std::string& kind) {
  return dir + "/ablate_" + kind + ".json";
}
std::string report_json(const std::string& dir) { return dir + "/report.json"; }
std::string report_text(const std::string& dir) { return dir + "/report.txt"; }

}  // namespace paths

std::vector<std::string> main_policy_labels() {
  return {"dpo", "cql", "bc", "iql", "fixedk5", "fixedk3", "heuristic0.8"};
}

namespace pipeline {

namespace {

Corpus load_stage_corpus(const RunConfig& cfg, const std::string& dir) {
  const std::string path = paths::corpus(dir);
  if (!fs::exists(path)) {
    throw MissingStageError("missing corpus '" + path + "' — run stage: gen-corpus");
  }
  return load_corpus(path, cfg.corpus);
}

std::vector<PARequest> load_stage_requests(const std::string& dir, bool test) {
  const std::string path = paths::requests(dir, test);
  if (!fs::exists(path)) {
    throw MissingStageError("missing requests '" + path + "' — run stage: gen-requests");
  }
  return load_requests(path);
}

Dataset load_stage_dataset(const std::string& dir, double lambda) {
  const std::string path = paths::dataset(dir, lambda);
  if (!fs::exists(path)) {
    throw MissingStageError("missing dataset '" + path + "' — run stage: collect");
  }
  return load_dataset(path);
}

std::string corpus_hash_string(const Corpus& corpus) {
  std::ostringstream os;
  os << std::hex << corpus.content_hash();
  return os.str();
}

PolicyArtifact resolve_policy(const RunConfig& cfg, const std::string& dir,
                              const std::string& spec, const Corpus& corpus) {
  PolicyArtifact artifact;
  if (is_builtin_policy_spec(spec)) {
    artifact = builtin_policy_from_spec(spec);
  } else if (spec == "bc" || spec == "cql" || spec == "iql" || spec == "dpo" ||
             !fs::exists(spec)) {
    const std::string path = paths::checkpoint(dir, spec);
    if (!fs::exists(path)) {
      throw MissingStageError("missing checkpoint '" + path + "' — run stage: train " + spec);
    }
    artifact = load_policy(path);
  } else {
    artifact = load_policy(spec);
  }
  if (artifact.net && !artifact.corpus_hash.empty() &&
      artifact.corpus_hash != corpus_hash_string(corpus)) {
    throw std::runtime_error("policy '" + spec + "' was trained against a different corpus");
  }
  (void)cfg;
  return artifact;
}

struct AblationRow {
  double parameter = 0.0;
  std::string label;
  double accuracy = 0.0;
  double mean_steps = 0.0;
  double mean_return = 0.0;
};

json ablation_rows_json(const std::string& parameter_name, const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const AblationRow& r : rows) {
    out.push_back({{parameter_name, r.parameter},
                   {"label", r.label},
                   {"accuracy", r.accuracy},
                   {"mean_steps", r.mean_steps},
                   {"mean_return", r.mean_return},
                   {"behavior", r.mean_steps >= 19.5 ? "exhaustive" : "selective"}});
  }
  return out;
}

void write_ablation_csv(const std::string& path, const std::string& parameter_name,
                        const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << parameter_name << ",accuracy,mean_steps,mean_return\n";
  for (const AblationRow& r : rows) {
    os << format_g(r.parameter) << ',' << r.accuracy << ',' << r.mean_steps << ',' << r.mean_return
       << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace

void gen_corpus(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  Corpus corpus = build_corpus(cfg.seed, cfg.corpus);
  if (!cfg.embedding_sidecar.empty()) corpus.override_embeddings(cfg.embedding_sidecar);
  save_corpus(paths::corpus(dir), corpus);
}

void gen_requests(const RunConfig& cfg, const std::string& dir, bool test) {
  const Corpus corpus = load_stage_corpus(cfg, dir);
  RequestGenOptions opt;
  opt.n = test ? cfg.test_requests : cfg.train_requests;
  opt.outcome_weights = cfg.outcome_weights;
  opt.use_test_proportions = test;
  save_requests(paths::requests(dir, test), generate_requests(corpus, cfg.seed, opt));
}

void collect(const RunConfig& cfg, const std::string& dir, double lambda) {
  const Corpus corpus = load_stage_corpus(cfg, dir);
  const std::vector<PARequest> requests = load_stage_requests(dir, false);
  const Dataset ds =
      collect_dataset(corpus, requests, cfg.seed, cfg.train_requests, cfg.mixture, lambda);
  verify_dataset(ds, corpus, requests);
  save_dataset(paths::dataset(dir, lambda), ds);
}

void train(const RunConfig& cfg, const std::string& dir, const std::string& algo, double lambda,
           const std::string& label) {
  const Dataset ds = load_stage_dataset(dir, lambda);
  const std::string out_label = label.empty() ? algo : label;

  TrainResult result;
  if (algo == "bc") {
    result = train_bc(ds, cfg.bc, cfg.seed);
  } else if (algo == "cql") {
    result = train_cql(ds, cfg.cql, cfg.seed);
  } else if (algo == "iql") {
    result = train_iql(ds, cfg.iql, cfg.seed);
  } else if (algo == "dpo") {
    const std::vector<PARequest> requests = load_stage_requests(dir, false);
    result = train_dpo(ds, requests, cfg.dpo, cfg.seed);
  } else {
    throw std::invalid_argument("unknown algorithm: " + algo);
  }

  result.policy.corpus_hash = ds.header.corpus_hash;
  save_policy(paths::checkpoint(dir, out_label), result.policy,
              {{"seed", cfg.seed}, {"lambda", lambda}, {"label", out_label}});
  write_json_file(paths::metrics(dir, out_label), result.metrics);
}

void eval(const RunConfig& cfg, const std::string& dir, const std::string& policy_spec) {
  const Corpus corpus = load_stage_corpus(cfg, dir);
  const std::vector<PARequest> requests = load_stage_requests(dir, true);
  const PolicyArtifact artifact = resolve_policy(cfg, dir, policy_spec, corpus);
  const EvalReport report = evaluate_policy(corpus, requests, artifact, cfg.lambda, cfg.seed);
  write_json_file(paths::eval_report(dir, artifact.label()), report.to_json());
}

void ope(const RunConfig& cfg, const std::string& dir) {
  const Corpus corpus = load_stage_corpus(cfg, dir);
  const std::vector<PARequest> requests = load_stage_requests(dir, false);
  const Dataset ds = load_stage_dataset(dir, cfg.lambda);

  json rows = json::array();
  for (const std::string algo : {"cql", "dpo", "iql", "bc"}) {
    const PolicyArtifact artifact = resolve_policy(cfg, dir, algo, corpus);
    const double wis =
        wis_estimate(corpus, requests, ds, artifact, cfg.wis_clip_lo, cfg.wis_clip_hi, cfg.seed);
    const double fqe = fqe_estimate(ds, artifact, cfg.fqe, cfg.seed);
    rows.push_back({{"policy", algo}, {"wis", wis}, {"fqe_mean_q", fqe}});
  }
  write_json_file(paths::ope(dir), {{"rows", rows}});
}

void significance(const RunConfig& cfg, const std::string& dir) {
  auto load_correct = [&dir](const std::string& label) {
    const json j = read_json_file(paths::eval_report(dir, label),
                                  "eval --policy " + label);
    const EvalReport r = EvalReport::from_json(j);
    std::vector<int> correct;
    for (const EpisodeRecord& e : r.episodes) correct.push_back(e.correct ? 1 : 0);
    return correct;
  };

  const std::vector<std::pair<std::string, std::string>> comparisons = {
      {"dpo", "cql"},     {"dpo", "iql"},    {"dpo", "bc"},
      {"cql", "iql"},     {"cql", "bc"},     {"cql", "fixedk3"},
      {"cql", "fixedk5"}, {"cql", "heuristic0.8"}};

  json rows = json::array();
  for (const auto& [a, b] : comparisons) {
    const SignificanceReport rep =
        paired_t_test(load_correct(a), load_correct(b), cfg.seed, cfg.bootstrap_resamples);
    json row = rep.to_json();
    row["comparison"] = a + " vs " + b;
    rows.push_back(row);
  }
  write_json_file(paths::significance(dir), {{"rows", rows}});
}

void ablate(const RunConfig& cfg, const std::string& dir, const std::string& kind) {
  std::vector<AblationRow> rows;
  std::string parameter_name;

  if (kind == "lambda") {
    parameter_name = "lambda";
    for (double lambda : cfg.lambda_grid) {
      collect(cfg, dir, lambda);
      const std::string label = "cql_lam" + format_g(lambda);
      train(cfg, dir, "cql", lambda, label);

      const Corpus corpus = load_stage_corpus(cfg, dir);
      const std::vector<PARequest> test = load_stage_requests(dir, true);
      const PolicyArtifact artifact = load_policy(paths::checkpoint(dir, label));
      const EvalReport rep = evaluate_policy(corpus, test, artifact, lambda, cfg.seed);
      rows.push_back({lambda, label, rep.accuracy, rep.mean_steps, rep.mean_return});
    }
  } else if (kind == "beta") {
    parameter_name = "beta";
    for (const auto& [beta, epochs] : cfg.beta_grid) {
      RunConfig point = cfg;
      point.dpo.beta = beta;
      point.dpo.epochs = epochs;
      const std::string label = "dpo_beta" + format_g(beta);
      train(point, dir, "dpo", cfg.lambda, label);

      const Corpus corpus = load_stage_corpus(cfg, dir);
      const std::vector<PARequest> test = load_stage_requests(dir, true);
      const PolicyArtifact artifact = load_policy(paths::checkpoint(dir, label));
      const EvalReport rep = evaluate_policy(corpus, test, artifact, cfg.lambda, cfg.seed);
      rows.push_back({beta, label, rep.accuracy, rep.mean_steps, rep.mean_return});
    }
  } else if (kind == "alpha") {
    parameter_name = "alpha";
    for (double alpha : cfg.alpha_grid) {
      RunConfig point = cfg;
      point.cql.alpha = alpha;
      const std::string label = "cql_alpha" + format_g(alpha);
      train(point, dir, "cql", cfg.lambda, label);

      const Corpus corpus = load_stage_corpus(cfg, dir);
      const std::vector<PARequest> test = load_stage_requests(dir, true);
      const PolicyArtifact artifact = load_policy(paths::checkpoint(dir, label));
      const EvalReport rep = evaluate_policy(corpus, test, artifact, cfg.lambda, cfg.seed);
      rows.push_back({alpha, label, rep.accuracy, rep.mean_steps, rep.mean_return});
    }
  } else {
    throw std::invalid_argument("unknown ablation kind: " + kind);
  }

  write_json_file(paths::ablation(dir, kind), {{"rows", ablation_rows_json(parameter_name, rows)}});
  write_ablation_csv(dir + "/ablate_" + kind + ".csv", parameter_name, rows);
}

void report(const RunConfig& cfg, const std::string& dir) {
  (void)cfg;
  std::ostringstream text;
  json out;

  // Main results (Table 2 analogue).
  std::vector<EvalReport> reports;
  std::vector<PolicyKind> kinds;
  for (const std::string& label : main_policy_labels()) {
    const json j = read_json_file(paths::eval_report(dir, label), "eval --policy " + label);
    reports.push_back(EvalReport::from_json(j));
    if (label.rfind("fixedk", 0) == 0) {
      kinds.push_back(PolicyKind::fixedk);
    } else if (label.rfind("heuristic", 0) == 0) {
      kinds.push_back(PolicyKind::heuristic);
    } else {
      kinds.push_back(policy_kind_from_string(label));
    }
  }

  text << "main results (on-policy, " << reports[0].episodes.size() << " episodes)\n";
  text << std::left << std::setw(16) << "policy" << std::right << std::setw(10) << "accuracy"
       << std::setw(10) << "return" << std::setw(8) << "steps" << "\n";
  json main_rows = json::array();
  std::vector<std::pair<double, double>> pareto_points;
  for (const EvalReport& r : reports) {
    text << std::left << std::setw(16) << r.policy_label << std::right << std::setw(9)
         << std::fixed << std::setprecision(1) << (100.0 * r.accuracy) << "%" << std::setw(10)
         << std::setprecision(2) << r.mean_return << std::setw(8) << std::setprecision(1)
         << r.mean_steps << "\n";
    main_rows.push_back({{"policy", r.policy_label},
                         {"accuracy", r.accuracy},
                         {"mean_return", r.mean_return},
                         {"mean_steps", r.mean_steps}});
    pareto_points.push_back({r.mean_steps, r.accuracy});
  }
  out["main_results"] = main_rows;
  text << "\n";

  // Ablations (Tables 3 and 4 analogues).
  const json lambda_rows =
      read_json_file(paths::ablation(dir, "lambda"), "ablate lambda").at("rows");
  text << "cql lambda ablation\n";
  text << std::left << std::setw(10) << "lambda" << std::right << std::setw(10) << "accuracy"
       << std::setw(8) << "steps" << std::setw(10) << "return" << "  behavior\n";
  for (const json& r : lambda_rows) {
    text << std::left << std::setw(10) << format_g(r.at("lambda").get<double>()) << std::right
         << std::setw(9) << std::fixed << std::setprecision(1)
         << (100.0 * r.at("accuracy").get<double>()) << "%" << std::setw(8)
         << std::setprecision(1) << r.at("mean_steps").get<double>() << std::setw(10)
         << std::setprecision(2) << r.at("mean_return").get<double>() << "  "
         << r.at("behavior").get<std::string>() << "\n";
  }
  out["lambda_ablation"] = lambda_rows;
  text << "\n";

  const json beta_rows = read_json_file(paths::ablation(dir, "beta"), "ablate beta").at("rows");
  text << "dpo beta ablation (transition-level)\n";
  text << std::left << std::setw(10) << "beta" << std::right << std::setw(10) << "accuracy"
       << std::setw(8) << "steps" << std::setw(10) << "return" << "\n";
  for (const json& r : beta_rows) {
    text << std::left << std::setw(10) << format_g(r.at("beta").get<double>()) << std::right
         << std::setw(9) << std::fixed << std::setprecision(1)
         << (100.0 * r.at("accuracy").get<double>()) << "%" << std::setw(8)
         << std::setprecision(1) << r.at("mean_steps").get<double>() << std::setw(10)
         << std::setprecision(2) << r.at("mean_return").get<double>() << "\n";
  }
  out["beta_ablation"] = beta_rows;
  text << "\n";

  // Off-policy estimates (Table 5 analogue).
  const json ope_rows = read_json_file(paths::ope(dir), "ope").at("rows");
  text << "off-policy evaluation\n";
  text << std::left << std::setw(10) << "policy" << std::right << std::setw(12) << "wis"
       << std::setw(14) << "fqe_mean_q" << "\n";
  for (const json& r : ope_rows) {
    text << std::left << std::setw(10) << r.at("policy").get<std::string>() << std::right
         << std::setw(12) << std::fixed << std::setprecision(3) << r.at("wis").get<double>()
         << std::setw(14) << std::setprecision(2) << r.at("fqe_mean_q").get<double>() << "\n";
  }
  out["ope"] = ope_rows;
  text << "\n";

  // Significance (Table 6 analogue).
  const json sig_rows = read_json_file(paths::significance(dir), "significance").at("rows");
  text << "pairwise significance (paired t-test on correctness)\n";
  text << std::left << std::setw(24) << "comparison" << std::right << std::setw(10) << "delta"
       << std::setw(12) << "p-value" << std::setw(18) << "95% ci (pp)" << "\n";
  for (const json& r : sig_rows) {
    std::ostringstream ci;
    ci << "[" << std::fixed << std::setprecision(1) << r.at("ci95_pp")[0].get<double>() << ", "
       << r.at("ci95_pp")[1].get<double>() << "]";
    std::ostringstream pv;
    if (r.at("p_valid").get<bool>()) {
      pv << std::scientific << std::setprecision(1) << r.at("p_value").get<double>();
    } else {
      pv << "--";
    }
    text << std::left << std::setw(24) << r.at("comparison").get<std::string>() << std::right
         << std::setw(9) << std::fixed << std::setprecision(1)
         << r.at("delta_accuracy_pp").get<double>() << "p" << std::setw(12) << pv.str()
         << std::setw(18) << ci.str() << "\n";
  }
  out["significance"] = sig_rows;
  text << "\n";

  // Pareto frontier figure data.
  const std::vector<std::size_t> frontier = pareto_frontier(pareto_points);
  {
    std::ostringstream csv;
    csv << "policy,mean_steps,accuracy,on_frontier\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const bool on = std::find(frontier.begin(), frontier.end(), i) != frontier.end();
      csv << reports[i].policy_label << ',' << reports[i].mean_steps << ',' << reports[i].accuracy
          << ',' << (on ? 1 : 0) << '\n';
    }
    write_text_file(dir + "/pareto.csv", csv.str());
    json jf = json::array();
    for (std::size_t i : frontier) jf.push_back(reports[i].policy_label);
    out["pareto_frontier"] = jf;
  }

  // Per-procedure accuracy matrix.
  const PerProcedureTable table = per_procedure_report(reports, kinds);
  {
    std::ostringstream csv;
    csv << "policy";
    for (const std::string& p : table.procedures) csv << ',' << p;
    csv << '\n';
    for (std::size_t i = 0; i < table.policies.size(); ++i) {
      csv << table.policies[i];
      for (double a : table.accuracy[i]) csv << ',' << a;
      csv << '\n';
    }
    write_text_file(dir + "/per_procedure.csv", csv.str());
    out["per_procedure"] = table.to_json();
    text << "procedures below 100% for every learned policy:";
    if (table.hard_procedures.empty()) {
      text << " none";
    } else {
      for (const std::string& p : table.hard_procedures) text << " " << p;
    }
    text << "\n";
  }

  // Training-curve figure data.
  for (const std::string algo : {"bc", "cql", "iql", "dpo"}) {
    const json metrics = read_json_file(paths::metrics(dir, algo), "train " + algo);
    std::vector<std::string> keys;
    for (auto it = metrics.begin(); it != metrics.end(); ++it) {
      if (it.value().is_array()) keys.push_back(it.key());
    }
    std::size_t epochs = 0;
    for (const std::string& k : keys) epochs = std::max(epochs, metrics.at(k).size());
    std::ostringstream csv;
    csv << "epoch";
    for (const std::string& k : keys) csv << ',' << k;
    csv << '\n';
    for (std::size_t e = 0; e < epochs; ++e) {
      csv << e;
      for (const std::string& k : keys) {
        csv << ',';
        if (e < metrics.at(k).size()) csv << metrics.at(k)[e].get<double>();
      }
      csv << '\n';
    }
    write_text_file(dir + "/curves_" + algo + ".csv", csv.str());
  }

  write_json_file(paths::report_json(dir), out);
  write_text_file(paths::report_text(dir), text.str());
}

void run_all(const RunConfig& cfg, const std::string& dir) {
  gen_corpus(cfg, dir);
  gen_requests(cfg, dir, false);
  gen_requests(cfg, dir, true);
  collect(cfg, dir, cfg.lambda);
  for (const std::string algo : {"bc", "cql", "iql", "dpo"}) {
    train(cfg, dir, algo, cfg.lambda);
  }
  for (const std::string spec :
       {"bc", "cql", "iql", "dpo", "fixedk:3", "fixedk:5", "heuristic:0.8"}) {
    eval(cfg, dir, spec);
  }
  ope(cfg, dir);
  significance(cfg, dir);
  ablate(cfg, dir, "lambda");
  ablate(cfg, dir, "beta");
  report(cfg, dir);
}

}  // namespace pipeline

}  // namespace parl
