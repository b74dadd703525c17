#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parl/vec.hpp"

namespace parl {

enum class Decision { approve, deny, pend };

std::string to_string(Decision d);
Decision decision_from_string(const std::string& s);

enum class ChunkType { coverage_criteria, billing, exclusion };

std::string to_string(ChunkType t);
ChunkType chunk_type_from_string(const std::string& s);

struct AgeRange {
  int min = 0;
  int max = 0;
  bool contains(int age) const { return age >= min && age <= max; }
  bool operator==(const AgeRange&) const = default;
};

struct Chunk {
  int id = 0;
  std::vector<std::string> procedure_ids;  // sorted CPT codes; >= 2 means shared
  ChunkType chunk_type = ChunkType::billing;
  std::string text;
  Embedding embedding;
  std::vector<std::string> icd10_tags;     // coverage / exclusion chunks only
  std::optional<AgeRange> age_range;       // coverage chunks only

  bool shared() const { return procedure_ids.size() >= 2; }
  bool belongs_to(const std::string& cpt) const;
};

// One Table-style corpus row plus the request-stratification counts.
struct ProcedureConfig {
  std::string cpt;
  std::string name;
  std::vector<std::string> name_tokens;  // retrieval vocabulary for this procedure
  int chunk_count = 0;
  int shared_count = 0;
  int train_requests = 0;
  int test_requests = 0;
  AgeRange age_span;
};

struct CorpusConfig {
  std::vector<ProcedureConfig> procedures;
  int shared_total = 57;     // distinct multi-procedure chunks
  int coverage_total = 107;
  int billing_total = 71;
  int exclusion_total = 8;

  // Text-shaping knobs. Chunks fall into affinity classes (high/mid/low plus
  // the admin-heavy shared class); the class controls how often the
  // procedure anchor phrase repeats and how much filler dilutes it, which
  // shapes the cosine ladder a request sees: a short wall of high-affinity
  // chunks above the heuristic stopping threshold, then a long decay.
  int boiler_tokens_request = 10;   // fixed preamble prefix in request text
  int anchor_repeats_request = 3;   // procedure phrase repetitions in requests
  int code_repeats_request = 2;     // diagnosis phrase repetitions in requests
  int filler_min = 24;              // filler range of low-affinity chunks
  int filler_max = 48;
  // Fraction of approve requests whose diagnosis lives on a shared (deep,
  // interference-prone) chunk; the rest draw from the procedure's own chunks.
  double deep_code_fraction = 0.25;
  int codes_per_unique_coverage = 2;
  int codes_per_shared_owner = 1;
  int exclusion_codes = 3;
  int uncovered_codes = 4;
};

CorpusConfig default_corpus_config();

struct PARequest {
  int request_id = 0;
  std::string cpt;
  std::string icd10;
  int age = 0;
  Decision ground_truth = Decision::pend;
  std::vector<int> required_evidence;  // sorted chunk ids, non-empty
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(CorpusConfig config, std::vector<Chunk> chunks);

  const CorpusConfig& config() const { return config_; }
  const std::vector<Chunk>& chunks() const { return chunks_; }
  const Chunk& chunk(int id) const;
  bool has_chunk(int id) const;
  std::size_t size() const { return chunks_.size(); }

  const ProcedureConfig& procedure(const std::string& cpt) const;
  int procedure_index(const std::string& cpt) const;
  // Chunk ids whose procedure set contains the CPT, ascending.
  const std::vector<int>& chunks_of(const std::string& cpt) const;

  // Replaces chunk embeddings with externally supplied vectors (sidecar file
  // of {"id": n, "embedding": [384 floats]} lines). Affects content_hash().
  void override_embeddings(const std::string& sidecar_path);

  std::uint64_t content_hash() const;

 private:
  void rebuild_index();

  CorpusConfig config_;
  std::vector<Chunk> chunks_;
  std::vector<std::vector<int>> by_procedure_;
};

// Deterministic synthetic corpus matching the per-procedure rows in `config`.
// Throws std::invalid_argument when the row/type/shared totals are infeasible.
Corpus build_corpus(std::uint64_t seed, const CorpusConfig& config = default_corpus_config());

struct RequestGenOptions {
  int n = 2000;
  // approve / deny / pend sampling weights
  std::array<double, 3> outcome_weights = {0.376, 0.119, 0.505};
  bool use_test_proportions = false;  // default: train-row proportions
  int id_base = 0;
};

// Stratified synthetic requests with oracle-consistent required evidence.
// Every approve/deny request is decidable from the top-19 chunks of its own
// cosine ranking so that exhaustive retrieval inside the episode horizon is
// always sufficient.
std::vector<PARequest> generate_requests(const Corpus& corpus, std::uint64_t seed,
                                         const RequestGenOptions& options = {});

// Rule cascade over retrieved evidence:
//   1. required evidence fully present        -> ground truth
//   2. exclusion chunk for cpt matching icd10 -> deny
//   3. coverage chunk for cpt matching icd10 and age -> approve
//   4. otherwise                              -> pend
// Throws std::invalid_argument on unknown chunk ids.
Decision oracle_decide(const Corpus& corpus, const PARequest& request,
                       const std::vector<int>& evidence);

// Canonical request text fed to the embedder; shared by generation and the
// environment so observations are reproducible from (cpt, icd10, age).
std::string request_text(const Corpus& corpus, const std::string& cpt, const std::string& icd10,
                         int age);

Embedding request_embedding(const Corpus& corpus, const PARequest& request);

// All chunk ids ordered by descending cosine against e_req, ties by id.
std::vector<int> ranked_chunks(const Corpus& corpus, const Embedding& e_req);

// Diagnosis codes usable for this procedure: covered, excluded, and the
// reserved never-covered codes.
std::vector<std::string> icd10_pool(const Corpus& corpus, const std::string& cpt);

// JSON Lines persistence. Loading validates against the supplied config.
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path, const CorpusConfig& config = default_corpus_config());
void save_requests(const std::string& path, const std::vector<PARequest>& requests);
std::vector<PARequest> load_requests(const std::string& path);

}  // namespace parl
