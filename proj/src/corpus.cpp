#include "parl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "parl/rng.hpp"

namespace parl {

namespace {

using nlohmann::json;

const std::vector<std::string> kAdminPool = {
    "prior", "authorization", "coverage", "policy", "determination", "documentation",
    "medical", "necessity", "claim", "billing", "reimbursement", "provider",
    "submission", "requirement", "criteria", "medicare", "contractor", "jurisdiction",
    "review", "service", "benefit", "code", "coding", "modifier", "unit", "payment",
    "article", "local", "national", "guideline", "record", "clinical", "request",
    "form", "certification", "utilization", "adjudication", "compliance", "audit",
    "eligibility"};

// Fixed request preamble; requests must be reproducible from (cpt, icd10, age)
// alone, so no sampled tokens here. The overlap with chunk boilerplate sets the
// cosine floor between any request and any chunk.
const std::vector<std::string> kRequestPreamble = {
    "prior",       "authorization", "request",  "coverage", "determination", "medical",
    "necessity",   "review",        "policy",   "criteria", "documentation", "clinical",
    "eligibility", "service",       "benefit"};

const std::vector<std::string> kFillerPool = {
    "history",   "examination",  "physician", "ordering",  "referral",   "facility",
    "outpatient", "treatment",   "symptom",   "duration",  "conservative", "therapy",
    "initial",   "follow",       "evaluation", "finding",  "report",     "interpretation",
    "supervision", "qualified",  "personnel", "standard",  "frequency",  "limitation",
    "renewal",   "interval",     "episode",   "plan",      "care",       "management",
    "assessment", "progress",    "notes",     "signature", "date",       "medically",
    "reasonable", "appropriate", "documented", "supporting", "additional", "applicable",
    "specific",  "condition",    "presence",  "absence",   "failure",    "response",
    "functional", "impairment",  "baseline",  "comparison", "prerequisite", "indication"};

const std::vector<std::string> kDxAdjectives = {
    "chronic",    "acute",       "recurrent",  "persistent", "severe",      "moderate",
    "bilateral",  "unilateral",  "progressive", "degenerative", "idiopathic", "focal",
    "diffuse",    "atypical",    "primary",    "secondary",  "refractory",  "intermittent",
    "localized",  "generalized", "stable",     "complicated", "suspected",  "confirmed"};

const std::vector<std::string> kDxNouns = {
    "dorsalgia",  "radiculopathy", "stenosis",   "neoplasm",  "lesion",      "syndrome",
    "disorder",   "dysfunction",   "inflammation", "effusion", "myelopathy", "neuropathy",
    "migraine",   "vertigo",       "sinusitis",  "otitis",    "dysphagia",   "aphasia",
    "carcinoma",  "nodule",        "fracture",   "spondylosis", "scoliosis", "herniation"};

// Letter used for synthetic diagnosis codes of each procedure; 'X' is reserved
// for the never-covered codes.
char code_letter(const std::string& cpt) {
  static const std::map<std::string, char> kLetters = {
      {"45378", 'K'}, {"70450", 'G'}, {"70486", 'J'}, {"70553", 'G'}, {"71260", 'J'},
      {"72148", 'M'}, {"74177", 'R'}, {"77067", 'N'}, {"92507", 'F'}, {"92550", 'H'}};
  auto it = kLetters.find(cpt);
  if (it != kLetters.end()) return it->second;
  return static_cast<char>('A' + fnv1a64(cpt) % 20);
}

std::pair<std::string, std::string> name_for_code(const std::string& code) {
  const std::uint64_t h = fnv1a64(code, 0x517cc1b727220a95ULL);
  const std::string& adj = kDxAdjectives[h % kDxAdjectives.size()];
  const std::string& noun = kDxNouns[(h / kDxAdjectives.size()) % kDxNouns.size()];
  return {adj, noun};
}

void append_code_phrase(std::vector<std::string>& tokens, const std::string& code) {
  auto [adj, noun] = name_for_code(code);
  tokens.push_back(code);
  tokens.push_back(adj);
  tokens.push_back(noun);
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

void sample_tokens(std::vector<std::string>& out, const std::vector<std::string>& pool, int n,
                   Rng& rng) {
  for (int i = 0; i < n; ++i) out.push_back(pool[rng.uniform_index(pool.size())]);
}

struct CodePlan {
  // chunk id -> codes assigned to it (tag order)
  std::unordered_map<int, std::vector<std::string>> codes;
};

// Controls procedure-anchor repetition and filler volume in chunk text, and
// with it where the chunk lands in a matching request's cosine ranking.
enum class AffinityClass { high, mid, low, shared };

}  // namespace

std::string to_string(Decision d) {
  switch (d) {
    case Decision::approve: return "approve";
    case Decision::deny: return "deny";
    case Decision::pend: return "pend";
  }
  throw std::logic_error("bad Decision");
}

Decision decision_from_string(const std::string& s) {
  if (s == "approve") return Decision::approve;
  if (s == "deny") return Decision::deny;
  if (s == "pend") return Decision::pend;
  throw std::invalid_argument("unknown decision: " + s);
}

std::string to_string(ChunkType t) {
  switch (t) {
    case ChunkType::coverage_criteria: return "coverage_criteria";
    case ChunkType::billing: return "billing";
    case ChunkType::exclusion: return "exclusion";
  }
  throw std::logic_error("bad ChunkType");
}

ChunkType chunk_type_from_string(const std::string& s) {
  if (s == "coverage_criteria") return ChunkType::coverage_criteria;
  if (s == "billing") return ChunkType::billing;
  if (s == "exclusion") return ChunkType::exclusion;
  throw std::invalid_argument("unknown chunk type: " + s);
}

bool Chunk::belongs_to(const std::string& cpt) const {
  return std::binary_search(procedure_ids.begin(), procedure_ids.end(), cpt);
}

CorpusConfig default_corpus_config() {
  CorpusConfig cfg;
  auto proc = [](std::string cpt, std::string name, std::vector<std::string> tokens, int chunks,
                 int shared, int train, int test, int age_lo, int age_hi) {
    ProcedureConfig p;
    p.cpt = std::move(cpt);
    p.name = std::move(name);
    p.name_tokens = std::move(tokens);
    p.chunk_count = chunks;
    p.shared_count = shared;
    p.train_requests = train;
    p.test_requests = test;
    p.age_span = {age_lo, age_hi};
    return p;
  };
  cfg.procedures = {
      proc("45378", "Colonoscopy", {"colonoscopy", "endoscopy", "bowel", "colorectal", "screening"},
           30, 0, 201, 23, 40, 85),
      proc("70450", "CT Head", {"ct", "computed", "tomography", "head", "cranial", "imaging", "radiology"},
           56, 54, 195, 27, 18, 90),
      proc("70486", "CT Maxillofacial", {"ct", "computed", "tomography", "maxillofacial", "sinus", "facial", "imaging", "radiology"},
           43, 43, 199, 19, 18, 90),
      proc("70553", "MRI Brain", {"mri", "magnetic", "resonance", "brain", "neuro", "imaging", "radiology", "contrast"},
           54, 54, 208, 28, 18, 90),
      proc("71260", "CT Chest", {"ct", "computed", "tomography", "chest", "thorax", "lung", "imaging", "radiology", "contrast"},
           44, 42, 205, 20, 18, 90),
      proc("72148", "MRI Lumbar Spine", {"mri", "magnetic", "resonance", "lumbar", "spine", "back", "imaging", "radiology"},
           55, 49, 178, 20, 18, 90),
      proc("74177", "CT Abdomen Pelvis", {"ct", "computed", "tomography", "abdomen", "pelvis", "abdominal", "imaging", "radiology", "contrast"},
           46, 42, 193, 12, 18, 90),
      proc("77067", "Screening Mammography", {"mammography", "screening", "breast", "bilateral", "tomosynthesis", "imaging"},
           41, 31, 191, 18, 35, 80),
      proc("92507", "Speech-Language Treatment", {"speech", "language", "therapy", "treatment", "communication", "pathology"},
           48, 0, 217, 13, 2, 90),
      proc("92550", "Tympanometry", {"tympanometry", "acoustic", "reflex", "ear", "audiology", "hearing", "testing"},
           58, 31, 213, 20, 2, 90),
  };
  return cfg;
}

Corpus::Corpus(CorpusConfig config, std::vector<Chunk> chunks)
    : config_(std::move(config)), chunks_(std::move(chunks)) {
  rebuild_index();
}

void Corpus::rebuild_index() {
  by_procedure_.assign(config_.procedures.size(), {});
  int expected_id = 0;
  for (const Chunk& c : chunks_) {
    if (c.id != expected_id++) throw std::invalid_argument("corpus: chunk ids must be 0..n-1");
    if (c.procedure_ids.empty()) throw std::invalid_argument("corpus: chunk without procedures");
    for (const std::string& cpt : c.procedure_ids) {
      by_procedure_.at(static_cast<std::size_t>(procedure_index(cpt))).push_back(c.id);
    }
  }

  // Validate the config contract: per-procedure totals, shared counts, type totals.
  int coverage = 0, billing = 0, exclusion = 0, shared = 0;
  for (const Chunk& c : chunks_) {
    switch (c.chunk_type) {
      case ChunkType::coverage_criteria: ++coverage; break;
      case ChunkType::billing: ++billing; break;
      case ChunkType::exclusion: ++exclusion; break;
    }
    if (c.shared()) ++shared;
  }
  if (coverage != config_.coverage_total || billing != config_.billing_total ||
      exclusion != config_.exclusion_total || shared != config_.shared_total) {
    throw std::invalid_argument("corpus: type/shared totals do not match config");
  }
  for (std::size_t i = 0; i < config_.procedures.size(); ++i) {
    const ProcedureConfig& p = config_.procedures[i];
    int shared_here = 0;
    for (int id : by_procedure_[i]) {
      if (chunks_[static_cast<std::size_t>(id)].shared()) ++shared_here;
    }
    if (static_cast<int>(by_procedure_[i].size()) != p.chunk_count || shared_here != p.shared_count) {
      throw std::invalid_argument("corpus: per-procedure counts do not match config for " + p.cpt);
    }
  }
}

const Chunk& Corpus::chunk(int id) const {
  if (!has_chunk(id)) throw std::invalid_argument("corpus: unknown chunk id " + std::to_string(id));
  return chunks_[static_cast<std::size_t>(id)];
}

bool Corpus::has_chunk(int id) const {
  return id >= 0 && static_cast<std::size_t>(id) < chunks_.size();
}

const ProcedureConfig& Corpus::procedure(const std::string& cpt) const {
  return config_.procedures[static_cast<std::size_t>(procedure_index(cpt))];
}

int Corpus::procedure_index(const std::string& cpt) const {
  for (std::size_t i = 0; i < config_.procedures.size(); ++i) {
    if (config_.procedures[i].cpt == cpt) return static_cast<int>(i);
  }
  throw std::invalid_argument("corpus: unknown procedure " + cpt);
}

const std::vector<int>& Corpus::chunks_of(const std::string& cpt) const {
  return by_procedure_[static_cast<std::size_t>(procedure_index(cpt))];
}

void Corpus::override_embeddings(const std::string& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw std::runtime_error("cannot open embedding sidecar: " + sidecar_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const int id = j.at("id").get<int>();
    Embedding e = j.at("embedding").get<Embedding>();
    if (e.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw std::runtime_error("embedding sidecar: wrong dimension for chunk " + std::to_string(id));
    }
    chunk(id);  // validates id
    chunks_[static_cast<std::size_t>(id)].embedding = std::move(e);
  }
}

std::uint64_t Corpus::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_str = [&h](const std::string& s) {
    h = fnv1a64(s, h);
    h = fnv1a64("\x1e", h);
  };
  for (const Chunk& c : chunks_) {
    mix_str(std::to_string(c.id));
    for (const auto& p : c.procedure_ids) mix_str(p);
    mix_str(to_string(c.chunk_type));
    mix_str(c.text);
    for (const auto& t : c.icd10_tags) mix_str(t);
    if (c.age_range) {
      mix_str(std::to_string(c.age_range->min));
      mix_str(std::to_string(c.age_range->max));
    }
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(c.embedding.data()),
                                 c.embedding.size() * sizeof(double)),
                h);
  }
  return h;
}

namespace {

// Multi-procedure membership sets for the shared chunks: chunk multiplicities
// are as even as possible, and each chunk joins the procedures with the
// largest remaining shared demand. Throws if the demands cannot be realized.
std::vector<std::vector<int>> assign_shared_owners(const CorpusConfig& cfg) {
  std::vector<int> demand(cfg.procedures.size(), 0);
  long long total = 0;
  int sharing_procs = 0;
  for (std::size_t i = 0; i < cfg.procedures.size(); ++i) {
    demand[i] = cfg.procedures[i].shared_count;
    if (demand[i] < 0 || cfg.procedures[i].chunk_count < demand[i]) {
      throw std::invalid_argument("corpus config: shared_count out of range for " +
                                  cfg.procedures[i].cpt);
    }
    total += demand[i];
    if (demand[i] > 0) ++sharing_procs;
  }
  const int n = cfg.shared_total;
  if (n == 0) {
    if (total != 0) throw std::invalid_argument("corpus config: shared demands without shared chunks");
    return {};
  }
  if (total < 2LL * n || total > static_cast<long long>(n) * sharing_procs) {
    throw std::invalid_argument("corpus config: shared totals infeasible");
  }

  const int base = static_cast<int>(total / n);
  const int rem = static_cast<int>(total % n);
  std::vector<int> multiplicity(static_cast<std::size_t>(n), base);
  for (int i = 0; i < rem; ++i) multiplicity[static_cast<std::size_t>(i)] += 1;

  std::vector<std::vector<int>> owners(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int m = multiplicity[static_cast<std::size_t>(i)];
    // Pick the m procedures with the largest remaining demand (stable order).
    std::vector<int> order(cfg.procedures.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::stable_sort(order.begin(), order.end(),
                     [&demand](int a, int b) { return demand[static_cast<std::size_t>(a)] > demand[static_cast<std::size_t>(b)]; });
    for (int k = 0; k < m; ++k) {
      const int p = order[static_cast<std::size_t>(k)];
      if (demand[static_cast<std::size_t>(p)] <= 0) {
        throw std::invalid_argument("corpus config: shared demands not realizable");
      }
      demand[static_cast<std::size_t>(p)] -= 1;
      owners[static_cast<std::size_t>(i)].push_back(p);
    }
    std::sort(owners[static_cast<std::size_t>(i)].begin(), owners[static_cast<std::size_t>(i)].end());
  }
  for (int d : demand) {
    if (d != 0) throw std::invalid_argument("corpus config: shared demands not realizable");
  }
  return owners;
}

// Largest-remainder apportionment of `total` across non-negative weights,
// capped per index; deterministic tie-break by index.
std::vector<int> apportion(long long total, const std::vector<int>& weights,
                           const std::vector<int>& caps) {
  long long wsum = 0;
  for (int w : weights) wsum += w;
  std::vector<int> out(weights.size(), 0);
  if (total == 0) return out;
  if (wsum == 0) throw std::invalid_argument("apportion: zero weights");
  std::vector<std::pair<double, std::size_t>> rema;
  long long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / static_cast<double>(wsum);
    out[i] = std::min(static_cast<int>(quota), caps[i]);
    assigned += out[i];
    rema.push_back({quota - out[i], i});
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t idx = 0;
  while (assigned < total) {
    bool progressed = false;
    for (std::size_t step = 0; step < rema.size() && assigned < total; ++step) {
      const std::size_t i = rema[(idx + step) % rema.size()].second;
      if (out[i] < caps[i]) {
        out[i] += 1;
        assigned += 1;
        progressed = true;
      }
    }
    idx += 1;
    if (!progressed) throw std::invalid_argument("apportion: caps too tight");
  }
  return out;
}

std::string make_code(char letter, std::set<std::string>& used, Rng& rng) {
  const int start = static_cast<int>(rng.uniform_int(100));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int num = (start + attempt) % 100;
    std::string code;
    code.push_back(letter);
    code.push_back(static_cast<char>('0' + num / 10));
    code.push_back(static_cast<char>('0' + num % 10));
    if (used.insert(code).second) return code;
  }
  // Letter saturated; roll to the next letter deterministically.
  return make_code(letter == 'Z' ? 'A' : static_cast<char>(letter + 1), used, rng);
}

}  // namespace

Corpus build_corpus(std::uint64_t seed, const CorpusConfig& config) {
  const std::size_t np = config.procedures.size();
  if (np == 0) throw std::invalid_argument("corpus config: no procedures");

  std::vector<int> unique_count(np);
  int unique_total = 0;
  for (std::size_t i = 0; i < np; ++i) {
    const ProcedureConfig& p = config.procedures[i];
    if (p.chunk_count < p.shared_count || p.chunk_count < 0) {
      throw std::invalid_argument("corpus config: chunk_count < shared_count for " + p.cpt);
    }
    if (p.age_span.min + 8 > p.age_span.max) {
      throw std::invalid_argument("corpus config: age span too narrow for " + p.cpt);
    }
    unique_count[i] = p.chunk_count - p.shared_count;
    unique_total += unique_count[i];
  }
  const int distinct_total = unique_total + config.shared_total;
  if (config.coverage_total + config.billing_total + config.exclusion_total != distinct_total) {
    throw std::invalid_argument("corpus config: type totals do not sum to distinct chunk count");
  }

  // One unique exclusion chunk for each of the first exclusion_total
  // procedures that have room for unique chunks.
  std::vector<int> n_excl(np, 0);
  int excl_left = config.exclusion_total;
  for (std::size_t i = 0; i < np && excl_left > 0; ++i) {
    if (unique_count[i] >= 1) {
      n_excl[i] = 1;
      --excl_left;
    }
  }
  if (excl_left > 0) throw std::invalid_argument("corpus config: not enough unique room for exclusions");

  std::vector<int> rest(np);
  for (std::size_t i = 0; i < np; ++i) rest[i] = unique_count[i] - n_excl[i];

  const int shared_cov =
      config.shared_total == 0
          ? 0
          : static_cast<int>(std::min<long long>(
                config.shared_total,
                std::llround(static_cast<double>(config.shared_total) * config.coverage_total /
                             (config.coverage_total + config.billing_total))));
  const int unique_cov_total = config.coverage_total - shared_cov;
  if (unique_cov_total < 0) throw std::invalid_argument("corpus config: coverage total too small");
  const std::vector<int> cov_u = apportion(unique_cov_total, rest, rest);

  Rng rng(derive_seed(seed, "corpus"));
  std::vector<Chunk> chunks;
  chunks.reserve(static_cast<std::size_t>(distinct_total));
  std::set<std::string> used_codes;
  CodePlan plan;
  std::vector<AffinityClass> classes;

  auto sample_age_range = [&rng](const AgeRange& span) {
    AgeRange r;
    r.min = span.min + 2 + static_cast<int>(rng.uniform_int(9));
    r.max = span.max - 2 - static_cast<int>(rng.uniform_int(9));
    if (r.min + 8 > r.max) {
      r.min = span.min + 2;
      r.max = span.max - 2;
    }
    return r;
  };

  // Unique chunks, procedure by procedure: coverage, then billing, then the
  // exclusion chunk. Every fourth coverage chunk is high-affinity, every
  // fourth low, the rest mid; billing chunks never outrank coverage.
  std::vector<std::vector<int>> unique_coverage_ids(np);
  std::vector<std::vector<int>> exclusion_ids(np);
  for (std::size_t i = 0; i < np; ++i) {
    const ProcedureConfig& p = config.procedures[i];
    const int n_cov = cov_u[i];
    const int n_bill = rest[i] - cov_u[i];
    for (int c = 0; c < n_cov; ++c) {
      Chunk ch;
      ch.id = static_cast<int>(chunks.size());
      ch.procedure_ids = {p.cpt};
      ch.chunk_type = ChunkType::coverage_criteria;
      ch.age_range = sample_age_range(p.age_span);
      chunks.push_back(std::move(ch));
      unique_coverage_ids[i].push_back(chunks.back().id);
      classes.push_back(c % 4 == 0 ? AffinityClass::high
                                   : (c % 4 == 3 ? AffinityClass::low : AffinityClass::mid));
    }
    for (int c = 0; c < n_bill; ++c) {
      Chunk ch;
      ch.id = static_cast<int>(chunks.size());
      ch.procedure_ids = {p.cpt};
      ch.chunk_type = ChunkType::billing;
      chunks.push_back(std::move(ch));
      classes.push_back(c % 4 == 0 ? AffinityClass::mid : AffinityClass::low);
    }
    if (n_excl[i] == 1) {
      Chunk ch;
      ch.id = static_cast<int>(chunks.size());
      ch.procedure_ids = {p.cpt};
      ch.chunk_type = ChunkType::exclusion;
      chunks.push_back(std::move(ch));
      exclusion_ids[i].push_back(chunks.back().id);
      classes.push_back(AffinityClass::mid);
    }
  }

  // Shared chunks.
  const std::vector<std::vector<int>> owners = assign_shared_owners(config);
  std::vector<std::vector<int>> shared_coverage_ids(np);
  for (std::size_t s = 0; s < owners.size(); ++s) {
    Chunk ch;
    ch.id = static_cast<int>(chunks.size());
    for (int pi : owners[s]) ch.procedure_ids.push_back(config.procedures[static_cast<std::size_t>(pi)].cpt);
    std::sort(ch.procedure_ids.begin(), ch.procedure_ids.end());
    ch.chunk_type = static_cast<int>(s) < shared_cov ? ChunkType::coverage_criteria : ChunkType::billing;
    if (ch.chunk_type == ChunkType::coverage_criteria) {
      AgeRange base = config.procedures[static_cast<std::size_t>(owners[s][0])].age_span;
      for (int pi : owners[s]) {
        const AgeRange& span = config.procedures[static_cast<std::size_t>(pi)].age_span;
        base.min = std::max(base.min, span.min);
        base.max = std::min(base.max, span.max);
      }
      if (base.min + 8 > base.max) {
        throw std::invalid_argument("corpus config: owner age spans do not overlap");
      }
      ch.age_range = sample_age_range(base);
      for (int pi : owners[s]) shared_coverage_ids[static_cast<std::size_t>(pi)].push_back(ch.id);
    }
    chunks.push_back(std::move(ch));
    classes.push_back(AffinityClass::shared);
  }

  // Diagnosis codes: globally unique, each on exactly one chunk.
  for (std::size_t i = 0; i < np; ++i) {
    const ProcedureConfig& p = config.procedures[i];
    const char letter = code_letter(p.cpt);
    bool first_code = true;
    auto next_code = [&]() {
      if (p.cpt == "72148" && first_code) {
        first_code = false;
        if (used_codes.insert("L54").second) return std::string("L54");
      }
      first_code = false;
      return make_code(letter, used_codes, rng);
    };
    for (int id : unique_coverage_ids[i]) {
      for (int c = 0; c < config.codes_per_unique_coverage; ++c) {
        plan.codes[id].push_back(next_code());
      }
    }
    for (int id : shared_coverage_ids[i]) {
      for (int c = 0; c < config.codes_per_shared_owner; ++c) {
        plan.codes[id].push_back(next_code());
      }
    }
    for (int id : exclusion_ids[i]) {
      for (int c = 0; c < config.exclusion_codes; ++c) {
        plan.codes[id].push_back(next_code());
      }
    }
  }
  for (auto& [id, codes] : plan.codes) chunks[static_cast<std::size_t>(id)].icd10_tags = codes;

  // Texts. The anchor phrase ("procedure <cpt> <name tokens>") is what a
  // matching request keys on; repetition count and filler volume set the
  // chunk's place in the cosine ladder.
  auto anchor_phrase = [&config](const std::string& cpt) {
    std::vector<std::string> phrase{"procedure", cpt};
    for (const ProcedureConfig& p : config.procedures) {
      if (p.cpt == cpt) {
        phrase.insert(phrase.end(), p.name_tokens.begin(), p.name_tokens.end());
        break;
      }
    }
    return phrase;
  };

  for (Chunk& ch : chunks) {
    const AffinityClass cls = classes[static_cast<std::size_t>(ch.id)];
    int boiler = 0, anchor_reps = 1, code_reps = 1, filler_lo = 0, filler_hi = 0;
    switch (cls) {
      case AffinityClass::high:
        boiler = 3, anchor_reps = 3, code_reps = 2, filler_lo = 0, filler_hi = 6;
        break;
      case AffinityClass::mid:
        boiler = 6, anchor_reps = 2, code_reps = 2, filler_lo = 8, filler_hi = 20;
        break;
      case AffinityClass::low:
        boiler = 8, anchor_reps = 1, code_reps = 1, filler_lo = config.filler_min,
        filler_hi = config.filler_max;
        break;
      case AffinityClass::shared:
        boiler = 12, anchor_reps = 1, code_reps = 1, filler_lo = 10, filler_hi = 30;
        break;
    }

    std::vector<std::string> tokens;
    sample_tokens(tokens, kAdminPool, boiler, rng);

    std::vector<std::string> body;
    switch (ch.chunk_type) {
      case ChunkType::coverage_criteria:
        body.insert(body.end(), {"coverage", "criteria"});
        break;
      case ChunkType::billing:
        body.insert(body.end(), {"billing", "article", "coding", "guidance"});
        break;
      case ChunkType::exclusion:
        body.insert(body.end(), {"exclusion", "noncoverage", "not", "covered", "investigational"});
        break;
    }
    for (const std::string& cpt : ch.procedure_ids) {
      const std::vector<std::string> phrase = anchor_phrase(cpt);
      for (int r = 0; r < anchor_reps; ++r) body.insert(body.end(), phrase.begin(), phrase.end());
    }
    if (ch.chunk_type == ChunkType::coverage_criteria) {
      body.insert(body.end(), {"considered", "medically", "necessary", "for", "diagnosis"});
      for (const std::string& code : ch.icd10_tags) {
        for (int r = 0; r < code_reps; ++r) append_code_phrase(body, code);
      }
      body.insert(body.end(), {"patient", "age", std::to_string(ch.age_range->min), "to",
                               std::to_string(ch.age_range->max), "years"});
    } else if (ch.chunk_type == ChunkType::exclusion) {
      body.insert(body.end(), {"for", "diagnosis"});
      for (const std::string& code : ch.icd10_tags) {
        for (int r = 0; r < code_reps; ++r) append_code_phrase(body, code);
      }
    } else {
      body.insert(body.end(), {"units", "modifier", "frequency", "documentation", "payment"});
    }

    const int filler =
        filler_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(filler_hi - filler_lo + 1)));
    std::vector<std::string> tail;
    sample_tokens(tail, kFillerPool, filler, rng);

    if (cls == AffinityClass::shared) {
      // Shared chunks draw at least half their tokens from the admin pool.
      const int need = static_cast<int>(body.size() + tail.size()) - static_cast<int>(tokens.size());
      if (need > 0) sample_tokens(tokens, kAdminPool, need, rng);
    }
    tokens.insert(tokens.end(), body.begin(), body.end());
    tokens.insert(tokens.end(), tail.begin(), tail.end());
    ch.text = join_tokens(tokens);
    ch.embedding = embed_text(ch.text);
  }

  Corpus corpus(config, std::move(chunks));

  // Every procedure must be able to produce approvals.
  for (const ProcedureConfig& p : config.procedures) {
    bool has_coverage = false;
    for (int id : corpus.chunks_of(p.cpt)) {
      if (corpus.chunk(id).chunk_type == ChunkType::coverage_criteria) has_coverage = true;
    }
    if (!has_coverage) throw std::invalid_argument("corpus config: no coverage chunk for " + p.cpt);
  }
  return corpus;
}

std::string request_text(const Corpus& corpus, const std::string& cpt, const std::string& icd10,
                         int age) {
  const ProcedureConfig& p = corpus.procedure(cpt);
  std::vector<std::string> tokens;
  const int preamble = std::min<int>(corpus.config().boiler_tokens_request,
                                     static_cast<int>(kRequestPreamble.size()));
  tokens.insert(tokens.end(), kRequestPreamble.begin(), kRequestPreamble.begin() + preamble);
  tokens.push_back("procedure");
  tokens.push_back(cpt);
  tokens.insert(tokens.end(), p.name_tokens.begin(), p.name_tokens.end());
  tokens.push_back("diagnosis");
  append_code_phrase(tokens, icd10);
  tokens.insert(tokens.end(), {"patient", "age", std::to_string(age), "years"});
  return join_tokens(tokens);
}

Embedding request_embedding(const Corpus& corpus, const PARequest& request) {
  return embed_text(request_text(corpus, request.cpt, request.icd10, request.age));
}

std::vector<int> ranked_chunks(const Corpus& corpus, const Embedding& e_req) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(corpus.size());
  for (const Chunk& c : corpus.chunks()) {
    scored.push_back({cosine_similarity(e_req, c.embedding), c.id});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> ids;
  ids.reserve(scored.size());
  for (const auto& [s, id] : scored) ids.push_back(id);
  return ids;
}

namespace {

// 1-based position of `chunk_id` in the descending cosine order for e_req.
int cosine_rank(const Corpus& corpus, const Embedding& e_req, int chunk_id) {
  const double own = cosine_similarity(e_req, corpus.chunk(chunk_id).embedding);
  int before = 0;
  for (const Chunk& c : corpus.chunks()) {
    if (c.id == chunk_id) continue;
    const double s = cosine_similarity(e_req, c.embedding);
    if (s > own || (s == own && c.id < chunk_id)) ++before;
  }
  return before + 1;
}

struct CodedChunk {
  std::string code;
  int chunk_id;
};

std::vector<CodedChunk> coverage_pairs(const Corpus& corpus, const std::string& cpt) {
  std::vector<CodedChunk> out;
  for (int id : corpus.chunks_of(cpt)) {
    const Chunk& c = corpus.chunk(id);
    if (c.chunk_type != ChunkType::coverage_criteria) continue;
    for (const std::string& code : c.icd10_tags) out.push_back({code, id});
  }
  return out;
}

std::vector<CodedChunk> exclusion_pairs(const Corpus& corpus, const std::string& cpt) {
  std::vector<CodedChunk> out;
  for (int id : corpus.chunks_of(cpt)) {
    const Chunk& c = corpus.chunk(id);
    if (c.chunk_type != ChunkType::exclusion) continue;
    for (const std::string& code : c.icd10_tags) out.push_back({code, id});
  }
  return out;
}

std::vector<std::string> uncovered_codes_for(const Corpus& corpus, const std::string& cpt) {
  // Reserved never-covered codes, derived from the chunk contents so that a
  // corpus loaded from disk reproduces the same pool.
  std::set<std::string> taken;
  for (const Chunk& c : corpus.chunks()) {
    for (const std::string& t : c.icd10_tags) taken.insert(t);
  }
  std::vector<std::string> out;
  std::uint64_t h = fnv1a64(cpt, 0x9ae16a3b2f90404fULL);
  int guard = 0;
  while (static_cast<int>(out.size()) < corpus.config().uncovered_codes && guard < 10000) {
    h = splitmix64_next(h);
    std::string code;
    code.push_back('X');
    const int num = static_cast<int>(h % 100);
    code.push_back(static_cast<char>('0' + num / 10));
    code.push_back(static_cast<char>('0' + num % 10));
    ++guard;
    if (taken.count(code) || std::find(out.begin(), out.end(), code) != out.end()) continue;
    out.push_back(code);
  }
  return out;
}

int first_coverage_chunk(const Corpus& corpus, const std::string& cpt) {
  for (int id : corpus.chunks_of(cpt)) {
    if (corpus.chunk(id).chunk_type == ChunkType::coverage_criteria) return id;
  }
  throw std::logic_error("procedure without coverage chunk");
}

constexpr int kMaxUsefulRank = 19;  // one full episode of retrievals

}  // namespace

std::vector<std::string> icd10_pool(const Corpus& corpus, const std::string& cpt) {
  std::vector<std::string> pool;
  for (const CodedChunk& cc : coverage_pairs(corpus, cpt)) pool.push_back(cc.code);
  for (const CodedChunk& cc : exclusion_pairs(corpus, cpt)) pool.push_back(cc.code);
  for (const std::string& c : uncovered_codes_for(corpus, cpt)) pool.push_back(c);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<PARequest> generate_requests(const Corpus& corpus, std::uint64_t seed,
                                         const RequestGenOptions& options) {
  if (options.n < 1) throw std::invalid_argument("generate_requests: n must be >= 1");
  double wsum = 0.0;
  for (double w : options.outcome_weights) {
    if (w < 0.0) throw std::invalid_argument("generate_requests: negative outcome weight");
    wsum += w;
  }
  if (wsum <= 0.0) throw std::invalid_argument("generate_requests: outcome weights sum to zero");

  const CorpusConfig& cfg = corpus.config();
  std::vector<int> weights, caps;
  for (const ProcedureConfig& p : cfg.procedures) {
    weights.push_back(options.use_test_proportions ? p.test_requests : p.train_requests);
    caps.push_back(options.n);
  }
  const std::vector<int> counts = apportion(options.n, weights, caps);

  Rng rng(derive_seed(seed, options.use_test_proportions ? "requests-test" : "requests-train"));
  const std::vector<double> outcome_weights(options.outcome_weights.begin(),
                                            options.outcome_weights.end());

  std::vector<PARequest> requests;
  requests.reserve(static_cast<std::size_t>(options.n));

  for (std::size_t pi = 0; pi < cfg.procedures.size(); ++pi) {
    const ProcedureConfig& proc = cfg.procedures[pi];
    const std::vector<CodedChunk> covered = coverage_pairs(corpus, proc.cpt);
    const std::vector<CodedChunk> excluded = exclusion_pairs(corpus, proc.cpt);
    const std::vector<std::string> uncovered = uncovered_codes_for(corpus, proc.cpt);

    auto rank_ok = [&](const std::string& code, int age, int chunk_id) {
      const Embedding e = embed_text(request_text(corpus, proc.cpt, code, age));
      return cosine_rank(corpus, e, chunk_id) <= kMaxUsefulRank;
    };

    auto make_pend = [&](PARequest& req) {
      req.ground_truth = Decision::pend;
      const bool age_flavor = !covered.empty() && rng.uniform01() < 0.3;
      if (age_flavor) {
        const CodedChunk& cc = covered[static_cast<std::size_t>(rng.uniform_index(covered.size()))];
        const AgeRange& r = *corpus.chunk(cc.chunk_id).age_range;
        const int low_width = std::max(0, r.min - proc.age_span.min);
        const int high_width = std::max(0, proc.age_span.max - r.max);
        if (low_width + high_width > 0) {
          int offset = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(low_width + high_width)));
          req.icd10 = cc.code;
          req.age = offset < low_width ? proc.age_span.min + offset
                                       : r.max + 1 + (offset - low_width);
          req.required_evidence = {cc.chunk_id};
          return;
        }
      }
      req.icd10 = uncovered[static_cast<std::size_t>(rng.uniform_index(uncovered.size()))];
      req.age = proc.age_span.min +
                static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(proc.age_span.max - proc.age_span.min + 1)));
      req.required_evidence = {first_coverage_chunk(corpus, proc.cpt)};
    };

    for (int k = 0; k < counts[pi]; ++k) {
      PARequest req;
      req.cpt = proc.cpt;
      int outcome = rng.weighted_index(outcome_weights);
      if (outcome == 1 && excluded.empty()) outcome = 2;  // no exclusion chunk: deny -> pend

      bool placed = false;
      if (outcome == 0 && !covered.empty()) {
        const std::size_t start = static_cast<std::size_t>(rng.uniform_index(covered.size()));
        for (std::size_t t = 0; t < covered.size() && !placed; ++t) {
          const CodedChunk& cc = covered[(start + t) % covered.size()];
          const AgeRange& r = *corpus.chunk(cc.chunk_id).age_range;
          const int age = r.min + static_cast<int>(rng.uniform_int(
                                      static_cast<std::uint64_t>(r.max - r.min + 1)));
          if (rank_ok(cc.code, age, cc.chunk_id)) {
            req.ground_truth = Decision::approve;
            req.icd10 = cc.code;
            req.age = age;
            req.required_evidence = {cc.chunk_id};
            placed = true;
          }
        }
      } else if (outcome == 1) {
        const std::size_t start = static_cast<std::size_t>(rng.uniform_index(excluded.size()));
        for (std::size_t t = 0; t < excluded.size() && !placed; ++t) {
          const CodedChunk& cc = excluded[(start + t) % excluded.size()];
          const int age = proc.age_span.min +
                          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                              proc.age_span.max - proc.age_span.min + 1)));
          if (rank_ok(cc.code, age, cc.chunk_id)) {
            req.ground_truth = Decision::deny;
            req.icd10 = cc.code;
            req.age = age;
            req.required_evidence = {cc.chunk_id};
            placed = true;
          }
        }
      }
      if (!placed) make_pend(req);
      std::sort(req.required_evidence.begin(), req.required_evidence.end());
      requests.push_back(std::move(req));
    }
  }

  rng.shuffle(requests);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    requests[i].request_id = options.id_base + static_cast<int>(i);
  }
  return requests;
}

Decision oracle_decide(const Corpus& corpus, const PARequest& request,
                       const std::vector<int>& evidence) {
  std::vector<int> ids = evidence;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) corpus.chunk(id);  // validates

  bool complete = true;
  for (int need : request.required_evidence) {
    if (!std::binary_search(ids.begin(), ids.end(), need)) {
      complete = false;
      break;
    }
  }
  if (complete) return request.ground_truth;

  for (int id : ids) {
    const Chunk& c = corpus.chunk(id);
    if (c.chunk_type == ChunkType::exclusion && c.belongs_to(request.cpt) &&
        std::find(c.icd10_tags.begin(), c.icd10_tags.end(), request.icd10) != c.icd10_tags.end()) {
      return Decision::deny;
    }
  }
  for (int id : ids) {
    const Chunk& c = corpus.chunk(id);
    if (c.chunk_type == ChunkType::coverage_criteria && c.belongs_to(request.cpt) &&
        std::find(c.icd10_tags.begin(), c.icd10_tags.end(), request.icd10) != c.icd10_tags.end() &&
        c.age_range && c.age_range->contains(request.age)) {
      return Decision::approve;
    }
  }
  return Decision::pend;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const Chunk& c : corpus.chunks()) {
    json j;
    j["id"] = c.id;
    j["procedure_ids"] = c.procedure_ids;
    j["chunk_type"] = to_string(c.chunk_type);
    j["text"] = c.text;
    j["embedding"] = c.embedding;
    j["icd10_tags"] = c.icd10_tags;
    if (c.age_range) j["age_range"] = {c.age_range->min, c.age_range->max};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Corpus load_corpus(const std::string& path, const CorpusConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<Chunk> chunks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Chunk c;
    c.id = j.at("id").get<int>();
    c.procedure_ids = j.at("procedure_ids").get<std::vector<std::string>>();
    c.chunk_type = chunk_type_from_string(j.at("chunk_type").get<std::string>());
    c.text = j.at("text").get<std::string>();
    c.embedding = j.at("embedding").get<Embedding>();
    c.icd10_tags = j.at("icd10_tags").get<std::vector<std::string>>();
    if (j.contains("age_range")) {
      const auto r = j.at("age_range").get<std::vector<int>>();
      c.age_range = AgeRange{r.at(0), r.at(1)};
    }
    if (c.embedding.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw std::runtime_error("corpus: bad embedding dimension in " + path);
    }
    chunks.push_back(std::move(c));
  }
  return Corpus(config, std::move(chunks));
}

void save_requests(const std::string& path, const std::vector<PARequest>& requests) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const PARequest& r : requests) {
    json j;
    j["request_id"] = r.request_id;
    j["cpt"] = r.cpt;
    j["icd10"] = r.icd10;
    j["age"] = r.age;
    j["ground_truth"] = to_string(r.ground_truth);
    j["required_evidence"] = r.required_evidence;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PARequest> load_requests(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open requests: " + path);
  std::vector<PARequest> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PARequest r;
    r.request_id = j.at("request_id").get<int>();
    r.cpt = j.at("cpt").get<std::string>();
    r.icd10 = j.at("icd10").get<std::string>();
    r.age = j.at("age").get<int>();
    r.ground_truth = decision_from_string(j.at("ground_truth").get<std::string>());
    r.required_evidence = j.at("required_evidence").get<std::vector<int>>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace parl
