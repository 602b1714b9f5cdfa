#pragma once

#include <array>
#include <compare>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mner/corpus.hpp"
#include "mner/tensor.hpp"

namespace mner {

struct EntitySpan {
  std::string sentence_id;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  int type = 0;           // index into kEntityTypes
  std::string surface;    // tokens joined by single spaces

  auto operator<=>(const EntitySpan&) const = default;
};

// Maximal B-X I-X* runs. An I-X that does not continue a run of the same
// type opens a new span (the data-side repair rule).
std::vector<EntitySpan> extract_entities(std::span<const int> labels, const std::string& sentence_id = "",
                                         const std::vector<std::string>* tokens = nullptr);
std::vector<EntitySpan> extract_entities(const Sentence& s);

// Counts behind a P/R/F1 triple. Exact match on (sentence, start, end, type).
struct Prf {
  std::size_t correct = 0, predicted = 0, gold = 0;

  double precision() const { return predicted ? double(correct) / double(predicted) : 0.0; }
  double recall() const { return gold ? double(correct) / double(gold) : 0.0; }
  double f1() const;
  Prf& operator+=(const Prf& o);
};

Prf entity_prf(const std::vector<EntitySpan>& gold, const std::vector<EntitySpan>& pred);

// surface -> entity types it carries in the training gold.
using EntityInventory = std::map<std::string, std::set<int>>;
EntityInventory build_inventory(const std::vector<Sentence>& train);

// A gold entity (s, k) is seen when k ∈ inv[s]. Seen entities are
// multi-type when inv[s] holds two or more types and single-type when
// inv[s] == {k}. A prediction goes to the bucket of the first gold span it
// overlaps; a prediction overlapping nothing is classified by its own
// (surface, type) the same way, which sends it to unseen when the pair never
// occurred in training.
struct Breakdown {
  Prf seen, unseen, multi, single;
};

struct EntityClass {
  bool seen = false;
  std::optional<bool> multi;  // set for seen entities only
};
EntityClass classify(const EntityInventory& inv, const std::string& surface, int type);

Breakdown breakdown(const EntityInventory& inv, const std::vector<EntitySpan>& gold,
                    const std::vector<EntitySpan>& pred);

struct EvalReport {
  Prf overall;
  std::array<Prf, 4> per_type;
  Breakdown buckets;
  std::size_t sentences = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// predicted[i] are label indices for sentences[i].
EvalReport evaluate_predictions(const std::vector<Sentence>& sentences,
                                const std::vector<std::vector<int>>& predicted, const EntityInventory& inv);

// Sentence-length buckets. edges {8, 16, 24} give <=8, 9-16, 17-24, >=25.
struct LengthRow {
  std::string config;
  std::string bucket;
  std::size_t sentences = 0;
  Prf counts;
  std::optional<double> f1;  // empty when the bucket holds no sentences
};

std::vector<std::string> length_bucket_names(const std::vector<std::size_t>& edges);
std::size_t length_bucket_of(std::size_t length, const std::vector<std::size_t>& edges);
std::vector<LengthRow> length_buckets(const std::vector<Sentence>& sentences,
                                      const std::map<std::string, std::vector<std::vector<int>>>& predictions,
                                      const std::vector<std::size_t>& edges = {8, 16, 24});
void write_length_csv(std::ostream& out, const std::vector<LengthRow>& rows);

// Nested training subsets: one seeded permutation, fraction f keeps its first
// floor(f·n) entries, returned in corpus order. Throws ConfigError for
// fractions outside (0, 1] or ones that select nothing.
std::vector<std::vector<std::size_t>> nested_subsets(std::size_t n, const std::vector<double>& fractions,
                                                     std::uint64_t seed);

struct CurvePoint {
  std::string config;
  double fraction = 0.0;
  std::size_t train_sentences = 0;
  std::uint64_t seed = 0;
  double f1 = 0.0;
};
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

// Paired bootstrap over sentences on the F1 difference a − b. Two-sided:
// p = (#{|δ* − δ| ≥ |δ|} + 1) / (B + 1).
double significance(const std::vector<std::vector<int>>& pred_a, const std::vector<std::vector<int>>& pred_b,
                    const std::vector<std::vector<int>>& gold, std::size_t n_resamples, std::uint64_t seed);

// One JSON Lines record: tokens, gold and predicted tags, and every
// diagnostic matrix as nested row arrays.
nlohmann::json attention_record(const Sentence& s, const std::vector<int>& predicted,
                                const std::map<std::string, Tensor>& diagnostics);

std::string csv_escape(const std::string& field);

}  // namespace mner
