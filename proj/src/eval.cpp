#include "mner/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

using nlohmann::json;

double Prf::f1() const {
  // 2PR/(P+R) reduced to counts: one rounding instead of four
  return correct ? 2.0 * static_cast<double>(correct) / static_cast<double>(predicted + gold) : 0.0;
}

Prf& Prf::operator+=(const Prf& o) {
  correct += o.correct;
  predicted += o.predicted;
  gold += o.gold;
  return *this;
}

std::vector<EntitySpan> extract_entities(std::span<const int> labels, const std::string& sentence_id,
                                         const std::vector<std::string>* tokens) {
  std::vector<EntitySpan> out;
  auto close = [&](std::size_t end) {
    if (out.empty() || out.back().end != 0) return;
    auto& e = out.back();
    e.end = end;
    if (tokens)
      for (std::size_t i = e.start; i < end; ++i) e.surface += (i > e.start ? " " : "") + (*tokens)[i];
  };
  int open_type = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= kNumLabels) throw ContractError("extract_entities: bad label index");
    if (is_inside(l) && open_type == label_type(l)) continue;
    if (open_type >= 0) close(i);
    open_type = -1;
    if (l != kOutside) {
      out.push_back({sentence_id, i, 0, label_type(l), {}});
      open_type = label_type(l);
    }
  }
  if (open_type >= 0) close(labels.size());
  return out;
}

std::vector<EntitySpan> extract_entities(const Sentence& s) {
  std::vector<int> ids;
  for (const auto& l : s.labels) {
    auto i = label_index(l);
    if (!i) throw ContractError("extract_entities: unknown label '" + l + "'");
    ids.push_back(*i);
  }
  return extract_entities(ids, s.id, &s.tokens);
}

namespace {

using Key = std::tuple<std::string, std::size_t, std::size_t, int>;
Key key(const EntitySpan& e) { return {e.sentence_id, e.start, e.end, e.type}; }

std::size_t count_matches(const std::vector<EntitySpan>& gold, const std::vector<EntitySpan>& pred) {
  std::multiset<Key> g;
  for (const auto& e : gold) g.insert(key(e));
  std::size_t hits = 0;
  for (const auto& e : pred) {
    auto it = g.find(key(e));
    if (it != g.end()) {
      ++hits;
      g.erase(it);
    }
  }
  return hits;
}

json prf_json(const Prf& p, bool null_when_empty = false) {
  json j = {{"correct", p.correct}, {"predicted", p.predicted}, {"gold", p.gold}};
  if (null_when_empty && p.gold == 0) {
    j["precision"] = nullptr;
    j["recall"] = nullptr;
    j["f1"] = nullptr;
  } else {
    j["precision"] = p.precision();
    j["recall"] = p.recall();
    j["f1"] = p.f1();
  }
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

Prf entity_prf(const std::vector<EntitySpan>& gold, const std::vector<EntitySpan>& pred) {
  return {count_matches(gold, pred), pred.size(), gold.size()};
}

EntityInventory build_inventory(const std::vector<Sentence>& train) {
  EntityInventory inv;
  for (const auto& s : train)
    for (const auto& e : extract_entities(s)) inv[e.surface].insert(e.type);
  return inv;
}

EntityClass classify(const EntityInventory& inv, const std::string& surface, int type) {
  EntityClass c;
  auto it = inv.find(surface);
  if (it == inv.end() || !it->second.count(type)) return c;
  c.seen = true;
  c.multi = it->second.size() >= 2;
  return c;
}

Breakdown breakdown(const EntityInventory& inv, const std::vector<EntitySpan>& gold,
                    const std::vector<EntitySpan>& pred) {
  std::vector<EntitySpan> g_seen, g_unseen, g_multi, g_single, p_seen, p_unseen, p_multi, p_single;
  auto route = [&](const EntityClass& c, const EntitySpan& e, std::vector<EntitySpan>& seen,
                   std::vector<EntitySpan>& unseen, std::vector<EntitySpan>& multi, std::vector<EntitySpan>& single) {
    (c.seen ? seen : unseen).push_back(e);
    if (c.multi) (*c.multi ? multi : single).push_back(e);
  };
  std::map<std::string, std::vector<const EntitySpan*>> gold_by_sentence;
  for (const auto& e : gold) {
    route(classify(inv, e.surface, e.type), e, g_seen, g_unseen, g_multi, g_single);
    gold_by_sentence[e.sentence_id].push_back(&e);
  }
  for (auto& [_, v] : gold_by_sentence)
    std::sort(v.begin(), v.end(), [](const EntitySpan* a, const EntitySpan* b) { return a->start < b->start; });

  for (const auto& e : pred) {
    const EntitySpan* anchor = nullptr;
    if (auto it = gold_by_sentence.find(e.sentence_id); it != gold_by_sentence.end())
      for (const auto* g : it->second)
        if (g->start < e.end && e.start < g->end) {
          anchor = g;
          break;
        }
    const auto c = anchor ? classify(inv, anchor->surface, anchor->type) : classify(inv, e.surface, e.type);
    route(c, e, p_seen, p_unseen, p_multi, p_single);
  }
  return {entity_prf(g_seen, p_seen), entity_prf(g_unseen, p_unseen), entity_prf(g_multi, p_multi),
          entity_prf(g_single, p_single)};
}

json EvalReport::to_json() const {
  json types = json::object();
  for (std::size_t t = 0; t < kEntityTypes.size(); ++t) types[std::string(kEntityTypes[t])] = prf_json(per_type[t]);
  return {{"sentences", sentences},
          {"overall", prf_json(overall)},
          {"per_type", types},
          {"breakdown",
           {{"seen", prf_json(buckets.seen, true)},
            {"unseen", prf_json(buckets.unseen, true)},
            {"multi_type", prf_json(buckets.multi, true)},
            {"single_type", prf_json(buckets.single, true)}}}};
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %8s %8s %8s\n", "", "precision", "recall", "f1", "correct",
                "pred", "gold");
  os << line;
  auto row = [&](const std::string& name, const Prf& p, bool null_when_empty) {
    const bool empty = null_when_empty && p.gold == 0;
    std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %8zu %8zu %8zu\n", name.c_str(),
                  empty ? "-" : fmt(p.precision()).c_str(), empty ? "-" : fmt(p.recall()).c_str(),
                  empty ? "-" : fmt(p.f1()).c_str(), p.correct, p.predicted, p.gold);
    os << line;
  };
  row("overall", overall, false);
  for (std::size_t t = 0; t < kEntityTypes.size(); ++t) row(std::string(kEntityTypes[t]), per_type[t], false);
  row("seen", buckets.seen, true);
  row("unseen", buckets.unseen, true);
  row("multi-type", buckets.multi, true);
  row("single-type", buckets.single, true);
  os << "sentences: " << sentences << '\n';
  return os.str();
}

EvalReport evaluate_predictions(const std::vector<Sentence>& sentences,
                                const std::vector<std::vector<int>>& predicted, const EntityInventory& inv) {
  if (sentences.size() != predicted.size()) throw ContractError("evaluate_predictions: prediction count mismatch");
  EvalReport r;
  r.sentences = sentences.size();
  std::vector<EntitySpan> gold, pred;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (predicted[i].size() != s.tokens.size())
      throw ContractError("evaluate_predictions: sentence " + s.id + " prediction length mismatch");
    auto g = extract_entities(s);
    auto p = extract_entities(predicted[i], s.id, &s.tokens);
    gold.insert(gold.end(), g.begin(), g.end());
    pred.insert(pred.end(), p.begin(), p.end());
  }
  r.overall = entity_prf(gold, pred);
  for (std::size_t t = 0; t < kEntityTypes.size(); ++t) {
    std::vector<EntitySpan> gt, pt;
    for (const auto& e : gold)
      if (e.type == static_cast<int>(t)) gt.push_back(e);
    for (const auto& e : pred)
      if (e.type == static_cast<int>(t)) pt.push_back(e);
    r.per_type[t] = entity_prf(gt, pt);
  }
  r.buckets = breakdown(inv, gold, pred);
  return r;
}

std::vector<std::string> length_bucket_names(const std::vector<std::size_t>& edges) {
  std::vector<std::string> names;
  std::size_t lo = 1;
  for (auto e : edges) {
    names.push_back(lo == 1 ? "<=" + std::to_string(e) : std::to_string(lo) + "-" + std::to_string(e));
    lo = e + 1;
  }
  names.push_back(">=" + std::to_string(lo));
  return names;
}

std::size_t length_bucket_of(std::size_t length, const std::vector<std::size_t>& edges) {
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (length <= edges[i]) return i;
  return edges.size();
}

std::vector<LengthRow> length_buckets(const std::vector<Sentence>& sentences,
                                      const std::map<std::string, std::vector<std::vector<int>>>& predictions,
                                      const std::vector<std::size_t>& edges) {
  if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end() || edges.front() == 0)
    throw ConfigError("length bucket edges must be positive and strictly increasing");
  const auto names = length_bucket_names(edges);
  std::vector<LengthRow> rows;
  for (const auto& [config, pred] : predictions) {
    if (pred.size() != sentences.size()) throw ContractError("length_buckets: prediction count mismatch for " + config);
    std::vector<LengthRow> mine(names.size());
    for (std::size_t b = 0; b < names.size(); ++b) {
      mine[b].config = config;
      mine[b].bucket = names[b];
    }
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      auto& row = mine[length_bucket_of(sentences[i].tokens.size(), edges)];
      ++row.sentences;
      row.counts += entity_prf(extract_entities(sentences[i]),
                               extract_entities(pred[i], sentences[i].id, &sentences[i].tokens));
    }
    for (auto& r : mine) {
      if (r.sentences) r.f1 = r.counts.f1();
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

void write_length_csv(std::ostream& out, const std::vector<LengthRow>& rows) {
  out << "config,bucket,sentences,gold,predicted,correct,f1\n";
  for (const auto& r : rows) {
    out << csv_escape(r.config) << ',' << r.bucket << ',' << r.sentences << ',' << r.counts.gold << ','
        << r.counts.predicted << ',' << r.counts.correct << ',' << (r.f1 ? fmt(*r.f1) : "") << '\n';
  }
}

std::vector<std::vector<std::size_t>> nested_subsets(std::size_t n, const std::vector<double>& fractions,
                                                     std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("training fraction " + std::to_string(f) + " is outside (0, 1]");
    const auto k = static_cast<std::size_t>(f * static_cast<double>(n) + 1e-9);
    if (k == 0) throw ConfigError("training fraction " + std::to_string(f) + " selects no sentences");
    std::vector<std::size_t> sub(perm.begin(), perm.begin() + static_cast<long>(k));
    std::sort(sub.begin(), sub.end());
    out.push_back(std::move(sub));
  }
  return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "config,fraction,train_sentences,seed,f1\n";
  for (const auto& p : points)
    out << csv_escape(p.config) << ',' << p.fraction << ',' << p.train_sentences << ',' << p.seed << ',' << fmt(p.f1)
        << '\n';
}

double significance(const std::vector<std::vector<int>>& pred_a, const std::vector<std::vector<int>>& pred_b,
                    const std::vector<std::vector<int>>& gold, std::size_t n_resamples, std::uint64_t seed) {
  if (pred_a.size() != gold.size() || pred_b.size() != gold.size())
    throw ContractError("significance: systems were run on different sentence sets");
  if (n_resamples < 1000) throw ContractError("significance: need at least 1000 resamples");
  const std::size_t n = gold.size();
  if (n == 0) throw ContractError("significance: no sentences");
  std::vector<Prf> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_a[i].size() != gold[i].size() || pred_b[i].size() != gold[i].size())
      throw ContractError("significance: sentence " + std::to_string(i) + " differs in length between systems");
    const auto g = extract_entities(gold[i]);
    a[i] = entity_prf(g, extract_entities(pred_a[i]));
    b[i] = entity_prf(g, extract_entities(pred_b[i]));
  }
  auto delta = [&](const std::vector<std::size_t>* idx) {
    Prf sa, sb;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = idx ? (*idx)[i] : i;
      sa += a[k];
      sb += b[k];
    }
    return sa.f1() - sb.f1();
  };
  const double observed = delta(nullptr);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    for (auto& k : idx) k = pick(rng);
    if (std::abs(delta(&idx) - observed) >= std::abs(observed)) ++extreme;
  }
  return (static_cast<double>(extreme) + 1.0) / (static_cast<double>(n_resamples) + 1.0);
}

json attention_record(const Sentence& s, const std::vector<int>& predicted,
                      const std::map<std::string, Tensor>& diagnostics) {
  json pred = json::array();
  for (int l : predicted) pred.push_back(std::string(kLabels[static_cast<std::size_t>(l)]));
  json diags = json::object();
  for (const auto& [name, t] : diagnostics) diags[name] = t.to_rows();
  return {{"sentence_id", s.id},
          {"image_id", s.image_id ? json(*s.image_id) : json(nullptr)},
          {"tokens", s.tokens},
          {"gold", s.labels},
          {"pred", pred},
          {"diagnostics", diags}};
}

}  // namespace mner
