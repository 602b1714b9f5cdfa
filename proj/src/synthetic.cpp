#include "mner/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

namespace {

using Words = std::vector<std::string>;

// Per type (PER, LOC, ORG, MISC).
const std::vector<std::vector<Words>> kNames{
    {{"alice"}, {"bruno"}, {"carmen"}, {"dmitri"}, {"elena"}, {"farid"}, {"greta"}, {"hiro"}, {"mary", "jane"},
     {"john", "smith"}},
    {{"oslo"}, {"lima"}, {"cairo"}, {"dublin"}, {"kyoto"}, {"quebec"}, {"nairobi"}, {"perth"}, {"new", "york"},
     {"san", "diego"}},
    {{"unicef"}, {"nasa"}, {"fifa"}, {"toyota"}, {"oxfam"}, {"intel"}, {"reuters"}, {"ikea"}, {"red", "cross"},
     {"world", "bank"}},
    {{"olympics"}, {"oscars"}, {"ramadan"}, {"brexit"}, {"eurovision"}, {"grammys"}, {"diwali"}, {"coachella"},
     {"super", "bowl"}, {"world", "cup"}},
};

struct Ambiguous {
  std::string surface;
  std::vector<int> types;
};

const std::vector<Ambiguous> kAmbiguous{
    {"jordan", {0, 1}},   {"washington", {0, 1}}, {"georgia", {0, 1}}, {"victoria", {0, 1}},
    {"amazon", {2, 1}},   {"orange", {2, 1}},     {"phoenix", {1, 2}}, {"mercury", {0, 3}},
    {"jaguar", {2, 3}},   {"apple", {2, 0}},
};

// Text cues that follow an ambiguous entity in longer sentences.
const std::vector<Words> kCues{
    {"smiled", "married", "sang", "laughed", "tweeted", "coached", "retired", "apologized", "blushed", "hugged",
     "proposed", "graduated", "shrugged", "whispered", "divorced", "autographed", "cried", "danced", "resigned",
     "testified", "winked", "yawned", "posed", "sneezed"},
    {"flooded", "downtown", "weather", "landed", "traffic", "skyline", "harbor", "suburbs", "airport", "beaches",
     "rainfall", "outskirts", "neighborhoods", "coastline", "snowfall", "mayor", "tourists", "highways", "borough",
     "heatwave", "riverside", "commuters", "landmarks", "zoning"},
    {"shares", "hired", "profits", "merger", "sued", "launched", "headquarters", "layoffs", "ceo", "earnings",
     "stock", "acquired", "shareholders", "startup", "recalled", "subsidiary", "quarterly", "patents", "franchise",
     "investors", "boardroom", "dividends", "rebranded", "outsourced"},
    {"tickets", "ceremony", "finale", "lineup", "parade", "halftime", "trophy", "livestream", "fireworks", "nominees",
     "encore", "festivities", "kickoff", "afterparty", "redcarpet", "headliner", "medalists", "countdown", "opener",
     "broadcast", "spectators", "rehearsal", "jubilee", "fanfare"},
};

// Caption words naming a type.
const std::vector<Words> kKeywords{
    {"person"},
    {"city"},
    {"logo"},
    {"event"},
};

const Words kFiller{"the",   "a",     "today", "this",  "was",     "so",     "very",  "my",     "we",    "at",
                    "for",   "with",  "just",  "big",   "day",     "night",  "time",  "love",   "great", "see",
                    "back",  "from",  "our",   "about", "here",    "there",  "and",   "but",    "again", "now",
                    "still", "really", "good", "best",  "fun",     "week",   "year",  "morning", "tonight", "look",
                    "going", "after", "before", "what", "when",    "who",    "happy", "amazing", "finally", "always",
                    "never", "more",  "some",  "all",   "one",     "two",    "first", "last",   "long",  "little",
                    "old",   "free",  "open",  "top",   "news",    "photo",  "video", "game",   "music", "team",
                    "home",  "wow",   "lol",   "omg",   "yes",     "no",     "maybe", "cool",   "nice",  "wait"};

const Words kCaptionFiller{"a", "an", "the", "of", "with", "in", "near", "on", "and", "some",
                           "photo", "picture", "view", "close", "up", "blurry", "bright", "dark", "small", "large"};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::size_t uniform(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t split, std::uint64_t index) {
  // splitmix64 over the combined key
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + split * 0xBF58476D1CE4E5B9ULL + index + 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Unit {
  Words tokens;
  Words labels;
};

Unit entity_unit(const Words& name, int type) {
  Unit u;
  u.tokens = name;
  for (std::size_t i = 0; i < name.size(); ++i)
    u.labels.emplace_back(kLabels[static_cast<std::size_t>(i == 0 ? begin_label(type) : inside_label(type))]);
  return u;
}

struct Generated {
  Sentence sentence;
  int ambiguous_type = -1;
};

Generated generate_text(Rng& rng) {
  Generated g;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t target;
  double cue_prob;
  if (u < 0.45) {
    target = uniform(3, 8, rng);
    cue_prob = 0.0;
  } else if (u < 0.65) {
    target = uniform(9, 16, rng);
    cue_prob = 0.5;
  } else if (u < 0.85) {
    target = uniform(17, 24, rng);
    cue_prob = 1.0;
  } else {
    target = uniform(25, 30, rng);
    cue_prob = 1.0;
  }
  const bool short_sentence = target <= 8;

  std::vector<Unit> units;
  if (std::bernoulli_distribution(0.85)(rng)) {
    const auto& amb = pick(kAmbiguous, rng);
    g.ambiguous_type = pick(amb.types, rng);
    Unit u = entity_unit({amb.surface}, g.ambiguous_type);
    if (std::bernoulli_distribution(cue_prob)(rng)) {
      u.tokens.push_back(pick(kCues[static_cast<std::size_t>(g.ambiguous_type)], rng));
      u.labels.emplace_back("O");
    }
    units.push_back(std::move(u));
  }
  const std::size_t extra = short_sentence ? uniform(0, 1, rng) : uniform(1, 2, rng);
  for (std::size_t i = 0; i < extra; ++i) {
    const int type = static_cast<int>(uniform(0, 3, rng));
    units.push_back(entity_unit(pick(kNames[static_cast<std::size_t>(type)], rng), type));
  }
  std::size_t used = 0;
  for (const auto& u : units) used += u.tokens.size();
  // at least one filler word keeps entity units from touching
  const std::size_t fill = std::max<std::size_t>(target > used ? target - used : 0, units.size() > 1 ? 1 : 0);
  for (std::size_t i = 0; i < fill; ++i) units.push_back({{pick(kFiller, rng)}, {"O"}});
  std::shuffle(units.begin(), units.end(), rng);
  // two entity units next to each other would still be valid BIO, but keep
  // spans separated by at least one O so surface strings stay unambiguous
  for (std::size_t i = 1; i < units.size(); ++i) {
    if (units[i - 1].labels.back() != "O" && units[i].labels.front() != "O") {
      for (std::size_t j = i + 1; j < units.size(); ++j)
        if (units[j].labels.front() == "O" && units[j].tokens.size() == 1) {
          std::swap(units[i], units[j]);
          break;
        }
    }
  }
  for (const auto& u : units) {
    g.sentence.tokens.insert(g.sentence.tokens.end(), u.tokens.begin(), u.tokens.end());
    g.sentence.labels.insert(g.sentence.labels.end(), u.labels.begin(), u.labels.end());
  }
  return g;
}

std::vector<double> noise(std::size_t n, double scale, Rng& rng) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = std::round(d(rng) * 1e6) / 1e6;
  return v;
}

void plant(std::vector<double>& values, std::size_t row, std::size_t dim, const std::vector<double>& direction) {
  for (std::size_t c = 0; c < dim; ++c) values[row * dim + c] += direction[c];
}

}  // namespace

std::string to_string(Signal s) {
  switch (s) {
    case Signal::none: return "none";
    case Signal::caption: return "caption";
    case Signal::region: return "region";
  }
  return "none";
}

Signal signal_from_string(const std::string& s) {
  if (s == "none") return Signal::none;
  if (s == "caption") return Signal::caption;
  if (s == "region") return Signal::region;
  throw ConfigError("unknown signal '" + s + "' (expected none, caption or region)");
}

std::optional<int> caption_keyword_type(const std::vector<std::string>& caption) {
  for (const auto& w : caption)
    for (std::size_t t = 0; t < kKeywords.size(); ++t)
      if (std::find(kKeywords[t].begin(), kKeywords[t].end(), w) != kKeywords[t].end()) return static_cast<int>(t);
  return std::nullopt;
}

bool is_ambiguous_surface(const std::string& surface) {
  return std::any_of(kAmbiguous.begin(), kAmbiguous.end(), [&](const auto& a) { return a.surface == surface; });
}

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_train == 0 || cfg.n_dev == 0 || cfg.n_test == 0) throw ConfigError("synthetic split sizes must be >= 1");
  if (cfg.feature_dim == 0) throw ConfigError("synthetic feature_dim must be >= 1");
  if (cfg.min_regions < 1 || cfg.max_regions > kMaxRegions || cfg.min_regions > cfg.max_regions)
    throw ConfigError("synthetic region counts must satisfy 1 <= min <= max <= 36");

  Rng text_rng(cfg.seed);
  Rng proto_rng(mix(cfg.seed, 99, 0));
  const std::size_t d = cfg.feature_dim;
  std::vector<std::vector<double>> prototypes;
  for (std::size_t t = 0; t < kEntityTypes.size(); ++t) {
    auto v = noise(d, 1.0, proto_rng);
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x = std::round(x / norm * 3.0 * 1e6) / 1e6;
    prototypes.push_back(std::move(v));
  }

  SynthCorpus out;
  std::set<Words> seen;
  const std::vector<std::pair<std::string, std::size_t>> splits{
      {"train", cfg.n_train}, {"dev", cfg.n_dev}, {"test", cfg.n_test}};
  for (std::size_t si = 0; si < splits.size(); ++si) {
    const auto& [name, count] = splits[si];
    auto& dest = si == 0 ? out.train : si == 1 ? out.dev : out.test;
    for (std::size_t i = 0; i < count; ++i) {
      Generated g;
      do {
        g = generate_text(text_rng);
      } while (!seen.insert(g.sentence.tokens).second);

      Rng img_rng(mix(cfg.seed, si, i));
      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "%s-%05zu", name.c_str(), i);
      g.sentence.id = "s" + std::to_string(i);
      g.sentence.image_id = idbuf;

      const bool caption_signal = cfg.signal == Signal::caption && g.ambiguous_type >= 0;
      const bool region_signal = cfg.signal == Signal::region && g.ambiguous_type >= 0;

      // Image-side draws happen unconditionally and in a fixed order, so
      // the noise is identical whatever the signal.
      const int random_type = static_cast<int>(uniform(0, 3, img_rng));
      const std::size_t cap_len = uniform(4, 7, img_rng);
      Words caption;
      for (std::size_t k = 0; k < cap_len; ++k) caption.push_back(pick(kCaptionFiller, img_rng));
      const std::size_t kw_pos = uniform(0, cap_len, img_rng);
      const int kw_type = caption_signal ? g.ambiguous_type : random_type;
      const auto& kw = pick(kKeywords[static_cast<std::size_t>(kw_type)], img_rng);
      caption.insert(caption.begin() + static_cast<long>(kw_pos), kw);
      g.sentence.caption = caption;

      auto glob = std::make_shared<ImageFeatures>();
      glob->image_id = idbuf;
      glob->kind = FeatureKind::global;
      glob->regions = kGlobalRegions;
      glob->dim = d;
      glob->values = noise(kGlobalRegions * d, 0.5, img_rng);
      const std::size_t cell = uniform(0, kGlobalRegions - 1, img_rng);

      auto reg = std::make_shared<ImageFeatures>();
      reg->image_id = idbuf;
      reg->kind = FeatureKind::regional;
      reg->regions = uniform(cfg.min_regions, cfg.max_regions, img_rng);
      reg->dim = d;
      reg->values = noise(reg->regions * d, 0.5, img_rng);
      const std::size_t slot = uniform(0, reg->regions - 1, img_rng);

      if (region_signal) {
        const auto& proto = prototypes[static_cast<std::size_t>(g.ambiguous_type)];
        plant(glob->values, cell, d, proto);
        plant(reg->values, slot, d, proto);
      }
      out.global[idbuf] = std::move(glob);
      out.regional[idbuf] = std::move(reg);
      dest.push_back(std::move(g.sentence));
    }
  }
  return out;
}

void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(dir / "train.txt", corpus.train);
  save_corpus(dir / "dev.txt", corpus.dev);
  save_corpus(dir / "test.txt", corpus.test);
  save_features(dir / "global.jsonl", corpus.global);
  save_features(dir / "regional.jsonl", corpus.regional);
}

}  // namespace mner
