#pragma once

// Hand-built 12-sentence corpus (4 train, 8 test) with known bucket
// memberships. Expected counts, worked out by hand:
//
//   gold  s1 jordan/PER seen multi      pred s1 jordan/PER  hit   seen multi
//         s2 jordan/LOC seen multi           s2 jordan/PER  miss  seen multi (overlap)
//         s3 paris/LOC  seen single          s3 paris/LOC   hit   seen single
//         s4 paris hilton/PER unseen         s4 paris/LOC   miss  unseen (overlap)
//         s5 acme corp/ORG seen single       s5 acme corp   hit   seen single
//         s6 berlin/LOC unseen               s7 paris/LOC   miss  seen single (own pair)
//                                            s8 zork/MISC   miss  unseen (own pair)
//
//   seen   3/5/4 -> F1 2/3      unseen 0/2/2 -> F1 0
//   multi  1/2/2 -> F1 1/2      single 2/3/2 -> F1 4/5
//   overall 3/7/6 -> F1 6/13    (correct/predicted/gold)

#include <string>
#include <vector>

#include "mner/corpus.hpp"
#include "mner/labels.hpp"

namespace mner::testing {

inline Sentence fixture_sentence(const std::string& id, std::vector<std::string> tokens,
                                 std::vector<std::string> labels) {
  Sentence s;
  s.id = id;
  s.tokens = std::move(tokens);
  s.labels = std::move(labels);
  return s;
}

struct BreakdownFixture {
  std::vector<Sentence> train, test;
  std::vector<std::vector<int>> predicted;
};

inline std::vector<int> label_ids(const std::vector<std::string>& labels) {
  std::vector<int> out;
  for (const auto& l : labels) out.push_back(*label_index(l));
  return out;
}

inline BreakdownFixture breakdown_fixture() {
  BreakdownFixture f;
  f.train = {
      fixture_sentence("t1", {"jordan", "went", "home"}, {"B-PER", "O", "O"}),
      fixture_sentence("t2", {"visit", "jordan", "now"}, {"O", "B-LOC", "O"}),
      fixture_sentence("t3", {"paris", "is", "big"}, {"B-LOC", "O", "O"}),
      fixture_sentence("t4", {"acme", "corp", "hired"}, {"B-ORG", "I-ORG", "O"}),
  };
  f.test = {
      fixture_sentence("s1", {"jordan", "spoke"}, {"B-PER", "O"}),
      fixture_sentence("s2", {"in", "jordan", "today"}, {"O", "B-LOC", "O"}),
      fixture_sentence("s3", {"paris", "rocks"}, {"B-LOC", "O"}),
      fixture_sentence("s4", {"paris", "hilton", "sings"}, {"B-PER", "I-PER", "O"}),
      fixture_sentence("s5", {"acme", "corp", "rises"}, {"B-ORG", "I-ORG", "O"}),
      fixture_sentence("s6", {"berlin", "calls"}, {"B-LOC", "O"}),
      fixture_sentence("s7", {"the", "paris", "show"}, {"O", "O", "O"}),
      fixture_sentence("s8", {"zork", "wins"}, {"O", "O"}),
  };
  f.predicted = {
      label_ids({"B-PER", "O"}),
      label_ids({"O", "B-PER", "O"}),
      label_ids({"B-LOC", "O"}),
      label_ids({"B-LOC", "O", "O"}),
      label_ids({"B-ORG", "I-ORG", "O"}),
      label_ids({"O", "O"}),
      label_ids({"O", "B-LOC", "O"}),
      label_ids({"B-MISC", "O"}),
  };
  return f;
}

}  // namespace mner::testing
