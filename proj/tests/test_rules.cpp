#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "rulemine/errors.hpp"
#include "rulemine/rules.hpp"

using namespace rulemine;
using testutil::make_kg;

namespace {

RelationDistribution dist(const KnowledgeGraph& kg, std::vector<std::pair<int, double>> entries) {
  RelationDistribution d;
  d.p.assign(static_cast<size_t>(kg.augmented_count()), 0.0);
  double sum = 0.0;
  for (const auto& [r, w] : entries) {
    d.p[static_cast<size_t>(r)] = w;
    sum += w;
  }
  // slack goes to the self-loop so the distribution contract holds
  d.p[static_cast<size_t>(kg.self_loop())] += 1.0 - sum;
  return d;
}

// oracle: does the body ground from x to y anywhere in the graph?
bool grounds(const KnowledgeGraph& kg, int x, const std::vector<int>& body, int y, size_t step = 0) {
  if (step == body.size()) return x == y;
  bool found = false;
  kg.view(body[step]).for_row(x, [&](int n) {
    if (!found && grounds(kg, n, body, y, step + 1)) found = true;
  });
  return found;
}

}  // namespace

TEST_CASE("rule parsing follows the scale/threshold/expand trace") {
  const KnowledgeGraph kg = make_kg({{"h", "r1", "x"}, {"h", "r2", "y"}, {"x", "r2", "z"}});
  const int h = *kg.entities.find("h");
  const int r1 = *kg.relations.find("r1"), r2 = *kg.relations.find("r2");

  SUBCASE("single step keeps only relations above the scaled threshold") {
    // scaled: r1 -> 1.0, r2 -> 0.25; threshold 0.5 kills r2
    const auto rules = parse_rules({dist(kg, {{r1, 0.8}, {r2, 0.2}})}, h, kg, 0.5);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].body == std::vector<int>{r1});
    CHECK(rules[0].confidence == doctest::Approx(1.0));
  }
  SUBCASE("an ungrounded path dies") {
    // no r1 edge from z
    const auto rules = parse_rules({dist(kg, {{r1, 0.8}, {r2, 0.2}})}, *kg.entities.find("z"), kg, 0.5);
    CHECK(rules.empty());
  }
  SUBCASE("two steps multiply scaled confidences") {
    const auto rules =
        parse_rules({dist(kg, {{r1, 0.8}, {r2, 0.2}}), dist(kg, {{r2, 0.5}, {r1, 0.3}})}, h, kg, 0.5);
    // step 1: r1 (scaled 1.0) to x; step 2 from x: r2 scaled 1.0 reaches z; r1 scaled 0.6 has no edge
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].body == std::vector<int>{r1, r2});
    CHECK(rules[0].confidence == doctest::Approx(1.0));
  }
  SUBCASE("self-loop only paths are dropped after stripping") {
    const auto rules = parse_rules(
        {dist(kg, {{kg.self_loop(), 1.0}}), dist(kg, {{kg.self_loop(), 1.0}})}, h, kg, 0.5);
    CHECK(rules.empty());
  }
  SUBCASE("self-loop atoms are stripped from mixed bodies") {
    const auto rules = parse_rules(
        {dist(kg, {{r1, 1.0}}), dist(kg, {{kg.self_loop(), 1.0}})}, h, kg, 0.5);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].body == std::vector<int>{r1});
  }
  SUBCASE("threshold 0.999 keeps only the argmax relation") {
    const auto rules = parse_rules({dist(kg, {{r1, 0.8}, {r2, 0.2}})}, h, kg, 0.999);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].body == std::vector<int>{r1});
  }
}

TEST_CASE("emitted confidences stay within the threshold bound") {
  Rng rng(3);
  const KnowledgeGraph kg = testutil::random_kg(8, 3, 30, rng);
  const double thr = 0.3;
  const int steps = 3;
  for (int trial = 0; trial < 10; ++trial) {
    const auto omegas = testutil::random_omegas(kg, steps, rng);
    const auto rules = parse_rules(omegas, rng.below(kg.num_entities()), kg, thr);
    for (const ParsedRule& r : rules) {
      CHECK(r.confidence > std::pow(thr, steps));
      CHECK(r.confidence <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("every emitted body grounds from the query head") {
  Rng rng(5);
  const KnowledgeGraph kg = testutil::random_kg(8, 3, 30, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const int head = rng.below(kg.num_entities());
    const auto rules = parse_rules(testutil::random_omegas(kg, 2, rng), head, kg, 0.4);
    for (const ParsedRule& r : rules) {
      bool found = false;
      for (int y = 0; y < kg.num_entities() && !found; ++y) found = grounds(kg, head, r.body, y);
      CHECK(found);
    }
  }
}

TEST_CASE("path explosion is capped keeping the strongest paths") {
  // head fans out to 6 entities via r1 (weight 1.0) and 6 via r2 (weight 0.6)
  std::vector<testutil::StrTriple> train;
  for (int i = 0; i < 6; ++i) {
    train.push_back({"h", "r1", "a" + std::to_string(i)});
    train.push_back({"h", "r2", "b" + std::to_string(i)});
  }
  const KnowledgeGraph kg = make_kg(train);
  const int r1 = *kg.relations.find("r1"), r2 = *kg.relations.find("r2");
  const auto rules = parse_rules({dist(kg, {{r1, 0.5}, {r2, 0.3}})}, *kg.entities.find("h"), kg, 0.1,
                                 /*max_paths=*/6);
  REQUIRE(rules.size() == 6);
  for (const ParsedRule& r : rules) CHECK(r.body == std::vector<int>{r1});  // weaker paths pruned
}

TEST_CASE("aggregation averages, ranks and tie-breaks") {
  RuleTable table;
  table.add(0, {1}, 1.0);
  table.add(0, {1}, 0.5);
  table.add(0, {2}, 0.75);
  table.add(1, {3}, 0.75);
  table.add(1, {3}, 0.75);
  table.add(1, {3}, 0.75);
  table.add(1, {3}, 0.75);
  table.add(1, {3}, 0.75);
  table.add(2, {9}, 0.2);

  const auto ranked = table.aggregate();
  REQUIRE(ranked.size() == 4);
  // rule (0,{1}): mean 0.75 support 2; (0,{2}): 0.75 support 1; (1,{3}): 0.75 support 5
  CHECK(ranked[0].head_rel == 1);  // same mean, largest support first
  CHECK(ranked[0].support == 5);
  CHECK(ranked[0].confidence == doctest::Approx(0.75));
  CHECK(ranked[1].head_rel == 0);  // support 2 beats support 1
  CHECK(ranked[1].body == std::vector<int>{1});
  CHECK(ranked[2].body == std::vector<int>{2});
  CHECK(ranked[3].confidence == doctest::Approx(0.2));

  SUBCASE("singleton observation keeps its value") {
    RuleTable t2;
    t2.add(4, {1, 2}, 0.31);
    CHECK(t2.aggregate()[0].confidence == doctest::Approx(0.31));
  }
  SUBCASE("equal mean and support fall back to lexicographic body") {
    RuleTable t2;
    t2.add(0, {2, 1}, 0.5);
    t2.add(0, {1, 2}, 0.5);
    const auto r = t2.aggregate();
    CHECK(r[0].body == std::vector<int>{1, 2});
  }
  SUBCASE("merge concatenates observations") {
    RuleTable a, b;
    a.add(0, {1}, 1.0);
    b.add(0, {1}, 0.0);
    a.merge(b);
    CHECK(a.aggregate()[0].confidence == doctest::Approx(0.5));
  }
}

TEST_CASE("standard confidence worked example") {
  SUBCASE("body implying head is fully confident") {
    const KnowledgeGraph kg = make_kg({{"a", "p", "b"}, {"c", "p", "d"}});
    CHECK(*standard_confidence(0, {0}, kg) == doctest::Approx(1.0));
  }
  SUBCASE("support grows while the head stays behind") {
    const KnowledgeGraph kg1 = make_kg({{"a", "p", "b"}, {"b", "q", "c"}, {"a", "s", "c"}});
    const int p = *kg1.relations.find("p"), q = *kg1.relations.find("q"), s = *kg1.relations.find("s");
    CHECK(*standard_confidence(s, {p, q}, kg1) == doctest::Approx(1.0));
    const KnowledgeGraph kg2 = make_kg(
        {{"a", "p", "b"}, {"b", "q", "c"}, {"a", "s", "c"}, {"a", "p", "d"}, {"d", "q", "e"}});
    CHECK(*standard_confidence(*kg2.relations.find("s"),
                               {*kg2.relations.find("p"), *kg2.relations.find("q")}, kg2) ==
          doctest::Approx(0.5));
  }
  SUBCASE("ungroundable body has undefined confidence") {
    const KnowledgeGraph kg = make_kg({{"a", "p", "b"}, {"c", "q", "d"}});
    const int p = *kg.relations.find("p");
    CHECK_FALSE(standard_confidence(p, {p, p}, kg).has_value());
  }
}

TEST_CASE("standard confidence equals exhaustive pair enumeration") {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const int entities = 3 + rng.below(4);  // up to 6
    const int relations = 1 + rng.below(3);
    const KnowledgeGraph kg = testutil::random_kg(entities, relations, 2 * entities + 4, rng);
    std::vector<int> body;
    const int body_len = 1 + rng.below(3);
    for (int i = 0; i < body_len; ++i) body.push_back(rng.below(kg.augmented_count()));
    const int head_rel = rng.below(2 * kg.num_base());

    long support = 0, correct = 0;
    for (int x = 0; x < kg.num_entities(); ++x) {
      for (int y = 0; y < kg.num_entities(); ++y) {
        if (!grounds(kg, x, body, y)) continue;
        ++support;
        if (kg.adjacency[static_cast<size_t>(head_rel)].has(x, y)) ++correct;
      }
    }
    const auto sc = standard_confidence(head_rel, body, kg);
    if (support == 0) {
      CHECK_FALSE(sc.has_value());
    } else {
      REQUIRE(sc.has_value());
      CHECK(*sc == static_cast<double>(correct) / static_cast<double>(support));
    }
  }
}

TEST_CASE("top-k averaging skips undefined entries and flags truncation") {
  std::vector<ScoredRule> ranked;
  auto push = [&](double conf, std::optional<double> sc) {
    ScoredRule s;
    s.rule.head_rel = 0;
    s.rule.body = {0};
    s.rule.confidence = conf;
    s.sc = sc;
    ranked.push_back(s);
  };
  push(0.9, 0.8);
  push(0.8, std::nullopt);
  push(0.7, 0.4);
  push(0.6, 1.0);

  SUBCASE("k = 1 takes the single top rule") {
    const TopkSc r = topk_average_sc(ranked, 1);
    CHECK(r.value == doctest::Approx(0.8));
    CHECK(r.rules_used == 1);
    CHECK_FALSE(r.truncated);
  }
  SUBCASE("k = 3 averages the defined entries among the top 3") {
    const TopkSc r = topk_average_sc(ranked, 3);
    CHECK(r.value == doctest::Approx((0.8 + 0.4) / 2));
    CHECK(r.rules_used == 2);
  }
  SUBCASE("k beyond the list averages what exists and warns") {
    const TopkSc r = topk_average_sc(ranked, 50);
    CHECK(r.truncated);
    CHECK(r.rules_used == 3);
    CHECK(r.value == doctest::Approx((0.8 + 0.4 + 1.0) / 3));
  }
  SUBCASE("constant scores average to the constant") {
    std::vector<ScoredRule> same(5);
    for (auto& s : same) {
      s.rule.body = {0};
      s.sc = 0.837;
    }
    CHECK(topk_average_sc(same, 5).value == doctest::Approx(0.837));
  }
}

TEST_CASE("rule files round trip through names") {
  const auto dir = testutil::scratch_dir("rules_io");
  const KnowledgeGraph kg = make_kg({{"a", "likes", "b"}, {"b", "knows", "c"}});
  std::vector<AggregatedRule> rules;
  rules.push_back({*kg.relations.find("likes"),
                   {*kg.relations.find("knows"), kg.inverse(*kg.relations.find("likes"))},
                   0.625,
                   3});
  write_rule_file(dir / "rules.tsv", rules, kg);
  const auto back = read_rule_file(dir / "rules.tsv", kg);
  REQUIRE(back.size() == 1);
  CHECK(back[0].head_rel == rules[0].head_rel);
  CHECK(back[0].body == rules[0].body);
  CHECK(back[0].confidence == doctest::Approx(0.625));

  SUBCASE("unparseable lines report their number") {
    testutil::write_file(dir / "bad.tsv", "0.5\tlikes\tknows\nnot a rule line\n");
    try {
      read_rule_file(dir / "bad.tsv", kg);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::parse);
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("unknown relation names are rejected") {
    testutil::write_file(dir / "bad2.tsv", "0.5\tlikes\tnot_a_relation\n");
    CHECK_THROWS_AS(read_rule_file(dir / "bad2.tsv", kg), Error);
  }
}
