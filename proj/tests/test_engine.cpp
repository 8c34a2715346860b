#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <sstream>

#include "reshuffle/engine.hpp"
#include "reshuffle/error.hpp"
#include "support.hpp"

using namespace reshuffle;
using namespace testsupport;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RuleGraph figure(const std::string& name) { return load_rule_graph(fixture(name + ".json")); }

KnowledgeGraph graph(const std::string& text) {
  std::istringstream in(text);
  return parse_triples(in, "test.tsv");
}

std::vector<double> random_state(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> x(d);
  for (auto& v : x) v = unif(rng);
  return x;
}

// B_r as an Eigen matrix straight from the rule-graph edges.
RowMat edge_matrix(const RuleGraph& h, RelationId r) {
  RowMat b = RowMat::Zero(h.num_nodes(), h.num_nodes());
  for (const auto& e : h.edges_with(r)) b(e.dst, e.src) = 1.0;
  return b;
}

// Random graph over the non-fresh relations of a rule graph, with eq self-loops.
KnowledgeGraph random_kg(std::mt19937_64& rng, const RuleGraph& h, int entities, int triples) {
  std::vector<std::string> rels;
  for (const auto& info : h.relations().entries()) {
    if (info.kind == RelationKind::base) rels.push_back(info.name);
  }
  KnowledgeGraph g;
  for (int e = 0; e < entities; ++e) g.entities().intern("e" + std::to_string(e));
  for (int i = 0; i < triples; ++i) {
    g.add("e" + std::to_string(rng() % entities), rels[rng() % rels.size()],
          "e" + std::to_string(rng() % entities));
  }
  return h.relations().eq() ? augment(g, false, true) : g;
}

const char* const kGraphs[] = {"composition", "shared_suffix", "self_loop", "bounded_acyclic_m2"};

}  // namespace

TEST_CASE("compiled matrices follow the rule-graph edges") {
  const auto h = figure("self_loop");
  const auto model = compile_matrices(h, 3);
  CHECK(model.dims.ell == 4);
  CHECK(model.dims.d() == 12);
  const auto& b2 = model.matrix(h.relations().require("r2"));
  CHECK(b2.at(2, 0) == 1.0);  // n0 -> n_r2
  CHECK(b2.at(1, 1) == 1.0);  // loop at n_r1
  double total = 0;
  for (double v : b2.b) total += v;
  CHECK(total == 2.0);
  for (const auto& m : model.mats) CHECK(m.is_binary());

  const auto comp = figure("composition");
  const auto comp_model = compile_matrices(comp, 1);
  const auto& b3 = comp_model.matrix(comp.relations().require("r3"));
  CHECK(b3.at(1, 0) == 1.0);
  CHECK(std::count(b3.b.begin(), b3.b.end(), 1.0) == 1);

  auto extra = comp;
  const auto unused = extra.relations().intern("r9");
  const auto extra_model = compile_matrices(extra, 2);
  const auto& b9 = extra_model.matrix(unused);
  CHECK(std::all_of(b9.b.begin(), b9.b.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("layer-0 states are reproducible fair coin flips") {
  const ModelDims dims{10, 100, 1};
  const auto s = init_entities(10, dims, 42);
  CHECK(s == init_entities(10, dims, 42));
  CHECK_FALSE(s == init_entities(10, dims, 43));
  // 10^4 coordinates.
  double sum = 0;
  for (double v : s.values) {
    REQUIRE((v == 0.0 || v == 1.0));
    sum += v;
  }
  CHECK(std::abs(sum / s.values.size() - 0.5) < 0.02);
  // Entity rows look independent: Hamming distance d/2 +- 3 sqrt(d).
  const double d = static_cast<double>(dims.d());
  for (EntityId a = 0; a < 10; ++a) {
    for (EntityId b = a + 1; b < 10; ++b) {
      int diff = 0;
      for (std::size_t c = 0; c < dims.d(); ++c) diff += s.state(a)[c] != s.state(b)[c];
      CHECK(std::abs(diff - d / 2) <= 3 * std::sqrt(d));
    }
  }
  // Entity 3's state does not depend on how many entities are drawn.
  const auto small = init_entities(4, dims, 42);
  CHECK(std::equal(small.state(3).begin(), small.state(3).end(), s.state(3).begin()));
}

TEST_CASE("eq self-loops alone reach a fixpoint") {
  const auto g = augment(graph("a\tr1\tb\nb\tr1\tc\n"), false, true);
  const auto eq = *g.relations().eq();
  KnowledgeGraph only_eq(g.entities(), g.relations());
  for (const auto& t : g.triples()) {
    if (t.rel == eq) only_eq.insert(t);
  }
  // Identity-shaped B_eq: nothing moves.
  RuleGraph ident;
  ident.relations().ensure_eq();
  for (int i = 0; i < 3; ++i) ident.add_node();
  for (NodeId n = 0; n < 3; ++n) ident.add_edge(n, *ident.relations().eq(), n);
  const auto im = compile_matrices(ident, 8);
  const auto s0 = init_entities(only_eq.num_entities(), im.dims, 1);
  const auto s5 = forward(im, only_eq, s0, 5);
  CHECK(s5.values == s0.values);
  CHECK(s5.converged);
  // Constructed graphs copy the root block into the eq block once, then stop.
  const auto h = figure("composition");
  const auto model = compile_matrices(h, 8);
  const auto t0 = init_entities(only_eq.num_entities(), model.dims, 1);
  const auto t1 = forward(model, only_eq, t0, 1);
  CHECK(forward(model, only_eq, t1, 1).values == t1.values);
  for (EntityId e = 0; e < only_eq.num_entities(); ++e) {
    for (std::uint32_t t = 0; t < 8; ++t) {
      CHECK(t1.state(e)[4 * 8 + t] == std::max(t0.state(e)[4 * 8 + t], t0.state(e)[t]));
    }
  }
}

TEST_CASE("composition chain is captured and its reverse is not") {
  const auto h = figure("composition");
  const auto model = compile_matrices(h, 40);
  const auto g = augment(graph("a\tr1\tb\nb\tr2\tc\n"), false, true);
  const auto r3 = model.relations.require("r3");
  const EntityId a = *g.entities().find("a"), c = *g.entities().find("c");
  int reverse_hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s0 = init_entities(g.num_entities(), model.dims, seed);
    const auto s2 = forward(model, g, s0, 2);
    REQUIRE(capture(model, s2.state(a), s2.state(c), r3, 0.0));
    const auto fix = forward_to_fixpoint(model, g, s0);
    REQUIRE(capture(model, fix.state(a), fix.state(c), r3, 0.0));
    reverse_hits += capture(model, fix.state(c), fix.state(a), r3, 0.0);
  }
  CHECK(reverse_hits / 100.0 < 0.01);
}

TEST_CASE("forward is monotone, keeps binary values and ignores thread count") {
  std::mt19937_64 rng(9);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const auto model = compile_matrices(h, 4);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = random_kg(rng, h, 8, 15);
      auto s = init_entities(g.num_entities(), model.dims, rng());
      const auto plan = plan_messages(model, g);
      for (int round = 0; round < 6; ++round) {
        const auto next = forward_round(model, plan, s);
        CHECK(next == forward_round(model, plan, s, 3));
        for (std::size_t i = 0; i < s.values.size(); ++i) {
          REQUIRE(next.values[i] >= s.values[i]);
          REQUIRE((next.values[i] == 0.0 || next.values[i] == 1.0));
        }
        s = next;
      }
    }
  }
}

TEST_CASE("adding triples never lowers converged states") {
  std::mt19937_64 rng(13);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const auto model = compile_matrices(h, 4);
    for (int trial = 0; trial < 10; ++trial) {
      const auto small = random_kg(rng, h, 8, 10);
      auto big = small;
      const auto extra = random_kg(rng, h, 8, 10);
      for (const auto& t : extra.triples()) {
        big.add(extra.entities().name(t.head), extra.relations().name(t.rel),
                extra.entities().name(t.tail));
      }
      REQUIRE(big.num_entities() == small.num_entities());
      const auto s0 = init_entities(small.num_entities(), model.dims, rng());
      const auto a = forward_to_fixpoint(model, small, s0);
      const auto b = forward_to_fixpoint(model, big, s0);
      for (std::size_t i = 0; i < a.values.size(); ++i) REQUIRE(b.values[i] >= a.values[i]);
    }
  }
}

TEST_CASE("runaway growth hits the round cap") {
  Model model;
  model.dims = {1, 1, 1};
  model.mode = ModelMode::learned;
  model.relations.intern("r");
  model.mats.emplace_back(0, 1);
  model.mats[0].at(0, 0) = 2.0;
  const auto g = graph("a\tr\ta\n");
  Snapshot s;
  s.d = 1;
  s.values = {1.0};
  CHECK_THROWS_AS(forward_to_fixpoint(model, g, s), RuntimeFailure);
}

TEST_CASE("capture and score edge cases") {
  const auto h = figure("composition");
  const auto model = compile_matrices(h, 3);
  const auto r3 = h.relations().require("r3");
  std::mt19937_64 rng(1);
  const std::vector<double> zero(model.dims.d(), 0.0);
  const auto b = random_state(rng, model.dims.d());
  CHECK(capture(model, zero, b, r3, 0.0));
  CHECK(score(model, zero, b, r3) == 0.0);

  Model empty = model;
  for (auto& m : empty.mats) std::fill(m.b.begin(), m.b.end(), 0.0);
  CHECK(capture(empty, random_state(rng, model.dims.d()), zero, r3, 0.0));

  // One violating coordinate: block n2 of the tail trails block n1 of the head by delta.
  std::vector<double> za(model.dims.d(), 0.0), zb(model.dims.d(), 0.0);
  za[0 * 3 + 1] = 0.75;
  zb[1 * 3 + 1] = 0.5;
  CHECK(score(model, za, zb, r3) == -0.25);
  CHECK_FALSE(capture(model, za, zb, r3, 0.0));
  CHECK(capture(model, za, zb, r3, 0.25));
}

TEST_CASE("score is zero exactly when the pair is captured") {
  std::mt19937_64 rng(21);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const auto model = compile_matrices(h, 2);
    for (int i = 0; i < 200; ++i) {
      const auto s = init_entities(2, model.dims, rng());
      const auto r = static_cast<RelationId>(rng() % model.mats.size());
      const double sc = score(model, s.state(0), s.state(1), r);
      REQUIRE(sc <= 0.0);
      REQUIRE((sc == 0.0) == capture(model, s.state(0), s.state(1), r, 0.0));
      const auto x = random_state(rng, model.dims.d()), y = random_state(rng, model.dims.d());
      REQUIRE((score(model, x, y, r) == 0.0) == capture(model, x, y, r, 0.0));
    }
  }
}

TEST_CASE("capture equals the index-set ordering constraint") {
  std::mt19937_64 rng(17);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const std::uint32_t k = 3;
    const auto model = compile_matrices(h, k);
    for (RelationId r = 0; r < h.relations().size(); ++r) {
      const auto oc = ordering_constraint(h, r, k);
      REQUIRE(oc.index_set.size() == oc.reindex.size());
      CHECK(oc.index_set.size() == h.edges_with(r).size() * k);
      for (int i = 0; i < 50; ++i) {
        const auto s = init_entities(2, model.dims, rng());
        bool holds = true;
        for (std::size_t j = 0; j < oc.index_set.size(); ++j) {
          holds &= s.state(0)[oc.reindex[j]] <= s.state(1)[oc.index_set[j]];
        }
        REQUIRE(holds == capture(model, s.state(0), s.state(1), r, 0.0));
      }
    }
  }
}

TEST_CASE("mu of a single relation is the block matrix product") {
  std::mt19937_64 rng(3);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const std::uint32_t k = 5;
    for (int i = 0; i < 100; ++i) {
      const auto r = static_cast<RelationId>(rng() % h.relations().size());
      const auto x = random_state(rng, h.num_nodes() * k);
      const RowMat z = Eigen::Map<const RowMat>(x.data(), h.num_nodes(), k);
      const RowMat bz = edge_matrix(h, r) * z;
      const std::vector<double> expect(bz.data(), bz.data() + bz.size());
      REQUIRE(mu_path(h, PathType{{r}}, k, x) == expect);
    }
  }
}

TEST_CASE("mu of a path composes left to right") {
  std::mt19937_64 rng(4);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    const std::uint32_t k = 3;
    const auto nrel = h.relations().size();
    for (int i = 0; i < 100; ++i) {
      const auto x = random_state(rng, h.num_nodes() * k);
      PathType path;
      const int len = 1 + static_cast<int>(rng() % 4);
      for (int j = 0; j < len; ++j) path.rels.push_back(static_cast<RelationId>(rng() % nrel));
      auto step = x;
      for (auto r : path.rels) step = mu_path(h, PathType{{r}}, k, step);
      REQUIRE(mu_path(h, path, k, x) == step);
    }
    const auto x = random_state(rng, h.num_nodes() * k);
    CHECK(mu_path(h, PathType{}, k, x) == x);
  }
}

TEST_CASE("Kronecker lift matches Eigen and the two update forms agree bitwise") {
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    for (std::uint32_t k : {1u, 3u}) {
      const auto model = compile_matrices(h, k);
      for (const auto& m : model.mats) {
        const RowMat b = Eigen::Map<const RowMat>(m.b.data(), m.ell, m.ell);
        const RowMat a = Eigen::kroneckerProduct(b, RowMat::Identity(k, k));
        REQUIRE(kronecker_lift(m, k) == std::vector<double>(a.data(), a.data() + a.size()));
      }
      CHECK(kronecker_equivalence_check(model, 50, 7));
    }
  }
}

TEST_CASE("Kronecker check notices a corrupted lifted matrix") {
  const auto h = figure("composition");
  const auto model = compile_matrices(h, 2);
  std::vector<std::vector<double>> lifted;
  for (const auto& m : model.mats) lifted.push_back(kronecker_lift(m, 2));
  const auto r3 = h.relations().require("r3");
  const std::size_t d = model.dims.d();
  // A_r3 row (n2, t=0) picks from (n1, t=0); make it pick (n1, t=1) instead.
  lifted[r3][(1 * 2 + 0) * d + 0 * 2 + 0] = 0.0;
  lifted[r3][(1 * 2 + 0) * d + 0 * 2 + 1] = 1.0;
  CHECK_FALSE(kronecker_equivalence_check(model, lifted, 50, 7));
}

TEST_CASE("bit-packed engine tracks the dense engine round by round") {
  std::mt19937_64 rng(27);
  for (const char* name : kGraphs) {
    const auto h = figure(name);
    for (std::uint32_t k : {1u, 63u, 64u, 130u}) {
      const auto model = compile_matrices(h, k);
      const auto g = random_kg(rng, h, 10, 25);
      const auto s0 = init_entities(g.num_entities(), model.dims, rng());
      BitEngine bits(model, g);
      bits.load(s0);
      REQUIRE(bits.snapshot().values == s0.values);
      const auto plan = plan_messages(model, g);
      auto dense = s0;
      for (int round = 0; round < 8; ++round) {
        dense = forward_round(model, plan, dense);
        const bool changed = bits.round();
        REQUIRE(bits.snapshot().values == dense.values);
        REQUIRE(changed == !dense.converged);
      }
      const auto fix = forward_to_fixpoint(model, g, s0);
      bits.run_to_fixpoint();
      REQUIRE(bits.snapshot().values == fix.values);
      for (EntityId a = 0; a < g.num_entities(); ++a) {
        for (EntityId b = 0; b < g.num_entities(); ++b) {
          for (RelationId r = 0; r < model.mats.size(); ++r) {
            REQUIRE(bits.capture(a, r, b) == capture(model, fix.state(a), fix.state(b), r, 0.0));
          }
        }
      }
    }
  }
}

TEST_CASE("relations missing from the model are rejected") {
  const auto model = compile_matrices(figure("composition"), 2);
  const auto g = graph("a\tunknown\tb\n");
  CHECK_THROWS_AS(plan_messages(model, g), InputError);
}

TEST_CASE("small proposition run on the composition graph") {
  auto rb = load_rules(fixture("composition.rules"));
  const auto h = figure("composition");
  std::mt19937_64 rng(5);
  // Sparse enough that no tail block collects many messages.
  auto g = random_kg(rng, h, 20, 20);
  align(rb, g);
  PropositionConfig pc;
  pc.k_values = {1, 16, 64};
  pc.seeds = 20;
  const auto rep = verify_propositions(rb, g, h, pc);
  CHECK(rep.entailed > 0);
  CHECK(rep.missed == 0);
  CHECK(rep.completeness == 1.0);
  REQUIRE(rep.false_positive_rate.size() == 3);
  CHECK(rep.false_positive_rate[2] < rep.false_positive_rate[0]);
  CHECK(rep.false_positive_rate[2] < 0.01);
}
