#include "reshuffle/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "reshuffle/error.hpp"

namespace reshuffle {

void ModelDims::validate() const {
  if (ell < 1 || k < 1) throw InputError("model dims need ell >= 1 and k >= 1");
}

bool RelationMatrix::is_binary() const {
  for (std::uint32_t i = 0; i < ell; ++i) {
    int ones = 0;
    for (std::uint32_t j = 0; j < ell; ++j) {
      const double v = at(i, j);
      if (v != 0.0 && v != 1.0) return false;
      ones += v == 1.0;
    }
    if (ones > 1) return false;
  }
  return true;
}

Model compile_matrices(const RuleGraph& h, std::uint32_t k) {
  Model model;
  model.dims.ell = static_cast<std::uint32_t>(h.num_nodes());
  model.dims.k = k;
  model.dims.validate();
  model.mode = ModelMode::binary;
  model.relations = h.relations();
  for (RelationId r = 0; r < model.relations.size(); ++r) {
    model.mats.emplace_back(r, model.dims.ell);
  }
  for (const auto& e : h.edges()) {
    auto& m = model.mats[e.rel];
    for (std::uint32_t j = 0; j < m.ell; ++j) {
      if (m.at(e.dst, j) != 0.0) throw InputError("rule graph violates R2; cannot compile");
    }
    m.at(e.dst, e.src) = 1.0;
  }
  for (NodeId n = 0; n < h.num_nodes(); ++n) model.node_names.push_back(h.node_name(n));
  return model;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

Snapshot init_entities(std::size_t num_entities, const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Snapshot s;
  s.d = dims.d();
  s.values.resize(num_entities * s.d);
  for (std::size_t e = 0; e < num_entities; ++e) {
    for (std::size_t c = 0; c < s.d; ++c) {
      s.values[e * s.d + c] = static_cast<double>(counter_hash(seed, e, c) >> 63);
    }
  }
  return s;
}

std::vector<RelationId> bind_relations(const Model& model, const KnowledgeGraph& g) {
  std::vector<RelationId> map;
  map.reserve(g.relations().size());
  for (const auto& info : g.relations().entries()) {
    auto id = model.relations.find(info.name);
    map.push_back(id ? *id : RelationId(-1));
  }
  return map;
}

MessagePlan plan_messages(const Model& model, const KnowledgeGraph& g) {
  const auto map = bind_relations(model, g);
  MessagePlan plan;
  plan.incoming.resize(g.num_entities());
  for (const auto& t : g.triples()) {
    const RelationId r = map[t.rel];
    if (r == RelationId(-1)) {
      throw InputError("model has no matrix for relation '" + g.relations().name(t.rel) + "'");
    }
    plan.incoming[t.tail].push_back({r, t.head});
  }
  for (auto& in : plan.incoming) {
    std::sort(in.begin(), in.end(), [](const auto& x, const auto& y) {
      return x.rel != y.rel ? x.rel < y.rel : x.src < y.src;
    });
  }
  return plan;
}

void apply_relation(const RelationMatrix& m, std::uint32_t k, std::span<const double> z,
                    std::span<double> out) {
  for (std::uint32_t i = 0; i < m.ell; ++i) {
    for (std::uint32_t t = 0; t < k; ++t) {
      double acc = 0.0;
      for (std::uint32_t j = 0; j < m.ell; ++j) acc += m.at(i, j) * z[std::size_t{j} * k + t];
      out[std::size_t{i} * k + t] = acc;
    }
  }
}

namespace {

void check_dims(const Model& model, const Snapshot& s) {
  if (s.d != model.dims.d()) throw InputError("snapshot dimension does not match the model");
}

void update_range(const Model& model, const MessagePlan& plan, const Snapshot& s, Snapshot& out,
                  std::size_t begin, std::size_t end) {
  std::vector<double> msg(s.d);
  for (std::size_t f = begin; f < end; ++f) {
    auto dst = out.state(static_cast<EntityId>(f));
    for (const auto& m : plan.incoming[f]) {
      apply_relation(model.mats[m.rel], model.dims.k, s.state(m.src), msg);
      for (std::size_t c = 0; c < s.d; ++c) dst[c] = std::max(dst[c], msg[c]);
    }
  }
}

}  // namespace

Snapshot forward_round(const Model& model, const MessagePlan& plan, const Snapshot& s,
                       unsigned threads) {
  check_dims(model, s);
  if (plan.incoming.size() != s.num_entities()) {
    throw InputError("snapshot entity count does not match the graph");
  }
  Snapshot out = s;
  out.layer = s.layer + 1;
  out.converged = false;
  const std::size_t n = s.num_entities();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    update_range(model, plan, s, out, 0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t b = w * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(update_range, std::cref(model), std::cref(plan), std::cref(s),
                                   std::ref(out), b, e);
    }
    for (auto& t : pool) t.join();
  }
  out.converged = out.values == s.values;
  return out;
}

Snapshot forward(const Model& model, const KnowledgeGraph& g, const Snapshot& s,
                 std::uint32_t rounds, unsigned threads) {
  const auto plan = plan_messages(model, g);
  Snapshot cur = s;
  for (std::uint32_t i = 0; i < rounds; ++i) {
    auto next = forward_round(model, plan, cur, threads);
    const bool done = next.converged;
    cur = std::move(next);
    if (done) {
      // Still count the remaining rounds; a fixpoint stays fixed.
      cur.layer = s.layer + rounds;
      break;
    }
  }
  return cur;
}

Snapshot forward_to_fixpoint(const Model& model, const KnowledgeGraph& g, const Snapshot& s,
                             unsigned threads) {
  const auto plan = plan_messages(model, g);
  const std::size_t cap = model.dims.d() * std::max<std::size_t>(1, s.num_entities()) + 1;
  Snapshot cur = s;
  for (std::size_t i = 0; i < cap; ++i) {
    cur = forward_round(model, plan, cur, threads);
    if (cur.converged) return cur;
  }
  throw RuntimeFailure("no fixpoint within " + std::to_string(cap) + " rounds");
}

bool capture(const Model& model, std::span<const double> a, std::span<const double> b,
             RelationId r, double tol) {
  std::vector<double> msg(a.size());
  apply_relation(model.matrix(r), model.dims.k, a, msg);
  for (std::size_t c = 0; c < msg.size(); ++c) {
    if (msg[c] - b[c] > tol) return false;
  }
  return true;
}

double score(const Model& model, std::span<const double> a, std::span<const double> b,
             RelationId r) {
  std::vector<double> msg(a.size());
  apply_relation(model.matrix(r), model.dims.k, a, msg);
  double sq = 0.0;
  for (std::size_t c = 0; c < msg.size(); ++c) {
    const double v = std::max(0.0, msg[c] - b[c]);
    sq += v * v;
  }
  return sq > 0.0 ? -std::sqrt(sq) : 0.0;  // no -0 in reports
}

OrderingConstraint ordering_constraint(const RuleGraph& h, RelationId r, std::uint32_t k) {
  OrderingConstraint oc;
  oc.rel = r;
  for (NodeId i = 0; i < h.num_nodes(); ++i) {
    const auto in = h.incoming(i, r);
    if (in.empty()) continue;
    if (in.size() > 1) throw InputError("rule graph violates R2");
    for (std::uint32_t t = 0; t < k; ++t) {
      oc.index_set.push_back(std::size_t{i} * k + t);
      oc.reindex.push_back(std::size_t{in.front().src} * k + t);
    }
  }
  return oc;
}

std::vector<double> mu_path(const RuleGraph& h, const PathType& path, std::uint32_t k,
                            std::span<const double> x) {
  const std::size_t ell = h.num_nodes();
  if (x.size() != ell * k) throw InputError("mu_path: vector size does not match graph");
  std::vector<double> out(x.size(), 0.0);
  for (NodeId i = 0; i < ell; ++i) {
    // Walk the path backwards from n_i; R2 makes each step unique.
    std::optional<NodeId> at = i;
    for (auto it = path.rels.rbegin(); it != path.rels.rend() && at; ++it) {
      const auto in = h.incoming(*at, *it);
      if (in.size() > 1) throw InputError("rule graph violates R2");
      at = in.empty() ? std::nullopt : std::optional<NodeId>(in.front().src);
    }
    if (!at) continue;
    for (std::uint32_t t = 0; t < k; ++t) {
      out[std::size_t{i} * k + t] = x[std::size_t{*at} * k + t];
    }
  }
  return out;
}

std::vector<double> kronecker_lift(const RelationMatrix& m, std::uint32_t k) {
  const std::size_t d = std::size_t{m.ell} * k;
  std::vector<double> a(d * d, 0.0);
  for (std::uint32_t i = 0; i < m.ell; ++i) {
    for (std::uint32_t j = 0; j < m.ell; ++j) {
      for (std::uint32_t t = 0; t < k; ++t) {
        a[(std::size_t{i} * k + t) * d + std::size_t{j} * k + t] = m.at(i, j);
      }
    }
  }
  return a;
}

bool kronecker_equivalence_check(const Model& model, const std::vector<std::vector<double>>& lifted,
                                 std::uint32_t trials, std::uint64_t seed) {
  const std::size_t d = model.dims.d();
  const auto nrel = static_cast<std::uint32_t>(model.mats.size());
  if (lifted.size() != nrel) throw InputError("one lifted matrix per relation expected");
  std::mt19937_64 rng(seed);
  for (std::uint32_t trial = 0; trial < trials; ++trial) {
    const std::uint32_t n = 2 + static_cast<std::uint32_t>(rng() % 5);
    std::vector<std::vector<MessagePlan::Message>> incoming(n);
    const std::uint32_t m = 1 + static_cast<std::uint32_t>(rng() % (3 * n));
    for (std::uint32_t i = 0; i < m && nrel; ++i) {
      const auto src = static_cast<EntityId>(rng() % n), dst = static_cast<EntityId>(rng() % n);
      incoming[dst].push_back({static_cast<RelationId>(rng() % nrel), src});
    }
    MessagePlan plan{incoming};
    for (auto& in : plan.incoming) {
      std::sort(in.begin(), in.end(), [](const auto& x, const auto& y) {
        return x.rel != y.rel ? x.rel < y.rel : x.src < y.src;
      });
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Snapshot s;
    s.d = d;
    s.values.resize(n * d);
    for (auto& v : s.values) v = unif(rng);

    // Matrix form.
    Snapshot z = s;
    for (int round = 0; round < 3; ++round) z = forward_round(model, plan, z);

    // Flattened form with the lifted d x d matrices.
    std::vector<double> x = s.values;
    for (int round = 0; round < 3; ++round) {
      std::vector<double> next = x;
      for (std::uint32_t f = 0; f < n; ++f) {
        for (const auto& msg : plan.incoming[f]) {
          const auto& a = lifted[msg.rel];
          for (std::size_t row = 0; row < d; ++row) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += a[row * d + c] * x[msg.src * d + c];
            next[f * d + row] = std::max(next[f * d + row], acc);
          }
        }
      }
      x = std::move(next);
    }
    if (x != z.values) return false;
  }
  return true;
}

bool kronecker_equivalence_check(const Model& model, std::uint32_t trials, std::uint64_t seed) {
  std::vector<std::vector<double>> lifted;
  for (const auto& m : model.mats) lifted.push_back(kronecker_lift(m, model.dims.k));
  return kronecker_equivalence_check(model, lifted, trials, seed);
}

}  // namespace reshuffle
