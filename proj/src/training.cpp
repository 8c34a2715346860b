#include "reshuffle/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "reshuffle/error.hpp"
#include "reshuffle/eval.hpp"

namespace reshuffle {

void TrainConfig::validate() const {
  if (ell < 1 || k < 1) throw InputError("ell and k must be positive");
  if (layers < 1) throw InputError("layers must be positive");
  if (!(margin > 0.0)) throw InputError("margin must be positive");
  if (!(lr > 0.0)) throw InputError("learning rate must be positive");
  if (negatives < 1) throw InputError("need at least one negative per positive");
  if (batch_size < 1) throw InputError("batch size must be positive");
  if (valid_negatives < 1) throw InputError("validation needs at least one negative");
}

namespace {

// p = softmax(row) over ell+1 logits.
void softmax_row(const double* row, std::size_t width, double* p) {
  double mx = row[0];
  for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < width; ++j) {
    p[j] = std::exp(row[j] - mx);
    sum += p[j];
  }
  for (std::size_t j = 0; j < width; ++j) p[j] /= sum;
}

}  // namespace

RelationMatrix LearnedParams::matrix(RelationId r) const {
  RelationMatrix m(r, ell);
  std::vector<double> p(row_width());
  for (std::uint32_t i = 0; i < ell; ++i) {
    softmax_row(logits.at(r).data() + i * row_width(), row_width(), p.data());
    for (std::uint32_t j = 0; j < ell; ++j) m.at(i, j) = p[j];
  }
  return m;
}

LearnedParams init_params(const RelationTable& relations, std::uint32_t ell, double scale,
                          std::uint64_t seed) {
  LearnedParams p;
  p.ell = ell;
  p.relations = relations;
  std::mt19937_64 rng(counter_hash(seed, 0x6c6f67, 0));
  std::normal_distribution<double> normal(0.0, scale);
  for (RelationId r = 0; r < relations.size(); ++r) {
    std::vector<double> row(std::size_t{ell} * p.row_width());
    for (auto& x : row) x = normal(rng);
    p.logits.push_back(std::move(row));
  }
  return p;
}

Model learned_model(const LearnedParams& params, std::uint32_t k, std::uint32_t layers,
                    std::uint64_t seed) {
  Model m;
  m.dims = ModelDims{params.ell, k, layers};
  m.dims.validate();
  m.mode = ModelMode::learned;
  m.relations = params.relations;
  for (RelationId r = 0; r < params.relations.size(); ++r) m.mats.push_back(params.matrix(r));
  for (std::uint32_t i = 0; i < params.ell; ++i) m.node_names.push_back("b" + std::to_string(i));
  m.seed = seed;
  return m;
}

std::vector<RelationMatrix> harden(const LearnedParams& params, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie in (0,1)");
  std::vector<RelationMatrix> out;
  std::vector<double> p(params.row_width());
  for (RelationId r = 0; r < params.relations.size(); ++r) {
    RelationMatrix m(r, params.ell);
    for (std::uint32_t i = 0; i < params.ell; ++i) {
      softmax_row(params.logits.at(r).data() + i * params.row_width(), params.row_width(),
                  p.data());
      std::size_t best = params.ell;  // the zero slot wins ties
      for (std::uint32_t j = 0; j < params.ell; ++j) {
        if (p[j] > p[best] || (p[j] == p[best] && best != params.ell && j < best)) best = j;
      }
      if (best != params.ell && p[best] >= threshold) m.at(i, static_cast<std::uint32_t>(best)) = 1;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<NegativeSample> sample_negatives(std::size_t num_entities, const Triple& t,
                                             std::uint32_t n, std::mt19937_64& rng) {
  if (num_entities < 2) throw InputError("negative sampling needs at least two entities");
  std::vector<NegativeSample> out;
  out.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, num_entities - 2);
  std::bernoulli_distribution coin(0.5);
  for (std::uint32_t i = 0; i < n; ++i) {
    NegativeSample s{t, t, coin(rng) ? CorruptedSide::head : CorruptedSide::tail};
    EntityId& slot = s.side == CorruptedSide::head ? s.corrupted.head : s.corrupted.tail;
    auto x = static_cast<EntityId>(pick(rng));
    if (x >= slot) ++x;
    slot = x;
    out.push_back(s);
  }
  return out;
}

double margin_loss(double s_pos, std::span<const double> s_neg, double margin) {
  double loss = 0.0;
  for (double s : s_neg) loss += std::max(0.0, s - s_pos + margin);
  return loss;
}

namespace {

// Gradient bookkeeping for one evaluation of the computation graph.
struct Tape {
  std::uint32_t ell, k;
  std::size_t d;
  std::vector<RelationMatrix> b;
  MessagePlan plan;
  std::vector<std::vector<double>> z;           // layer states, N x d each
  std::vector<std::vector<std::int32_t>> arg;   // per layer transition: winner, -1 = self
  double gap = std::numeric_limits<double>::infinity();

  void mul(const RelationMatrix& m, const double* x, double* out) const {
    for (std::uint32_t i = 0; i < ell; ++i) {
      for (std::uint32_t t = 0; t < k; ++t) {
        double acc = 0.0;
        for (std::uint32_t j = 0; j < ell; ++j) acc += m.at(i, j) * x[std::size_t{j} * k + t];
        out[std::size_t{i} * k + t] = acc;
      }
    }
  }

  void forward(const Snapshot& layer0, std::uint32_t layers) {
    const std::size_t n = layer0.num_entities();
    z.assign(1, layer0.values);
    arg.clear();
    std::vector<double> msg(d), second(d);
    for (std::uint32_t l = 0; l < layers; ++l) {
      const auto& cur = z.back();
      std::vector<double> next = cur;
      std::vector<std::int32_t> win(n * d, -1);
      for (std::size_t f = 0; f < n; ++f) {
        double* dst = next.data() + f * d;
        std::fill(second.begin(), second.end(), -std::numeric_limits<double>::infinity());
        const auto& in = plan.incoming[f];
        for (std::size_t mi = 0; mi < in.size(); ++mi) {
          mul(b[in[mi].rel], cur.data() + in[mi].src * d, msg.data());
          for (std::size_t c = 0; c < d; ++c) {
            if (msg[c] > dst[c]) {
              second[c] = dst[c];
              dst[c] = msg[c];
              win[f * d + c] = static_cast<std::int32_t>(mi);
            } else {
              second[c] = std::max(second[c], msg[c]);
            }
          }
        }
        if (!in.empty()) {
          for (std::size_t c = 0; c < d; ++c) gap = std::min(gap, dst[c] - second[c]);
        }
      }
      z.push_back(std::move(next));
      arg.push_back(std::move(win));
    }
  }
};

}  // namespace

LossGrad loss_and_gradients(const LearnedParams& params, const KnowledgeGraph& g,
                            const Snapshot& layer0, std::uint32_t k, std::uint32_t layers,
                            double margin, const std::vector<TrainingExample>& batch,
                            bool want_grad) {
  if (batch.empty()) throw InputError("empty batch");
  if (!(g.relations() == params.relations)) {
    throw InputError("graph and parameters must share a relation table");
  }
  const Model model = learned_model(params, k, layers, 0);
  Tape tape{params.ell, k, model.dims.d(), model.mats, plan_messages(model, g), {}, {}};
  if (layer0.d != tape.d || layer0.num_entities() != g.num_entities()) {
    throw InputError("layer-0 states do not fit the graph and dims");
  }
  tape.forward(layer0, layers);

  const std::size_t d = tape.d;
  const std::size_t n = layer0.num_entities();
  const auto& top = tape.z.back();
  LossGrad out;
  std::vector<std::vector<double>> gb;  // dL/dB_r
  std::vector<double> gz;               // dL/dZ at the current layer
  if (want_grad) {
    gb.assign(params.relations.size(), std::vector<double>(std::size_t{tape.ell} * tape.ell, 0.0));
    gz.assign(n * d, 0.0);
  }

  // B_r Z_head is shared by every triple with the same head and relation, so it
  // is computed once per batch, and its gradient is pushed back into B_r and
  // Z_head once at the end.
  struct Product {
    std::vector<double> bz, grad;
  };
  std::map<std::pair<EntityId, RelationId>, Product> products;
  auto product = [&](const Triple& t) -> Product& {
    auto [it, fresh] = products.try_emplace({t.head, t.rel});
    if (fresh) {
      it->second.bz.resize(d);
      tape.mul(tape.b[t.rel], top.data() + t.head * d, it->second.bz.data());
      if (want_grad) it->second.grad.assign(d, 0.0);
    }
    return it->second;
  };

  std::vector<double> u(d);
  double gap = tape.gap;
  // Score and, with weight w, backpropagate into the product gradient / gz.
  auto score_of = [&](const Triple& t, double w) {
    Product& pr = product(t);
    const double* zb = top.data() + t.tail * d;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      u[c] = pr.bz[c] - zb[c];
      gap = std::min(gap, std::abs(u[c]));
      if (u[c] > 0) sq += u[c] * u[c];
    }
    const double norm = std::sqrt(sq);
    if (w != 0.0 && norm > 0.0) {
      // ds/du_c = -relu(u_c)/norm
      double* gt = gz.data() + t.tail * d;
      for (std::size_t c = 0; c < d; ++c) {
        if (u[c] <= 0) continue;
        const double gu = -w * u[c] / norm;
        gt[c] -= gu;
        pr.grad[c] += gu;
      }
    }
    return -norm;
  };

  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<double> s_neg;
  for (const auto& ex : batch) {
    const double s_pos = score_of(ex.positive, 0.0);
    s_neg.clear();
    for (const auto& t : ex.negatives) s_neg.push_back(score_of(t, 0.0));
    total += margin_loss(s_pos, s_neg, margin);
    if (!want_grad) {
      for (double s : s_neg) gap = std::min(gap, std::abs(s - s_pos + margin));
      continue;
    }
    double active = 0.0;
    for (std::size_t i = 0; i < s_neg.size(); ++i) {
      const double h = s_neg[i] - s_pos + margin;
      gap = std::min(gap, std::abs(h));
      if (h > 0) {
        score_of(ex.negatives[i], scale);
        active += 1.0;
      }
    }
    if (active > 0) score_of(ex.positive, -scale * active);
  }
  if (want_grad) {
    for (const auto& [key, pr] : products) {
      const auto [head, rel] = key;
      const auto& m = tape.b[rel];
      auto& gbr = gb[rel];
      const double* za = top.data() + head * d;
      double* ga = gz.data() + head * d;
      for (std::uint32_t i = 0; i < tape.ell; ++i) {
        for (std::uint32_t tt = 0; tt < k; ++tt) {
          const double gu = pr.grad[std::size_t{i} * k + tt];
          if (gu == 0.0) continue;
          for (std::uint32_t j = 0; j < tape.ell; ++j) {
            gbr[std::size_t{i} * tape.ell + j] += gu * za[std::size_t{j} * k + tt];
            ga[std::size_t{j} * k + tt] += gu * m.at(i, j);
          }
        }
      }
    }
  }
  out.loss = total * scale;
  out.kink_gap = gap;
  if (!want_grad) return out;

  // Back through the layers: each coordinate's gradient goes to the branch that won its max.
  std::vector<double> gmsg(d), gprev;
  for (std::uint32_t l = layers; l-- > 0;) {
    const auto& zl = tape.z[l];
    const auto& win = tape.arg[l];
    gprev.assign(n * d, 0.0);
    for (std::size_t f = 0; f < n; ++f) {
      const double* g = gz.data() + f * d;
      const auto& in = tape.plan.incoming[f];
      for (std::size_t c = 0; c < d; ++c) {
        if (win[f * d + c] < 0) gprev[f * d + c] += g[c];
      }
      for (std::size_t mi = 0; mi < in.size(); ++mi) {
        bool any = false;
        for (std::size_t c = 0; c < d; ++c) {
          const bool mine = win[f * d + c] == static_cast<std::int32_t>(mi);
          gmsg[c] = mine ? g[c] : 0.0;
          any |= mine && g[c] != 0.0;
        }
        if (!any) continue;
        const auto& m = tape.b[in[mi].rel];
        auto& gbr = gb[in[mi].rel];
        const double* ze = zl.data() + in[mi].src * d;
        double* ge = gprev.data() + in[mi].src * d;
        for (std::uint32_t i = 0; i < tape.ell; ++i) {
          for (std::uint32_t tt = 0; tt < k; ++tt) {
            const double gv = gmsg[std::size_t{i} * k + tt];
            if (gv == 0.0) continue;
            for (std::uint32_t j = 0; j < tape.ell; ++j) {
              gbr[std::size_t{i} * tape.ell + j] += gv * ze[std::size_t{j} * k + tt];
              ge[std::size_t{j} * k + tt] += gv * m.at(i, j);
            }
          }
        }
      }
    }
    gz.swap(gprev);
  }

  // Softmax rows: dL/dlogit_j = p_j (g_j - sum_t g_t p_t), with g = 0 on the zero slot.
  const std::size_t w = params.row_width();
  out.grad.resize(params.relations.size());
  std::vector<double> p(w);
  for (RelationId r = 0; r < params.relations.size(); ++r) {
    out.grad[r].assign(std::size_t{params.ell} * w, 0.0);
    for (std::uint32_t i = 0; i < params.ell; ++i) {
      softmax_row(params.logits[r].data() + i * w, w, p.data());
      const double* gr = gb[r].data() + std::size_t{i} * params.ell;
      double dot = 0.0;
      for (std::uint32_t j = 0; j < params.ell; ++j) dot += gr[j] * p[j];
      for (std::size_t j = 0; j < w; ++j) {
        const double gj = j < params.ell ? gr[j] : 0.0;
        out.grad[r][i * w + j] = p[j] * (gj - dot);
      }
    }
  }
  return out;
}

void adam_step(LearnedParams& params, AdamState& state, const std::vector<std::vector<double>>& grad,
               double lr, double beta1, double beta2, double eps) {
  if (state.m.empty()) {
    for (const auto& row : params.logits) {
      state.m.emplace_back(row.size(), 0.0);
      state.v.emplace_back(row.size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t r = 0; r < params.logits.size(); ++r) {
    for (std::size_t i = 0; i < params.logits[r].size(); ++i) {
      const double g = grad[r][i];
      auto& m = state.m[r][i];
      auto& v = state.v[r][i];
      m = beta1 * m + (1 - beta1) * g;
      v = beta2 * v + (1 - beta2) * g * g;
      params.logits[r][i] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
  }
}

namespace {

double validation_hits(const LearnedParams& params, const KnowledgeGraph& g_train,
                       const KnowledgeGraph& valid, const TrainConfig& config) {
  const Model model = learned_model(params, config.k, config.layers, config.seed);
  const auto states = model_states(model, g_train, config.threads);
  EvalConfig ec;
  ec.negatives = config.valid_negatives;
  ec.seed = counter_hash(config.seed, 0x76616c, 0);
  return hits_at_k(model, states, valid, ec).hits.front();
}

}  // namespace

TrainResult train(const KnowledgeGraph& g_train, const KnowledgeGraph& g_valid,
                  const TrainConfig& config, std::ostream* csv_log) {
  config.validate();
  if (g_train.num_entities() < 2) throw InputError("training graph needs at least two entities");
  if (g_valid.size() > 0 && !(g_valid.relations() == g_train.relations())) {
    throw InputError("validation graph must share the training relation table");
  }
  const auto start = std::chrono::steady_clock::now();
  const ModelDims dims{config.ell, config.k, config.layers};
  const Snapshot layer0 = init_entities(g_train.num_entities(), dims, config.seed);

  std::vector<Triple> positives;
  for (const auto& t : g_train.triples()) {
    if (!g_train.relations().is_eq(t.rel)) positives.push_back(t);
  }
  KnowledgeGraph valid(g_valid.entities(), g_valid.relations());
  for (const auto& t : g_valid.triples()) {
    if (!g_valid.relations().is_eq(t.rel)) valid.insert(t);
  }

  TrainResult res;
  LearnedParams params = init_params(g_train.relations(), config.ell, config.init_scale, config.seed);
  res.params = params;
  const bool has_valid = valid.size() > 0;
  double best = has_valid ? validation_hits(params, g_train, valid, config) : 0.0;
  res.best_valid = best;
  double reference = best;  // value at the last significant improvement
  std::uint32_t last_gain = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  if (csv_log) *csv_log << "epoch,loss,valid_hits10,seconds\n";

  std::mt19937_64 rng(counter_hash(config.seed, 0x747261696e, 0));
  for (std::uint32_t epoch = 1; epoch <= config.epochs && !positives.empty(); ++epoch) {
    std::shuffle(positives.begin(), positives.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < positives.size(); b += config.batch_size) {
      const std::size_t e = std::min(positives.size(), b + config.batch_size);
      std::vector<TrainingExample> batch;
      for (std::size_t i = b; i < e; ++i) {
        TrainingExample ex{positives[i], {}};
        for (const auto& s : sample_negatives(g_train.num_entities(), positives[i],
                                              config.negatives, rng)) {
          ex.negatives.push_back(s.corrupted);
        }
        batch.push_back(std::move(ex));
      }
      const auto lg =
          loss_and_gradients(params, g_train, layer0, config.k, config.layers, config.margin, batch);
      if (!std::isfinite(lg.loss)) {
        throw RuntimeFailure("training diverged at epoch " + std::to_string(epoch) +
                             ": non-finite loss");
      }
      epoch_loss += lg.loss * static_cast<double>(e - b);
      adam_step(params, res.adam, lg.grad, config.lr);
    }
    epoch_loss /= static_cast<double>(positives.size());

    EpochLog entry{epoch, epoch_loss, 0.0, 0.0};
    bool improved = false;
    if (has_valid) {
      entry.valid_hits = validation_hits(params, g_train, valid, config);
      if (entry.valid_hits > best) {
        best = entry.valid_hits;
        res.params = params;
        res.best_epoch = epoch;
        res.best_valid = best;
      }
      improved = entry.valid_hits >= reference * (1.0 + config.min_improvement) &&
                 entry.valid_hits > reference;
      if (improved) reference = entry.valid_hits;
    } else {
      res.params = params;
      res.best_epoch = epoch;
      improved = epoch_loss <= best_loss * (1.0 - config.min_improvement);
      if (improved) best_loss = epoch_loss;
    }
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.log.push_back(entry);
    if (csv_log) {
      *csv_log << entry.epoch << "," << entry.loss << "," << entry.valid_hits << ","
               << entry.seconds << "\n";
    }
    if (improved) last_gain = epoch;
    if (epoch - last_gain >= config.patience) break;
  }
  return res;
}

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config) {
  Checkpoint c;
  c.model = learned_model(result.params, config.k, config.layers, config.seed);
  c.logits = result.params.logits;
  c.optimizer = result.adam;
  c.epoch = result.best_epoch;
  return c;
}

GradCheckReport gradcheck(std::uint32_t points, std::uint64_t seed) {
  GradCheckReport rep;
  std::mt19937_64 rng(seed);
  const double h = 1e-6;
  while (rep.points < points) {
    if (rep.rejected > 100 * (points + 1)) throw RuntimeFailure("gradcheck: every point near a kink");
    // Small random problem: 5 entities, 3 relations plus eq, ell=3, k=2, 2 layers.
    KnowledgeGraph g;
    for (int i = 0; i < 5; ++i) g.entities().intern("e" + std::to_string(i));
    for (int r = 0; r < 3; ++r) g.relations().intern("r" + std::to_string(r));
    g.relations().ensure_eq();
    for (int i = 0; i < 8; ++i) {
      g.insert({static_cast<EntityId>(rng() % 5), static_cast<RelationId>(rng() % 3),
                static_cast<EntityId>(rng() % 5)});
    }
    for (EntityId e = 0; e < 5; ++e) g.insert({e, *g.relations().eq(), e});
    const std::uint32_t k = 2, layers = 2;
    auto params = init_params(g.relations(), 3, 1.0, rng());
    Snapshot layer0 = init_entities(5, ModelDims{3, k, layers}, 0);
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    for (auto& v : layer0.values) v = unif(rng);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 3; ++i) {
      const auto& pos = g.triples()[rng() % g.size()];
      if (g.relations().is_eq(pos.rel)) continue;
      TrainingExample ex{pos, {}};
      for (const auto& s : sample_negatives(5, pos, 4, rng)) ex.negatives.push_back(s.corrupted);
      batch.push_back(std::move(ex));
    }
    if (batch.empty()) continue;
    const double margin = 0.5;
    const auto lg = loss_and_gradients(params, g, layer0, k, layers, margin, batch);
    if (lg.kink_gap < 1e-4 || lg.loss == 0.0) {
      ++rep.rejected;
      continue;
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    bool crossed = false;
    for (std::size_t r = 0; r < params.logits.size() && !crossed; ++r) {
      for (std::size_t i = 0; i < params.logits[r].size(); ++i) {
        const double keep = params.logits[r][i];
        params.logits[r][i] = keep + h;
        const auto up = loss_and_gradients(params, g, layer0, k, layers, margin, batch, false);
        params.logits[r][i] = keep - h;
        const auto down = loss_and_gradients(params, g, layer0, k, layers, margin, batch, false);
        params.logits[r][i] = keep;
        if (up.kink_gap < 1e-5 || down.kink_gap < 1e-5) {
          crossed = true;
          break;
        }
        const double num = (up.loss - down.loss) / (2 * h);
        const double ana = lg.grad[r][i];
        diff += (num - ana) * (num - ana);
        na += ana * ana;
        nn += num * num;
      }
    }
    if (crossed) {
      ++rep.rejected;
      continue;
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nn));
    const double rel = denom > 0 ? std::sqrt(diff) / denom : 0.0;
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
    ++rep.points;
  }
  return rep;
}

}  // namespace reshuffle
