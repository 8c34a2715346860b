#include "reshuffle/cli.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "reshuffle/checkpoint.hpp"
#include "reshuffle/engine.hpp"
#include "reshuffle/error.hpp"
#include "reshuffle/eval.hpp"
#include "reshuffle/rulegraph.hpp"
#include "reshuffle/training.hpp"

#ifndef RESHUFFLE_FIXTURE_DIR
#define RESHUFFLE_FIXTURE_DIR "fixtures"
#endif

namespace reshuffle {

namespace {

using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string output = "table";
};

std::string fmt(double x, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

// Adds the inverse and eq triples a model expects, judged from its relation table.
KnowledgeGraph augment_for(const Model& model, const KnowledgeGraph& g) {
  bool inverses = false;
  for (const auto& info : model.relations.entries()) inverses |= info.kind == RelationKind::inverse;
  return augment(g, inverses, model.relations.eq().has_value());
}

std::vector<std::uint32_t> parse_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw InputError("expected a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw InputError("empty list '" + text + "'");
  return out;
}

// ---------------------------------------------------------------- compile

struct CompileOpts {
  std::string rules, mode = "left-regular", out, dot, checkpoint;
  std::uint32_t m = 1, k = 64;
  bool no_fix = false;
};

int cmd_compile(const CompileOpts& o, const Globals& g, std::ostream& out) {
  RuleBase rb = load_rules(o.rules);
  RuleGraph h;
  if (o.mode == "left-regular") {
    h = build_left_regular(rb);
  } else if (o.mode == "bounded") {
    h = build_m_bounded(normalize(rb), o.m, !o.no_fix);
  } else {
    throw InputError("--mode must be left-regular or bounded");
  }
  if (!o.out.empty()) save_rule_graph(h, o.out);
  if (!o.dot.empty()) write_text(o.dot, to_dot(h));
  if (!o.checkpoint.empty()) {
    Checkpoint c;
    c.model = compile_matrices(h, o.k);
    c.model.seed = g.seed;
    save_checkpoint(c, o.checkpoint);
  }
  if (g.output == "json") {
    out << (o.out.empty() ? to_json(h)
                          : json({{"nodes", h.num_nodes()}, {"edges", h.edges().size()}}).dump() +
                                "\n");
  } else {
    out << "rule graph: " << h.num_nodes() << " nodes, " << h.edges().size() << " edges\n";
    if (o.out.empty()) out << to_json(h);
  }
  return 0;
}

// ---------------------------------------------------------------- check

struct CheckOpts {
  std::string graph, rules;
  std::uint32_t depth = 16, max_len = kDefaultMaxLen;
  std::optional<std::uint32_t> bounded;
};

int cmd_check(const CheckOpts& o, const Globals& g, std::ostream& out) {
  RuleBase rb = load_rules(o.rules);
  if (o.bounded) rb = normalize(rb);
  const RuleGraph h = load_rule_graph(o.graph, {}, true);
  const auto mode = o.bounded ? R4Mode::bounded(*o.bounded) : R4Mode::full();
  const auto reports = check_all(h, rb, o.depth, o.max_len, mode);
  if (g.output == "json") {
    json arr = json::array();
    for (const auto& r : reports) {
      json item{{"condition", to_string(r.condition)}, {"verdict", to_string(r.verdict)}};
      if (r.witness || !r.detail.empty()) item["witness"] = describe(r, h);
      arr.push_back(item);
    }
    out << arr.dump(2) << "\n";
  } else {
    std::string line;
    for (const auto& r : reports) {
      if (!line.empty()) line += ", ";
      line += std::string(to_string(r.condition)) + " " + std::string(to_string(r.verdict));
    }
    out << line << "\n";
    for (const auto& r : reports) {
      if (!r.holds()) out << "  " << describe(r, h) << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferOpts {
  std::string checkpoint, kg, out, relation;
  std::optional<double> tol;
  bool all = false;
};

int cmd_infer(const InferOpts& o, const Globals& g, std::ostream& out) {
  const Checkpoint c = load_checkpoint(o.checkpoint);
  const Model& model = c.model;
  const KnowledgeGraph graph = augment_for(model, load_triples(o.kg));
  const Snapshot states = model_states(model, graph, g.threads);
  const double tol = o.tol ? *o.tol : model.default_tolerance();
  std::optional<RelationId> only;
  if (!o.relation.empty()) {
    only = model.relations.find(o.relation);
    if (!only) throw InputError("unknown relation '" + o.relation + "'");
  }
  std::ostringstream tsv;
  std::size_t count = 0;
  for (RelationId r = 0; r < model.relations.size(); ++r) {
    if (only && r != *only) continue;
    if (!o.all && model.relations.kind(r) != RelationKind::base && !only) continue;
    for (EntityId a = 0; a < graph.num_entities(); ++a) {
      for (EntityId b = 0; b < graph.num_entities(); ++b) {
        if (!capture(model, states.state(a), states.state(b), r, tol)) continue;
        tsv << graph.entities().name(a) << '\t' << model.relations.name(r) << '\t'
            << graph.entities().name(b) << '\t'
            << fmt(score(model, states.state(a), states.state(b), r), "%.6g") << '\n';
        ++count;
      }
    }
  }
  if (!o.out.empty()) write_text(o.out, tsv.str());
  if (g.output == "json") {
    out << json({{"captured", count}, {"layers", states.layer}}).dump() << "\n";
  } else if (o.out.empty()) {
    out << tsv.str();
  } else {
    out << count << " captured triples written to " << o.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- entail

struct EntailOpts {
  std::string rules, kg;
  std::vector<std::string> triple;
  std::optional<std::uint32_t> steps;
};

int cmd_entail(const EntailOpts& o, const Globals& g, std::ostream& out) {
  RuleBase rb = load_rules(o.rules);
  if (o.steps) rb = normalize(rb);
  KnowledgeGraph graph = load_triples(o.kg);
  align(rb, graph);
  const auto limit = o.steps ? DerivationLimit::bounded(*o.steps) : DerivationLimit::unbounded();
  if (!o.triple.empty()) {
    if (o.triple.size() != 3) throw InputError("--triple takes exactly three names");
    const auto r = rb.relations().find(o.triple[1]);
    if (!r) throw InputError("unknown relation '" + o.triple[1] + "'");
    const auto a = graph.entities().find(o.triple[0]), b = graph.entities().find(o.triple[2]);
    const bool yes = a && b && entails_triple(rb, graph, Triple{*a, *r, *b}, limit);
    if (g.output == "json") {
      out << json({{"entailed", yes}}).dump() << "\n";
    } else {
      out << (yes ? "true" : "false") << "\n";
    }
    return 0;
  }
  const auto all = materialize(rb, graph, limit);
  json arr = json::array();
  for (const auto& t : all) {
    if (rb.relations().kind(t.rel) == RelationKind::fresh) continue;
    const auto& a = graph.entities().name(t.head);
    const auto& rel = rb.relations().name(t.rel);
    const auto& b = graph.entities().name(t.tail);
    if (g.output == "json") arr.push_back({a, rel, b});
    else out << a << '\t' << rel << '\t' << b << '\n';
  }
  if (g.output == "json") out << arr.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string train, valid, out, log;
  TrainConfig config;
  bool no_inverses = false, no_eq = false;
};

int cmd_train(TrainOpts o, const Globals& g, std::ostream& out) {
  o.config.seed = g.seed;
  o.config.threads = g.threads;
  o.config.validate();
  const KnowledgeGraph raw = load_triples(o.train);
  const KnowledgeGraph g_train = augment(raw, !o.no_inverses, !o.no_eq);
  KnowledgeGraph valid(g_train.entities(), g_train.relations());
  if (!o.valid.empty()) {
    const auto v = load_triples_into(o.valid, g_train.entities(), raw.relations());
    if (v.num_entities() != g_train.num_entities()) {
      throw InputError("validation graph mentions entities absent from the training graph");
    }
    valid = with_relations(v, g_train.relations());
  }
  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw InputError("cannot write '" + o.log + "'");
  }
  const auto res = train(g_train, valid, o.config, o.log.empty() ? nullptr : &log_file);
  save_checkpoint(make_checkpoint(res, o.config), o.out);
  const double last_loss = res.log.empty() ? 0.0 : res.log.back().loss;
  if (g.output == "json") {
    out << json({{"epochs", res.log.size()},
                 {"best_epoch", res.best_epoch},
                 {"best_valid_hits10", res.best_valid},
                 {"final_loss", last_loss}})
               .dump()
        << "\n";
  } else {
    out << "trained " << res.log.size() << " epochs; best epoch " << res.best_epoch
        << ", valid Hits@10 " << fmt(res.best_valid) << ", final loss " << fmt(last_loss)
        << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint, graph, test, ks = "10";
  std::uint32_t negatives = 50;
};

int cmd_eval(const EvalOpts& o, const Globals& g, std::ostream& out) {
  const Checkpoint c = load_checkpoint(o.checkpoint);
  const KnowledgeGraph raw = load_triples(o.graph);
  const auto test = load_triples_into(o.test, raw.entities(), raw.relations());
  // Entities first seen in the test file join the context without facts of their own.
  KnowledgeGraph widened(test.entities(), raw.relations());
  for (const auto& t : raw.triples()) widened.insert(t);
  const KnowledgeGraph context = augment_for(c.model, widened);
  EvalConfig ec;
  ec.negatives = o.negatives;
  ec.ks = parse_list(o.ks);
  ec.seed = g.seed;
  const auto rep = hits_at_k(c.model, context, test, ec, g.threads);
  out << (g.output == "json" ? report_json(rep) : report_table(rep));
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyOpts {
  std::string suite, graph, rules, kg, ks = "1,4,16,64", fixtures = RESHUFFLE_FIXTURE_DIR;
  std::uint32_t seeds = 100, trials = 50, points = 20, k = 4;
  std::optional<std::uint32_t> m;
};

struct ConstructionCase {
  const char* name;
  bool bounded;
  std::uint32_t m;
};

constexpr ConstructionCase kConstructionCases[] = {
    {"mutual_recursion", false, 0}, {"shared_suffix", false, 0},    {"self_loop", false, 0},
    {"bounded_cycle_m1", true, 1},  {"bounded_acyclic_m2", true, 2},
};

int verify_constructions(const VerifyOpts& o, const Globals& g, std::ostream& out) {
  const std::filesystem::path dir = o.fixtures;
  json arr = json::array();
  bool all = true;
  for (const auto& c : kConstructionCases) {
    RuleBase rb = load_rules(dir / (std::string(c.name) + ".rules"));
    if (c.bounded) rb = normalize(rb);
    const RuleGraph built = c.bounded ? build_m_bounded(rb, c.m) : build_left_regular(rb);
    const RuleGraph figure = load_rule_graph(dir / (std::string(c.name) + ".json"), {}, true);
    const bool iso = isomorphic(built, figure);
    bool conditions = true;
    for (const auto& r : check_all(built, rb, 16, kDefaultMaxLen,
                                   c.bounded ? R4Mode::bounded(c.m) : R4Mode::full())) {
      conditions &= r.holds();
    }
    all &= iso && conditions;
    arr.push_back({{"case", c.name},
                   {"built_nodes", built.num_nodes()},
                   {"figure_nodes", figure.num_nodes()},
                   {"isomorphic", iso},
                   {"conditions_hold", conditions}});
  }
  if (g.output == "json") {
    out << arr.dump(2) << "\n";
  } else {
    out << "case                 built  figure  isomorphic  R1-R4\n";
    for (const auto& item : arr) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-20s %5zu  %6zu  %-10s  %s\n",
                    item["case"].get<std::string>().c_str(), item["built_nodes"].get<std::size_t>(),
                    item["figure_nodes"].get<std::size_t>(),
                    item["isomorphic"].get<bool>() ? "yes" : "no",
                    item["conditions_hold"].get<bool>() ? "hold" : "violated");
      out << buf;
    }
  }
  return all ? 0 : 1;
}

int verify_props(const VerifyOpts& o, const Globals& g, std::ostream& out) {
  if (o.graph.empty() || o.rules.empty() || o.kg.empty()) {
    throw InputError("suite " + o.suite + " needs --graph, --rules and --kg");
  }
  if (o.suite == "prop5" && !o.m) throw InputError("suite prop5 needs --m");
  RuleBase rb = load_rules(o.rules);
  if (o.suite == "prop5") rb = normalize(rb);
  const RuleGraph h = load_rule_graph(o.graph);
  KnowledgeGraph kg = load_triples(o.kg);
  if (h.relations().eq()) kg = augment(kg, false, true);
  align(rb, kg);
  PropositionConfig pc;
  pc.k_values = parse_list(o.ks);
  pc.seeds = o.seeds;
  pc.base_seed = g.seed;
  if (o.suite == "prop5") pc.bounded_m = o.m;
  const auto rep = verify_propositions(rb, kg, h, pc);
  if (g.output == "json") {
    json doc{{"suite", o.suite},
             {"entailed", rep.entailed},
             {"non_entailed", rep.non_entailed},
             {"completeness", rep.completeness},
             {"k", rep.k_values},
             {"false_positive_rate", rep.false_positive_rate}};
    if (pc.bounded_m) {
      doc["beyond_bound"] = rep.beyond_bound;
      doc["beyond_bound_capture_rate"] = rep.beyond_bound_rate;
    }
    out << doc.dump(2) << "\n";
  } else {
    out << "entailed " << rep.entailed << ", non-entailed " << rep.non_entailed
        << ", completeness " << fmt(rep.completeness) << "\n";
    out << "     k  false-positive rate" << (pc.bounded_m ? "  beyond-bound capture" : "") << "\n";
    for (std::size_t i = 0; i < rep.k_values.size(); ++i) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%6u  %19.6f", rep.k_values[i], rep.false_positive_rate[i]);
      out << buf;
      if (pc.bounded_m) out << fmt(rep.beyond_bound_rate[i], "  %20.6f");
      out << "\n";
    }
  }
  return o.suite == "prop1" && rep.completeness != 1.0 ? 1 : 0;
}

int cmd_verify(const VerifyOpts& o, const Globals& g, std::ostream& out) {
  if (o.suite == "constructions") return verify_constructions(o, g, out);
  if (o.suite == "prop1" || o.suite == "prop2" || o.suite == "prop5") return verify_props(o, g, out);
  if (o.suite == "kronecker") {
    RuleGraph h;
    if (!o.graph.empty()) {
      h = load_rule_graph(o.graph);
    } else if (!o.rules.empty()) {
      h = build_left_regular(load_rules(o.rules));
    } else {
      throw InputError("suite kronecker needs --graph or --rules");
    }
    const bool ok = kronecker_equivalence_check(compile_matrices(h, o.k), o.trials, g.seed);
    if (g.output == "json") out << json({{"trials", o.trials}, {"bitwise_equal", ok}}).dump() << "\n";
    else out << "kronecker equivalence over " << o.trials << " trials: " << (ok ? "equal" : "DIFFERENT") << "\n";
    return ok ? 0 : 1;
  }
  if (o.suite == "gradcheck") {
    const auto rep = gradcheck(o.points, g.seed);
    const bool ok = rep.max_relative_error < 1e-4;
    if (g.output == "json") {
      out << json({{"points", rep.points},
                   {"rejected", rep.rejected},
                   {"max_relative_error", rep.max_relative_error}})
                 .dump()
          << "\n";
    } else {
      out << "gradcheck: " << rep.points << " points (" << rep.rejected
          << " rejected near kinks), max relative error " << fmt(rep.max_relative_error, "%.3e")
          << "\n";
    }
    return ok ? 0 : 1;
  }
  throw InputError("unknown suite '" + o.suite +
                   "' (prop1, prop2, prop5, constructions, kronecker, gradcheck)");
}

}  // namespace

int run(int argc, const char* const argv[], std::ostream& out, std::ostream& err) {
  CLI::App app{"Ordering-constraint knowledge graph reasoning engine"};
  app.set_config("--config", "", "key=value file; explicit flags win");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output", g.output, "report format")->check(CLI::IsMember({"json", "table"}));

  CompileOpts co;
  auto* compile = app.add_subcommand("compile-rulegraph", "build a rule graph from a rule base");
  compile->add_option("--rules", co.rules)->required()->check(CLI::ExistingFile);
  compile->add_option("--mode", co.mode)->check(CLI::IsMember({"left-regular", "bounded"}));
  compile->add_option("--m", co.m, "inference bound for --mode bounded");
  compile->add_flag("--no-fan-in-fix", co.no_fix, "skip the final eq-chain step");
  compile->add_option("-o,--out", co.out, "rule graph JSON");
  compile->add_option("--dot", co.dot, "Graphviz output");
  compile->add_option("--checkpoint", co.checkpoint, "also write a compiled binary model");
  compile->add_option("--k", co.k, "block width for --checkpoint")->check(CLI::PositiveNumber);

  CheckOpts ch;
  auto* check = app.add_subcommand("check", "check R1-R4 (or R4m) for a rule graph");
  check->add_option("--graph", ch.graph)->required()->check(CLI::ExistingFile);
  check->add_option("--rules", ch.rules)->required()->check(CLI::ExistingFile);
  check->add_option("--depth", ch.depth, "rule-derivation depth bound for R3");
  check->add_option("--max-len", ch.max_len, "path length bound for R4 enumeration");
  check->add_option("--bounded", ch.bounded, "check R4m for this m instead of R4");

  InferOpts in;
  auto* infer = app.add_subcommand("infer", "list triples captured by a model");
  infer->add_option("--checkpoint", in.checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--kg", in.kg)->required()->check(CLI::ExistingFile);
  infer->add_option("-o,--out", in.out, "TSV output");
  infer->add_option("--tol", in.tol, "capture tolerance");
  infer->add_option("--relation", in.relation, "only this relation");
  infer->add_flag("--all", in.all, "include inverse, eq and auxiliary relations");

  EntailOpts en;
  auto* entail = app.add_subcommand("entail", "forward-chaining oracle");
  entail->add_option("--rules", en.rules)->required()->check(CLI::ExistingFile);
  entail->add_option("--kg", en.kg)->required()->check(CLI::ExistingFile);
  entail->add_option("--triple", en.triple, "head relation tail")->expected(3);
  entail->add_option("--steps", en.steps, "at most this many rule applications");

  TrainOpts tr;
  auto* trainc = app.add_subcommand("train", "learn relation matrices");
  trainc->add_option("--train", tr.train)->required()->check(CLI::ExistingFile);
  trainc->add_option("--valid", tr.valid)->check(CLI::ExistingFile);
  trainc->add_option("-o,--out", tr.out, "checkpoint")->required();
  trainc->add_option("--log", tr.log, "CSV training log");
  trainc->add_option("--ell", tr.config.ell);
  trainc->add_option("--k", tr.config.k);
  trainc->add_option("--layers", tr.config.layers);
  trainc->add_option("--margin", tr.config.margin);
  trainc->add_option("--lr", tr.config.lr);
  trainc->add_option("--epochs", tr.config.epochs);
  trainc->add_option("--negatives", tr.config.negatives);
  trainc->add_option("--batch", tr.config.batch_size);
  trainc->add_option("--patience", tr.config.patience);
  trainc->add_option("--min-improvement", tr.config.min_improvement);
  trainc->add_option("--init-scale", tr.config.init_scale);
  trainc->add_flag("--no-inverses", tr.no_inverses);
  trainc->add_flag("--no-eq", tr.no_eq);

  EvalOpts ev;
  auto* evalc = app.add_subcommand("eval", "Hits@K against sampled negatives");
  evalc->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  evalc->add_option("--graph", ev.graph, "context graph the model runs on")
      ->required()
      ->check(CLI::ExistingFile);
  evalc->add_option("--test", ev.test)->required()->check(CLI::ExistingFile);
  evalc->add_option("--negatives", ev.negatives)->check(CLI::PositiveNumber);
  evalc->add_option("--ks", ev.ks, "comma-separated K values");

  VerifyOpts ve;
  auto* verify = app.add_subcommand("verify", "verification suites");
  verify->add_option("--suite", ve.suite)
      ->required()
      ->check(CLI::IsMember({"prop1", "prop2", "prop5", "constructions", "kronecker", "gradcheck"}));
  verify->add_option("--graph", ve.graph)->check(CLI::ExistingFile);
  verify->add_option("--rules", ve.rules)->check(CLI::ExistingFile);
  verify->add_option("--kg", ve.kg)->check(CLI::ExistingFile);
  verify->add_option("--k", ve.ks, "comma-separated block widths (prop suites)");
  verify->add_option("--block-width", ve.k, "block width (kronecker)");
  verify->add_option("--seeds", ve.seeds)->check(CLI::PositiveNumber);
  verify->add_option("--m", ve.m, "inference bound (prop5)");
  verify->add_option("--trials", ve.trials);
  verify->add_option("--points", ve.points);
  verify->add_option("--fixtures", ve.fixtures)->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*compile) return cmd_compile(co, g, out);
    if (*check) return cmd_check(ch, g, out);
    if (*infer) return cmd_infer(in, g, out);
    if (*entail) return cmd_entail(en, g, out);
    if (*trainc) return cmd_train(tr, g, out);
    if (*evalc) return cmd_eval(ev, g, out);
    if (*verify) return cmd_verify(ve, g, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace reshuffle
