// deltaview: query compiler. Starting from the query's own materialized
// result, repeatedly derives each view's update triggers; auxiliary views
// demanded by those triggers are added to a worklist until the set closes.
// Besides the full pipeline (with heuristic or cost-based choices) there are
// two bounded variants used as baselines — depth 0 recomputes the result on
// every update, depth 1 applies first-order deltas against base relations —
// and a naive recursive mode that materializes every derivative as a lazily
// filled cache without any restructuring.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "deltaview/ast.hpp"
#include "deltaview/delta.hpp"
#include "deltaview/materialize.hpp"
#include "deltaview/program.hpp"
#include "deltaview/sql.hpp"
#include "deltaview/stats.hpp"
#include "deltaview/views.hpp"

namespace deltaview {

struct CompileOptions {
  /// -1 compiles the full recursive program; 0 recomputes per update;
  /// 1 applies first-order deltas directly against base relations.
  int depth = -1;
  enum class Optimizer { Naive, Heuristic, CostBased };
  Optimizer optimizer = Optimizer::Heuristic;
  const Statistics* stats = nullptr;
  long long cacheThreshold = 10000;
  std::string topName = "Q";
};

namespace compiledetail {

inline int atom_occurrences(const QueryPtr& q) {
  int n = 0;
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      n = q->isView ? 0 : 1;
      break;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) n += atom_occurrences(c);
      return n;
    case QueryExpr::Kind::Select:
      for_each_agg_cond(q->cond, [&](const TermPtr& t) { n += atom_occurrences(t->agg); });
      return n + atom_occurrences(q->children[0]);
    case QueryExpr::Kind::Sum:
      for_each_agg_term(q->f, [&](const TermPtr& t) { n += atom_occurrences(t->agg); });
      return n + atom_occurrences(q->children[0]);
    case QueryExpr::Kind::Rename:
      return atom_occurrences(q->children[0]);
    default:
      break;
  }
  return n;
}

/// Shrink measure for recursive differentiation: like atom_occurrences, but
/// a union costs its widest branch (each branch is differentiated on its
/// own), while aggregates nested in conditions and value terms still count
/// (differentiation never consumes their atoms).
inline int derivative_weight(const QueryPtr& q) {
  int n = 0;
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      n = q->isView ? 0 : 1;
      break;
    case QueryExpr::Kind::Join:
      for (const auto& c : q->children) n += derivative_weight(c);
      return n;
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) n = std::max(n, derivative_weight(c));
      return n;
    case QueryExpr::Kind::Select:
      for_each_agg_cond(q->cond, [&](const TermPtr& t) { n += derivative_weight(t->agg); });
      return n + derivative_weight(q->children[0]);
    case QueryExpr::Kind::Sum:
      for_each_agg_term(q->f, [&](const TermPtr& t) { n += derivative_weight(t->agg); });
      return n + derivative_weight(q->children[0]);
    case QueryExpr::Kind::Rename:
      return derivative_weight(q->children[0]);
    default:
      break;
  }
  return n;
}

inline int nesting_depth(const QueryPtr& q) {
  int deepest = 0;
  for_each_nested_agg(q, [&](const TermPtr& t) {
    deepest = std::max(deepest, 1 + nesting_depth(t->agg));
  });
  return deepest;
}

/// Trigger slots in deterministic order: stream relations in catalog order,
/// insert before delete.
inline std::vector<UpdateEvent> trigger_slots(const Catalog& cat) {
  std::vector<UpdateEvent> slots;
  for (const auto& r : cat.rels) {
    if (!r.isStream) continue;
    slots.push_back(UpdateEvent{+1, r.name, r.cols});
    slots.push_back(UpdateEvent{-1, r.name, r.cols});
  }
  return slots;
}

inline void drop_empty_triggers(Program& p) {
  std::vector<Trigger> kept;
  for (auto& t : p.triggers)
    if (!t.statements.empty()) kept.push_back(std::move(t));
  p.triggers = std::move(kept);
}

/// Rule 4 bookkeeping, per trigger of the query's own view: every nested
/// aggregate occurrence is either maintained in place (I) — because its value
/// cannot move, or moves only under an equality guard — or forces the
/// enclosing trigger to reevaluate (R).
inline void record_nested_handling(Program& p, const QueryPtr& def, const UpdateEvent& ev) {
  std::set<std::string> params(ev.params.begin(), ev.params.end());
  for_each_nested_agg(def, [&](const TermPtr& t) {
    if (!mentions_relation(t->agg, ev.relation)) {
      p.trace.fire4('I', "nested aggregate co-maintained on " + ev.relation);
      return;
    }
    DeltaAnalysis an;
    QueryPtr d = delta_query(t->agg, ev, &an);
    if (!d) {
      p.trace.fire4('I', "nested aggregate unchanged on " + ev.relation);
      return;
    }
    auto g = deltadetail::guard_of(d, params);
    if (g.eqBinding)
      p.trace.fire4('I', "nested aggregate change pinned by equality on " + ev.relation);
    else
      p.trace.fire4('R', "nested aggregate moves unguarded on " + ev.relation);
  });
}

// ---------------------------------------------------------------------------
// Full recursive compilation (heuristic choices, optionally constrained for
// cost-based enumeration).
// ---------------------------------------------------------------------------

inline Program compile_recursive(const Catalog& cat, const QueryPtr& query,
                                 const CompileOptions& opt, MaterializeOptions mopt,
                                 int* siteCountOut = nullptr) {
  Program p;
  p.catalog = cat;
  const ViewInfo& top = p.registry.intern_top(query, opt.topName);
  p.top = &top;
  Materializer mat(p.catalog, p.registry, p.trace, std::move(mopt));

  auto slots = trigger_slots(cat);
  for (const auto& ev : slots) p.triggers.push_back(Trigger{ev, {}});

  const int depthBound = atom_occurrences(query) + nesting_depth(query) + 2;
  struct Ob {
    const ViewInfo* view;
    int depth;
  };
  std::vector<Ob> work{{&top, 0}};
  std::set<std::string> queued{top.name};

  for (size_t wi = 0; wi < work.size(); ++wi) {
    const ViewInfo* v = work[wi].view;
    int depth = work[wi].depth;
    if (depth > depthBound)
      throw StructureError("view ladder for " + v->name +
                           " exceeded the derivative bound; the query does not "
                           "close under incremental maintenance");
    for (size_t si = 0; si < slots.size(); ++si) {
      const UpdateEvent& ev = slots[si];
      if (!mentions_relation(v->def, ev.relation)) continue;
      DeltaAnalysis an;
      QueryPtr dq = delta_query(v->def, ev, &an);
      if (an.productExpansion)
        p.trace.fire2("self-join delta expands into changed-subset products");
      if (an.foldedDifferenceForm)
        p.trace.fire2("difference form folded over one shared body");
      if (v->isTop) record_nested_handling(p, v->def, ev);
      if (!dq) continue;
      bool incremental = !an.anyNestedChanged || an.allChangedGuarded;
      std::vector<Statement> stmts;
      if (incremental) {
        stmts = mat.delta_statements(*v, dq, ev);
      } else {
        stmts.push_back(mat.reeval_statement(*v, ev));
      }
      for (auto& st : stmts) p.triggers[si].statements.push_back(std::move(st));
      for (const ViewInfo* nv : mat.take_new_views())
        if (queued.insert(nv->name).second) work.push_back({nv, depth + 1});
    }
  }
  drop_empty_triggers(p);
  validate_program(p);
  if (siteCountOut) *siteCountOut = mat.cache_site_count();
  return p;
}

// ---------------------------------------------------------------------------
// Bounded baselines
// ---------------------------------------------------------------------------

inline Program compile_depth0(const Catalog& cat, const QueryPtr& query,
                              const CompileOptions& opt) {
  Program p;
  p.catalog = cat;
  const ViewInfo& top = p.registry.intern_top(query, opt.topName);
  p.top = &top;
  for (const auto& ev : trigger_slots(cat)) {
    if (!mentions_relation(query, ev.relation)) continue;
    Statement st;
    st.op = Statement::Op::Assign;
    st.view = &top;
    st.loopVars = query->groupBy;
    for (const auto& g : query->groupBy) st.keyTerms.push_back(term_var(g));
    st.rhs = query;
    p.triggers.push_back(Trigger{ev, {std::move(st)}});
  }
  validate_program(p);
  return p;
}

inline Program compile_depth1(const Catalog& cat, const QueryPtr& query,
                              const CompileOptions& opt) {
  Program p;
  p.catalog = cat;
  const ViewInfo& top = p.registry.intern_top(query, opt.topName);
  p.top = &top;
  for (const auto& ev : trigger_slots(cat)) {
    if (!mentions_relation(query, ev.relation)) continue;
    QueryPtr dq = delta_query(query, ev);
    if (!dq) continue;
    Statement st;
    st.op = Statement::Op::AddAssign;
    st.view = &top;
    st.loopVars = schema_of(dq);
    for (const auto& g : st.loopVars) st.keyTerms.push_back(term_var(g));
    st.rhs = dq;
    p.triggers.push_back(Trigger{ev, {std::move(st)}});
  }
  validate_program(p);
  return p;
}

// ---------------------------------------------------------------------------
// Naive recursive mode: every derivative becomes its own cache, keyed by the
// update parameters it depends on, with no decomposition or decorrelation.
// ---------------------------------------------------------------------------

inline Program compile_naive(const Catalog& cat, const QueryPtr& query,
                             const CompileOptions& opt) {
  Program p;
  p.catalog = cat;
  const ViewInfo& top = p.registry.intern_top(query, opt.topName);
  p.top = &top;

  auto slots = trigger_slots(cat);
  for (const auto& ev : slots) p.triggers.push_back(Trigger{ev, {}});

  const int depthBound = atom_occurrences(query) + nesting_depth(query) + 2;
  struct Ob {
    const ViewInfo* view;
    int depth;
  };
  std::vector<Ob> work{{&top, 0}};
  std::set<std::string> queued{top.name};

  for (size_t wi = 0; wi < work.size(); ++wi) {
    const ViewInfo* v = work[wi].view;
    int depth = work[wi].depth;
    for (size_t si = 0; si < slots.size(); ++si) {
      const UpdateEvent& ev = slots[si];
      if (!mentions_relation(v->def, ev.relation)) continue;
      QueryPtr dq = delta_query(v->def, ev);
      if (!dq) continue;
      // Recursion only bottoms out when every derivative drops a relation
      // atom. Nested aggregates keep their atoms under differentiation (the
      // derivative guards still mention the full inner aggregate), so their
      // derivative chain never shrinks.
      if (derivative_weight(dq) >= derivative_weight(v->def) || depth >= depthBound)
        throw StructureError(
            "naive recursive compilation does not terminate for this query: "
            "the derivative of " + v->name + " does not shrink");

      Statement st;
      st.view = v;
      st.op = Statement::Op::AddAssign;
      st.loopVars = schema_of(dq);
      st.loopOverTarget = !v->inputVars.empty();
      for (const auto& iv : v->inputVars) st.keyTerms.push_back(term_var(iv));
      for (const auto& g : st.loopVars) st.keyTerms.push_back(term_var(g));

      if (degree(dq) == 0) {
        // The derivative references no relations: apply it directly.
        st.rhs = dq;
      } else {
        // Order the cache inputs deterministically: the target's own inputs,
        // then the event parameters the derivative actually mentions.
        std::set<std::string> fv = free_vars(dq);
        Schema inputs = v->inputVars;
        for (const auto& prm : ev.params)
          if (fv.count(prm) && !schema_has(inputs, prm)) inputs.push_back(prm);
        size_t before = p.registry.size();
        // Simplification may have reduced the derivative past its outer
        // aggregate; re-wrap it so it can be registered (grouping by the
        // full schema is the identity).
        QueryPtr cdef = dq->kind == QueryExpr::Kind::Sum
                            ? dq
                            : q_sum(schema_of(dq), term_num(1), dq);
        CacheRef cr = p.registry.intern_cache(cdef, inputs, "derivative");
        const ViewInfo& cv = *cr.view;
        if (p.registry.size() > before && queued.insert(cv.name).second)
          work.push_back({&cv, depth + 1});
        Schema readerCols;
        std::vector<std::pair<std::string, TermPtr>> probes;
        for (size_t i = 0; i < inputs.size(); ++i)
          readerCols.push_back(cv.name + ".k" + std::to_string(i));
        // A deduplicated cache may bind its inputs in a different positional
        // order than this reader passes them; probe through the pairing.
        for (size_t i = 0; i < inputs.size(); ++i)
          probes.emplace_back(cv.name + ".k" + std::to_string(cr.inputPos[i]),
                              term_var(inputs[i]));
        for (const auto& g : st.loopVars) readerCols.push_back(g);
        st.rhs = q_sum(st.loopVars, term_num(1),
                       view_read(cv, std::move(readerCols), std::move(probes)));
      }
      p.triggers[si].statements.push_back(std::move(st));
    }
  }
  drop_empty_triggers(p);
  validate_program(p);
  return p;
}

// ---------------------------------------------------------------------------
// Cost-based mode: enumerate the rewrite choices the heuristic would make
// unconditionally, estimate each resulting program, keep the cheapest.
// ---------------------------------------------------------------------------

inline double program_cost(const Program& p, const Statistics& stats) {
  CardEstimator est(stats, p.catalog, [&](const std::string& name) -> QueryPtr {
    const ViewInfo* v = p.registry.find(name);
    return v ? v->def : nullptr;
  });
  std::set<std::string> streams;
  for (const auto& r : p.catalog.rels)
    if (r.isStream) streams.insert(r.name);
  double total = stats.rate_sum(streams) * est.dom(p.top->def);
  for (const auto& trig : p.triggers) {
    double rate = stats.relation(trig.event.relation).rate;
    for (const auto& st : trig.statements) total += rate * est.cost_e(st.rhs);
  }
  return total;
}

inline Program compile_cost_based(const Catalog& cat, const QueryPtr& query,
                                  const CompileOptions& opt) {
  if (!opt.stats)
    throw ConfigError("cost-based optimization requires statistics");
  std::unique_ptr<Program> best;
  double bestCost = 0;
  std::string bestDump;
  for (bool expand : {true, false}) {
    // Discover how many cache-admissible subquery sites this configuration
    // exposes, then enumerate every on/off assignment for them.
    MaterializeOptions probeOpt;
    probeOpt.expandDisjunctions = expand;
    probeOpt.stats = opt.stats;
    probeOpt.cacheThreshold = opt.cacheThreshold;
    int sites = 0;
    compile_recursive(cat, query, opt, probeOpt, &sites);
    for (unsigned mask = 0; mask < (1u << sites); ++mask) {
      MaterializeOptions mo = probeOpt;
      mo.cacheSiteEnabled = [mask](int site) {
        return site < 31 && (mask >> site) & 1u;
      };
      Program cand = compile_recursive(cat, query, opt, std::move(mo));
      double cost = program_cost(cand, *opt.stats);
      std::string dump = cand.dump();
      bool better =
          !best || cost < bestCost ||
          (cost == bestCost && (cand.registry.size() < best->registry.size() ||
                                (cand.registry.size() == best->registry.size() &&
                                 dump < bestDump)));
      if (better) {
        best = std::make_unique<Program>(std::move(cand));
        bestCost = cost;
        bestDump = std::move(dump);
      }
    }
  }
  return std::move(*best);
}

}  // namespace compiledetail

/// Compiles `query` against `cat` into a trigger program per `opt`.
inline Program compile(const Catalog& cat, const QueryPtr& query,
                       const CompileOptions& opt = {}) {
  using namespace compiledetail;
  if (opt.depth == 0) return compile_depth0(cat, query, opt);
  if (opt.depth == 1) return compile_depth1(cat, query, opt);
  switch (opt.optimizer) {
    case CompileOptions::Optimizer::Naive:
      return compile_naive(cat, query, opt);
    case CompileOptions::Optimizer::CostBased:
      return compile_cost_based(cat, query, opt);
    case CompileOptions::Optimizer::Heuristic:
    default: {
      MaterializeOptions mo;
      mo.stats = opt.stats;
      mo.cacheThreshold = opt.cacheThreshold;
      return compile_recursive(cat, query, opt, std::move(mo));
    }
  }
}

}  // namespace deltaview
