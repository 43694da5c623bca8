// deltaview: the update-delta transform. Given a signed single-tuple change
// of a base relation, rewrites a query expression into an expression for the
// change of its result. Nested aggregates in conditions and value terms are
// handled by a guarded difference form; equality guards extracted from the
// nested delta keep the difference form narrow and decide whether triggers
// can run incrementally.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <map>

#include "deltaview/simplify.hpp"

namespace deltaview {

/// A single-tuple change: sign is +1 (insert) or -1 (delete); params are the
/// trigger argument names, positionally matching the relation's declaration.
struct UpdateEvent {
  int sign = 1;
  std::string relation;
  std::vector<std::string> params;
};

/// What the transform learned about nested aggregates along the way.
struct DeltaAnalysis {
  bool anyNestedChanged = false;  ///< some nested aggregate's value can move
  bool allChangedGuarded = true;  ///< every moving aggregate has an equality guard
  int changedNested = 0;
  int mergedDifferenceForms = 0;  ///< base-delta folded into the difference form
  bool productExpansion = false;  ///< a join delta had >= 2 changed factors
  /// A difference form was emitted whose base delta was folded into the
  /// post-condition branch (or was empty), so the form is a union of
  /// selections over one shared body rather than independent addends.
  bool foldedDifferenceForm = false;
};

namespace deltadetail {

/// Restriction on the outer context outside of which a (simplified) nested
/// delta expression is identically zero. `cond` may be True (no restriction);
/// `eqBinding` says some equality pins a correlation variable to the trigger
/// parameters.
struct Guard {
  CondPtr cond;
  bool eqBinding = false;
};

inline bool term_param_only(const TermPtr& t, const std::set<std::string>& params) {
  std::set<std::string> vars;
  free_vars_term(t, {}, vars);
  for (const auto& v : vars)
    if (!params.count(v)) return false;
  return true;
}

inline bool conjunct_eq_binds(const CondPtr& c, const std::set<std::string>& params) {
  if (c->kind != Condition::Kind::Cmp || c->op != Condition::CmpOp::Eq) return false;
  auto outer_var = [&](const TermPtr& t) {
    return t->kind == Term::Kind::Variable && !params.count(t->name);
  };
  return (outer_var(c->lhs) && term_param_only(c->rhs, params)) ||
         (outer_var(c->rhs) && term_param_only(c->lhs, params));
}

inline Guard guard_of(const QueryPtr& dq, const std::set<std::string>& params) {
  switch (dq->kind) {
    case QueryExpr::Kind::Empty:
      return {cond_false(), true};
    case QueryExpr::Kind::Singleton:
    case QueryExpr::Kind::Relation:
      return {cond_true(), false};
    case QueryExpr::Kind::Sum:
      return guard_of(dq->children[0], params);
    case QueryExpr::Kind::Rename: {
      Guard g = guard_of(dq->children[0], params);
      NameMap m;
      for (const auto& [from, to] : dq->renames)
        if (from != to) m.push_back({from, to});
      return {subst_names_cond(g.cond, m), g.eqBinding};
    }
    case QueryExpr::Kind::Join: {
      std::vector<CondPtr> conds;
      bool eq = false;
      for (const auto& c : dq->children) {
        Guard g = guard_of(c, params);
        conds.push_back(g.cond);
        eq = eq || g.eqBinding;
      }
      return {cond_and(std::move(conds)), eq};
    }
    case QueryExpr::Kind::Union: {
      std::vector<CondPtr> conds;
      bool eq = true, restricted = true;
      for (const auto& c : dq->children) {
        Guard g = guard_of(c, params);
        if (g.cond->kind == Condition::Kind::True) restricted = false;
        conds.push_back(g.cond);
        eq = eq && g.eqBinding;
      }
      if (!restricted) return {cond_true(), false};
      return {cond_or(std::move(conds)), eq};
    }
    case QueryExpr::Kind::Select: {
      Schema inner = schema_of(dq->children[0]);
      std::vector<CondPtr> usable;
      bool eq = false;
      for (const auto& c : conjuncts_of(dq->cond)) {
        std::set<std::string> vars;
        free_vars_cond(c, {}, vars);
        bool touchesInner = false;
        for (const auto& v : vars)
          if (schema_has(inner, v)) touchesInner = true;
        if (touchesInner) continue;
        usable.push_back(c);
        eq = eq || conjunct_eq_binds(c, params);
      }
      Guard g = guard_of(dq->children[0], params);
      usable.push_back(g.cond);
      return {cond_and(std::move(usable)), eq || g.eqBinding};
    }
  }
  return {cond_true(), false};
}

/// Equality closure used to justify folding a base delta into the guarded
/// difference form: every guard conjunct must already hold on the delta's
/// tuples given its pinned columns and the surrounding condition.
struct EqClosure {
  std::map<std::string, std::string> parent;
  std::set<std::string> verbatim;

  std::string find(const std::string& x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    std::string r = find(it->second);
    parent[x] = r;
    return r;
  }
  void unite(const std::string& a, const std::string& b) {
    std::string ra = find(a), rb = find(b);
    if (ra != rb) parent[ra] = rb;
  }
  void add_eq(const TermPtr& a, const TermPtr& b) { unite(print_term(a), print_term(b)); }
  void add_cond(const CondPtr& c) {
    verbatim.insert(print_cond(c));
    if (c->kind == Condition::Kind::Cmp && c->op == Condition::CmpOp::Eq)
      add_eq(c->lhs, c->rhs);
  }
  bool implies(const CondPtr& c) {
    if (c->kind == Condition::Kind::True) return true;
    if (verbatim.count(print_cond(c))) return true;
    if (c->kind == Condition::Kind::And) {
      for (const auto& ch : c->children)
        if (!implies(ch)) return false;
      return true;
    }
    if (c->kind == Condition::Kind::Cmp && c->op == Condition::CmpOp::Eq)
      return find(print_term(c->lhs)) == find(print_term(c->rhs));
    return false;
  }
};

inline void collect_facts(const QueryPtr& q, EqClosure& cl) {
  switch (q->kind) {
    case QueryExpr::Kind::Singleton:
      for (size_t i = 0; i < q->scols.size(); ++i)
        cl.add_eq(term_var(q->scols[i]), q->svals[i]);
      return;
    case QueryExpr::Kind::Relation:
      for (const auto& [col, t] : q->probes) cl.add_eq(term_var(col), t);
      return;
    case QueryExpr::Kind::Empty:
      return;
    case QueryExpr::Kind::Select:
      for (const auto& c : conjuncts_of(q->cond))
        if (!cond_has_agg(c)) cl.add_cond(c);
      collect_facts(q->children[0], cl);
      return;
    case QueryExpr::Kind::Join:
      for (const auto& c : q->children) collect_facts(c, cl);
      return;
    case QueryExpr::Kind::Sum:
    case QueryExpr::Kind::Rename:
      collect_facts(q->children[0], cl);
      return;
    case QueryExpr::Kind::Union:
      return;  // branches handled individually by the caller
  }
}

/// True when every tuple the delta produces already satisfies the guard, so
/// `sel(g and post, X union dX)` keeps all of the delta's contribution and the
/// separate delta addend can be dropped. Only facts carried by the delta
/// itself (pinned columns, probes, its own selections) may justify this; the
/// surrounding condition is deliberately not consulted, so the fold happens
/// exactly when the guard pins a column the change event itself supplies.
inline bool merge_keeps_delta(const CondPtr& guard, const QueryPtr& dx) {
  if (guard->kind == Condition::Kind::True) return true;
  std::vector<QueryPtr> branches =
      dx->kind == QueryExpr::Kind::Union ? dx->children : std::vector<QueryPtr>{dx};
  std::vector<CondPtr> disjuncts = guard->kind == Condition::Kind::Or
                                       ? guard->children
                                       : std::vector<CondPtr>{guard};
  for (const auto& b : branches) {
    EqClosure cl;
    collect_facts(b, cl);
    bool ok = false;
    for (const auto& d : disjuncts)
      if (cl.implies(d)) ok = true;
    if (!ok) return false;
  }
  return true;
}

struct Ctx {
  const UpdateEvent& ev;
  std::set<std::string> params;
  DeltaAnalysis* an;
};

inline QueryPtr dquery(const QueryPtr& q, Ctx& cx);

struct TermDelta {
  TermPtr post;
  bool changed = false;
  std::vector<CondPtr> guards;  // one entry per changed aggregate (maybe True)
};

inline TermDelta dterm(const TermPtr& t, Ctx& cx) {
  switch (t->kind) {
    case Term::Kind::Constant:
    case Term::Kind::Variable:
      return {t, false, {}};
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div: {
      TermDelta a = dterm(t->lhs, cx), b = dterm(t->rhs, cx);
      if (!a.changed && !b.changed) return {t, false, {}};
      TermDelta r{term_bin(t->kind, a.post, b.post), true, std::move(a.guards)};
      r.guards.insert(r.guards.end(), b.guards.begin(), b.guards.end());
      return r;
    }
    case Term::Kind::Aggregate: {
      if (!mentions_relation(t->agg, cx.ev.relation)) return {t, false, {}};
      QueryPtr dn = dquery(t->agg, cx);
      if (!dn) return {t, false, {}};
      dn = simplify(dn);
      if (dn->kind == QueryExpr::Kind::Empty) return {t, false, {}};
      Guard g = guard_of(dn, cx.params);
      if (cx.an) {
        cx.an->anyNestedChanged = true;
        cx.an->changedNested++;
        if (!g.eqBinding) cx.an->allChangedGuarded = false;
      }
      return {term_add(t, term_agg(dn)), true, {fold_cond(g.cond)}};
    }
  }
  return {t, false, {}};
}

struct CondDelta {
  CondPtr post;
  bool changed = false;
  std::vector<CondPtr> guards;
};

inline CondDelta dcond(const CondPtr& c, Ctx& cx) {
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return {c, false, {}};
    case Condition::Kind::And:
    case Condition::Kind::Or:
    case Condition::Kind::Not: {
      std::vector<CondPtr> posts;
      CondDelta r{nullptr, false, {}};
      for (const auto& ch : c->children) {
        CondDelta d = dcond(ch, cx);
        posts.push_back(d.post);
        r.changed = r.changed || d.changed;
        r.guards.insert(r.guards.end(), d.guards.begin(), d.guards.end());
      }
      if (!r.changed) return {c, false, {}};
      r.post = c->kind == Condition::Kind::And ? cond_and(std::move(posts))
               : c->kind == Condition::Kind::Or ? cond_or(std::move(posts))
                                                : cond_not(posts[0]);
      return r;
    }
    case Condition::Kind::Cmp: {
      TermDelta a = dterm(c->lhs, cx), b = dterm(c->rhs, cx);
      if (!a.changed && !b.changed) return {c, false, {}};
      CondDelta r{cond_cmp(c->op, a.post, b.post), true, std::move(a.guards)};
      r.guards.insert(r.guards.end(), b.guards.begin(), b.guards.end());
      return r;
    }
  }
  return {c, false, {}};
}

inline CondPtr union_of_guards(const std::vector<CondPtr>& guards) {
  for (const auto& g : guards)
    if (g->kind == Condition::Kind::True) return cond_true();
  std::vector<CondPtr> ds = guards;
  return fold_cond(cond_or(std::move(ds)));
}

inline QueryPtr dquery(const QueryPtr& q, Ctx& cx) {
  if (!mentions_relation(q, cx.ev.relation)) return nullptr;
  switch (q->kind) {
    case QueryExpr::Kind::Relation: {
      if (q->isView)
        throw StructureError("update delta applied to a view read: " + q->rel);
      if (q->cols.size() != cx.ev.params.size())
        throw StructureError("event arity mismatch for " + q->rel);
      std::vector<TermPtr> vals;
      for (const auto& p : cx.ev.params) vals.push_back(term_var(p));
      QueryPtr s = q_singleton(q->cols, vals, term_num(cx.ev.sign));
      std::vector<CondPtr> probeConds;
      for (const auto& [col, t] : q->probes)
        probeConds.push_back(cond_eq(term_var(col), t));
      return q_select(cond_and(std::move(probeConds)), s);
    }
    case QueryExpr::Kind::Empty:
      return nullptr;
    case QueryExpr::Kind::Singleton: {
      for (const auto& v : q->svals)
        if (mentions_relation_term(v, cx.ev.relation))
          throw StructureError("aggregate in singleton value cannot change");
      TermDelta m = dterm(q->smult, cx);
      if (!m.changed) return nullptr;
      return q_singleton(q->scols, q->svals, fold_term(term_sub(m.post, q->smult)));
    }
    case QueryExpr::Kind::Join: {
      std::vector<QueryPtr> deltas(q->children.size());
      std::vector<size_t> changed;
      for (size_t i = 0; i < q->children.size(); ++i) {
        deltas[i] = dquery(q->children[i], cx);
        if (deltas[i]) changed.push_back(i);
      }
      if (changed.empty()) return nullptr;
      if (changed.size() >= 2 && cx.an) cx.an->productExpansion = true;
      // (X1+d1) x ... x (Xn+dn) - X1 x ... x Xn: one addend per non-empty
      // subset of changed factors, ordered by subset size.
      std::vector<QueryPtr> addends;
      size_t k = changed.size();
      std::vector<uint64_t> masks;
      for (uint64_t m = 1; m < (uint64_t(1) << k); ++m) masks.push_back(m);
      std::stable_sort(masks.begin(), masks.end(), [](uint64_t a, uint64_t b) {
        return std::popcount(a) < std::popcount(b);
      });
      for (uint64_t m : masks) {
        std::vector<QueryPtr> factors = q->children;
        for (size_t j = 0; j < k; ++j)
          if (m & (uint64_t(1) << j)) factors[changed[j]] = deltas[changed[j]];
        addends.push_back(q_join(std::move(factors)));
      }
      return q_union(std::move(addends));
    }
    case QueryExpr::Kind::Union: {
      std::vector<QueryPtr> ds;
      for (const auto& c : q->children) {
        QueryPtr d = dquery(c, cx);
        if (d) ds.push_back(d);
      }
      if (ds.empty()) return nullptr;
      return q_union(std::move(ds));
    }
    case QueryExpr::Kind::Select: {
      CondDelta cd = dcond(q->cond, cx);
      QueryPtr dx = dquery(q->children[0], cx);
      if (!cd.changed) return dx ? q_select(q->cond, dx) : nullptr;
      const QueryPtr& X = q->children[0];
      CondPtr g = union_of_guards(cd.guards);
      std::vector<QueryPtr> pieces;
      bool merged = dx && merge_keeps_delta(g, dx);
      if (merged && cx.an) cx.an->mergedDifferenceForms++;
      if ((merged || !dx) && cx.an) cx.an->foldedDifferenceForm = true;
      QueryPtr grown = merged ? q_union({X, dx}) : X;
      pieces.push_back(q_select(cond_and({g, cd.post}), grown));
      pieces.push_back(q_negate(q_select(cond_and({g, q->cond}), X)));
      if (dx && !merged) pieces.push_back(q_select(cd.post, dx));
      return q_union(std::move(pieces));
    }
    case QueryExpr::Kind::Sum: {
      TermDelta fd = dterm(q->f, cx);
      QueryPtr dx = dquery(q->children[0], cx);
      if (!fd.changed) return dx ? q_sum(q->groupBy, q->f, dx) : nullptr;
      const QueryPtr& X = q->children[0];
      CondPtr g = union_of_guards(fd.guards);
      std::vector<QueryPtr> pieces;
      bool merged = dx && merge_keeps_delta(g, dx);
      if (merged && cx.an) cx.an->mergedDifferenceForms++;
      if ((merged || !dx) && cx.an) cx.an->foldedDifferenceForm = true;
      QueryPtr grown = merged ? q_union({X, dx}) : X;
      pieces.push_back(q_sum(q->groupBy, fd.post, q_select(g, grown)));
      pieces.push_back(q_negate(q_sum(q->groupBy, q->f, q_select(g, X))));
      if (dx && !merged) pieces.push_back(q_sum(q->groupBy, fd.post, dx));
      return q_union(std::move(pieces));
    }
    case QueryExpr::Kind::Rename: {
      QueryPtr dx = dquery(q->children[0], cx);
      if (!dx) return nullptr;
      return q_rename(q->renames, dx);
    }
  }
  return nullptr;
}

}  // namespace deltadetail

/// Delta of `q` under `ev`; nullptr when the result provably cannot change.
/// The result is simplified. `an`, when given, reports nested-aggregate
/// behavior (used to choose between incremental update and reevaluation).
inline QueryPtr delta_query(const QueryPtr& q, const UpdateEvent& ev,
                            DeltaAnalysis* an = nullptr) {
  deltadetail::Ctx cx{ev, {ev.params.begin(), ev.params.end()}, an};
  QueryPtr d = deltadetail::dquery(q, cx);
  if (!d) return nullptr;
  d = simplify(d);
  if (d->kind == QueryExpr::Kind::Empty) return nullptr;
  return d;
}

/// True when some nested aggregate inside `q` reads `ev.relation`.
inline bool has_nonzero_nested_delta(const QueryPtr& q, const UpdateEvent& ev) {
  bool found = false;
  for_each_nested_agg(q, [&](const TermPtr& t) {
    if (mentions_relation(t->agg, ev.relation)) found = true;
  });
  return found;
}

}  // namespace deltaview
