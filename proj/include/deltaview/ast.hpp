// deltaview: query algebra AST — terms, conditions and query expressions —
// plus schema/variable analysis and substitution utilities.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "deltaview/value.hpp"

namespace deltaview {

struct QueryExpr;
struct Term;
struct Condition;
using QueryPtr = std::shared_ptr<const QueryExpr>;
using TermPtr = std::shared_ptr<const Term>;
using CondPtr = std::shared_ptr<const Condition>;

// ---------------------------------------------------------------------------
// Terms: numeric expressions over constants, column/parameter references and
// nested aggregates (the value of a zero-column subquery).
// ---------------------------------------------------------------------------

struct Term {
  enum class Kind { Constant, Variable, Add, Sub, Mul, Div, Aggregate };
  Kind kind;
  Value value;        // Constant
  std::string name;   // Variable
  TermPtr lhs, rhs;   // Add/Sub/Mul/Div
  QueryPtr agg;       // Aggregate
};

inline TermPtr term_const(Value v) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::Constant;
  t->value = std::move(v);
  return t;
}
inline TermPtr term_num(long long n) { return term_const(Value(Rational(n))); }
inline TermPtr term_num(Rational r) { return term_const(Value(std::move(r))); }
inline TermPtr term_var(std::string name) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::Variable;
  t->name = std::move(name);
  return t;
}
inline TermPtr term_bin(Term::Kind k, TermPtr a, TermPtr b) {
  auto t = std::make_shared<Term>();
  t->kind = k;
  t->lhs = std::move(a);
  t->rhs = std::move(b);
  return t;
}
inline TermPtr term_add(TermPtr a, TermPtr b) { return term_bin(Term::Kind::Add, a, b); }
inline TermPtr term_sub(TermPtr a, TermPtr b) { return term_bin(Term::Kind::Sub, a, b); }
inline TermPtr term_mul(TermPtr a, TermPtr b) { return term_bin(Term::Kind::Mul, a, b); }
inline TermPtr term_div(TermPtr a, TermPtr b) { return term_bin(Term::Kind::Div, a, b); }
inline TermPtr term_agg(QueryPtr q) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::Aggregate;
  t->agg = std::move(q);
  return t;
}

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------

struct Condition {
  enum class Kind { True, False, And, Or, Not, Cmp };
  enum class CmpOp { Lt, Le, Eq, Ne };
  Kind kind;
  CmpOp op = CmpOp::Eq;
  std::vector<CondPtr> children;  // And/Or (n-ary), Not (1)
  TermPtr lhs, rhs;               // Cmp
};

inline CondPtr cond_true() {
  auto c = std::make_shared<Condition>();
  c->kind = Condition::Kind::True;
  return c;
}
inline CondPtr cond_false() {
  auto c = std::make_shared<Condition>();
  c->kind = Condition::Kind::False;
  return c;
}
inline CondPtr cond_cmp(Condition::CmpOp op, TermPtr a, TermPtr b) {
  auto c = std::make_shared<Condition>();
  c->kind = Condition::Kind::Cmp;
  c->op = op;
  c->lhs = std::move(a);
  c->rhs = std::move(b);
  return c;
}
inline CondPtr cond_eq(TermPtr a, TermPtr b) {
  return cond_cmp(Condition::CmpOp::Eq, std::move(a), std::move(b));
}
inline CondPtr cond_not(CondPtr c) {
  auto n = std::make_shared<Condition>();
  n->kind = Condition::Kind::Not;
  n->children.push_back(std::move(c));
  return n;
}
inline CondPtr cond_and(std::vector<CondPtr> cs) {
  std::vector<CondPtr> flat;
  for (auto& c : cs) {
    if (!c || c->kind == Condition::Kind::True) continue;
    if (c->kind == Condition::Kind::And)
      flat.insert(flat.end(), c->children.begin(), c->children.end());
    else
      flat.push_back(c);
  }
  for (auto& c : flat)
    if (c->kind == Condition::Kind::False) return cond_false();
  if (flat.empty()) return cond_true();
  if (flat.size() == 1) return flat[0];
  auto c = std::make_shared<Condition>();
  c->kind = Condition::Kind::And;
  c->children = std::move(flat);
  return c;
}
inline CondPtr cond_or(std::vector<CondPtr> cs) {
  std::vector<CondPtr> flat;
  for (auto& c : cs) {
    if (!c || c->kind == Condition::Kind::False) continue;
    if (c->kind == Condition::Kind::Or)
      flat.insert(flat.end(), c->children.begin(), c->children.end());
    else
      flat.push_back(c);
  }
  for (auto& c : flat)
    if (c->kind == Condition::Kind::True) return cond_true();
  if (flat.empty()) return cond_false();
  if (flat.size() == 1) return flat[0];
  auto c = std::make_shared<Condition>();
  c->kind = Condition::Kind::Or;
  c->children = std::move(flat);
  return c;
}

/// Splits a condition into its top-level conjuncts.
inline std::vector<CondPtr> conjuncts_of(const CondPtr& c) {
  if (!c || c->kind == Condition::Kind::True) return {};
  if (c->kind == Condition::Kind::And) return c->children;
  return {c};
}

// ---------------------------------------------------------------------------
// Query expressions
// ---------------------------------------------------------------------------

struct QueryExpr {
  enum class Kind { Relation, Singleton, Empty, Join, Union, Select, Sum, Rename };
  Kind kind;

  // Relation (base relation or materialized view read).
  std::string rel;
  Schema cols;  // instance column names, positionally matching the declaration
  bool isView = false;
  std::vector<std::pair<std::string, TermPtr>> probes;  // equality access paths

  // Singleton: one tuple with the given column values and multiplicity.
  Schema scols;
  std::vector<TermPtr> svals;
  TermPtr smult;

  // Empty reuses `cols` as its schema.

  std::vector<QueryPtr> children;  // Join/Union members; Select/Sum/Rename child at [0]

  CondPtr cond;  // Select

  Schema groupBy;  // Sum
  TermPtr f;       // Sum value term

  std::vector<std::pair<std::string, std::string>> renames;  // Rename (from, to)
};

inline QueryPtr q_relation(std::string rel, Schema cols, bool isView = false) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Relation;
  q->rel = std::move(rel);
  q->cols = std::move(cols);
  q->isView = isView;
  return q;
}
inline QueryPtr q_relation_probed(std::string rel, Schema cols, bool isView,
                                  std::vector<std::pair<std::string, TermPtr>> probes) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Relation;
  q->rel = std::move(rel);
  q->cols = std::move(cols);
  q->isView = isView;
  q->probes = std::move(probes);
  return q;
}
inline QueryPtr q_singleton(Schema cols, std::vector<TermPtr> vals, TermPtr mult) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Singleton;
  q->scols = std::move(cols);
  q->svals = std::move(vals);
  q->smult = std::move(mult);
  return q;
}
inline QueryPtr q_one() { return q_singleton({}, {}, term_num(1)); }
inline QueryPtr q_empty(Schema cols) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Empty;
  q->cols = std::move(cols);
  return q;
}
inline QueryPtr q_join(std::vector<QueryPtr> children) {
  std::vector<QueryPtr> flat;
  for (auto& c : children) {
    if (c->kind == QueryExpr::Kind::Join)
      flat.insert(flat.end(), c->children.begin(), c->children.end());
    else
      flat.push_back(c);
  }
  if (flat.size() == 1) return flat[0];
  if (flat.empty()) return q_one();
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Join;
  q->children = std::move(flat);
  return q;
}
inline QueryPtr q_union(std::vector<QueryPtr> children) {
  std::vector<QueryPtr> flat;
  for (auto& c : children) {
    if (c->kind == QueryExpr::Kind::Union)
      flat.insert(flat.end(), c->children.begin(), c->children.end());
    else
      flat.push_back(c);
  }
  if (flat.size() == 1) return flat[0];
  if (flat.empty()) throw StructureError("empty union");
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Union;
  q->children = std::move(flat);
  return q;
}
inline QueryPtr q_select(CondPtr cond, QueryPtr child) {
  if (!cond || cond->kind == Condition::Kind::True) return child;
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Select;
  q->cond = std::move(cond);
  q->children.push_back(std::move(child));
  return q;
}
inline QueryPtr q_sum(Schema groupBy, TermPtr f, QueryPtr child) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Sum;
  q->groupBy = std::move(groupBy);
  q->f = std::move(f);
  q->children.push_back(std::move(child));
  return q;
}
inline QueryPtr q_rename(std::vector<std::pair<std::string, std::string>> renames,
                         QueryPtr child) {
  auto q = std::make_shared<QueryExpr>();
  q->kind = QueryExpr::Kind::Rename;
  q->renames = std::move(renames);
  q->children.push_back(std::move(child));
  return q;
}
/// Difference is sugar: a + (b * {<> -> -1}).
inline QueryPtr q_negate(QueryPtr q) { return q_join({std::move(q), q_singleton({}, {}, term_num(-1))}); }

// ---------------------------------------------------------------------------
// Schema analysis
// ---------------------------------------------------------------------------

inline Schema schema_of(const QueryPtr& q) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      return q->cols;
    case QueryExpr::Kind::Singleton:
      return q->scols;
    case QueryExpr::Kind::Empty:
      return q->cols;
    case QueryExpr::Kind::Join: {
      Schema s;
      for (const auto& c : q->children)
        for (const auto& col : schema_of(c))
          if (!schema_has(s, col)) s.push_back(col);
      return s;
    }
    case QueryExpr::Kind::Union:
      return schema_of(q->children[0]);
    case QueryExpr::Kind::Select:
      return schema_of(q->children[0]);
    case QueryExpr::Kind::Sum:
      return q->groupBy;
    case QueryExpr::Kind::Rename: {
      Schema s = schema_of(q->children[0]);
      for (auto& col : s)
        for (const auto& [from, to] : q->renames)
          if (col == from) {
            col = to;
            break;
          }
      return s;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Free (input) variables: names referenced in terms/conditions that are not
// supplied by the referencing node's own children.
// ---------------------------------------------------------------------------

inline void free_vars_term(const TermPtr& t, const std::set<std::string>& bound,
                           std::set<std::string>& out);
inline void free_vars_cond(const CondPtr& c, const std::set<std::string>& bound,
                           std::set<std::string>& out);

inline void free_vars_query(const QueryPtr& q, const std::set<std::string>& bound,
                            std::set<std::string>& out) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      for (const auto& [col, t] : q->probes) free_vars_term(t, bound, out);
      return;
    case QueryExpr::Kind::Singleton: {
      for (const auto& t : q->svals) free_vars_term(t, bound, out);
      free_vars_term(q->smult, bound, out);
      return;
    }
    case QueryExpr::Kind::Empty:
      return;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) free_vars_query(c, bound, out);
      return;
    case QueryExpr::Kind::Select: {
      free_vars_query(q->children[0], bound, out);
      std::set<std::string> b2 = bound;
      for (const auto& col : schema_of(q->children[0])) b2.insert(col);
      std::set<std::string> inner;
      free_vars_cond(q->cond, b2, inner);
      out.insert(inner.begin(), inner.end());
      return;
    }
    case QueryExpr::Kind::Sum: {
      free_vars_query(q->children[0], bound, out);
      std::set<std::string> b2 = bound;
      for (const auto& col : schema_of(q->children[0])) b2.insert(col);
      free_vars_term(q->f, b2, out);
      return;
    }
    case QueryExpr::Kind::Rename:
      free_vars_query(q->children[0], bound, out);
      return;
  }
}

inline void free_vars_cond(const CondPtr& c, const std::set<std::string>& bound,
                           std::set<std::string>& out) {
  if (!c) return;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return;
    case Condition::Kind::And:
    case Condition::Kind::Or:
    case Condition::Kind::Not:
      for (const auto& ch : c->children) free_vars_cond(ch, bound, out);
      return;
    case Condition::Kind::Cmp:
      free_vars_term(c->lhs, bound, out);
      free_vars_term(c->rhs, bound, out);
      return;
  }
}

inline void free_vars_term(const TermPtr& t, const std::set<std::string>& bound,
                           std::set<std::string>& out) {
  if (!t) return;
  switch (t->kind) {
    case Term::Kind::Constant:
      return;
    case Term::Kind::Variable:
      if (!bound.count(t->name)) out.insert(t->name);
      return;
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div:
      free_vars_term(t->lhs, bound, out);
      free_vars_term(t->rhs, bound, out);
      return;
    case Term::Kind::Aggregate: {
      std::set<std::string> inner;
      free_vars_query(t->agg, {}, inner);
      for (const auto& v : inner)
        if (!bound.count(v)) out.insert(v);
      return;
    }
  }
}

inline std::set<std::string> free_vars(const QueryPtr& q) {
  std::set<std::string> out;
  free_vars_query(q, {}, out);
  return out;
}

/// Binding pattern: input variables that must be supplied externally, and the
/// output columns the query produces.
struct BindingPattern {
  std::set<std::string> inputVars;
  Schema outputVars;
};

inline BindingPattern infer_binding_pattern(const QueryPtr& q) {
  return BindingPattern{free_vars(q), schema_of(q)};
}

// ---------------------------------------------------------------------------
// Relation mentions and degree
// ---------------------------------------------------------------------------

inline bool mentions_relation_term(const TermPtr& t, const std::string& rel);

inline bool mentions_relation_cond(const CondPtr& c, const std::string& rel) {
  if (!c) return false;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return false;
    case Condition::Kind::And:
    case Condition::Kind::Or:
    case Condition::Kind::Not:
      for (const auto& ch : c->children)
        if (mentions_relation_cond(ch, rel)) return true;
      return false;
    case Condition::Kind::Cmp:
      return mentions_relation_term(c->lhs, rel) || mentions_relation_term(c->rhs, rel);
  }
  return false;
}

inline bool mentions_relation(const QueryPtr& q, const std::string& rel) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      if (!q->isView && q->rel == rel) return true;
      for (const auto& [col, t] : q->probes)
        if (mentions_relation_term(t, rel)) return true;
      return false;
    case QueryExpr::Kind::Singleton:
      for (const auto& t : q->svals)
        if (mentions_relation_term(t, rel)) return true;
      return mentions_relation_term(q->smult, rel);
    case QueryExpr::Kind::Empty:
      return false;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children)
        if (mentions_relation(c, rel)) return true;
      return false;
    case QueryExpr::Kind::Select:
      return mentions_relation_cond(q->cond, rel) || mentions_relation(q->children[0], rel);
    case QueryExpr::Kind::Sum:
      return mentions_relation_term(q->f, rel) || mentions_relation(q->children[0], rel);
    case QueryExpr::Kind::Rename:
      return mentions_relation(q->children[0], rel);
  }
  return false;
}

inline bool mentions_relation_term(const TermPtr& t, const std::string& rel) {
  if (!t) return false;
  switch (t->kind) {
    case Term::Kind::Constant:
    case Term::Kind::Variable:
      return false;
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div:
      return mentions_relation_term(t->lhs, rel) || mentions_relation_term(t->rhs, rel);
    case Term::Kind::Aggregate:
      return mentions_relation(t->agg, rel);
  }
  return false;
}

/// Degree: the number of relation atoms multiplied together, after
/// conceptually pushing unions above joins (union takes the max of its
/// members). Nested aggregates inside conditions or value terms do not
/// contribute.
inline int degree(const QueryPtr& q) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      return 1;
    case QueryExpr::Kind::Singleton:
    case QueryExpr::Kind::Empty:
      return 0;
    case QueryExpr::Kind::Join: {
      int d = 0;
      for (const auto& c : q->children) d += degree(c);
      return d;
    }
    case QueryExpr::Kind::Union: {
      int d = 0;
      for (const auto& c : q->children) d = std::max(d, degree(c));
      return d;
    }
    case QueryExpr::Kind::Select:
    case QueryExpr::Kind::Rename:
    case QueryExpr::Kind::Sum:
      return degree(q->children[0]);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

using NameMap = std::vector<std::pair<std::string, std::string>>;

inline std::string apply_name_map(const NameMap& m, const std::string& n) {
  for (const auto& [from, to] : m)
    if (n == from) return to;
  return n;
}

inline TermPtr subst_names_term(const TermPtr& t, const NameMap& m);
inline CondPtr subst_names_cond(const CondPtr& c, const NameMap& m);

/// Renames columns (and matching variable references) throughout the tree.
/// Relies on globally unique names, which the frontend guarantees.
inline QueryPtr subst_names(const QueryPtr& q, const NameMap& m) {
  if (m.empty()) return q;
  auto n = std::make_shared<QueryExpr>(*q);
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      for (auto& col : n->cols) col = apply_name_map(m, col);
      for (auto& [col, t] : n->probes) {
        col = apply_name_map(m, col);
        t = subst_names_term(t, m);
      }
      break;
    case QueryExpr::Kind::Singleton:
      for (auto& col : n->scols) col = apply_name_map(m, col);
      for (auto& t : n->svals) t = subst_names_term(t, m);
      n->smult = subst_names_term(n->smult, m);
      break;
    case QueryExpr::Kind::Empty:
      for (auto& col : n->cols) col = apply_name_map(m, col);
      break;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (auto& c : n->children) c = subst_names(c, m);
      break;
    case QueryExpr::Kind::Select:
      n->cond = subst_names_cond(n->cond, m);
      n->children[0] = subst_names(n->children[0], m);
      break;
    case QueryExpr::Kind::Sum:
      for (auto& col : n->groupBy) col = apply_name_map(m, col);
      n->f = subst_names_term(n->f, m);
      n->children[0] = subst_names(n->children[0], m);
      break;
    case QueryExpr::Kind::Rename:
      for (auto& [from, to] : n->renames) {
        from = apply_name_map(m, from);
        to = apply_name_map(m, to);
      }
      n->children[0] = subst_names(n->children[0], m);
      break;
  }
  return n;
}

inline TermPtr subst_names_term(const TermPtr& t, const NameMap& m) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Constant:
      return t;
    case Term::Kind::Variable: {
      std::string renamed = apply_name_map(m, t->name);
      if (renamed == t->name) return t;
      return term_var(renamed);
    }
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div:
      return term_bin(t->kind, subst_names_term(t->lhs, m), subst_names_term(t->rhs, m));
    case Term::Kind::Aggregate:
      return term_agg(subst_names(t->agg, m));
  }
  return t;
}

inline CondPtr subst_names_cond(const CondPtr& c, const NameMap& m) {
  if (!c) return c;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return c;
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::vector<CondPtr> ch;
      for (const auto& x : c->children) ch.push_back(subst_names_cond(x, m));
      return c->kind == Condition::Kind::And ? cond_and(std::move(ch)) : cond_or(std::move(ch));
    }
    case Condition::Kind::Not:
      return cond_not(subst_names_cond(c->children[0], m));
    case Condition::Kind::Cmp:
      return cond_cmp(c->op, subst_names_term(c->lhs, m), subst_names_term(c->rhs, m));
  }
  return c;
}

using TermMap = std::vector<std::pair<std::string, TermPtr>>;

inline TermPtr subst_vars_term(const TermPtr& t, const TermMap& m);
inline CondPtr subst_vars_cond(const CondPtr& c, const TermMap& m);

/// Replaces variable *references* by terms; schemas are left untouched.
inline QueryPtr subst_vars(const QueryPtr& q, const TermMap& m) {
  if (m.empty()) return q;
  auto n = std::make_shared<QueryExpr>(*q);
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      for (auto& [col, t] : n->probes) t = subst_vars_term(t, m);
      break;
    case QueryExpr::Kind::Singleton:
      for (auto& t : n->svals) t = subst_vars_term(t, m);
      n->smult = subst_vars_term(n->smult, m);
      break;
    case QueryExpr::Kind::Empty:
      break;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (auto& c : n->children) c = subst_vars(c, m);
      break;
    case QueryExpr::Kind::Select:
      n->cond = subst_vars_cond(n->cond, m);
      n->children[0] = subst_vars(n->children[0], m);
      break;
    case QueryExpr::Kind::Sum:
      n->f = subst_vars_term(n->f, m);
      n->children[0] = subst_vars(n->children[0], m);
      break;
    case QueryExpr::Kind::Rename:
      n->children[0] = subst_vars(n->children[0], m);
      break;
  }
  return n;
}

inline TermPtr subst_vars_term(const TermPtr& t, const TermMap& m) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Constant:
      return t;
    case Term::Kind::Variable:
      for (const auto& [from, to] : m)
        if (t->name == from) return to;
      return t;
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div:
      return term_bin(t->kind, subst_vars_term(t->lhs, m), subst_vars_term(t->rhs, m));
    case Term::Kind::Aggregate:
      return term_agg(subst_vars(t->agg, m));
  }
  return t;
}

inline CondPtr subst_vars_cond(const CondPtr& c, const TermMap& m) {
  if (!c) return c;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return c;
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::vector<CondPtr> ch;
      for (const auto& x : c->children) ch.push_back(subst_vars_cond(x, m));
      return c->kind == Condition::Kind::And ? cond_and(std::move(ch)) : cond_or(std::move(ch));
    }
    case Condition::Kind::Not:
      return cond_not(subst_vars_cond(c->children[0], m));
    case Condition::Kind::Cmp:
      return cond_cmp(c->op, subst_vars_term(c->lhs, m), subst_vars_term(c->rhs, m));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Traversal helpers
// ---------------------------------------------------------------------------

inline void for_each_agg_term(const TermPtr& t, const std::function<void(const TermPtr&)>& fn) {
  if (!t) return;
  switch (t->kind) {
    case Term::Kind::Constant:
    case Term::Kind::Variable:
      return;
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div:
      for_each_agg_term(t->lhs, fn);
      for_each_agg_term(t->rhs, fn);
      return;
    case Term::Kind::Aggregate:
      fn(t);
      return;
  }
}

inline void for_each_agg_cond(const CondPtr& c, const std::function<void(const TermPtr&)>& fn) {
  if (!c) return;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return;
    case Condition::Kind::And:
    case Condition::Kind::Or:
    case Condition::Kind::Not:
      for (const auto& ch : c->children) for_each_agg_cond(ch, fn);
      return;
    case Condition::Kind::Cmp:
      for_each_agg_term(c->lhs, fn);
      for_each_agg_term(c->rhs, fn);
      return;
  }
}

/// Visits every nested aggregate term in conditions and value terms,
/// including those inside nested subqueries.
inline void for_each_nested_agg(const QueryPtr& q,
                                const std::function<void(const TermPtr&)>& fn) {
  auto onTerm = [&](const TermPtr& aggTerm) {
    fn(aggTerm);
    for_each_nested_agg(aggTerm->agg, fn);
  };
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
    case QueryExpr::Kind::Empty:
      return;
    case QueryExpr::Kind::Singleton:
      for (const auto& t : q->svals) for_each_agg_term(t, onTerm);
      for_each_agg_term(q->smult, onTerm);
      return;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) for_each_nested_agg(c, fn);
      return;
    case QueryExpr::Kind::Select:
      for_each_agg_cond(q->cond, onTerm);
      for_each_nested_agg(q->children[0], fn);
      return;
    case QueryExpr::Kind::Sum:
      for_each_agg_term(q->f, onTerm);
      for_each_nested_agg(q->children[0], fn);
      return;
    case QueryExpr::Kind::Rename:
      for_each_nested_agg(q->children[0], fn);
      return;
  }
}

inline bool term_has_agg(const TermPtr& t) {
  bool has = false;
  for_each_agg_term(t, [&](const TermPtr&) { has = true; });
  return has;
}

inline bool cond_has_agg(const CondPtr& c) {
  bool has = false;
  for_each_agg_cond(c, [&](const TermPtr&) { has = true; });
  return has;
}

inline void collect_base_relations(const QueryPtr& q, std::set<std::string>& out) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      if (!q->isView) out.insert(q->rel);
      for (const auto& [c, t] : q->probes)
        for_each_agg_term(t, [&](const TermPtr& a) { collect_base_relations(a->agg, out); });
      return;
    case QueryExpr::Kind::Singleton:
    case QueryExpr::Kind::Empty:
      return;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) collect_base_relations(c, out);
      return;
    case QueryExpr::Kind::Select:
      for_each_agg_cond(q->cond,
                        [&](const TermPtr& a) { collect_base_relations(a->agg, out); });
      collect_base_relations(q->children[0], out);
      return;
    case QueryExpr::Kind::Sum:
      for_each_agg_term(q->f, [&](const TermPtr& a) { collect_base_relations(a->agg, out); });
      collect_base_relations(q->children[0], out);
      return;
    case QueryExpr::Kind::Rename:
      collect_base_relations(q->children[0], out);
      return;
  }
}

}  // namespace deltaview
