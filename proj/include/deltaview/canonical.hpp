// deltaview: canonical keys for query expressions. Two expressions get the
// same key iff they are structurally equal up to commutative child order and
// alpha-renaming of input variables; used to deduplicate materialized views.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "deltaview/text_ir.hpp"

namespace deltaview {

inline std::string canonical_key(const QueryPtr& q);

namespace detail {

inline TermPtr canon_sort_term(const TermPtr& t);
inline CondPtr canon_sort_cond(const CondPtr& c);
struct AlphaMap;
inline QueryPtr alpha_query(const QueryPtr& q, AlphaMap& am);

/// Recursively sorts commutative children (join/union members, and/or
/// conjuncts, add/mul operands, singleton columns) into a deterministic
/// order, so the final print is order-insensitive.
inline QueryPtr canon_sort(const QueryPtr& q) {
  auto n = std::make_shared<QueryExpr>(*q);
  switch (q->kind) {
    case QueryExpr::Kind::Relation: {
      for (auto& [col, t] : n->probes) t = canon_sort_term(t);
      std::sort(n->probes.begin(), n->probes.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return print_term(a.second) < print_term(b.second);
      });
      break;
    }
    case QueryExpr::Kind::Singleton: {
      std::vector<std::pair<std::string, TermPtr>> cols;
      for (size_t i = 0; i < n->scols.size(); ++i)
        cols.push_back({n->scols[i], canon_sort_term(n->svals[i])});
      std::sort(cols.begin(), cols.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      n->scols.clear();
      n->svals.clear();
      for (auto& [c, v] : cols) {
        n->scols.push_back(c);
        n->svals.push_back(v);
      }
      n->smult = canon_sort_term(n->smult);
      break;
    }
    case QueryExpr::Kind::Empty: {
      std::sort(n->cols.begin(), n->cols.end());
      break;
    }
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union: {
      for (auto& c : n->children) c = canon_sort(c);
      std::stable_sort(n->children.begin(), n->children.end(),
                       [](const QueryPtr& a, const QueryPtr& b) {
                         return canonical_key(a) < canonical_key(b);
                       });
      break;
    }
    case QueryExpr::Kind::Select:
      n->cond = canon_sort_cond(n->cond);
      n->children[0] = canon_sort(n->children[0]);
      break;
    case QueryExpr::Kind::Sum:
      n->f = canon_sort_term(n->f);
      n->children[0] = canon_sort(n->children[0]);
      break;
    case QueryExpr::Kind::Rename:
      std::sort(n->renames.begin(), n->renames.end());
      n->children[0] = canon_sort(n->children[0]);
      break;
  }
  return n;
}

inline TermPtr canon_sort_term(const TermPtr& t) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Constant:
    case Term::Kind::Variable:
      return t;
    case Term::Kind::Add:
    case Term::Kind::Mul: {
      TermPtr a = canon_sort_term(t->lhs), b = canon_sort_term(t->rhs);
      if (print_term(b) < print_term(a)) std::swap(a, b);
      return term_bin(t->kind, a, b);
    }
    case Term::Kind::Sub:
    case Term::Kind::Div:
      return term_bin(t->kind, canon_sort_term(t->lhs), canon_sort_term(t->rhs));
    case Term::Kind::Aggregate:
      return term_agg(canon_sort(t->agg));
  }
  return t;
}

inline CondPtr canon_sort_cond(const CondPtr& c) {
  if (!c) return c;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return c;
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::vector<CondPtr> ch;
      for (const auto& x : c->children) ch.push_back(canon_sort_cond(x));
      std::stable_sort(ch.begin(), ch.end(), [](const CondPtr& a, const CondPtr& b) {
        return print_cond(a) < print_cond(b);
      });
      auto n = std::make_shared<Condition>(*c);
      n->children = std::move(ch);
      return n;
    }
    case Condition::Kind::Not:
      return cond_not(canon_sort_cond(c->children[0]));
    case Condition::Kind::Cmp: {
      TermPtr a = canon_sort_term(c->lhs), b = canon_sort_term(c->rhs);
      if ((c->op == Condition::CmpOp::Eq || c->op == Condition::CmpOp::Ne) &&
          print_term(b) < print_term(a))
        std::swap(a, b);
      return cond_cmp(c->op, a, b);
    }
  }
  return c;
}

/// Rewrites input-variable references as ?0, ?1, ... in order of first
/// occurrence in the (sorted) print. Column names stay as-is.
struct AlphaMap {
  const std::set<std::string>* freeSet;
  std::map<std::string, int> assigned;
  std::string lookup(const std::string& name) {
    if (!freeSet->count(name)) return name;
    auto it = assigned.find(name);
    if (it == assigned.end()) it = assigned.emplace(name, static_cast<int>(assigned.size())).first;
    return "?" + std::to_string(it->second);
  }
};

inline TermPtr alpha_term(const TermPtr& t, AlphaMap& am) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Constant:
      return t;
    case Term::Kind::Variable: {
      std::string r = am.lookup(t->name);
      return r == t->name ? t : term_var(r);
    }
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div: {
      TermPtr a = alpha_term(t->lhs, am);
      TermPtr b = alpha_term(t->rhs, am);
      return term_bin(t->kind, a, b);
    }
    case Term::Kind::Aggregate:
      return term_agg(alpha_query(t->agg, am));
  }
  return t;
}

inline CondPtr alpha_cond(const CondPtr& c, AlphaMap& am) {
  if (!c) return c;
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return c;
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      auto n = std::make_shared<Condition>(*c);
      for (auto& x : n->children) x = alpha_cond(x, am);
      return n;
    }
    case Condition::Kind::Not:
      return cond_not(alpha_cond(c->children[0], am));
    case Condition::Kind::Cmp: {
      TermPtr a = alpha_term(c->lhs, am);
      TermPtr b = alpha_term(c->rhs, am);
      return cond_cmp(c->op, a, b);
    }
  }
  return c;
}

inline QueryPtr alpha_query(const QueryPtr& q, AlphaMap& am) {
  auto n = std::make_shared<QueryExpr>(*q);
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      for (auto& [col, t] : n->probes) t = alpha_term(t, am);
      break;
    case QueryExpr::Kind::Singleton:
      for (auto& t : n->svals) t = alpha_term(t, am);
      n->smult = alpha_term(n->smult, am);
      break;
    case QueryExpr::Kind::Empty:
      break;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (auto& c : n->children) c = alpha_query(c, am);
      break;
    case QueryExpr::Kind::Select:
      n->cond = alpha_cond(n->cond, am);
      n->children[0] = alpha_query(n->children[0], am);
      break;
    case QueryExpr::Kind::Sum:
      n->f = alpha_term(n->f, am);
      n->children[0] = alpha_query(n->children[0], am);
      break;
    case QueryExpr::Kind::Rename:
      n->children[0] = alpha_query(n->children[0], am);
      break;
  }
  return n;
}

}  // namespace detail

inline std::string canonical_key(const QueryPtr& q) {
  QueryPtr sorted = detail::canon_sort(q);
  std::set<std::string> freeSet = free_vars(sorted);
  detail::AlphaMap am{&freeSet, {}};
  return print_query(detail::alpha_query(sorted, am));
}

/// Canonical text of `q` together with the free-variable names in the order
/// alpha renaming assigned them. Two definitions with equal keys are the same
/// function of their free variables *after* pairing them up by this order;
/// callers that bind free variables positionally need that pairing.
inline std::pair<std::string, std::vector<std::string>> canonical_key_order(const QueryPtr& q) {
  QueryPtr sorted = detail::canon_sort(q);
  std::set<std::string> freeSet = free_vars(sorted);
  detail::AlphaMap am{&freeSet, {}};
  std::string key = print_query(detail::alpha_query(sorted, am));
  std::vector<std::string> order(am.assigned.size());
  for (const auto& [name, idx] : am.assigned) order[static_cast<size_t>(idx)] = name;
  return {std::move(key), std::move(order)};
}

inline bool structural_equal(const QueryPtr& a, const QueryPtr& b) {
  return canonical_key(a) == canonical_key(b);
}

inline std::size_t ast_hash(const QueryPtr& q) {
  return std::hash<std::string>{}(canonical_key(q));
}

}  // namespace deltaview
