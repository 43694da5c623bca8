// deltaview: semantics-preserving simplification of query expressions —
// rename folding, empty propagation, singleton inlining and merging,
// constant folding, and dead-column elimination under aggregates.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "deltaview/canonical.hpp"

namespace deltaview {

inline TermPtr fold_term(const TermPtr& t);
inline CondPtr fold_cond(const CondPtr& c);
inline QueryPtr simplify(const QueryPtr& q);

namespace simpdetail {

inline bool term_const_value(const TermPtr& t, Value& out) {
  if (t->kind != Term::Kind::Constant) return false;
  out = t->value;
  return true;
}

inline bool is_const_num(const TermPtr& t, const Rational& r) {
  return t->kind == Term::Kind::Constant && t->value.is_number() && t->value.num() == r;
}

}  // namespace simpdetail

inline TermPtr fold_term(const TermPtr& t) {
  using namespace simpdetail;
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Constant:
    case Term::Kind::Variable:
      return t;
    case Term::Kind::Add:
    case Term::Kind::Sub:
    case Term::Kind::Mul:
    case Term::Kind::Div: {
      TermPtr a = fold_term(t->lhs), b = fold_term(t->rhs);
      Value va, vb;
      bool ca = term_const_value(a, va), cb = term_const_value(b, vb);
      if (ca && cb && va.is_number() && vb.is_number()) {
        switch (t->kind) {
          case Term::Kind::Add:
            return term_num(va.num() + vb.num());
          case Term::Kind::Sub:
            return term_num(va.num() - vb.num());
          case Term::Kind::Mul:
            return term_num(va.num() * vb.num());
          default:
            if (vb.num() != 0) return term_num(va.num() / vb.num());
        }
      }
      if (t->kind == Term::Kind::Add) {
        if (is_const_num(a, 0)) return b;
        if (is_const_num(b, 0)) return a;
      }
      if (t->kind == Term::Kind::Sub && is_const_num(b, 0)) return a;
      if (t->kind == Term::Kind::Mul) {
        if (is_const_num(a, 1)) return b;
        if (is_const_num(b, 1)) return a;
        if (is_const_num(a, 0) || is_const_num(b, 0)) return term_num(0);
      }
      if (t->kind == Term::Kind::Div && is_const_num(b, 1)) return a;
      return term_bin(t->kind, a, b);
    }
    case Term::Kind::Aggregate: {
      QueryPtr q = simplify(t->agg);
      if (q->kind == QueryExpr::Kind::Empty) return term_num(0);
      if (q->kind == QueryExpr::Kind::Singleton && q->scols.empty())
        return fold_term(q->smult);
      return term_agg(q);
    }
  }
  return t;
}

inline CondPtr fold_cond(const CondPtr& c) {
  using namespace simpdetail;
  if (!c) return cond_true();
  switch (c->kind) {
    case Condition::Kind::True:
    case Condition::Kind::False:
      return c;
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::vector<CondPtr> ch;
      for (const auto& x : c->children) ch.push_back(fold_cond(x));
      // Deduplicate identical conjuncts/disjuncts.
      std::vector<CondPtr> uniq;
      std::set<std::string> seen;
      for (auto& x : ch)
        if (seen.insert(print_cond(x)).second) uniq.push_back(x);
      return c->kind == Condition::Kind::And ? cond_and(std::move(uniq))
                                             : cond_or(std::move(uniq));
    }
    case Condition::Kind::Not: {
      CondPtr x = fold_cond(c->children[0]);
      if (x->kind == Condition::Kind::True) return cond_false();
      if (x->kind == Condition::Kind::False) return cond_true();
      if (x->kind == Condition::Kind::Not) return x->children[0];
      return cond_not(x);
    }
    case Condition::Kind::Cmp: {
      TermPtr a = fold_term(c->lhs), b = fold_term(c->rhs);
      Value va, vb;
      if (term_const_value(a, va) && term_const_value(b, vb) &&
          va.kind() == vb.kind()) {
        int cmp = Value::order_compare(va, vb);
        bool r = false;
        switch (c->op) {
          case Condition::CmpOp::Lt: r = cmp < 0; break;
          case Condition::CmpOp::Le: r = cmp <= 0; break;
          case Condition::CmpOp::Eq: r = cmp == 0; break;
          case Condition::CmpOp::Ne: r = cmp != 0; break;
        }
        return r ? cond_true() : cond_false();
      }
      // x = x (same print) holds for Eq/Le.
      if ((c->op == Condition::CmpOp::Eq || c->op == Condition::CmpOp::Le) &&
          print_term(a) == print_term(b))
        return cond_true();
      return cond_cmp(c->op, a, b);
    }
  }
  return c;
}

namespace simpdetail {

/// One simplification pass, bottom-up.
inline QueryPtr pass(const QueryPtr& q) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation: {
      if (q->probes.empty()) return q;
      auto n = std::make_shared<QueryExpr>(*q);
      for (auto& [col, t] : n->probes) t = fold_term(t);
      return n;
    }
    case QueryExpr::Kind::Singleton: {
      auto n = std::make_shared<QueryExpr>(*q);
      for (auto& t : n->svals) t = fold_term(t);
      n->smult = fold_term(n->smult);
      if (simpdetail::is_const_num(n->smult, 0)) return q_empty(n->scols);
      return n;
    }
    case QueryExpr::Kind::Empty:
      return q;

    case QueryExpr::Kind::Join: {
      std::vector<QueryPtr> ch;
      for (const auto& c : q->children) {
        QueryPtr p = pass(c);
        if (p->kind == QueryExpr::Kind::Join)
          ch.insert(ch.end(), p->children.begin(), p->children.end());
        else
          ch.push_back(p);
      }
      for (const auto& c : ch)
        if (c->kind == QueryExpr::Kind::Empty) return q_empty(schema_of(q));

      // Extract shared singleton columns as equality conditions, so joins
      // against event singletons become ordinary predicates.
      std::vector<CondPtr> conds;
      for (size_t i = 0; i < ch.size(); ++i) {
        if (ch[i]->kind != QueryExpr::Kind::Singleton) continue;
        Schema sibling;
        for (size_t j = 0; j < ch.size(); ++j) {
          if (j == i) continue;
          for (const auto& col : schema_of(ch[j]))
            if (!schema_has(sibling, col)) sibling.push_back(col);
        }
        Schema keep;
        std::vector<TermPtr> keepVals;
        auto n = std::make_shared<QueryExpr>(*ch[i]);
        bool changedHere = false;
        for (size_t k = 0; k < n->scols.size(); ++k) {
          if (schema_has(sibling, n->scols[k])) {
            conds.push_back(cond_eq(term_var(n->scols[k]), n->svals[k]));
            changedHere = true;
          } else {
            keep.push_back(n->scols[k]);
            keepVals.push_back(n->svals[k]);
          }
        }
        if (changedHere) {
          n->scols = std::move(keep);
          n->svals = std::move(keepVals);
          ch[i] = n;
        }
      }

      // Merge singleton factors (disjoint columns now) into one.
      std::vector<QueryPtr> rest;
      Schema mcols;
      std::vector<TermPtr> mvals;
      TermPtr mmult;
      for (const auto& c : ch) {
        if (c->kind == QueryExpr::Kind::Singleton) {
          for (size_t k = 0; k < c->scols.size(); ++k) {
            mcols.push_back(c->scols[k]);
            mvals.push_back(c->svals[k]);
          }
          mmult = mmult ? term_mul(mmult, c->smult) : c->smult;
        } else {
          rest.push_back(c);
        }
      }
      if (mmult) {
        TermPtr m = fold_term(mmult);
        bool identity = mcols.empty() && is_const_num(m, 1);
        if (!identity || rest.empty()) rest.push_back(q_singleton(mcols, mvals, m));
      }
      QueryPtr body = q_join(std::move(rest));
      return q_select(cond_and(std::move(conds)), body);
    }

    case QueryExpr::Kind::Union: {
      std::vector<QueryPtr> ch;
      for (const auto& c : q->children) {
        QueryPtr p = pass(c);
        if (p->kind == QueryExpr::Kind::Empty) continue;
        if (p->kind == QueryExpr::Kind::Union)
          ch.insert(ch.end(), p->children.begin(), p->children.end());
        else
          ch.push_back(p);
      }
      if (ch.empty()) return q_empty(schema_of(q));
      return q_union(std::move(ch));
    }

    case QueryExpr::Kind::Select: {
      QueryPtr child = pass(q->children[0]);
      CondPtr cond = fold_cond(q->cond);
      // Merge stacked selects.
      while (child->kind == QueryExpr::Kind::Select) {
        cond = cond_and({cond, child->cond});
        child = child->children[0];
      }
      if (cond->kind == Condition::Kind::False || child->kind == QueryExpr::Kind::Empty)
        return q_empty(schema_of(child->kind == QueryExpr::Kind::Empty ? child : q));
      if (cond->kind == Condition::Kind::True) return child;
      // Substitute singleton-bound columns into the condition.
      if (child->kind == QueryExpr::Kind::Singleton ||
          child->kind == QueryExpr::Kind::Join) {
        TermMap binds;
        auto add_binds = [&](const QueryPtr& s) {
          for (size_t k = 0; k < s->scols.size(); ++k)
            if (s->svals[k]->kind != Term::Kind::Aggregate)
              binds.push_back({s->scols[k], s->svals[k]});
        };
        if (child->kind == QueryExpr::Kind::Singleton) add_binds(child);
        else
          for (const auto& c : child->children)
            if (c->kind == QueryExpr::Kind::Singleton) add_binds(c);
        if (!binds.empty()) {
          CondPtr substituted = fold_cond(subst_vars_cond(cond, binds));
          if (substituted->kind == Condition::Kind::False) return q_empty(schema_of(child));
          cond = substituted;
          if (cond->kind == Condition::Kind::True) return child;
        }
      }
      return q_select(cond, child);
    }

    case QueryExpr::Kind::Sum: {
      QueryPtr child = pass(q->children[0]);
      TermPtr f = fold_term(q->f);
      if (child->kind == QueryExpr::Kind::Empty) return q_empty(q->groupBy);

      // Peel a parameter-only guard off the child: Sum(A,f,sel(g,X)) with g
      // independent of X's columns equals sel(g, Sum(A,f,X)).
      if (child->kind == QueryExpr::Kind::Select) {
        Schema childCols = schema_of(child);
        std::vector<CondPtr> outer, inner;
        for (const auto& c : conjuncts_of(child->cond)) {
          std::set<std::string> vars;
          free_vars_cond(c, {}, vars);
          bool touches = false;
          for (const auto& v : vars)
            if (schema_has(childCols, v)) touches = true;
          (touches ? inner : outer).push_back(c);
        }
        if (!outer.empty()) {
          QueryPtr body = q_select(cond_and(std::move(inner)), child->children[0]);
          QueryPtr sum = pass(q_sum(q->groupBy, f, body));
          return q_select(cond_and(std::move(outer)), sum);
        }
      }

      // Substitute singleton-bound columns into f and fold the aggregate of
      // a pure singleton into a singleton.
      QueryPtr body = child;
      CondPtr guard;  // retained inner select (touching columns)
      if (body->kind == QueryExpr::Kind::Select) {
        guard = body->cond;
        body = body->children[0];
      }
      if (body->kind == QueryExpr::Kind::Singleton) {
        TermMap binds;
        bool clean = true;
        for (size_t k = 0; k < body->scols.size(); ++k) {
          if (body->svals[k]->kind == Term::Kind::Aggregate) clean = false;
          binds.push_back({body->scols[k], body->svals[k]});
        }
        if (clean && !guard) {
          TermPtr fb = fold_term(subst_vars_term(f, binds));
          Schema keyCols = q->groupBy;
          std::vector<TermPtr> keyVals;
          for (const auto& c : keyCols) {
            bool found = false;
            for (size_t k = 0; k < body->scols.size(); ++k)
              if (body->scols[k] == c) {
                keyVals.push_back(body->svals[k]);
                found = true;
              }
            if (!found) throw StructureError("group column not in singleton: " + c);
          }
          return pass(q_singleton(keyCols, keyVals, term_mul(fb, body->smult)));
        }
      }
      // Dead-column elimination inside an aggregate: singleton columns not
      // grouped and not referenced anywhere can be dropped (after their
      // values were substituted into conditions and f).
      if (body->kind == QueryExpr::Kind::Join ||
          body->kind == QueryExpr::Kind::Singleton) {
        std::vector<QueryPtr> factors =
            body->kind == QueryExpr::Kind::Join ? body->children : std::vector<QueryPtr>{body};
        TermMap binds;
        for (const auto& fac : factors)
          if (fac->kind == QueryExpr::Kind::Singleton)
            for (size_t k = 0; k < fac->scols.size(); ++k)
              if (fac->svals[k]->kind != Term::Kind::Aggregate)
                binds.push_back({fac->scols[k], fac->svals[k]});
        if (!binds.empty()) {
          TermPtr f2 = fold_term(subst_vars_term(f, binds));
          CondPtr g2 = guard ? fold_cond(subst_vars_cond(guard, binds)) : guard;
          // Columns still needed: group-by plus anything referenced.
          std::set<std::string> needed(q->groupBy.begin(), q->groupBy.end());
          auto note_vars = [&](const std::set<std::string>& vs) {
            needed.insert(vs.begin(), vs.end());
          };
          std::set<std::string> vs;
          free_vars_term(f2, {}, vs);
          if (g2) free_vars_cond(g2, {}, vs);
          for (const auto& fac : factors) {
            if (fac->kind == QueryExpr::Kind::Singleton) continue;
            for (const auto& [col, t] : fac->probes) free_vars_term(t, {}, vs);
          }
          note_vars(vs);
          bool changed = print_term(f2) != print_term(f) ||
                         (guard && print_cond(g2) != print_cond(guard));
          std::vector<QueryPtr> nf;
          for (const auto& fac : factors) {
            if (fac->kind != QueryExpr::Kind::Singleton) {
              nf.push_back(fac);
              continue;
            }
            Schema keep;
            std::vector<TermPtr> vals;
            for (size_t k = 0; k < fac->scols.size(); ++k)
              if (needed.count(fac->scols[k])) {
                keep.push_back(fac->scols[k]);
                vals.push_back(fac->svals[k]);
              }
            if (keep.size() != fac->scols.size()) changed = true;
            nf.push_back(q_singleton(keep, vals, fac->smult));
          }
          if (changed) {
            QueryPtr nb = q_join(std::move(nf));
            if (g2) nb = q_select(g2, nb);
            return pass(q_sum(q->groupBy, f2, nb));
          }
        }
      }
      if (guard) body = q_select(guard, body);
      return q_sum(q->groupBy, f, body);
    }

    case QueryExpr::Kind::Rename: {
      QueryPtr child = pass(q->children[0]);
      NameMap m;
      for (const auto& [from, to] : q->renames)
        if (from != to) m.push_back({from, to});
      if (m.empty()) return child;
      return subst_names(child, m);
    }
  }
  return q;
}

}  // namespace simpdetail

inline QueryPtr simplify(const QueryPtr& q) {
  QueryPtr cur = q;
  std::string before = print_query(cur);
  for (int i = 0; i < 10; ++i) {
    cur = simpdetail::pass(cur);
    std::string after = print_query(cur);
    if (after == before) break;
    before = std::move(after);
  }
  return cur;
}

}  // namespace deltaview
