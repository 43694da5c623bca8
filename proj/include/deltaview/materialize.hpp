// deltaview: materialization of trigger statements. Takes one delta (or one
// full definition, for reevaluation) of a target view and turns it into
// statements over auxiliary materialized views:
//   - unions and disjunctions are split into independent pieces,
//   - value polynomials are split into monomials so each factor can be
//     aggregated inside the view that owns its columns,
//   - correlated subqueries become keyed views (probed on equalities) or
//     lazily filled caches keyed by the correlation variable,
//   - equalities against trigger parameters pin columns, turning view scans
//     into constant-time probes,
//   - the remaining join graph is split into connected components, each
//     materialized as its own view.
// Every new view is reported back so the compiler can derive its maintenance.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deltaview/ast.hpp"
#include "deltaview/canonical.hpp"
#include "deltaview/delta.hpp"
#include "deltaview/program.hpp"
#include "deltaview/simplify.hpp"
#include "deltaview/stats.hpp"
#include "deltaview/text_ir.hpp"
#include "deltaview/trace.hpp"
#include "deltaview/views.hpp"

namespace deltaview {

struct MaterializeOptions {
  /// Split disjunctive selections into disjoint branches.
  bool expandDisjunctions = true;
  /// Statistics enable the cache-size admission test; without them the
  /// structural rule (single relation atom in the outer query) decides alone.
  const Statistics* stats = nullptr;
  long long cacheThreshold = 10000;
  /// Per-site override for cache admission, keyed by discovery order;
  /// unset means every admissible site becomes a cache.
  std::function<bool(int)> cacheSiteEnabled;
};

class Materializer {
 public:
  Materializer(const Catalog& cat, ViewRegistry& reg, RuleTrace& trace,
               MaterializeOptions opt = {})
      : cat_(cat), reg_(reg), trace_(trace), opt_(std::move(opt)) {}

  /// Statements applying the delta `dq` of `target` for event `ev`.
  std::vector<Statement> delta_statements(const ViewInfo& target, const QueryPtr& dq,
                                          const UpdateEvent& ev) {
    Ctx cx = make_ctx(target, ev, false);
    std::vector<Statement> stmts;
    for (auto& fl : make_pieces(dq, cx)) {
      if (fl.zero) continue;
      stmts.push_back(assemble(fl, cx));
    }
    return merge_statements(std::move(stmts));
  }

  /// Full-recompute statement for `target`, used when a nested aggregate can
  /// change without an equality guard. Auxiliary views still absorb the flat
  /// parts, so the recompute loops over view entries, not base tuples.
  Statement reeval_statement(const ViewInfo& target, const UpdateEvent& ev) {
    Ctx cx = make_ctx(target, ev, true);
    std::vector<Statement> stmts;
    for (auto& fl : make_pieces(target.def, cx)) {
      if (fl.zero) continue;
      stmts.push_back(assemble(fl, cx));
    }
    auto merged = merge_statements(std::move(stmts));
    if (merged.size() != 1)
      throw StructureError("reevaluation of " + target.name +
                           " did not merge into one statement");
    return merged[0];
  }

  /// Views interned since the last call, in creation order.
  std::vector<const ViewInfo*> take_new_views() {
    auto out = std::move(created_);
    created_.clear();
    return out;
  }

  /// Number of distinct cache-admissible subquery sites seen so far.
  int cache_site_count() const { return static_cast<int>(siteIds_.size()); }

 private:
  // -------------------------------------------------------------------------
  // Pipeline state
  // -------------------------------------------------------------------------

  struct Ctx {
    const ViewInfo* target = nullptr;
    const UpdateEvent* event = nullptr;
    std::set<std::string> params;
    bool reeval = false;
    std::set<std::string> outerRels;  // relations of the target's own atoms
    int outerAtomCount = 0;
  };

  /// One union-free piece, flattened.
  struct Flat {
    bool zero = false;
    Rational coeff = Rational(1);
    std::vector<TermPtr> fFactors;  // non-constant monomial factors
    Schema groupBy;                 // loop columns (unpinned group-by columns)
    std::vector<std::pair<std::string, TermPtr>> keyPins;  // pinned group-by cols
    std::vector<CondPtr> conds;
    std::vector<QueryPtr> atoms;  // unchanged base-relation atoms
    std::vector<std::pair<std::string, TermPtr>> colPins;  // pinned atom cols
  };

  Ctx make_ctx(const ViewInfo& target, const UpdateEvent& ev, bool reeval) {
    Ctx cx;
    cx.target = &target;
    cx.event = &ev;
    cx.reeval = reeval;
    cx.params.insert(ev.params.begin(), ev.params.end());
    cx.params.insert(target.inputVars.begin(), target.inputVars.end());
    std::vector<const QueryExpr*> atoms;
    body_atoms(target.def->children[0], atoms);
    cx.outerAtomCount = static_cast<int>(atoms.size());
    for (const auto* a : atoms) cx.outerRels.insert(a->rel);
    return cx;
  }

  static void body_atoms(const QueryPtr& q, std::vector<const QueryExpr*>& out) {
    switch (q->kind) {
      case QueryExpr::Kind::Relation:
        if (!q->isView) out.push_back(q.get());
        return;
      case QueryExpr::Kind::Join:
      case QueryExpr::Kind::Union:
        for (const auto& c : q->children) body_atoms(c, out);
        return;
      case QueryExpr::Kind::Select:
      case QueryExpr::Kind::Rename:
      case QueryExpr::Kind::Sum:
        body_atoms(q->children[0], out);
        return;
      default:
        return;
    }
  }

  // -------------------------------------------------------------------------
  // Piece splitting: unions, disjunctions, monomials
  // -------------------------------------------------------------------------

  std::vector<Flat> make_pieces(const QueryPtr& q, Ctx& cx) {
    std::vector<Flat> out;
    collect_sums(q, cx, out);
    return out;
  }

  void collect_sums(const QueryPtr& q, Ctx& cx, std::vector<Flat>& out) {
    if (q->kind == QueryExpr::Kind::Union) {
      for (const auto& c : q->children) collect_sums(c, cx, out);
      return;
    }
    if (q->kind == QueryExpr::Kind::Empty) return;
    if (q->kind == QueryExpr::Kind::Select &&
        (q->children[0]->kind == QueryExpr::Kind::Sum ||
         q->children[0]->kind == QueryExpr::Kind::Union ||
         q->children[0]->kind == QueryExpr::Kind::Select)) {
      // Simplification hoists conditions closed over the trigger parameters
      // above the aggregate; distribute them back onto each piece.
      size_t before = out.size();
      collect_sums(q->children[0], cx, out);
      for (size_t i = before; i < out.size(); ++i) {
        if (out[i].zero) continue;
        for (const auto& c : conjuncts_of(q->cond)) {
          CondPtr s = fold_cond(c);
          if (!s || s->kind == Condition::Kind::True) continue;
          if (s->kind == Condition::Kind::False) {
            out[i].zero = true;
            break;
          }
          out[i].conds.push_back(s);
        }
      }
      return;
    }
    if (q->kind != QueryExpr::Kind::Sum) {
      // A delta can simplify past its outer aggregate (one tuple, or a
      // guarded tuple); grouping by the full schema is the identity, so
      // re-wrap the piece as the degenerate aggregate over itself.
      collect_sums(q_sum(schema_of(q), term_num(1), q), cx, out);
      return;
    }
    std::vector<TermPtr> monos = monomials(q->f);
    if (monos.size() >= 2 && !cx.reeval) trace_.fire2("value polynomial split");
    for (const auto& body : split_body(q->children[0], cx)) {
      for (const auto& m : monos) {
        Flat fl = flatten(q->groupBy, m, body, cx);
        decorrelate(fl, cx);
        closure(fl, cx);
        out.push_back(std::move(fl));
      }
    }
  }

  std::vector<QueryPtr> split_body(const QueryPtr& q, Ctx& cx) {
    switch (q->kind) {
      case QueryExpr::Kind::Union: {
        std::vector<QueryPtr> out;
        for (const auto& c : q->children) {
          auto sub = split_body(c, cx);
          out.insert(out.end(), sub.begin(), sub.end());
        }
        return out;
      }
      case QueryExpr::Kind::Join: {
        std::vector<std::vector<QueryPtr>> parts;
        for (const auto& c : q->children) parts.push_back(split_body(c, cx));
        std::vector<std::vector<QueryPtr>> combos{{}};
        for (const auto& p : parts) {
          std::vector<std::vector<QueryPtr>> next;
          for (const auto& combo : combos)
            for (const auto& choice : p) {
              auto c2 = combo;
              c2.push_back(choice);
              next.push_back(std::move(c2));
            }
          combos = std::move(next);
        }
        std::vector<QueryPtr> out;
        for (auto& combo : combos) out.push_back(q_join(std::move(combo)));
        return out;
      }
      case QueryExpr::Kind::Select: {
        auto conj = conjuncts_of(q->cond);
        if (opt_.expandDisjunctions) {
          for (size_t i = 0; i < conj.size(); ++i) {
            if (conj[i]->kind != Condition::Kind::Or) continue;
            if (!cx.reeval) trace_.fire2("disjunction split");
            std::vector<QueryPtr> out;
            std::vector<CondPtr> negs;
            for (const auto& branch : conj[i]->children) {
              std::vector<CondPtr> cs;
              for (size_t k = 0; k < conj.size(); ++k)
                if (k != i) cs.push_back(conj[k]);
              cs.insert(cs.end(), negs.begin(), negs.end());
              cs.push_back(branch);
              auto sub = split_body(q_select(cond_and(std::move(cs)), q->children[0]), cx);
              out.insert(out.end(), sub.begin(), sub.end());
              negs.push_back(cond_not(branch));
            }
            return out;
          }
        }
        std::vector<QueryPtr> out;
        for (const auto& body : split_body(q->children[0], cx))
          out.push_back(q_select(q->cond, body));
        return out;
      }
      case QueryExpr::Kind::Rename: {
        NameMap m(q->renames.begin(), q->renames.end());
        return split_body(subst_names(q->children[0], m), cx);
      }
      default:
        return {q};
    }
  }

  static std::vector<TermPtr> monomials(const TermPtr& t) {
    std::vector<TermPtr> out;
    monomials_rec(t, out);
    return out;
  }

  static void monomials_rec(const TermPtr& t, std::vector<TermPtr>& out) {
    switch (t->kind) {
      case Term::Kind::Add:
        monomials_rec(t->lhs, out);
        monomials_rec(t->rhs, out);
        return;
      case Term::Kind::Sub: {
        monomials_rec(t->lhs, out);
        std::vector<TermPtr> rs;
        monomials_rec(t->rhs, rs);
        for (const auto& m : rs) out.push_back(term_mul(term_num(-1), m));
        return;
      }
      case Term::Kind::Mul: {
        std::vector<TermPtr> ls, rs;
        monomials_rec(t->lhs, ls);
        monomials_rec(t->rhs, rs);
        if (ls.size() == 1 && rs.size() == 1) {
          out.push_back(t);
          return;
        }
        for (const auto& a : ls)
          for (const auto& b : rs) out.push_back(term_mul(a, b));
        return;
      }
      default:
        out.push_back(t);
        return;
    }
  }

  static void mono_factors(const TermPtr& t, std::vector<TermPtr>& out) {
    if (t->kind == Term::Kind::Mul) {
      mono_factors(t->lhs, out);
      mono_factors(t->rhs, out);
      return;
    }
    out.push_back(t);
  }

  // -------------------------------------------------------------------------
  // Flattening one piece
  // -------------------------------------------------------------------------

  Flat flatten(const Schema& groupBy, const TermPtr& f, const QueryPtr& body, Ctx& cx) {
    Flat fl;
    TermMap pins;
    std::vector<TermPtr> mults;
    if (!flatten_body(body, fl, pins, mults, cx)) {
      fl.zero = true;
      return fl;
    }
    std::vector<TermPtr> factors;
    mono_factors(f, factors);
    for (const auto& m : mults) mono_factors(m, factors);
    for (auto& t : factors) {
      TermPtr s = fold_term(subst_vars_term(t, pins));
      if (s->kind == Term::Kind::Constant && s->value.is_number()) {
        fl.coeff *= s->value.num();
      } else {
        fl.fFactors.push_back(s);
      }
    }
    if (fl.coeff == 0) {
      fl.zero = true;
      return fl;
    }
    std::vector<CondPtr> conds;
    for (const auto& c : fl.conds) {
      CondPtr s = fold_cond(subst_vars_cond(c, pins));
      if (!s || s->kind == Condition::Kind::True) continue;
      if (s->kind == Condition::Kind::False) {
        fl.zero = true;
        return fl;
      }
      conds.push_back(s);
    }
    fl.conds = std::move(conds);
    for (const auto& g : groupBy) {
      const TermPtr* pin = nullptr;
      for (const auto& [col, t] : pins)
        if (col == g) pin = &t;
      if (pin)
        fl.keyPins.emplace_back(g, *pin);
      else
        fl.groupBy.push_back(g);
    }
    return fl;
  }

  bool flatten_body(const QueryPtr& q, Flat& fl, TermMap& pins,
                    std::vector<TermPtr>& mults, Ctx& cx) {
    switch (q->kind) {
      case QueryExpr::Kind::Select: {
        for (const auto& c : conjuncts_of(q->cond)) fl.conds.push_back(c);
        return flatten_body(q->children[0], fl, pins, mults, cx);
      }
      case QueryExpr::Kind::Join: {
        for (const auto& c : q->children)
          if (!flatten_body(c, fl, pins, mults, cx)) return false;
        return true;
      }
      case QueryExpr::Kind::Relation: {
        if (q->isView)
          throw StructureError("unexpected view read inside a definition: " + q->rel);
        for (const auto& [col, t] : q->probes)
          fl.conds.push_back(cond_eq(term_var(col), t));
        fl.atoms.push_back(q->probes.empty()
                               ? q
                               : q_relation(q->rel, q->cols));
        return true;
      }
      case QueryExpr::Kind::Singleton: {
        for (size_t i = 0; i < q->scols.size(); ++i) pins.emplace_back(q->scols[i], q->svals[i]);
        mults.push_back(q->smult);
        return true;
      }
      case QueryExpr::Kind::Empty:
        return false;
      case QueryExpr::Kind::Rename: {
        NameMap m(q->renames.begin(), q->renames.end());
        return flatten_body(subst_names(q->children[0], m), fl, pins, mults, cx);
      }
      default:
        throw StructureError("unsupported expression inside a piece body: " + print_query(q));
    }
  }

  // -------------------------------------------------------------------------
  // Subquery decorrelation
  // -------------------------------------------------------------------------

  void decorrelate(Flat& fl, Ctx& cx) {
    if (fl.zero) return;
    for (auto& c : fl.conds) c = rw_cond(c, fl, cx);
    for (auto& t : fl.fFactors) t = rw_term(t, fl, cx);
  }

  CondPtr rw_cond(const CondPtr& c, Flat& fl, Ctx& cx) {
    switch (c->kind) {
      case Condition::Kind::True:
      case Condition::Kind::False:
        return c;
      case Condition::Kind::And:
      case Condition::Kind::Or: {
        std::vector<CondPtr> ch;
        for (const auto& x : c->children) ch.push_back(rw_cond(x, fl, cx));
        return c->kind == Condition::Kind::And ? cond_and(std::move(ch))
                                               : cond_or(std::move(ch));
      }
      case Condition::Kind::Not:
        return cond_not(rw_cond(c->children[0], fl, cx));
      case Condition::Kind::Cmp:
        return cond_cmp(c->op, rw_term(c->lhs, fl, cx), rw_term(c->rhs, fl, cx));
    }
    return c;
  }

  TermPtr rw_term(const TermPtr& t, Flat& fl, Ctx& cx) {
    if (!t) return t;
    switch (t->kind) {
      case Term::Kind::Constant:
      case Term::Kind::Variable:
        return t;
      case Term::Kind::Add:
      case Term::Kind::Sub:
      case Term::Kind::Mul:
      case Term::Kind::Div:
        return term_bin(t->kind, rw_term(t->lhs, fl, cx), rw_term(t->rhs, fl, cx));
      case Term::Kind::Aggregate: {
        auto rep = decorr_one(t->agg, fl, cx);
        return rep ? *rep : t;
      }
    }
    return t;
  }

  std::optional<TermPtr> decorr_one(const QueryPtr& q, Flat& fl, Ctx& cx) {
    std::set<std::string> rels;
    collect_base_relations(q, rels);
    if (rels.empty()) return std::nullopt;  // already a delta/view expression
    if (q->kind != QueryExpr::Kind::Sum || !q->groupBy.empty()) return std::nullopt;

    std::vector<QueryPtr> innerAtoms;
    std::vector<CondPtr> innerConds;
    if (!flatten_simple(q->children[0], innerAtoms, innerConds) || innerAtoms.empty())
      return std::nullopt;
    std::set<std::string> innerCols;
    for (const auto& a : innerAtoms)
      for (const auto& col : a->cols) innerCols.insert(col);
    {
      std::set<std::string> fv;
      free_vars_term(q->f, {}, fv);
      for (const auto& v : fv)
        if (!innerCols.count(v)) return std::nullopt;
    }

    struct EqCorr { std::string innerCol; TermPtr outer; };
    struct IneqCorr { Condition::CmpOp op; bool innerOnLhs; std::string innerCol; TermPtr outer; };
    std::vector<EqCorr> eqs;
    std::vector<IneqCorr> ineqs;
    std::vector<CondPtr> residentConds;
    auto inner_var = [&](const TermPtr& t) {
      return t->kind == Term::Kind::Variable && innerCols.count(t->name);
    };
    auto outer_term = [&](const TermPtr& t) {
      if (term_has_agg(t)) return false;
      std::set<std::string> fv;
      free_vars_term(t, {}, fv);
      for (const auto& v : fv)
        if (innerCols.count(v)) return false;
      return true;
    };
    for (const auto& c : innerConds) {
      std::set<std::string> fv;
      free_vars_cond(c, {}, fv);
      bool touchesOuter = false;
      for (const auto& v : fv)
        if (!innerCols.count(v)) touchesOuter = true;
      if (!touchesOuter) {
        residentConds.push_back(c);
        continue;
      }
      if (c->kind != Condition::Kind::Cmp) return std::nullopt;
      if (c->op == Condition::CmpOp::Eq && inner_var(c->lhs) && outer_term(c->rhs))
        eqs.push_back({c->lhs->name, c->rhs});
      else if (c->op == Condition::CmpOp::Eq && inner_var(c->rhs) && outer_term(c->lhs))
        eqs.push_back({c->rhs->name, c->lhs});
      else if (inner_var(c->lhs) && outer_term(c->rhs))
        ineqs.push_back({c->op, true, c->lhs->name, c->rhs});
      else if (inner_var(c->rhs) && outer_term(c->lhs))
        ineqs.push_back({c->op, false, c->rhs->name, c->lhs});
      else
        return std::nullopt;
    }

    // Cache: every correlation is an inequality against one outer variable,
    // and the outer query is a single relation atom. The subquery result is
    // then kept per outer value, filled on first probe.
    if (eqs.empty() && !ineqs.empty() && cx.outerAtomCount == 1) {
      std::string outerVar;
      bool simple = true;
      for (const auto& ic : ineqs) {
        if (ic.outer->kind != Term::Kind::Variable) { simple = false; break; }
        if (outerVar.empty()) outerVar = ic.outer->name;
        else if (outerVar != ic.outer->name) { simple = false; break; }
      }
      if (simple && cache_admitted(q, outerVar, fl)) {
        std::vector<CondPtr> defConds = residentConds;
        for (const auto& ic : ineqs)
          defConds.push_back(cond_cmp(ic.op,
                                      ic.innerOnLhs ? term_var(ic.innerCol) : ic.outer,
                                      ic.innerOnLhs ? ic.outer : term_var(ic.innerCol)));
        QueryPtr def = q_sum({}, q->f, q_select(cond_and(std::move(defConds)),
                                                q_join(innerAtoms)));
        size_t before = reg_.size();
        const ViewInfo& cv = *reg_.intern_cache(def, {outerVar}, "cached subquery").view;
        if (reg_.size() > before) created_.push_back(&cv);
        trace_.fire3('C', "subquery cached per " + outerVar);
        std::string rc = cv.name + ".k0";
        return term_agg(q_sum({}, term_num(1),
                              view_read(cv, {rc}, {{rc, term_var(outerVar)}})));
      }
    }

    // Grouped / keyed view: group by every correlated inner column; probe the
    // equality-correlated ones, re-apply inequalities against the key.
    Schema key;
    auto add_key = [&](const std::string& col) {
      if (!schema_has(key, col)) key.push_back(col);
    };
    for (const auto& ec : eqs) add_key(ec.innerCol);
    for (const auto& ic : ineqs) add_key(ic.innerCol);
    QueryPtr def = q_sum(key, q->f,
                         q_select(cond_and(std::move(residentConds)), q_join(innerAtoms)));
    size_t before = reg_.size();
    const ViewInfo& vi = reg_.intern(def, "subquery");
    if (reg_.size() > before) created_.push_back(&vi);
    if (!key.empty()) {
      std::string rels2;
      for (const auto& r : rels) rels2 += (rels2.empty() ? "" : ",") + r;
      trace_.fire3('S', "correlated subquery over " + rels2 + " keyed as view");
    }

    Schema readerCols;
    for (size_t i = 0; i < key.size(); ++i) readerCols.push_back(vi.name + ".k" + std::to_string(i));
    auto reader_of = [&](const std::string& innerCol) {
      for (size_t i = 0; i < key.size(); ++i)
        if (key[i] == innerCol) return readerCols[i];
      throw StructureError("missing key column " + innerCol);
    };
    std::vector<std::pair<std::string, TermPtr>> probes;
    for (const auto& ec : eqs) probes.emplace_back(reader_of(ec.innerCol), ec.outer);
    std::vector<CondPtr> residual;
    for (const auto& ic : ineqs) {
      TermPtr k = term_var(reader_of(ic.innerCol));
      residual.push_back(cond_cmp(ic.op, ic.innerOnLhs ? k : ic.outer,
                                  ic.innerOnLhs ? ic.outer : k));
    }
    return term_agg(q_sum({}, term_num(1),
                          q_select(cond_and(std::move(residual)),
                                   view_read(vi, readerCols, std::move(probes)))));
  }

  static bool flatten_simple(const QueryPtr& q, std::vector<QueryPtr>& atoms,
                             std::vector<CondPtr>& conds) {
    switch (q->kind) {
      case QueryExpr::Kind::Select: {
        for (const auto& c : conjuncts_of(q->cond)) conds.push_back(c);
        return flatten_simple(q->children[0], atoms, conds);
      }
      case QueryExpr::Kind::Join: {
        for (const auto& c : q->children)
          if (!flatten_simple(c, atoms, conds)) return false;
        return true;
      }
      case QueryExpr::Kind::Relation:
        if (q->isView || !q->probes.empty()) return false;
        atoms.push_back(q);
        return true;
      default:
        return false;
    }
  }

  bool cache_admitted(const QueryPtr& site, const std::string& outerVar, const Flat& fl) {
    int id;
    {
      std::string k = canonical_key(site);
      auto it = siteIds_.find(k);
      if (it == siteIds_.end())
        it = siteIds_.emplace(std::move(k), static_cast<int>(siteIds_.size())).first;
      id = it->second;
    }
    if (opt_.cacheSiteEnabled && !opt_.cacheSiteEnabled(id)) return false;
    if (opt_.stats) {
      long long d = distinct_of(outerVar, fl);
      if (d > opt_.cacheThreshold) return false;
    }
    return true;
  }

  long long distinct_of(const std::string& col, const Flat& fl) const {
    auto dot = col.find('.');
    std::string base = dot == std::string::npos ? col : col.substr(dot + 1);
    for (const auto& a : fl.atoms)
      if (schema_has(a->cols, col)) {
        auto it = opt_.stats->distincts.find(a->rel + "." + base);
        if (it != opt_.stats->distincts.end()) return it->second;
      }
    return CardEstimator::kDefaultDistinct;
  }

  // -------------------------------------------------------------------------
  // Parameter-pin closure
  // -------------------------------------------------------------------------

  void closure(Flat& fl, Ctx& cx) {
    if (fl.zero) return;
    std::set<std::string> atomCols;
    for (const auto& a : fl.atoms)
      for (const auto& col : a->cols) atomCols.insert(col);
    auto pinnable = [&](const TermPtr& v, const TermPtr& t) {
      return v->kind == Term::Kind::Variable &&
             (atomCols.count(v->name) || schema_has(fl.groupBy, v->name)) &&
             !term_has_agg(t) && deltadetail::term_param_only(t, cx.params);
    };
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t i = 0; i < fl.conds.size(); ++i) {
        const CondPtr& c = fl.conds[i];
        if (c->kind != Condition::Kind::Cmp || c->op != Condition::CmpOp::Eq) continue;
        std::string col;
        TermPtr t;
        if (pinnable(c->lhs, c->rhs)) {
          col = c->lhs->name;
          t = c->rhs;
        } else if (pinnable(c->rhs, c->lhs)) {
          col = c->rhs->name;
          t = c->lhs;
        } else {
          continue;
        }
        fl.conds.erase(fl.conds.begin() + static_cast<long>(i));
        TermMap m{{col, t}};
        for (auto& cc : fl.conds) cc = fold_cond(subst_vars_cond(cc, m));
        for (auto& ff : fl.fFactors) ff = subst_vars_term(ff, m);
        if (schema_has(fl.groupBy, col)) {
          fl.keyPins.emplace_back(col, t);
          fl.groupBy.erase(std::find(fl.groupBy.begin(), fl.groupBy.end(), col));
        }
        if (atomCols.count(col)) fl.colPins.emplace_back(col, t);
        changed = true;
        break;
      }
    }
    // Drop conjuncts that substitution has made trivially true, and fail the
    // piece on ones made trivially false.
    std::vector<CondPtr> conds;
    for (const auto& c : fl.conds) {
      if (c->kind == Condition::Kind::True) continue;
      if (c->kind == Condition::Kind::False) {
        fl.zero = true;
        return;
      }
      if (c->kind == Condition::Kind::Cmp && c->op == Condition::CmpOp::Eq &&
          print_term(c->lhs) == print_term(c->rhs))
        continue;
      conds.push_back(c);
    }
    fl.conds = std::move(conds);
  }

  // -------------------------------------------------------------------------
  // Component split and statement assembly
  // -------------------------------------------------------------------------

  Statement assemble(Flat& fl, Ctx& cx) {
    const ViewInfo& target = *cx.target;
    std::map<std::string, size_t> colAtom;
    for (size_t i = 0; i < fl.atoms.size(); ++i)
      for (const auto& col : fl.atoms[i]->cols) colAtom[col] = i;
    auto pinned = [&](const std::string& col) {
      for (const auto& [c, t] : fl.colPins)
        if (c == col) return true;
      return false;
    };
    auto pin_term = [&](const std::string& col) -> TermPtr {
      for (const auto& [c, t] : fl.colPins)
        if (c == col) return t;
      return nullptr;
    };

    // Classify conjuncts. "Pure" conjuncts reference only atom columns and
    // constants and can live inside a view definition; anything touching
    // parameters or subquery values must stay outside.
    std::vector<CondPtr> carves;
    struct Pulled { CondPtr cond; std::set<size_t> atoms; };
    std::vector<Pulled> pulled;
    std::vector<std::pair<CondPtr, std::set<size_t>>> internal;
    std::vector<std::pair<size_t, size_t>> edges;
    for (const auto& c : fl.conds) {
      std::set<std::string> fv;
      free_vars_cond(c, {}, fv);
      std::set<size_t> touched;
      bool pure = !cond_has_agg(c);
      for (const auto& v : fv) {
        auto it = colAtom.find(v);
        if (it != colAtom.end())
          touched.insert(it->second);
        else
          pure = false;  // parameter or loop-external reference
      }
      if (touched.empty()) {
        carves.push_back(c);
        continue;
      }
      if (touched.size() >= 2) {
        size_t first = *touched.begin();
        for (size_t a : touched)
          if (a != first) edges.emplace_back(first, a);
      }
      if (pure)
        internal.emplace_back(c, touched);
      else
        pulled.push_back({c, touched});
    }

    // Connected components of the remaining join graph.
    std::vector<size_t> parent(fl.atoms.size());
    for (size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    std::function<size_t(size_t)> find = [&](size_t x) {
      return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (const auto& [a, b] : edges) parent[find(a)] = find(b);
    std::vector<std::vector<size_t>> comps;
    {
      std::map<size_t, size_t> rootOf;
      for (size_t i = 0; i < fl.atoms.size(); ++i) {
        size_t r = find(i);
        auto it = rootOf.find(r);
        if (it == rootOf.end()) {
          rootOf.emplace(r, comps.size());
          comps.push_back({i});
        } else {
          comps[it->second].push_back(i);
        }
      }
    }

    // Columns demanded from each component by pulled conjuncts and by value
    // factors that cannot be folded into a single component's view.
    std::set<std::string> neededCols;
    for (const auto& p : pulled) {
      std::set<std::string> fv;
      free_vars_cond(p.cond, {}, fv);
      for (const auto& v : fv)
        if (colAtom.count(v)) neededCols.insert(v);
    }
    std::vector<size_t> compOf(fl.atoms.size());
    for (size_t ci = 0; ci < comps.size(); ++ci)
      for (size_t a : comps[ci]) compOf[a] = ci;
    std::vector<std::vector<TermPtr>> compF(comps.size());
    std::vector<TermPtr> residualF;
    for (const auto& f : fl.fFactors) {
      std::set<std::string> fv;
      free_vars_term(f, {}, fv);
      std::set<size_t> owners;
      bool foldable = !term_has_agg(f) && !fv.empty();
      for (const auto& v : fv) {
        auto it = colAtom.find(v);
        if (it == colAtom.end())
          foldable = false;
        else
          owners.insert(compOf[it->second]);
      }
      if (foldable && owners.size() == 1) {
        compF[*owners.begin()].push_back(f);
      } else {
        residualF.push_back(f);
        for (const auto& v : fv)
          if (colAtom.count(v)) neededCols.insert(v);
      }
    }

    // Build one view per component and a read of it.
    std::vector<QueryPtr> reads;
    std::vector<bool> readConstant;  // probed or looping on an output column
    std::vector<std::set<std::string>> compRels(comps.size());
    for (size_t ci = 0; ci < comps.size(); ++ci) {
      Schema key;
      std::vector<QueryPtr> catoms;
      std::set<std::string> compCols;
      for (size_t a : comps[ci]) {
        catoms.push_back(fl.atoms[a]);
        compRels[ci].insert(fl.atoms[a]->rel);
        for (const auto& col : fl.atoms[a]->cols) {
          compCols.insert(col);
          if (pinned(col) || schema_has(fl.groupBy, col) || neededCols.count(col))
            key.push_back(col);
        }
      }
      std::vector<CondPtr> defConds;
      for (const auto& [c, touched] : internal)
        if (compOf[*touched.begin()] == ci) defConds.push_back(c);
      TermPtr viewF = term_num(1);
      bool firstF = true;
      for (const auto& f : compF[ci]) {
        viewF = firstF ? f : term_mul(viewF, f);
        firstF = false;
      }
      QueryPtr def = q_sum(key, viewF,
                           q_select(cond_and(std::move(defConds)), q_join(catoms)));
      size_t before = reg_.size();
      std::string hint;
      for (const auto& r : compRels[ci]) hint += (hint.empty() ? "" : "*") + r;
      const ViewInfo& vi = reg_.intern(def, hint);
      if (reg_.size() > before) created_.push_back(&vi);
      std::vector<std::pair<std::string, TermPtr>> probes;
      bool constant = true;
      for (const auto& col : key) {
        if (pinned(col))
          probes.emplace_back(col, pin_term(col));
        else if (!schema_has(fl.groupBy, col))
          constant = false;
      }
      reads.push_back(view_read(vi, key, std::move(probes)));
      readConstant.push_back(constant);
    }

    // Rule 3: a condition carrying parameters or subquery values was lifted
    // out of a component that the triggering relation is not part of.
    for (const auto& p : pulled) {
      size_t ci = compOf[*p.atoms.begin()];
      if (!compRels[ci].count(cx.event->relation))
        trace_.fire3('S', "condition lifted out of " + print_cond(p.cond));
    }

    // Assemble the right-hand side.
    std::vector<QueryPtr> factors = reads;
    for (const auto& c : carves) factors.push_back(q_select(c, q_one()));
    QueryPtr body = factors.empty() ? q_one() : q_join(std::move(factors));
    std::vector<CondPtr> outerConds;
    for (const auto& p : pulled) outerConds.push_back(p.cond);
    body = q_select(cond_and(std::move(outerConds)), body);

    Statement st;
    st.view = &target;
    st.loopVars = fl.groupBy;
    Rational coeff = fl.coeff;
    if (cx.reeval) {
      st.op = Statement::Op::Assign;
    } else if (coeff < 0) {
      st.op = Statement::Op::SubAssign;
      coeff = -coeff;
    } else {
      st.op = Statement::Op::AddAssign;
    }
    TermPtr fres = coeff == 1 ? nullptr : term_num(coeff);
    for (const auto& f : residualF) fres = fres ? term_mul(fres, f) : f;
    if (!fres) fres = term_num(1);
    st.rhs = q_sum(fl.groupBy, fres, body);

    for (const auto& kc : target.key) {
      if (schema_has(target.inputVars, kc)) {
        st.keyTerms.push_back(term_var(kc));
        st.loopOverTarget = true;
        continue;
      }
      const TermPtr* pin = nullptr;
      for (const auto& [col, t] : fl.keyPins)
        if (col == kc) pin = &t;
      if (pin)
        st.keyTerms.push_back(*pin);
      else if (schema_has(fl.groupBy, kc))
        st.keyTerms.push_back(term_var(kc));
      else
        throw StructureError("target key column " + kc + " is neither pinned nor looped");
    }

    // Rule 1 bookkeeping (incremental maintenance only): the delta was
    // answered by (a) two or more disconnected components each read in
    // constant time modulo output columns, (b) a component plus a fully
    // closed guard factor while the trigger relation is foreign to the
    // target's join graph, or (c) a pinned target key plus one fully probed
    // component over a foreign relation.
    if (!cx.reeval && !target.isCache) {
      bool allConstant = true;
      for (bool b : readConstant) allConstant = allConstant && b;
      if (comps.size() >= 2 && allConstant)
        trace_.fire1("delta split into " + std::to_string(comps.size()) +
                     " independent components");
      else if (!fl.atoms.empty() && !carves.empty() &&
               !cx.outerRels.count(cx.event->relation))
        trace_.fire1("delta reduced to a guarded component product");
      else if (!fl.keyPins.empty() && comps.size() == 1 && readConstant[0] &&
               !compRels[0].count(cx.event->relation))
        trace_.fire1("delta probes one foreign component at pinned keys");
    }
    return st;
  }

  // -------------------------------------------------------------------------
  // Statement merging
  // -------------------------------------------------------------------------

  static std::vector<Statement> merge_statements(std::vector<Statement> in) {
    std::vector<Statement> out;
    std::map<std::string, size_t> slot;
    for (auto& st : in) {
      std::string key = st.view->name + "|";
      for (const auto& t : st.keyTerms) key += print_term(t) + ",";
      key += "|";
      for (const auto& v : st.loopVars) key += v + ",";
      key += st.loopOverTarget ? "|t" : "|f";
      auto it = slot.find(key);
      if (it == slot.end()) {
        slot.emplace(std::move(key), out.size());
        out.push_back(std::move(st));
        continue;
      }
      Statement& dst = out[it->second];
      QueryPtr add = st.rhs;
      if (st.op != dst.op) {
        // Normalize to += by folding the sign into the incoming side.
        if (dst.op == Statement::Op::SubAssign) {
          dst.op = Statement::Op::AddAssign;
          dst.rhs = q_negate(dst.rhs);
        }
        if (st.op == Statement::Op::SubAssign) add = q_negate(add);
      }
      dst.rhs = fuse(dst.rhs, add);
    }
    return out;
  }

  /// Combines two rhs expressions over the same loop schema: adds value terms
  /// when the bodies coincide, otherwise unions the results.
  static QueryPtr fuse(const QueryPtr& a, const QueryPtr& b) {
    if (a->kind == QueryExpr::Kind::Sum && b->kind == QueryExpr::Kind::Sum &&
        a->groupBy == b->groupBy &&
        print_query(a->children[0]) == print_query(b->children[0]))
      return q_sum(a->groupBy, term_add(a->f, b->f), a->children[0]);
    return q_union({a, b});
  }

  const Catalog& cat_;
  ViewRegistry& reg_;
  RuleTrace& trace_;
  MaterializeOptions opt_;
  std::vector<const ViewInfo*> created_;
  std::map<std::string, int> siteIds_;
};

}  // namespace deltaview
