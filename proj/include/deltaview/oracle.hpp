// deltaview: brute-force reference evaluator. Independent of the runtime
// evaluator by design: backtracking nested-loop joins over sorted maps, no
// hash joins, no probe handling, no memoization. Used to cross-check both
// the evaluator and compiled incremental programs.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "deltaview/ast.hpp"
#include "deltaview/gmr.hpp"

namespace deltaview {

using OracleDb = std::map<std::string, Gmr>;
using OracleEnv = std::map<std::string, Value>;

inline Gmr oracle_eval(const QueryPtr& q, const OracleDb& db, OracleEnv& env);

namespace oracledetail {

inline Value eval_term(const TermPtr& t, const OracleDb& db, OracleEnv& env) {
  switch (t->kind) {
    case Term::Kind::Constant:
      return t->value;
    case Term::Kind::Variable: {
      auto it = env.find(t->name);
      if (it == env.end()) throw EvalError("oracle: unbound variable " + t->name);
      return it->second;
    }
    case Term::Kind::Add:
      return Value(eval_term(t->lhs, db, env).num() + eval_term(t->rhs, db, env).num());
    case Term::Kind::Sub:
      return Value(eval_term(t->lhs, db, env).num() - eval_term(t->rhs, db, env).num());
    case Term::Kind::Mul:
      return Value(eval_term(t->lhs, db, env).num() * eval_term(t->rhs, db, env).num());
    case Term::Kind::Div: {
      Rational d = eval_term(t->rhs, db, env).num();
      if (d == 0) throw EvalError("oracle: division by zero");
      return Value(eval_term(t->lhs, db, env).num() / d);
    }
    case Term::Kind::Aggregate: {
      Gmr g = oracle_eval(t->agg, db, env);
      if (!g.schema().empty()) throw StructureError("oracle: nested aggregate has columns");
      return Value(g.multiplicity({}));
    }
  }
  throw StructureError("oracle: unhandled term");
}

inline bool eval_cond(const CondPtr& c, const OracleDb& db, OracleEnv& env) {
  if (!c) return true;
  switch (c->kind) {
    case Condition::Kind::True:
      return true;
    case Condition::Kind::False:
      return false;
    case Condition::Kind::And:
      for (const auto& ch : c->children)
        if (!eval_cond(ch, db, env)) return false;
      return true;
    case Condition::Kind::Or:
      for (const auto& ch : c->children)
        if (eval_cond(ch, db, env)) return true;
      return false;
    case Condition::Kind::Not:
      return !eval_cond(c->children[0], db, env);
    case Condition::Kind::Cmp: {
      int cmp = Value::query_compare(eval_term(c->lhs, db, env), eval_term(c->rhs, db, env));
      switch (c->op) {
        case Condition::CmpOp::Lt:
          return cmp < 0;
        case Condition::CmpOp::Le:
          return cmp <= 0;
        case Condition::CmpOp::Eq:
          return cmp == 0;
        case Condition::CmpOp::Ne:
          return cmp != 0;
      }
    }
  }
  return false;
}

inline std::set<std::string> cond_vars(const CondPtr& c) {
  std::set<std::string> out;
  free_vars_cond(c, {}, out);
  return out;
}

/// Backtracking join: children are materialized, then enumerated depth-first
/// in order; each conjunct is checked as soon as all its variables are bound.
struct JoinLoop {
  const OracleDb& db;
  OracleEnv& env;
  std::vector<Gmr> childRes;
  std::vector<std::vector<CondPtr>> checkAt;  // conjuncts to test after child i binds
  std::vector<CondPtr> residual;              // conjuncts with variables beyond all children
  Gmr* out = nullptr;
  const Schema* outSchema = nullptr;

  void run(size_t level, const Rational& mult) {
    if (level == childRes.size()) {
      for (const auto& c : residual)
        if (!eval_cond(c, db, env)) return;
      Tuple t;
      t.reserve(outSchema->size());
      for (const auto& col : *outSchema) t.push_back(env.at(col));
      out->add(t, mult);
      return;
    }
    const Gmr& g = childRes[level];
    const Schema& sch = g.schema();
    for (const auto& [tup, m] : g.sorted_entries()) {
      // Bind this child's columns; shared columns must agree (natural join).
      std::vector<std::pair<std::string, bool>> bound;  // name, wasFresh
      bool ok = true;
      for (size_t i = 0; i < sch.size(); ++i) {
        auto it = env.find(sch[i]);
        if (it != env.end()) {
          if (!(it->second == tup[i])) {
            ok = false;
            break;
          }
          bound.push_back({sch[i], false});
        } else {
          env.emplace(sch[i], tup[i]);
          bound.push_back({sch[i], true});
        }
      }
      if (ok) {
        bool pass = true;
        for (const auto& c : checkAt[level])
          if (!eval_cond(c, db, env)) {
            pass = false;
            break;
          }
        if (pass) run(level + 1, mult * m);
      }
      for (auto it = bound.rbegin(); it != bound.rend(); ++it)
        if (it->second) env.erase(it->first);
    }
  }
};

}  // namespace oracledetail

inline Gmr oracle_eval(const QueryPtr& q, const OracleDb& db, OracleEnv& env) {
  using namespace oracledetail;
  switch (q->kind) {
    case QueryExpr::Kind::Relation: {
      auto it = db.find(q->rel);
      if (it == db.end()) throw EvalError("oracle: unknown relation " + q->rel);
      Gmr out(q->cols);
      for (const auto& [t, m] : it->second.entries()) {
        bool ok = true;
        for (const auto& [col, term] : q->probes)
          if (!(t[schema_index(q->cols, col)] == eval_term(term, db, env))) {
            ok = false;
            break;
          }
        if (ok) out.add(t, m);
      }
      return out;
    }
    case QueryExpr::Kind::Singleton: {
      Tuple t;
      for (const auto& v : q->svals) t.push_back(eval_term(v, db, env));
      return Gmr::singleton(q->scols, std::move(t), eval_term(q->smult, db, env).num());
    }
    case QueryExpr::Kind::Empty:
      return Gmr(q->cols);
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Select: {
      // Normalize to (conjuncts, join children).
      CondPtr cond = q->kind == QueryExpr::Kind::Select ? q->cond : cond_true();
      QueryPtr body = q->kind == QueryExpr::Kind::Select ? q->children[0] : q;
      std::vector<QueryPtr> children;
      if (body->kind == QueryExpr::Kind::Join)
        children = body->children;
      else
        children = {body};

      Schema outSchema = schema_of(body);
      Gmr out(outSchema);
      JoinLoop loop{db, env, {}, {}, {}, &out, &outSchema};
      for (const auto& c : children) loop.childRes.push_back(oracle_eval(c, db, env));
      loop.checkAt.resize(children.size());

      // Assign each conjunct to the earliest level where it can be decided.
      std::set<std::string> known;
      for (const auto& [name, v] : env) known.insert(name);
      std::vector<std::set<std::string>> knownAt(children.size());
      for (size_t i = 0; i < children.size(); ++i) {
        for (const auto& col : loop.childRes[i].schema()) known.insert(col);
        knownAt[i] = known;
      }
      for (const auto& c : conjuncts_of(cond)) {
        std::set<std::string> vars = cond_vars(c);
        bool placed = false;
        for (size_t i = 0; i < children.size() && !placed; ++i) {
          bool all = true;
          for (const auto& v : vars)
            if (!knownAt[i].count(v)) {
              all = false;
              break;
            }
          if (all) {
            loop.checkAt[i].push_back(c);
            placed = true;
          }
        }
        if (!placed) loop.residual.push_back(c);
      }
      loop.run(0, Rational(1));
      return out;
    }
    case QueryExpr::Kind::Union: {
      Gmr acc = oracle_eval(q->children[0], db, env);
      for (size_t i = 1; i < q->children.size(); ++i) {
        Gmr next = gmr_align(oracle_eval(q->children[i], db, env), acc.schema());
        for (const auto& [t, m] : next.entries()) acc.add(t, m);
      }
      return acc;
    }
    case QueryExpr::Kind::Sum: {
      Gmr in = oracle_eval(q->children[0], db, env);
      Gmr out(q->groupBy);
      for (const auto& [t, m] : in.sorted_entries()) {
        for (size_t i = 0; i < in.schema().size(); ++i) {
          auto [it, fresh] = env.emplace(in.schema()[i], t[i]);
          if (!fresh) throw StructureError("oracle: column shadows outer binding: " + it->first);
        }
        Value fv = eval_term(q->f, db, env);
        Tuple key;
        for (const auto& c : q->groupBy) key.push_back(env.at(c));
        out.add(key, fv.num() * m);
        for (const auto& col : in.schema()) env.erase(col);
      }
      return out;
    }
    case QueryExpr::Kind::Rename:
      return gmr_rename(oracle_eval(q->children[0], db, env), q->renames);
  }
  throw StructureError("oracle: unhandled query kind");
}

inline Gmr oracle_eval(const QueryPtr& q, const OracleDb& db) {
  OracleEnv env;
  return oracle_eval(q, db, env);
}

}  // namespace deltaview
