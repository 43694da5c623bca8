// deltaview: query expression evaluator. Works against any tuple store via
// the Store interface; relation reads can carry equality probes that the
// store may answer from an index.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <unordered_map>

#include "deltaview/ast.hpp"
#include "deltaview/gmr.hpp"

namespace deltaview {

// ---------------------------------------------------------------------------
// Environments: chained frames of column bindings plus an optional base map.
// ---------------------------------------------------------------------------

struct Env {
  const Schema* cols = nullptr;
  const Tuple* tup = nullptr;
  const Env* parent = nullptr;
  const std::map<std::string, Value>* base = nullptr;

  std::optional<Value> find(const std::string& name) const {
    for (const Env* e = this; e; e = e->parent) {
      if (e->cols) {
        for (size_t i = 0; i < e->cols->size(); ++i)
          if ((*e->cols)[i] == name) return (*e->tup)[i];
      }
      if (e->base) {
        auto it = e->base->find(name);
        if (it != e->base->end()) return it->second;
      }
    }
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Store interface
// ---------------------------------------------------------------------------

class Store {
 public:
  virtual ~Store() = default;

  /// Iterates entries of `name` whose tuple matches all positional equality
  /// constraints in `eq`. Tuples are in declaration column order.
  virtual void scan(const std::string& name, bool isView,
                    const std::vector<std::pair<size_t, Value>>& eq,
                    const std::function<void(const Tuple&, const Rational&)>& fn) const = 0;
};

/// Plain map-backed store; probes are answered by filtering a full scan.
class MapStore : public Store {
 public:
  std::map<std::string, Gmr> rels;

  void scan(const std::string& name, bool /*isView*/,
            const std::vector<std::pair<size_t, Value>>& eq,
            const std::function<void(const Tuple&, const Rational&)>& fn) const override {
    auto it = rels.find(name);
    if (it == rels.end()) throw EvalError("unknown relation: " + name);
    for (const auto& [t, m] : it->second.entries()) {
      bool ok = true;
      for (const auto& [i, v] : eq)
        if (!(t[i] == v)) {
          ok = false;
          break;
        }
      if (ok) fn(t, m);
    }
  }
};

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

class Evaluator {
 public:
  explicit Evaluator(const Store& store) : store_(store) {}

  Gmr eval(const QueryPtr& q, const Env& env) {
    switch (q->kind) {
      case QueryExpr::Kind::Relation: {
        std::vector<std::pair<size_t, Value>> eq;
        eq.reserve(q->probes.size());
        for (const auto& [col, t] : q->probes)
          eq.push_back({schema_index(q->cols, col), eval_term(t, env)});
        Gmr out(q->cols);
        store_.scan(q->rel, q->isView, eq,
                    [&](const Tuple& t, const Rational& m) { out.add(t, m); });
        return out;
      }
      case QueryExpr::Kind::Singleton: {
        Tuple t;
        t.reserve(q->svals.size());
        for (const auto& v : q->svals) t.push_back(eval_term(v, env));
        Value m = eval_term(q->smult, env);
        return Gmr::singleton(q->scols, std::move(t), m.num());
      }
      case QueryExpr::Kind::Empty:
        return Gmr(q->cols);
      case QueryExpr::Kind::Join:
        return eval_filtered_join(cond_true(), q->children, schema_of(q), env);
      case QueryExpr::Kind::Union: {
        Gmr acc = eval(q->children[0], env);
        for (size_t i = 1; i < q->children.size(); ++i)
          acc = gmr_union(acc, eval(q->children[i], env));
        return acc;
      }
      case QueryExpr::Kind::Select: {
        const QueryPtr& child = q->children[0];
        if (child->kind == QueryExpr::Kind::Join)
          return eval_filtered_join(q->cond, child->children, schema_of(child), env);
        Gmr in = eval(child, env);
        Gmr out(in.schema());
        for (const auto& [t, m] : in.entries()) {
          Env frame{&in.schema(), &t, &env, nullptr};
          if (eval_cond(q->cond, frame)) out.add(t, m);
        }
        return out;
      }
      case QueryExpr::Kind::Sum: {
        Gmr in = eval(q->children[0], env);
        std::vector<size_t> idx;
        idx.reserve(q->groupBy.size());
        for (const auto& c : q->groupBy) idx.push_back(schema_index(in.schema(), c));
        Gmr out(q->groupBy);
        for (const auto& [t, m] : in.entries()) {
          Env frame{&in.schema(), &t, &env, nullptr};
          Value fv = eval_term(q->f, frame);
          Tuple key;
          key.reserve(idx.size());
          for (size_t i : idx) key.push_back(t[i]);
          out.add(key, fv.num() * m);
        }
        return out;
      }
      case QueryExpr::Kind::Rename: {
        Gmr in = eval(q->children[0], env);
        return gmr_rename(in, q->renames);
      }
    }
    throw StructureError("unhandled query kind");
  }

  Value eval_term(const TermPtr& t, const Env& env) {
    switch (t->kind) {
      case Term::Kind::Constant:
        return t->value;
      case Term::Kind::Variable: {
        auto v = env.find(t->name);
        if (!v) throw EvalError("unbound variable: " + t->name);
        return *v;
      }
      case Term::Kind::Add:
      case Term::Kind::Sub:
      case Term::Kind::Mul:
      case Term::Kind::Div: {
        Value a = eval_term(t->lhs, env);
        Value b = eval_term(t->rhs, env);
        const Rational& x = a.num();
        const Rational& y = b.num();
        switch (t->kind) {
          case Term::Kind::Add:
            return Value(x + y);
          case Term::Kind::Sub:
            return Value(x - y);
          case Term::Kind::Mul:
            return Value(x * y);
          default:
            if (y == 0) throw EvalError("division by zero");
            return Value(x / y);
        }
      }
      case Term::Kind::Aggregate:
        return Value(eval_agg(t, env));
    }
    throw StructureError("unhandled term kind");
  }

  bool eval_cond(const CondPtr& c, const Env& env) {
    if (!c) return true;
    switch (c->kind) {
      case Condition::Kind::True:
        return true;
      case Condition::Kind::False:
        return false;
      case Condition::Kind::And:
        for (const auto& ch : c->children)
          if (!eval_cond(ch, env)) return false;
        return true;
      case Condition::Kind::Or:
        for (const auto& ch : c->children)
          if (eval_cond(ch, env)) return true;
        return false;
      case Condition::Kind::Not:
        return !eval_cond(c->children[0], env);
      case Condition::Kind::Cmp: {
        Value a = eval_term(c->lhs, env);
        Value b = eval_term(c->rhs, env);
        int cmp = Value::query_compare(a, b);
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

 private:
  /// Evaluates a filtered n-way join without materializing cross products:
  /// single-child conjuncts are pushed below the join, two-column equality
  /// conjuncts become hash-join keys, and the remaining conjuncts are applied
  /// as soon as every column they mention is available.
  Gmr eval_filtered_join(const CondPtr& cond, const std::vector<QueryPtr>& children,
                         const Schema& outSchema, const Env& env) {
    size_t n = children.size();
    std::vector<Gmr> input;
    input.reserve(n);
    for (const auto& c : children) input.push_back(eval(c, env));

    struct Edge {
      size_t a, b;               // child indexes
      std::string colA, colB;    // equality columns
      bool used = false;
    };
    std::vector<Edge> edges;
    std::vector<std::vector<CondPtr>> prefilter(n);
    std::vector<std::pair<CondPtr, std::set<std::string>>> post;

    auto owner = [&](const std::string& col) -> int {
      for (size_t i = 0; i < n; ++i)
        if (schema_has(input[i].schema(), col)) return static_cast<int>(i);
      return -1;
    };

    for (const auto& c : conjuncts_of(cond)) {
      std::set<std::string> vars;
      free_vars_cond(c, {}, vars);
      std::set<std::string> colRefs;
      std::set<int> owners;
      for (const auto& v : vars) {
        int o = owner(v);
        if (o >= 0) {
          colRefs.insert(v);
          owners.insert(o);
        }
      }
      if (owners.empty()) {
        // Constant guard given the outer environment.
        if (!eval_cond(c, env)) return Gmr(outSchema);
        continue;
      }
      if (owners.size() == 1) {
        prefilter[*owners.begin()].push_back(c);
        continue;
      }
      if (owners.size() == 2 && c->kind == Condition::Kind::Cmp &&
          c->op == Condition::CmpOp::Eq && c->lhs->kind == Term::Kind::Variable &&
          c->rhs->kind == Term::Kind::Variable && colRefs.size() == 2 &&
          vars.size() == 2) {
        size_t oa = static_cast<size_t>(owner(c->lhs->name));
        size_t ob = static_cast<size_t>(owner(c->rhs->name));
        edges.push_back({oa, ob, c->lhs->name, c->rhs->name, false});
        continue;
      }
      post.push_back({c, colRefs});
    }

    for (size_t i = 0; i < n; ++i) {
      if (prefilter[i].empty()) continue;
      Gmr filtered(input[i].schema());
      for (const auto& [t, m] : input[i].entries()) {
        Env frame{&input[i].schema(), &t, &env, nullptr};
        bool ok = true;
        for (const auto& c : prefilter[i])
          if (!eval_cond(c, frame)) {
            ok = false;
            break;
          }
        if (ok) filtered.add(t, m);
      }
      input[i] = std::move(filtered);
    }

    std::vector<bool> used(n, false);
    std::vector<bool> merged(n, false);  // whether child's columns are in acc
    auto connected = [&](size_t j, const Schema& accSchema) {
      for (const auto& col : input[j].schema())
        if (schema_has(accSchema, col)) return true;
      for (const auto& e : edges) {
        if (e.used) continue;
        if ((merged[e.a] || schema_has(accSchema, e.colA)) && e.b == j) return true;
        if ((merged[e.b] || schema_has(accSchema, e.colB)) && e.a == j) return true;
      }
      return false;
    };

    Gmr acc = input[0];
    used[0] = merged[0] = true;
    auto apply_ready_post = [&]() {
      std::vector<std::pair<CondPtr, std::set<std::string>>> rest;
      for (auto& [c, cols] : post) {
        bool ready = true;
        for (const auto& col : cols)
          if (!schema_has(acc.schema(), col)) {
            ready = false;
            break;
          }
        if (!ready) {
          rest.push_back({c, cols});
          continue;
        }
        Gmr filtered(acc.schema());
        for (const auto& [t, m] : acc.entries()) {
          Env frame{&acc.schema(), &t, &env, nullptr};
          if (eval_cond(c, frame)) filtered.add(t, m);
        }
        acc = std::move(filtered);
      }
      post = std::move(rest);
    };
    apply_ready_post();

    for (size_t round = 1; round < n; ++round) {
      size_t pick = n;
      for (size_t j = 0; j < n; ++j)
        if (!used[j] && connected(j, acc.schema())) {
          pick = j;
          break;
        }
      if (pick == n) {
        for (size_t j = 0; j < n; ++j)
          if (!used[j]) {
            pick = j;
            break;
          }
      }

      // Gather this child's join keys: natural shared columns plus any edge
      // whose other endpoint is already in acc.
      std::vector<std::pair<std::string, std::string>> keyPairs;  // accCol, childCol
      const Schema& cs = input[pick].schema();
      for (const auto& col : cs)
        if (schema_has(acc.schema(), col)) keyPairs.push_back({col, col});
      for (auto& e : edges) {
        if (e.used) continue;
        if (e.b == pick && schema_has(acc.schema(), e.colA)) {
          keyPairs.push_back({e.colA, e.colB});
          e.used = true;
        } else if (e.a == pick && schema_has(acc.schema(), e.colB)) {
          keyPairs.push_back({e.colB, e.colA});
          e.used = true;
        }
      }

      std::vector<size_t> accKey, childKey, childRest;
      for (const auto& [ac, cc] : keyPairs) {
        accKey.push_back(schema_index(acc.schema(), ac));
        childKey.push_back(schema_index(cs, cc));
      }
      for (size_t k = 0; k < cs.size(); ++k)
        if (!schema_has(acc.schema(), cs[k])) childRest.push_back(k);

      Schema nextSchema = acc.schema();
      for (size_t k : childRest) nextSchema.push_back(cs[k]);
      Gmr next(nextSchema);

      std::unordered_map<Tuple, std::vector<std::pair<const Tuple*, const Rational*>>,
                         TupleHash>
          index;
      for (const auto& [t, m] : input[pick].entries()) {
        Tuple key;
        key.reserve(childKey.size());
        for (size_t k : childKey) key.push_back(t[k]);
        index[key].push_back({&t, &m});
      }
      for (const auto& [t, m] : acc.entries()) {
        Tuple key;
        key.reserve(accKey.size());
        for (size_t k : accKey) key.push_back(t[k]);
        auto it = index.find(key);
        if (it == index.end()) continue;
        for (auto& [ct, cm] : it->second) {
          Tuple r = t;
          for (size_t k : childRest) r.push_back((*ct)[k]);
          next.add(r, m * *cm);
        }
      }
      acc = std::move(next);
      used[pick] = merged[pick] = true;

      // Edges whose endpoints both landed in acc act as plain filters.
      for (auto& e : edges) {
        if (e.used) continue;
        if (schema_has(acc.schema(), e.colA) && schema_has(acc.schema(), e.colB)) {
          size_t ia = schema_index(acc.schema(), e.colA);
          size_t ib = schema_index(acc.schema(), e.colB);
          Gmr filtered(acc.schema());
          for (const auto& [t, m] : acc.entries())
            if (t[ia] == t[ib]) filtered.add(t, m);
          acc = std::move(filtered);
          e.used = true;
        }
      }
      apply_ready_post();
    }

    for (const auto& [c, cols] : post) {
      Gmr filtered(acc.schema());
      for (const auto& [t, m] : acc.entries()) {
        Env frame{&acc.schema(), &t, &env, nullptr};
        if (eval_cond(c, frame)) filtered.add(t, m);
      }
      acc = std::move(filtered);
    }
    return gmr_align(acc, outSchema);
  }

  /// Nested aggregate value: the multiplicity of the empty tuple of the
  /// zero-column subquery. Memoized per (aggregate node, free-variable
  /// values) for the lifetime of this Evaluator.
  Rational eval_agg(const TermPtr& t, const Env& env) {
    auto fvIt = aggFreeVars_.find(t.get());
    if (fvIt == aggFreeVars_.end()) {
      std::set<std::string> fv = free_vars(t->agg);
      fvIt = aggFreeVars_.emplace(t.get(), std::vector<std::string>(fv.begin(), fv.end())).first;
    }
    Tuple key;
    key.reserve(fvIt->second.size());
    for (const auto& name : fvIt->second) {
      auto v = env.find(name);
      if (!v) throw EvalError("unbound variable in nested aggregate: " + name);
      key.push_back(*v);
    }
    auto& memo = aggMemo_[t.get()];
    auto hit = memo.find(key);
    if (hit != memo.end()) return hit->second;
    Gmr g = eval(t->agg, env);
    if (!g.schema().empty())
      throw StructureError("nested aggregate subquery must have zero columns");
    Rational r = g.multiplicity(Tuple{});
    memo.emplace(std::move(key), r);
    return r;
  }

  const Store& store_;
  std::unordered_map<const Term*, std::unordered_map<Tuple, Rational, TupleHash>> aggMemo_;
  std::unordered_map<const Term*, std::vector<std::string>> aggFreeVars_;
};

inline Gmr evaluate(const QueryPtr& q, const Store& store, const Env& env = {}) {
  Evaluator ev(store);
  return ev.eval(q, env);
}

}  // namespace deltaview
