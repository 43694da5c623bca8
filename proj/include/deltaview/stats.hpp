// deltaview: workload statistics (relation cardinalities and update rates,
// per-column distinct counts), a cardinality estimator over query
// expressions, and the evaluation-cost primitive used by cost-based
// compilation.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "deltaview/sql.hpp"

namespace deltaview {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Statistics file
//
// One entry per line. Relation lines carry the steady-state cardinality and
// the update rate (events per unit time):
//     bids 40 1
// Column lines use the declared relation.column name and give the distinct
// value count:
//     bids.price 25
// '#' starts a comment; blank lines are ignored.
// ---------------------------------------------------------------------------

struct Statistics {
  struct RelStats {
    double cardinality = 0;
    double rate = 0;
  };
  std::map<std::string, RelStats> rels;
  std::map<std::string, double> distincts;  // keyed "relation.column"

  const RelStats& relation(const std::string& name) const {
    auto it = rels.find(name);
    if (it == rels.end()) throw ConfigError("statistics missing relation: " + name);
    return it->second;
  }

  double distinct(const std::string& rel, const std::string& col) const {
    auto it = distincts.find(rel + "." + col);
    if (it == distincts.end())
      throw ConfigError("statistics missing column: " + rel + "." + col);
    return it->second;
  }

  /// Total update rate across the given relations (the refresh rate of a
  /// query reading all of them).
  double rate_sum(const std::set<std::string>& relNames) const {
    double r = 0;
    for (const auto& n : relNames) r += relation(n).rate;
    return r;
  }
};

inline Statistics parse_statistics(const std::string& text) {
  Statistics st;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) toks.push_back(t);
    if (toks.empty()) continue;
    try {
      if (toks.size() == 2) {
        if (toks[0].find('.') == std::string::npos)
          throw ConfigError("column statistic needs a relation.column name");
        st.distincts[toks[0]] = std::stod(toks[1]);
      } else if (toks.size() == 3) {
        st.rels[toks[0]] = {std::stod(toks[1]), std::stod(toks[2])};
      } else {
        throw ConfigError("expected 2 or 3 fields");
      }
    } catch (const std::exception& e) {
      throw ConfigError("statistics line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Cardinality estimation
//
// Estimated result sizes follow simple textbook rules: base relations use
// their declared cardinality, equality constraints divide by the distinct
// count of the constrained column, order comparisons keep a third of their
// input, joins multiply, unions add. A group-by result is bounded both by
// the product of its key columns' distinct counts and by the estimated size
// of its input.
// ---------------------------------------------------------------------------

class CardEstimator {
 public:
  /// `viewDef` resolves a view name to its defining expression (may be null
  /// when the expression contains no view reads).
  CardEstimator(const Statistics& stats, const Catalog& catalog,
                std::function<QueryPtr(const std::string&)> viewDef = nullptr)
      : stats_(stats), catalog_(catalog), viewDef_(std::move(viewDef)) {}

  /// Estimated number of entries in the result of `q`.
  double card(const QueryPtr& q) {
    bind_columns(q);
    return card_rec(q);
  }

  /// Estimated size of the result's domain; for an aggregation this is the
  /// group-count bound min(prod distinct(key), |input|).
  double dom(const QueryPtr& q) { return std::max(card(q), 1.0); }

  /// Evaluation cost: the size of the result domain plus the domains of all
  /// nested aggregate subqueries it must consult.
  double cost_e(const QueryPtr& q) {
    double c = dom(q);
    for_each_nested_agg(q, [&](const TermPtr& t) { c += dom(t->agg); });
    return c;
  }

  /// Distinct count of an instance column, once seen by the estimator.
  double column_distinct(const std::string& instanceCol) {
    auto it = colDistinct_.find(instanceCol);
    return it == colDistinct_.end() ? kDefaultDistinct : it->second;
  }

  static constexpr double kDefaultDistinct = 16;

 private:

  /// Records the distinct count behind every instance column reachable from
  /// `q`, including through view definitions and nested aggregates.
  void bind_columns(const QueryPtr& q) {  // NOLINT(misc-no-recursion)
    switch (q->kind) {
      case QueryExpr::Kind::Relation: {
        if (q->isView) {
          if (viewDef_) {
            if (!visitedViews_.insert(q->rel).second) break;
            QueryPtr def = viewDef_(q->rel);
            if (def) {
              bind_columns(def);
              Schema ds = schema_of(def);
              for (size_t i = 0; i < q->cols.size() && i < ds.size(); ++i)
                if (q->cols[i] != ds[i] && colDistinct_.count(ds[i]))
                  colDistinct_[q->cols[i]] = colDistinct_[ds[i]];
            }
          }
          break;
        }
        const RelationDecl* decl = catalog_.find(q->rel);
        if (!decl) break;
        for (size_t i = 0; i < q->cols.size() && i < decl->cols.size(); ++i)
          colDistinct_[q->cols[i]] = stats_.distinct(q->rel, decl->cols[i]);
        break;
      }
      case QueryExpr::Kind::Singleton:
      case QueryExpr::Kind::Empty:
        break;
      case QueryExpr::Kind::Join:
      case QueryExpr::Kind::Union:
        for (const auto& c : q->children) bind_columns(c);
        break;
      case QueryExpr::Kind::Select:
      case QueryExpr::Kind::Sum:
        bind_columns(q->children[0]);
        break;
      case QueryExpr::Kind::Rename: {
        bind_columns(q->children[0]);
        for (const auto& [from, to] : q->renames)
          if (colDistinct_.count(from)) colDistinct_[to] = colDistinct_[from];
        break;
      }
    }
    for_each_nested_agg(q, [&](const TermPtr& t) { bind_columns(t->agg); });
  }

  double card_rec(const QueryPtr& q) {  // NOLINT(misc-no-recursion)
    switch (q->kind) {
      case QueryExpr::Kind::Relation: {
        double base;
        if (q->isView) {
          auto it = viewCard_.find(q->rel);
          if (it != viewCard_.end()) {
            base = it->second;
          } else {
            QueryPtr def = viewDef_ ? viewDef_(q->rel) : nullptr;
            base = def ? card_rec(def) : kDefaultDistinct;
            viewCard_[q->rel] = base;
          }
        } else {
          base = stats_.relation(q->rel).cardinality;
        }
        for (const auto& [col, t] : q->probes) base /= column_distinct(col);
        return std::max(base, 1.0);
      }
      case QueryExpr::Kind::Singleton:
        return 1.0;
      case QueryExpr::Kind::Empty:
        return 0.0;
      case QueryExpr::Kind::Join: {
        double c = 1.0;
        Schema seen;
        for (const auto& ch : q->children) {
          c *= card_rec(ch);
          for (const auto& col : schema_of(ch)) {
            if (schema_has(seen, col))
              c /= column_distinct(col);  // natural-join key
            else
              seen.push_back(col);
          }
        }
        return c;
      }
      case QueryExpr::Kind::Union: {
        double c = 0.0;
        for (const auto& ch : q->children) c += card_rec(ch);
        return c;
      }
      case QueryExpr::Kind::Select: {
        double c = card_rec(q->children[0]);
        return c * selectivity(q->cond);
      }
      case QueryExpr::Kind::Sum: {
        double in = card_rec(q->children[0]);
        double keys = 1.0;
        for (const auto& col : q->groupBy) keys *= column_distinct(col);
        return std::max(std::min(keys, in), 1.0);
      }
      case QueryExpr::Kind::Rename:
        return card_rec(q->children[0]);
    }
    return 1.0;
  }

  double selectivity(const CondPtr& c) {  // NOLINT(misc-no-recursion)
    if (!c) return 1.0;
    switch (c->kind) {
      case Condition::Kind::True:
        return 1.0;
      case Condition::Kind::False:
        return 0.0;
      case Condition::Kind::And: {
        double s = 1.0;
        for (const auto& ch : c->children) s *= selectivity(ch);
        return s;
      }
      case Condition::Kind::Or: {
        double s = 0.0;
        for (const auto& ch : c->children) s += selectivity(ch);
        return std::min(s, 1.0);
      }
      case Condition::Kind::Not:
        return std::max(1.0 - selectivity(c->children[0]), 0.0);
      case Condition::Kind::Cmp: {
        if (c->op == Condition::CmpOp::Eq) {
          double d = cmp_distinct(c);
          return d > 0 ? 1.0 / d : 1.0;
        }
        if (c->op == Condition::CmpOp::Ne) return 1.0;
        return 1.0 / 3.0;  // order comparison
      }
    }
    return 1.0;
  }

  /// Distinct count governing an equality comparison: the largest distinct
  /// count among plain column references on either side, zero when neither
  /// side is a known column.
  double cmp_distinct(const CondPtr& c) {
    double d = 0;
    for (const TermPtr& side : {c->lhs, c->rhs})
      if (side->kind == Term::Kind::Variable && colDistinct_.count(side->name))
        d = std::max(d, colDistinct_[side->name]);
    return d;
  }

  const Statistics& stats_;
  const Catalog& catalog_;
  std::function<QueryPtr(const std::string&)> viewDef_;
  std::map<std::string, double> colDistinct_;
  std::map<std::string, double> viewCard_;
  std::set<std::string> visitedViews_;
};

}  // namespace deltaview
