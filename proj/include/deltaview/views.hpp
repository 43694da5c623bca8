// deltaview: materialized view registry. Views are named aggregate queries
// kept as finite maps (key tuple -> aggregate value). The registry interns
// definitions so structurally identical views are shared across triggers,
// and normalizes instance-column naming so dumps are deterministic.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "deltaview/ast.hpp"
#include "deltaview/canonical.hpp"

namespace deltaview {

/// One materialized map. `def` is the defining query over base relations;
/// `key` is the schema of the stored map (group-by columns, prefixed by
/// `inputVars` for caches). Caches are filled lazily on first probe of a
/// given input binding instead of being maintained eagerly.
struct ViewInfo {
  std::string name;
  QueryPtr def;
  Schema key;
  Schema inputVars;
  bool isCache = false;
  bool isTop = false;
  int order = 0;
  std::string hint;  // human-readable origin, dump comment only
  /// Caches only: input names in canonical (alpha) assignment order, used to
  /// pair up the inputs of a structurally equal later definition.
  std::vector<std::string> alphaOrder;
};

/// Result of interning a cache definition: the (possibly pre-existing) view
/// plus, per requested input, the position of the view's matching input. Two
/// structurally equal definitions can bind their inputs in different orders;
/// readers must probe through this mapping.
struct CacheRef {
  const ViewInfo* view = nullptr;
  std::vector<size_t> inputPos;
};

class ViewRegistry {
 public:
  /// Registers the query result map itself. Not normalized: there is exactly
  /// one per program and its naming comes straight from the frontend.
  const ViewInfo& intern_top(QueryPtr def, std::string name) {
    if (def->kind != QueryExpr::Kind::Sum)
      throw StructureError("top view definition must be an aggregate");
    return add(std::move(def), std::move(name), {}, false, true, "");
  }

  /// Interns an auxiliary view definition (closed aggregate query over base
  /// relations). Returns the existing view when a structurally equal
  /// definition was registered before.
  const ViewInfo& intern(QueryPtr def, const std::string& hint = "") {
    return add(normalize(std::move(def), {}), "", {}, false, false, hint);
  }

  /// Interns a cache: a lazily filled view whose definition has free input
  /// variables, stored keyed by those inputs (then by group-by columns).
  /// Returns the view plus the input-position mapping (see CacheRef).
  CacheRef intern_cache(QueryPtr def, const Schema& inputVars,
                        const std::string& hint = "") {
    Schema norm;
    norm.reserve(inputVars.size());
    NameMap m;
    for (size_t i = 0; i < inputVars.size(); ++i) {
      norm.push_back("i" + std::to_string(i));
      m.emplace_back(inputVars[i], norm.back());
    }
    QueryPtr ndef = normalize(subst_names(def, m), norm);
    auto [key, order] = canonical_key_order(ndef);
    std::string canon = "cache|" + std::to_string(norm.size()) + "|" + key;
    auto it = byCanon_.find(canon);
    if (it != byCanon_.end()) return {it->second, pair_inputs(norm, order, *it->second)};

    ViewInfo& v = add_new(std::move(ndef), "", norm, true, false, hint, std::move(canon));
    v.alphaOrder = std::move(order);
    CacheRef ref{&v, {}};
    ref.inputPos.resize(norm.size());
    for (size_t i = 0; i < norm.size(); ++i) ref.inputPos[i] = i;
    return ref;
  }

  const ViewInfo* find(const std::string& name) const {
    auto it = byName_.find(name);
    return it == byName_.end() ? nullptr : it->second;
  }

  /// Views in registration order (the top view is first by construction).
  std::vector<const ViewInfo*> all() const {
    std::vector<const ViewInfo*> out;
    out.reserve(views_.size());
    for (const auto& v : views_) out.push_back(v.get());
    return out;
  }

  size_t size() const { return views_.size(); }

 private:
  /// Renames every relation instance column to a positional scheme: atoms are
  /// sorted by (relation, original alias) and aliased x0, x1, ...; a column
  /// "a.c" of the k-th atom becomes "xk.c". Cache inputs stay fixed. This
  /// makes the printed definition independent of frontend alias choices.
  static QueryPtr normalize(QueryPtr def, const Schema& keep) {
    std::vector<const QueryExpr*> atoms;
    collect_atoms(def, atoms);
    std::vector<std::pair<std::pair<std::string, std::string>, const QueryExpr*>> order;
    for (const auto* a : atoms)
      order.emplace_back(std::make_pair(a->rel, alias_of(a)), a);
    std::sort(order.begin(), order.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    std::set<size_t> stale = stale_aliases(def, atoms);
    NameMap m;
    size_t next = 0;
    for (size_t k = 0; k < order.size(); ++k) {
      while (stale.count(next)) ++next;
      const QueryExpr* a = order[k].second;
      for (const auto& col : a->cols) {
        if (schema_has(keep, col)) continue;
        auto dot = col.find('.');
        std::string base = dot == std::string::npos ? col : col.substr(dot + 1);
        m.emplace_back(col, "x" + std::to_string(next) + "." + base);
      }
      ++next;
    }
    return subst_names(def, m);
  }

  /// Alias numbers used by "x<k>.<col>" names that are not columns of any
  /// surviving relation atom. Derivatives keep old instance names on
  /// substituted tuples (singleton pins, conditions), and reassigning those
  /// numbers to fresh atoms would collapse distinct columns. Renaming is
  /// simultaneous, so numbers used only by atom columns are free to reuse.
  static std::set<size_t> stale_aliases(const QueryPtr& def,
                                        const std::vector<const QueryExpr*>& atoms) {
    std::set<std::string> atomCols;
    for (const auto* a : atoms) atomCols.insert(a->cols.begin(), a->cols.end());
    std::set<size_t> stale;
    const std::string printed = print_query(def);
    for (size_t i = 0; i + 1 < printed.size(); ++i) {
      if (printed[i] != 'x' || !std::isdigit(static_cast<unsigned char>(printed[i + 1])))
        continue;
      if (i > 0 && (std::isalnum(static_cast<unsigned char>(printed[i - 1])) ||
                    printed[i - 1] == '.' || printed[i - 1] == '_'))
        continue;
      size_t j = i + 1, num = 0;
      while (j < printed.size() && std::isdigit(static_cast<unsigned char>(printed[j]))) {
        num = num * 10 + static_cast<size_t>(printed[j] - '0');
        ++j;
      }
      if (j >= printed.size() || printed[j] != '.') continue;
      size_t end = j + 1;
      while (end < printed.size() &&
             (std::isalnum(static_cast<unsigned char>(printed[end])) || printed[end] == '_'))
        ++end;
      if (!atomCols.count(printed.substr(i, end - i))) stale.insert(num);
    }
    return stale;
  }

  static std::string alias_of(const QueryExpr* atom) {
    if (atom->cols.empty()) return "";
    auto dot = atom->cols[0].find('.');
    return dot == std::string::npos ? atom->cols[0] : atom->cols[0].substr(0, dot);
  }

  static void collect_atoms(const QueryPtr& q, std::vector<const QueryExpr*>& out) {
    switch (q->kind) {
      case QueryExpr::Kind::Relation:
        if (!q->isView) out.push_back(q.get());
        return;
      case QueryExpr::Kind::Singleton:
      case QueryExpr::Kind::Empty:
        return;
      case QueryExpr::Kind::Join:
      case QueryExpr::Kind::Union:
        for (const auto& c : q->children) collect_atoms(c, out);
        return;
      case QueryExpr::Kind::Select:
        for_each_agg_cond(q->cond, [&](const TermPtr& a) { collect_atoms(a->agg, out); });
        collect_atoms(q->children[0], out);
        return;
      case QueryExpr::Kind::Sum:
        for_each_agg_term(q->f, [&](const TermPtr& a) { collect_atoms(a->agg, out); });
        collect_atoms(q->children[0], out);
        return;
      case QueryExpr::Kind::Rename:
        collect_atoms(q->children[0], out);
        return;
    }
  }

  const ViewInfo& add(QueryPtr def, std::string name, Schema inputVars, bool isCache,
                      bool isTop, std::string hint) {
    std::string canon = "view|" + canonical_key(def);
    auto it = byCanon_.find(canon);
    if (it != byCanon_.end()) return *it->second;
    return add_new(std::move(def), std::move(name), std::move(inputVars), isCache, isTop,
                   std::move(hint), std::move(canon));
  }

  ViewInfo& add_new(QueryPtr def, std::string name, Schema inputVars, bool isCache,
                    bool isTop, std::string hint, std::string canon) {
    auto v = std::make_unique<ViewInfo>();
    v->order = static_cast<int>(views_.size());
    v->name = name.empty() ? "M" + std::to_string(v->order) : std::move(name);
    v->def = std::move(def);
    v->inputVars = std::move(inputVars);
    v->isCache = isCache;
    v->isTop = isTop;
    v->hint = std::move(hint);
    if (v->def->kind != QueryExpr::Kind::Sum)
      throw StructureError("view definition must be an aggregate: " + v->name);
    v->key = v->inputVars;
    for (const auto& col : v->def->groupBy) v->key.push_back(col);
    if (byName_.count(v->name)) throw StructureError("duplicate view name: " + v->name);

    ViewInfo* raw = v.get();
    byCanon_.emplace(std::move(canon), raw);
    byName_.emplace(raw->name, raw);
    views_.push_back(std::move(v));
    return *raw;
  }

  /// Pairs the requested inputs (named i0..iN in `norm`, alpha order `order`)
  /// with the stored view's inputs: alpha slot k of the incoming definition
  /// corresponds to alpha slot k of the stored one. Inputs a definition never
  /// mentions pair up with the leftover positions.
  static std::vector<size_t> pair_inputs(const Schema& norm,
                                         const std::vector<std::string>& order,
                                         const ViewInfo& v) {
    auto indexOf = [](const Schema& s, const std::string& n) -> size_t {
      for (size_t i = 0; i < s.size(); ++i)
        if (s[i] == n) return i;
      return static_cast<size_t>(-1);
    };
    std::vector<size_t> pos(norm.size(), static_cast<size_t>(-1));
    std::vector<bool> taken(v.inputVars.size(), false);
    for (size_t k = 0; k < order.size() && k < v.alphaOrder.size(); ++k) {
      size_t mine = indexOf(norm, order[k]);
      size_t theirs = indexOf(v.inputVars, v.alphaOrder[k]);
      if (mine == static_cast<size_t>(-1) || theirs == static_cast<size_t>(-1))
        throw StructureError("cache input pairing failed for " + v.name);
      pos[mine] = theirs;
      taken[theirs] = true;
    }
    size_t next = 0;
    for (size_t i = 0; i < pos.size(); ++i) {
      if (pos[i] != static_cast<size_t>(-1)) continue;
      while (next < taken.size() && taken[next]) ++next;
      if (next >= taken.size())
        throw StructureError("cache input pairing failed for " + v.name);
      pos[i] = next;
      taken[next++] = true;
    }
    return pos;
  }

  std::vector<std::unique_ptr<ViewInfo>> views_;
  std::map<std::string, ViewInfo*> byCanon_;
  std::map<std::string, ViewInfo*> byName_;
};

/// A read of `view` inside trigger code: reader-side column names match the
/// view key positionally; probes pin key columns to parameter terms.
inline QueryPtr view_read(const ViewInfo& view, Schema readerCols,
                          std::vector<std::pair<std::string, TermPtr>> probes = {}) {
  if (readerCols.size() != view.key.size())
    throw StructureError("view read arity mismatch on " + view.name);
  return q_relation_probed(view.name, std::move(readerCols), true, std::move(probes));
}

}  // namespace deltaview
