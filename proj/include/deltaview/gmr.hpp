// deltaview: generalized multiset relations — finite maps from tuples to
// exact rational multiplicities, with ring operations and a text format.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

#include "deltaview/value.hpp"

namespace deltaview {

/// A generalized multiset relation: schema plus tuple -> multiplicity map.
/// Multiplicities are exact rationals and may be negative; entries whose
/// multiplicity reaches zero are removed eagerly, so `size()` is always the
/// count of tuples with nonzero multiplicity.
class Gmr {
 public:
  using Map = std::unordered_map<Tuple, Rational, TupleHash>;

  Gmr() = default;
  explicit Gmr(Schema schema) : schema_(std::move(schema)) {}

  const Schema& schema() const { return schema_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const Map& entries() const { return data_; }

  /// Adds `m` to the multiplicity of `t`, erasing the entry when it hits 0.
  void add(const Tuple& t, const Rational& m) {
    if (m == 0) return;
    if (t.size() != schema_.size()) throw StructureError("tuple arity mismatch");
    auto it = data_.find(t);
    if (it == data_.end()) {
      data_.emplace(t, m);
    } else {
      it->second += m;
      if (it->second == 0) data_.erase(it);
    }
  }

  Rational multiplicity(const Tuple& t) const {
    auto it = data_.find(t);
    return it == data_.end() ? Rational(0) : it->second;
  }

  static Gmr singleton(Schema schema, Tuple t, Rational m) {
    Gmr g(std::move(schema));
    g.add(t, m);
    return g;
  }

  /// Entries in deterministic (tuple-lexicographic) order.
  std::vector<std::pair<Tuple, Rational>> sorted_entries() const {
    std::vector<std::pair<Tuple, Rational>> out(data_.begin(), data_.end());
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return tuple_compare(a.first, b.first) < 0; });
    return out;
  }

  friend bool operator==(const Gmr& a, const Gmr& b) {
    return a.schema_ == b.schema_ && a.data_ == b.data_;
  }

 private:
  Schema schema_;
  Map data_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Reorders b's columns to match schema `target`; identity when they already
/// agree. Throws if the column sets differ.
inline Gmr gmr_align(const Gmr& b, const Schema& target) {
  if (b.schema() == target) return b;
  if (b.schema().size() != target.size())
    throw StructureError("union/align over different column sets");
  std::vector<size_t> perm;
  perm.reserve(target.size());
  for (const auto& col : target) perm.push_back(schema_index(b.schema(), col));
  Gmr out(target);
  for (const auto& [t, m] : b.entries()) {
    Tuple r;
    r.reserve(perm.size());
    for (size_t i : perm) r.push_back(t[i]);
    out.add(r, m);
  }
  return out;
}

/// Multiset union: multiplicities add; schemas must cover the same columns.
inline Gmr gmr_union(const Gmr& a, const Gmr& b) {
  Gmr bb = gmr_align(b, a.schema());
  Gmr out = a;
  for (const auto& [t, m] : bb.entries()) out.add(t, m);
  return out;
}

inline Gmr gmr_scale(const Gmr& a, const Rational& k) {
  Gmr out(a.schema());
  for (const auto& [t, m] : a.entries()) out.add(t, m * k);
  return out;
}

/// Natural join on shared column names; multiplicities multiply. The output
/// schema is a's columns followed by b's non-shared columns.
inline Gmr gmr_join(const Gmr& a, const Gmr& b) {
  std::vector<size_t> aShared, bShared, bRest;
  for (size_t j = 0; j < b.schema().size(); ++j) {
    if (schema_has(a.schema(), b.schema()[j])) {
      aShared.push_back(schema_index(a.schema(), b.schema()[j]));
      bShared.push_back(j);
    } else {
      bRest.push_back(j);
    }
  }
  Schema outSchema = a.schema();
  for (size_t j : bRest) outSchema.push_back(b.schema()[j]);
  Gmr out(std::move(outSchema));

  // Hash the smaller side on the shared columns.
  std::unordered_map<Tuple, std::vector<std::pair<const Tuple*, const Rational*>>, TupleHash>
      index;
  for (const auto& [t, m] : b.entries()) {
    Tuple key;
    key.reserve(bShared.size());
    for (size_t j : bShared) key.push_back(t[j]);
    index[key].push_back({&t, &m});
  }
  for (const auto& [t, m] : a.entries()) {
    Tuple key;
    key.reserve(aShared.size());
    for (size_t i : aShared) key.push_back(t[i]);
    auto it = index.find(key);
    if (it == index.end()) continue;
    for (auto& [bt, bm] : it->second) {
      Tuple r = t;
      for (size_t j : bRest) r.push_back((*bt)[j]);
      out.add(r, m * *bm);
    }
  }
  return out;
}

/// Keeps tuples satisfying `pred`; multiplicities unchanged.
inline Gmr gmr_select(const Gmr& a, const std::function<bool(const Tuple&)>& pred) {
  Gmr out(a.schema());
  for (const auto& [t, m] : a.entries())
    if (pred(t)) out.add(t, m);
  return out;
}

/// Group-by aggregation: for each group over `groupCols`, the result
/// multiplicity is the sum over contributing tuples of f(t) * m(t).
inline Gmr gmr_sum(const Gmr& a, const Schema& groupCols,
                   const std::function<Rational(const Tuple&)>& f) {
  std::vector<size_t> idx;
  idx.reserve(groupCols.size());
  for (const auto& c : groupCols) idx.push_back(schema_index(a.schema(), c));
  Gmr out(groupCols);
  for (const auto& [t, m] : a.entries()) {
    Tuple key;
    key.reserve(idx.size());
    for (size_t i : idx) key.push_back(t[i]);
    out.add(key, f(t) * m);
  }
  return out;
}

/// Renames columns; `mapping` lists (from, to) pairs.
inline Gmr gmr_rename(const Gmr& a,
                      const std::vector<std::pair<std::string, std::string>>& mapping) {
  Schema s = a.schema();
  for (auto& col : s) {
    for (const auto& [from, to] : mapping)
      if (col == from) {
        col = to;
        break;
      }
  }
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = i + 1; j < s.size(); ++j)
      if (s[i] == s[j]) throw StructureError("rename produces duplicate column: " + s[i]);
  Gmr out(std::move(s));
  for (const auto& [t, m] : a.entries()) out.add(t, m);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: one line per entry, "col=value" pairs joined by tabs,
// then " |-> " and the multiplicity as num or num/den. Lines are sorted.
// An empty relation serializes to "<empty schema='a,b,c'>".
// ---------------------------------------------------------------------------

inline std::string gmr_to_text(const Gmr& g) {
  std::ostringstream os;
  if (g.empty()) {
    os << "<empty schema='";
    for (size_t i = 0; i < g.schema().size(); ++i) {
      if (i) os << ",";
      os << g.schema()[i];
    }
    os << "'>\n";
    return os.str();
  }
  for (const auto& [t, m] : g.sorted_entries()) {
    for (size_t i = 0; i < t.size(); ++i) {
      if (i) os << "\t";
      os << g.schema()[i] << "=" << t[i].to_text();
    }
    if (t.empty()) os << "<>";
    os << " |-> " << format_rational(m) << "\n";
  }
  return os.str();
}

inline Gmr gmr_parse(const std::string& text, const Schema& schema) {
  Gmr out(schema);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("<empty", 0) == 0) continue;
    size_t arrow = line.rfind(" |-> ");
    if (arrow == std::string::npos) throw StructureError("malformed gmr line: " + line);
    Rational mult = parse_rational(line.substr(arrow + 5));
    std::string fields = line.substr(0, arrow);
    Tuple t(schema.size());
    std::vector<bool> seen(schema.size(), false);
    if (fields != "<>") {
      size_t pos = 0;
      while (pos <= fields.size()) {
        size_t tab = fields.find('\t', pos);
        std::string part =
            fields.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos);
        size_t eq = part.find('=');
        if (eq == std::string::npos) throw StructureError("malformed gmr field: " + part);
        size_t ci = schema_index(schema, part.substr(0, eq));
        t[ci] = Value::parse(part.substr(eq + 1));
        seen[ci] = true;
        if (tab == std::string::npos) break;
        pos = tab + 1;
      }
    }
    for (size_t i = 0; i < schema.size(); ++i)
      if (!seen[i]) throw StructureError("missing column " + schema[i] + " in: " + line);
    out.add(t, mult);
  }
  return out;
}

}  // namespace deltaview
