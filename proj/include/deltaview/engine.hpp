// deltaview: trigger program runtime. Holds base relations and every
// materialized view of a compiled program, and applies stream events by
// running the program's triggers in two phases: increment/decrement
// right-hand sides are evaluated against the pre-update state, then applied
// together with the base-relation change, then full assignments are
// reevaluated against the post-update state. Caches fill lazily on probe
// miss at whatever state is current. All mutations of one event go through
// an undo journal, so a failing trigger leaves the engine untouched.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deltaview/eval.hpp"
#include "deltaview/gmr.hpp"
#include "deltaview/program.hpp"

namespace deltaview {

struct TriggerCounter {
  long long events = 0;
  double seconds = 0;
};

struct EngineCounters {
  long long events = 0;
  double seconds = 0;
  size_t peakEntries = 0;
  long long scans = 0;                  // store probes/scans served
  long long statementsExecuted = 0;     // statement evaluations (loop iterations count once)
  long long maxScansPerEvent = 0;       // bounded per event for constant-work programs
  long long maxStatementsPerEvent = 0;
  std::map<std::string, TriggerCounter> perTrigger;  // keyed "+rel" / "-rel"
};

class Engine : public Store {
 public:
  explicit Engine(Program program) : prog_(std::move(program)) { initialize({}); }
  Engine(Program program, const std::map<std::string, Gmr>& initial)
      : prog_(std::move(program)) {
    initialize(initial);
  }

  const Program& program() const { return prog_; }

  /// Resets all state: base relations from `initial` (missing ones empty),
  /// eager views recomputed from their definitions, caches cleared.
  void initialize(const std::map<std::string, Gmr>& initial) {
    base_.clear();
    views_.clear();
    journal_.clear();
    journaling_ = false;
    for (const auto& r : prog_.catalog.rels) {
      Table t;
      t.data = Gmr(r.cols);
      auto it = initial.find(r.name);
      if (it != initial.end()) {
        if (it->second.schema().size() != r.cols.size())
          throw EvalError("initial data arity mismatch for " + r.name);
        for (const auto& [tup, m] : it->second.entries()) t.data.add(tup, m);
      }
      base_.emplace(r.name, std::move(t));
    }
    for (const ViewInfo* v : prog_.registry.all()) {
      ViewTable vt;
      vt.info = v;
      vt.data = Gmr(v->key);
      if (!v->isCache) {
        Gmr g = evaluate(v->def, *this, {});
        for (const auto& [tup, m] : g.entries()) vt.data.add(tup, m);
      }
      views_.emplace(v->name, std::move(vt));
    }
    counters_.peakEntries = std::max(counters_.peakEntries, total_entries());
  }

  /// Applies one stream event: sign is +1 (insert) or -1 (delete), vals in
  /// declared column order. Throws on malformed events; a trigger failure
  /// rolls every change of this event back before rethrowing.
  void apply(int sign, const std::string& rel, const Tuple& vals) {
    const RelationDecl* rd = prog_.catalog.find(rel);
    if (!rd) throw EvalError("unknown relation in event: " + rel);
    if (!rd->isStream) throw EvalError("updates to table " + rel + " are not supported");
    if (vals.size() != rd->cols.size())
      throw EvalError("event arity mismatch for " + rel + ": got " +
                      std::to_string(vals.size()) + ", declared " +
                      std::to_string(rd->cols.size()));
    const Trigger* trig = nullptr;
    for (const auto& t : prog_.triggers)
      if (t.event.relation == rel && t.event.sign == sign) {
        trig = &t;
        break;
      }

    auto t0 = std::chrono::steady_clock::now();
    long long scans0 = counters_.scans;
    long long stmts0 = counters_.statementsExecuted;
    journal_.clear();
    journaling_ = true;
    try {
      run_trigger(trig, sign, rel, vals);
      journaling_ = false;
      journal_.clear();
    } catch (...) {
      rollback();
      journaling_ = false;
      throw;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    counters_.events++;
    counters_.seconds += secs;
    counters_.maxScansPerEvent =
        std::max(counters_.maxScansPerEvent, counters_.scans - scans0);
    counters_.maxStatementsPerEvent =
        std::max(counters_.maxStatementsPerEvent, counters_.statementsExecuted - stmts0);
    auto& tc = counters_.perTrigger[(sign > 0 ? "+" : "-") + rel];
    tc.events++;
    tc.seconds += secs;
    counters_.peakEntries = std::max(counters_.peakEntries, total_entries());
  }

  // --- inspection ---------------------------------------------------------

  const Gmr& result() const { return views_.at(prog_.top->name).data; }

  const Gmr& view_data(const std::string& name) const { return views_.at(name).data; }

  const Gmr& base_data(const std::string& rel) const { return base_.at(rel).data; }

  std::map<std::string, Gmr> base_relations() const {
    std::map<std::string, Gmr> out;
    for (const auto& [name, t] : base_) out.emplace(name, t.data);
    return out;
  }

  size_t total_entries() const {
    size_t n = 0;
    for (const auto& [k, t] : base_) n += t.data.size();
    for (const auto& [k, v] : views_) n += v.data.size();
    return n;
  }

  const EngineCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = EngineCounters{}; }

  /// Debug check: every secondary index matches a fresh projection of its
  /// table. Used by tests; not called on the hot path.
  bool indexes_consistent() const {
    for (const auto& [name, t] : base_)
      if (!table_indexes_consistent(t)) return false;
    for (const auto& [name, v] : views_)
      if (!table_indexes_consistent(v)) return false;
    return true;
  }

  // --- Store --------------------------------------------------------------

  void scan(const std::string& name, bool isView,
            const std::vector<std::pair<size_t, Value>>& eq,
            const std::function<void(const Tuple&, const Rational&)>& fn) const override {
    const_cast<Engine*>(this)->scan_impl(name, isView, eq, fn);
  }

 private:
  struct Table {
    Gmr data;
    // Secondary indexes, built lazily per probe pattern (sorted positions):
    // projected tuple -> full tuples currently present.
    std::map<std::vector<size_t>, std::unordered_map<Tuple, std::set<Tuple, TupleLess>, TupleHash>>
        idx;
  };
  struct ViewTable : Table {
    const ViewInfo* info = nullptr;
    std::set<Tuple, TupleLess> filled;  // cache input prefixes already computed
  };
  struct JournalEntry {
    enum class Kind { Bump, Filled } kind;
    Table* table = nullptr;
    ViewTable* cache = nullptr;
    Tuple tup;
    Rational delta;
  };

  static Tuple project(const Tuple& t, const std::vector<size_t>& pat) {
    Tuple p;
    p.reserve(pat.size());
    for (size_t i : pat) p.push_back(t[i]);
    return p;
  }

  void bump(Table& t, const Tuple& tup, const Rational& d, bool journal) {
    if (d == 0) return;
    Rational before = t.data.multiplicity(tup);
    t.data.add(tup, d);
    bool existedBefore = before != 0;
    bool existsAfter = before + d != 0;
    if (existedBefore != existsAfter) {
      for (auto& [pat, ix] : t.idx) {
        Tuple p = project(tup, pat);
        if (existsAfter) {
          ix[p].insert(tup);
        } else {
          auto it = ix.find(p);
          if (it != ix.end()) {
            it->second.erase(tup);
            if (it->second.empty()) ix.erase(it);
          }
        }
      }
    }
    if (journal && journaling_)
      journal_.push_back(JournalEntry{JournalEntry::Kind::Bump, &t, nullptr, tup, d});
  }

  void rollback() {
    for (auto it = journal_.rbegin(); it != journal_.rend(); ++it) {
      if (it->kind == JournalEntry::Kind::Bump)
        bump(*it->table, it->tup, -it->delta, false);
      else
        it->cache->filled.erase(it->tup);
    }
    journal_.clear();
  }

  const std::unordered_map<Tuple, std::set<Tuple, TupleLess>, TupleHash>& ensure_index(
      Table& t, const std::vector<size_t>& pat) {
    auto it = t.idx.find(pat);
    if (it != t.idx.end()) return it->second;
    auto& ix = t.idx[pat];
    for (const auto& [tup, m] : t.data.entries()) ix[project(tup, pat)].insert(tup);
    return ix;
  }

  void generic_scan(Table& t, const std::vector<std::pair<size_t, Value>>& eq,
                    const std::function<void(const Tuple&, const Rational&)>& fn) {
    if (eq.empty()) {
      for (const auto& [tup, m] : t.data.entries()) fn(tup, m);
      return;
    }
    if (eq.size() == t.data.schema().size()) {
      // Fully bound: a point lookup, no index needed.
      Tuple tup(t.data.schema().size());
      std::vector<bool> seen(tup.size(), false);
      bool complete = true;
      for (const auto& [i, v] : eq) {
        if (seen[i]) {
          if (!(tup[i] == v)) return;  // contradictory duplicate probe
          continue;
        }
        seen[i] = true;
        tup[i] = v;
      }
      for (bool s : seen) complete = complete && s;
      if (complete) {
        Rational m = t.data.multiplicity(tup);
        if (m != 0) fn(tup, m);
        return;
      }
    }
    std::vector<size_t> pat;
    pat.reserve(eq.size());
    for (const auto& [i, v] : eq)
      if (std::find(pat.begin(), pat.end(), i) == pat.end()) pat.push_back(i);
    std::sort(pat.begin(), pat.end());
    const auto& ix = ensure_index(t, pat);
    Tuple key;
    key.reserve(pat.size());
    for (size_t i : pat) {
      for (const auto& [j, v] : eq)
        if (j == i) {
          key.push_back(v);
          break;
        }
    }
    // Duplicate probes on one position must agree.
    for (const auto& [i, v] : eq) {
      size_t slot = static_cast<size_t>(std::find(pat.begin(), pat.end(), i) - pat.begin());
      if (!(key[slot] == v)) return;
    }
    auto hit = ix.find(key);
    if (hit == ix.end()) return;
    for (const auto& tup : hit->second) fn(tup, t.data.multiplicity(tup));
  }

  void fill_cache(ViewTable& v, const Tuple& prefix) {
    Env env{&v.info->inputVars, &prefix, nullptr, nullptr};
    Gmr g = evaluate(v.info->def, *this, env);
    // An empty result is not remembered: remembering it would obligate every
    // later trigger to keep the entry maintained, so probe patterns that never
    // produce data (the common case for higher-order deltas) would accumulate
    // maintenance work forever. Recomputing an empty point lookup on the next
    // probe is cheaper than maintaining it.
    if (g.entries().empty()) return;
    for (const auto& [tup, m] : g.entries()) {
      Tuple full = prefix;
      full.insert(full.end(), tup.begin(), tup.end());
      bump(v, full, m, true);
    }
    v.filled.insert(prefix);
    if (journaling_)
      journal_.push_back(JournalEntry{JournalEntry::Kind::Filled, nullptr, &v, prefix, Rational(0)});
  }

  void scan_impl(const std::string& name, bool isView,
                 const std::vector<std::pair<size_t, Value>>& eq,
                 const std::function<void(const Tuple&, const Rational&)>& fn) {
    counters_.scans++;
    if (!isView) {
      auto it = base_.find(name);
      if (it == base_.end()) throw EvalError("unknown relation: " + name);
      generic_scan(it->second, eq, fn);
      return;
    }
    auto it = views_.find(name);
    if (it == views_.end()) throw EvalError("unknown view: " + name);
    ViewTable& v = it->second;
    if (v.info->isCache) {
      size_t nin = v.info->inputVars.size();
      Tuple prefix(nin);
      std::vector<bool> have(nin, false);
      for (const auto& [i, val] : eq)
        if (i < nin) {
          prefix[i] = val;
          have[i] = true;
        }
      for (size_t i = 0; i < nin; ++i)
        if (!have[i])
          throw EvalError("cache " + name + " probed without binding input " +
                          v.info->inputVars[i]);
      if (!v.filled.count(prefix)) fill_cache(v, prefix);
    }
    generic_scan(v, eq, fn);
  }

  // --- trigger execution ---------------------------------------------------

  void run_trigger(const Trigger* trig, int sign, const std::string& rel, const Tuple& vals) {
    struct PendingDelta {
      const Statement* st;
      Tuple prefix;  // loop-over-target input binding, empty otherwise
      Gmr delta;
    };
    std::vector<PendingDelta> pending;
    const Schema* params = trig ? &trig->event.params : nullptr;
    Env evEnv{params, params ? &vals : nullptr, nullptr, nullptr};

    // Phase A: evaluate increment/decrement right-hand sides pre-update.
    Evaluator pre(*this);
    if (trig) {
      for (const auto& st : trig->statements) {
        if (st.op == Statement::Op::Assign) continue;
        try {
          if (st.loopOverTarget) {
            ViewTable& target = views_.at(st.view->name);
            std::vector<Tuple> prefixes(target.filled.begin(), target.filled.end());
            for (const auto& prefix : prefixes) {
              Env loopEnv{&st.view->inputVars, &prefix, &evEnv, nullptr};
              pending.push_back({&st, prefix, pre.eval(st.rhs, loopEnv)});
              counters_.statementsExecuted++;
            }
          } else {
            pending.push_back({&st, {}, pre.eval(st.rhs, evEnv)});
            counters_.statementsExecuted++;
          }
        } catch (const EvalError& e) {
          throw EvalError(std::string(e.what()) + "\n  in " + st.view->name +
                          " delta: " + print_query(st.rhs));
        }
      }
    }

    // Phase B: base-relation change, then the collected deltas in order.
    bump(base_.at(rel), vals, Rational(sign), true);
    for (const auto& pd : pending) {
      const Statement& st = *pd.st;
      ViewTable& target = views_.at(st.view->name);
      Env loopEnv{st.loopOverTarget ? &st.view->inputVars : nullptr,
                  st.loopOverTarget ? &pd.prefix : nullptr, &evEnv, nullptr};
      for (const auto& [tup, m] : pd.delta.entries()) {
        Env rowEnv{&pd.delta.schema(), &tup, &loopEnv, nullptr};
        Tuple key;
        key.reserve(st.keyTerms.size());
        for (const auto& kt : st.keyTerms) key.push_back(pre.eval_term(kt, rowEnv));
        bump(target, key, st.op == Statement::Op::SubAssign ? -m : m, true);
      }
    }

    // Phase C: full assignments against the post-update state, in order.
    if (trig) {
      for (const auto& st : trig->statements) {
        if (st.op != Statement::Op::Assign) continue;
        counters_.statementsExecuted++;
        Evaluator post(*this);
        Gmr g = post.eval(st.rhs, evEnv);
        ViewTable& target = views_.at(st.view->name);

        // Pinned key positions: key terms that do not depend on loop columns.
        std::vector<std::pair<size_t, Value>> pins;
        for (size_t i = 0; i < st.keyTerms.size(); ++i) {
          std::set<std::string> fv;
          free_vars_term(st.keyTerms[i], {}, fv);
          bool loopDependent = false;
          for (const auto& v : fv)
            if (schema_has(st.loopVars, v)) loopDependent = true;
          if (!loopDependent) pins.push_back({i, post.eval_term(st.keyTerms[i], evEnv)});
        }
        std::vector<std::pair<Tuple, Rational>> stale;
        for (const auto& [tup, m] : target.data.entries()) {
          bool match = true;
          for (const auto& [i, v] : pins)
            if (!(tup[i] == v)) {
              match = false;
              break;
            }
          if (match) stale.push_back({tup, m});
        }
        for (const auto& [tup, m] : stale) bump(target, tup, -m, true);
        for (const auto& [tup, m] : g.entries()) {
          Env rowEnv{&g.schema(), &tup, &evEnv, nullptr};
          Tuple key;
          key.reserve(st.keyTerms.size());
          for (const auto& kt : st.keyTerms) key.push_back(post.eval_term(kt, rowEnv));
          bump(target, key, m, true);
        }
      }
    }
  }

  bool table_indexes_consistent(const Table& t) const {
    for (const auto& [pat, ix] : t.idx) {
      size_t indexed = 0;
      for (const auto& [p, tuples] : ix) {
        for (const auto& tup : tuples) {
          if (t.data.multiplicity(tup) == 0) return false;
          if (!(project(tup, pat) == p)) return false;
          ++indexed;
        }
      }
      if (indexed != t.data.size()) return false;
    }
    return true;
  }

  Program prog_;
  std::map<std::string, Table> base_;
  std::map<std::string, ViewTable> views_;
  std::vector<JournalEntry> journal_;
  bool journaling_ = false;
  EngineCounters counters_;
};

}  // namespace deltaview
