// deltaview: compiled trigger programs. A program is a set of materialized
// views plus, per update event, a list of statements that keep every view
// fresh. Statements assign into a view at a key computed from trigger
// parameters and loop variables; their right-hand sides read other views
// (and, for reevaluation, base relations) but never re-derive state.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <string>
#include <vector>

#include "deltaview/ast.hpp"
#include "deltaview/delta.hpp"
#include "deltaview/sql.hpp"
#include "deltaview/text_ir.hpp"
#include "deltaview/trace.hpp"
#include "deltaview/views.hpp"

namespace deltaview {

struct Statement {
  enum class Op { AddAssign, SubAssign, Assign };
  Op op = Op::AddAssign;
  const ViewInfo* view = nullptr;
  /// One term per target key column, over trigger params and loop variables.
  std::vector<TermPtr> keyTerms;
  /// Schema of `rhs`; the statement fires once per tuple of the rhs result.
  Schema loopVars;
  QueryPtr rhs;
  /// Cache maintenance: additionally iterate the target's existing key
  /// bindings for its input-variable prefix, which the rhs may reference.
  bool loopOverTarget = false;
};

struct Trigger {
  UpdateEvent event;
  std::vector<Statement> statements;
};

struct Program {
  Catalog catalog;
  ViewRegistry registry;
  const ViewInfo* top = nullptr;
  std::vector<Trigger> triggers;
  RuleTrace trace;

  std::string dump() const;
};

// ---------------------------------------------------------------------------
// Validation: every name a statement consumes must be bound somewhere.
// ---------------------------------------------------------------------------

namespace progdetail {

inline void collect_view_bound(const QueryPtr& q, std::set<std::string>& bound) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation:
      for (const auto& c : q->cols) bound.insert(c);
      return;
    case QueryExpr::Kind::Singleton:
      for (const auto& c : q->scols) bound.insert(c);
      return;
    case QueryExpr::Kind::Empty:
      return;
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union:
      for (const auto& c : q->children) collect_view_bound(c, bound);
      return;
    case QueryExpr::Kind::Select:
    case QueryExpr::Kind::Rename:
      collect_view_bound(q->children[0], bound);
      return;
    case QueryExpr::Kind::Sum:
      for (const auto& c : q->groupBy) bound.insert(c);
      return;
  }
}

}  // namespace progdetail

/// Checks statement well-formedness: key terms and rhs may only reference
/// trigger parameters, loop variables and (for cache maintenance) the
/// target's input variables, and every loop variable must be produced by the
/// rhs. Throws StructureError naming the offending trigger and statement.
inline void validate_program(const Program& p) {
  int stmtNo = 0;
  for (const auto& trig : p.triggers) {
    std::set<std::string> params(trig.event.params.begin(), trig.event.params.end());
    for (const auto& st : trig.statements) {
      ++stmtNo;
      auto where = [&] {
        return " in statement " + std::to_string(stmtNo) + " of trigger " +
               (trig.event.sign >= 0 ? "+" : "-") + trig.event.relation;
      };
      if (!st.view) throw StructureError("statement without target" + where());
      if (st.keyTerms.size() != st.view->key.size())
        throw StructureError("key arity mismatch for " + st.view->name + where());
      std::set<std::string> bound = params;
      for (const auto& v : st.loopVars) bound.insert(v);
      if (st.loopOverTarget)
        for (const auto& v : st.view->inputVars) bound.insert(v);
      std::set<std::string> used;
      free_vars_query(st.rhs, {}, used);
      for (const auto& kt : st.keyTerms) free_vars_term(kt, {}, used);
      std::set<std::string> produced;
      progdetail::collect_view_bound(st.rhs, produced);
      for (const auto& u : used)
        if (!bound.count(u) && !produced.count(u))
          throw StructureError("unbound name '" + u + "'" + where());
      Schema rhsSchema = schema_of(st.rhs);
      if (rhsSchema.size() != st.loopVars.size())
        throw StructureError("loop variable arity mismatch" + where());
      for (size_t i = 0; i < rhsSchema.size(); ++i)
        if (rhsSchema[i] != st.loopVars[i])
          throw StructureError("loop variable '" + st.loopVars[i] +
                               "' not produced by rhs" + where());
    }
  }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

inline std::string Program::dump() const {
  std::string out;
  out += "relations:\n";
  for (const auto& r : catalog.rels) {
    out += std::string("  ") + (r.isStream ? "stream " : "table ") + r.name + "(";
    for (size_t i = 0; i < r.cols.size(); ++i) {
      if (i) out += ", ";
      out += r.cols[i];
      out += ':';
      out += static_cast<char>(r.types[i]);
    }
    out += ")\n";
  }
  out += "views:\n";
  for (const ViewInfo* v : registry.all()) {
    out += std::string("  ") + (v->isCache ? "cache " : "view ") + v->name + "[";
    for (size_t i = 0; i < v->key.size(); ++i) {
      if (i) out += ", ";
      out += v->key[i];
    }
    out += "] := " + print_query(v->def);
    if (!v->hint.empty()) out += "   ; " + v->hint;
    out += '\n';
  }
  int stmtNo = 0;
  for (const auto& trig : triggers) {
    out += std::string("trigger ") + (trig.event.sign >= 0 ? "+" : "-") +
           trig.event.relation + "(";
    for (size_t i = 0; i < trig.event.params.size(); ++i) {
      if (i) out += ", ";
      out += trig.event.params[i];
    }
    out += "):\n";
    for (const auto& st : trig.statements) {
      ++stmtNo;
      std::string no = std::to_string(stmtNo);
      if (no.size() < 2) no = "0" + no;
      out += "  " + no + ": ";
      if (st.loopOverTarget) {
        out += "foreach-key(";
        for (size_t i = 0; i < st.view->inputVars.size(); ++i) {
          if (i) out += ", ";
          out += st.view->inputVars[i];
        }
        out += "): ";
      }
      if (!st.loopVars.empty()) {
        out += "foreach(";
        for (size_t i = 0; i < st.loopVars.size(); ++i) {
          if (i) out += ", ";
          out += st.loopVars[i];
        }
        out += "): ";
      }
      out += st.view->name + "[";
      for (size_t i = 0; i < st.keyTerms.size(); ++i) {
        if (i) out += ", ";
        out += print_term(st.keyTerms[i]);
      }
      out += "] ";
      switch (st.op) {
        case Statement::Op::AddAssign: out += "+="; break;
        case Statement::Op::SubAssign: out += "-="; break;
        case Statement::Op::Assign: out += ":="; break;
      }
      out += " " + print_query(st.rhs) + "\n";
    }
  }
  return out;
}

}  // namespace deltaview
