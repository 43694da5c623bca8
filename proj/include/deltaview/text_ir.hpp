// deltaview: s-expression text form for query expressions. The printer is
// deterministic and the parser accepts exactly what the printer emits, so
// print -> parse -> print round-trips bit-exactly.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>

#include "deltaview/ast.hpp"

namespace deltaview {

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

inline std::string print_term(const TermPtr& t);
inline std::string print_cond(const CondPtr& c);
inline std::string print_query(const QueryPtr& q);

inline std::string quote_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string print_term(const TermPtr& t) {
  switch (t->kind) {
    case Term::Kind::Constant:
      switch (t->value.kind()) {
        case Value::Kind::Number:
          return format_rational(t->value.num());
        case Value::Kind::String:
          return quote_string(t->value.str());
        case Value::Kind::CalendarDate:
          return "(date " + format_date(t->value.date()) + ")";
      }
      return "0";
    case Term::Kind::Variable:
      return t->name;
    case Term::Kind::Add:
      return "(+ " + print_term(t->lhs) + " " + print_term(t->rhs) + ")";
    case Term::Kind::Sub:
      return "(- " + print_term(t->lhs) + " " + print_term(t->rhs) + ")";
    case Term::Kind::Mul:
      return "(* " + print_term(t->lhs) + " " + print_term(t->rhs) + ")";
    case Term::Kind::Div:
      return "(/ " + print_term(t->lhs) + " " + print_term(t->rhs) + ")";
    case Term::Kind::Aggregate:
      return "(agg " + print_query(t->agg) + ")";
  }
  return "0";
}

inline std::string print_cond(const CondPtr& c) {
  if (!c) return "true";
  switch (c->kind) {
    case Condition::Kind::True:
      return "true";
    case Condition::Kind::False:
      return "false";
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::string out = c->kind == Condition::Kind::And ? "(and" : "(or";
      for (const auto& ch : c->children) out += " " + print_cond(ch);
      return out + ")";
    }
    case Condition::Kind::Not:
      return "(not " + print_cond(c->children[0]) + ")";
    case Condition::Kind::Cmp: {
      const char* op = nullptr;
      switch (c->op) {
        case Condition::CmpOp::Lt: op = "<"; break;
        case Condition::CmpOp::Le: op = "<="; break;
        case Condition::CmpOp::Eq: op = "="; break;
        case Condition::CmpOp::Ne: op = "!="; break;
      }
      return std::string("(") + op + " " + print_term(c->lhs) + " " + print_term(c->rhs) + ")";
    }
  }
  return "true";
}

inline std::string print_schema(const Schema& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " ";
    out += s[i];
  }
  return out + ")";
}

inline std::string print_query(const QueryPtr& q) {
  switch (q->kind) {
    case QueryExpr::Kind::Relation: {
      std::string head = q->isView ? "(view " : "(rel ";
      std::string out = head + q->rel + " " + print_schema(q->cols);
      if (!q->probes.empty() || q->isView) {
        out += " (";
        for (size_t i = 0; i < q->probes.size(); ++i) {
          if (i) out += " ";
          out += "(" + q->probes[i].first + " " + print_term(q->probes[i].second) + ")";
        }
        out += ")";
      }
      return out + ")";
    }
    case QueryExpr::Kind::Singleton: {
      std::string out = "(sing (";
      for (size_t i = 0; i < q->scols.size(); ++i) {
        if (i) out += " ";
        out += "(" + q->scols[i] + " " + print_term(q->svals[i]) + ")";
      }
      out += ") " + print_term(q->smult) + ")";
      return out;
    }
    case QueryExpr::Kind::Empty:
      return "(empty " + print_schema(q->cols) + ")";
    case QueryExpr::Kind::Join:
    case QueryExpr::Kind::Union: {
      std::string out = q->kind == QueryExpr::Kind::Join ? "(join" : "(union";
      for (const auto& c : q->children) out += " " + print_query(c);
      return out + ")";
    }
    case QueryExpr::Kind::Select:
      return "(select " + print_cond(q->cond) + " " + print_query(q->children[0]) + ")";
    case QueryExpr::Kind::Sum:
      return "(sum " + print_schema(q->groupBy) + " " + print_term(q->f) + " " +
             print_query(q->children[0]) + ")";
    case QueryExpr::Kind::Rename: {
      std::string out = "(rename (";
      for (size_t i = 0; i < q->renames.size(); ++i) {
        if (i) out += " ";
        out += "(" + q->renames[i].first + " " + q->renames[i].second + ")";
      }
      out += ") " + print_query(q->children[0]) + ")";
      return out;
    }
  }
  return "(empty ())";
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct SExpr {
  bool isList = false;
  std::string atom;          // when !isList; quoted strings keep their quotes
  std::vector<SExpr> items;  // when isList
};

class SExprParser {
 public:
  explicit SExprParser(const std::string& text) : s_(text) {}

  SExpr parse() {
    SExpr e = next();
    skip_ws();
    if (pos_ != s_.size()) throw StructureError("trailing characters in expression");
    return e;
  }

  /// Parses a sequence of top-level expressions (a program dump section).
  std::vector<SExpr> parse_all() {
    std::vector<SExpr> out;
    skip_ws();
    while (pos_ < s_.size()) {
      out.push_back(next());
      skip_ws();
    }
    return out;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == ';') {  // comment to end of line
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  SExpr next() {
    skip_ws();
    if (pos_ >= s_.size()) throw StructureError("unexpected end of expression");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      SExpr e;
      e.isList = true;
      skip_ws();
      while (pos_ < s_.size() && s_[pos_] != ')') {
        e.items.push_back(next());
        skip_ws();
      }
      if (pos_ >= s_.size()) throw StructureError("unbalanced parenthesis");
      ++pos_;
      return e;
    }
    if (c == ')') throw StructureError("unexpected ')'");
    SExpr e;
    if (c == '"') {
      std::string raw = "\"";
      ++pos_;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
          raw += s_[pos_ + 1];
          pos_ += 2;
        } else {
          raw += s_[pos_++];
        }
      }
      if (pos_ >= s_.size()) throw StructureError("unterminated string literal");
      ++pos_;
      e.atom = raw + "\"";
      return e;
    }
    size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) &&
           s_[pos_] != '(' && s_[pos_] != ')')
      ++pos_;
    e.atom = s_.substr(start, pos_ - start);
    return e;
  }

  const std::string& s_;
  size_t pos_ = 0;
};

inline TermPtr term_from_sexpr(const SExpr& e);
inline CondPtr cond_from_sexpr(const SExpr& e);
inline QueryPtr query_from_sexpr(const SExpr& e);

inline bool atom_is_number(const std::string& a) {
  if (a.empty()) return false;
  size_t i = (a[0] == '-' || a[0] == '+') ? 1 : 0;
  if (i >= a.size()) return false;
  for (; i < a.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(a[i])) && a[i] != '/' && a[i] != '.')
      return false;
  return std::isdigit(static_cast<unsigned char>(a[a[0] == '-' || a[0] == '+' ? 1 : 0]));
}

inline Schema schema_from_sexpr(const SExpr& e) {
  if (!e.isList) throw StructureError("expected column list");
  Schema s;
  for (const auto& it : e.items) s.push_back(it.atom);
  return s;
}

inline TermPtr term_from_sexpr(const SExpr& e) {
  if (!e.isList) {
    const std::string& a = e.atom;
    if (!a.empty() && a.front() == '"' && a.back() == '"')
      return term_const(Value(a.substr(1, a.size() - 2)));
    if (atom_is_number(a)) return term_const(Value(parse_rational(a)));
    if (a == "true" || a == "false") throw StructureError("boolean in term position");
    return term_var(a);
  }
  if (e.items.empty() || e.items[0].isList) throw StructureError("malformed term");
  const std::string& head = e.items[0].atom;
  if (head == "date") return term_const(Value(parse_date(e.items[1].atom)));
  if (head == "agg") return term_agg(query_from_sexpr(e.items[1]));
  if (head == "+") return term_add(term_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]));
  if (head == "-") return term_sub(term_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]));
  if (head == "*") return term_mul(term_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]));
  if (head == "/") return term_div(term_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]));
  throw StructureError("unknown term head: " + head);
}

inline CondPtr cond_from_sexpr(const SExpr& e) {
  if (!e.isList) {
    if (e.atom == "true") return cond_true();
    if (e.atom == "false") return cond_false();
    throw StructureError("unknown condition atom: " + e.atom);
  }
  const std::string& head = e.items[0].atom;
  if (head == "and" || head == "or") {
    std::vector<CondPtr> ch;
    for (size_t i = 1; i < e.items.size(); ++i) ch.push_back(cond_from_sexpr(e.items[i]));
    return head == "and" ? cond_and(std::move(ch)) : cond_or(std::move(ch));
  }
  if (head == "not") return cond_not(cond_from_sexpr(e.items[1]));
  Condition::CmpOp op;
  if (head == "<")
    op = Condition::CmpOp::Lt;
  else if (head == "<=")
    op = Condition::CmpOp::Le;
  else if (head == "=")
    op = Condition::CmpOp::Eq;
  else if (head == "!=")
    op = Condition::CmpOp::Ne;
  else
    throw StructureError("unknown condition head: " + head);
  return cond_cmp(op, term_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]));
}

inline QueryPtr query_from_sexpr(const SExpr& e) {
  if (!e.isList || e.items.empty()) throw StructureError("malformed query expression");
  const std::string& head = e.items[0].atom;
  if (head == "rel" || head == "view") {
    std::string name = e.items[1].atom;
    Schema cols = schema_from_sexpr(e.items[2]);
    std::vector<std::pair<std::string, TermPtr>> probes;
    if (e.items.size() > 3) {
      for (const auto& p : e.items[3].items)
        probes.push_back({p.items[0].atom, term_from_sexpr(p.items[1])});
    }
    return q_relation_probed(std::move(name), std::move(cols), head == "view",
                             std::move(probes));
  }
  if (head == "sing") {
    Schema cols;
    std::vector<TermPtr> vals;
    for (const auto& p : e.items[1].items) {
      cols.push_back(p.items[0].atom);
      vals.push_back(term_from_sexpr(p.items[1]));
    }
    return q_singleton(std::move(cols), std::move(vals), term_from_sexpr(e.items[2]));
  }
  if (head == "empty") return q_empty(schema_from_sexpr(e.items[1]));
  if (head == "join" || head == "union") {
    std::vector<QueryPtr> ch;
    for (size_t i = 1; i < e.items.size(); ++i) ch.push_back(query_from_sexpr(e.items[i]));
    return head == "join" ? q_join(std::move(ch)) : q_union(std::move(ch));
  }
  if (head == "select")
    return q_select(cond_from_sexpr(e.items[1]), query_from_sexpr(e.items[2]));
  if (head == "sum")
    return q_sum(schema_from_sexpr(e.items[1]), term_from_sexpr(e.items[2]),
                 query_from_sexpr(e.items[3]));
  if (head == "rename") {
    std::vector<std::pair<std::string, std::string>> rn;
    for (const auto& p : e.items[1].items) rn.push_back({p.items[0].atom, p.items[1].atom});
    return q_rename(std::move(rn), query_from_sexpr(e.items[2]));
  }
  throw StructureError("unknown query head: " + head);
}

inline QueryPtr parse_query(const std::string& text) {
  SExprParser p(text);
  return query_from_sexpr(p.parse());
}

inline TermPtr parse_term(const std::string& text) {
  SExprParser p(text);
  return term_from_sexpr(p.parse());
}

inline CondPtr parse_cond(const std::string& text) {
  SExprParser p(text);
  return cond_from_sexpr(p.parse());
}

}  // namespace deltaview
