// deltaview: SQL frontend — catalog DDL (CREATE STREAM/TABLE) and a
// SELECT-SUM-FROM-WHERE-GROUP BY subset sufficient for the bundled
// workloads, translated into the query algebra.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>

#include "deltaview/ast.hpp"

namespace deltaview {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

enum class ColType : char { Number = 'n', Text = 's', Day = 'd' };

struct RelationDecl {
  std::string name;
  Schema cols;
  std::vector<ColType> types;
  bool isStream = true;  // streams get update triggers; tables are static
};

struct Catalog {
  std::vector<RelationDecl> rels;

  const RelationDecl* find(const std::string& name) const {
    for (const auto& r : rels)
      if (r.name == name) return &r;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Tokenizer (shared by catalog and query parsing)
// ---------------------------------------------------------------------------

namespace sqldetail {

struct Token {
  enum class Kind { Ident, Number, String, Punct, End };
  Kind kind;
  std::string text;  // idents lowercased; punct as written
};

inline std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  size_t i = 0;
  auto peek = [&](size_t k) { return i + k < s.size() ? s[i + k] : '\0'; };
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && peek(1) == '-') {  // comment to end of line
      while (i < s.size() && s[i] != '\n') ++i;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
        ++i;
      std::string t = s.substr(start, i - start);
      for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      out.push_back({Token::Kind::Ident, t});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      size_t start = i;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.'))
        ++i;
      out.push_back({Token::Kind::Number, s.substr(start, i - start)});
      continue;
    }
    if (c == '\'') {
      ++i;
      std::string lit;
      while (i < s.size() && s[i] != '\'') lit += s[i++];
      if (i >= s.size()) throw ParseError("unterminated string literal");
      ++i;
      out.push_back({Token::Kind::String, lit});
      continue;
    }
    // Multi-char operators.
    if ((c == '<' && (peek(1) == '=' || peek(1) == '>')) || (c == '>' && peek(1) == '=') ||
        (c == '!' && peek(1) == '=')) {
      out.push_back({Token::Kind::Punct, s.substr(i, 2)});
      i += 2;
      continue;
    }
    if (std::string("(),.;=<>+-*/").find(c) != std::string::npos) {
      out.push_back({Token::Kind::Punct, std::string(1, c)});
      ++i;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'");
  }
  out.push_back({Token::Kind::End, ""});
  return out;
}

}  // namespace sqldetail

// ---------------------------------------------------------------------------
// Catalog parser: CREATE STREAM|TABLE name(col type, ...);
// ---------------------------------------------------------------------------

inline Catalog parse_catalog(const std::string& text) {
  using sqldetail::Token;
  auto toks = sqldetail::tokenize(text);
  size_t p = 0;
  auto cur = [&]() -> const Token& { return toks[p]; };
  auto eat = [&]() -> const Token& { return toks[p++]; };
  auto expect = [&](const std::string& t) {
    if (cur().text != t) throw ParseError("expected '" + t + "' got '" + cur().text + "'");
    ++p;
  };
  Catalog cat;
  while (cur().kind != Token::Kind::End) {
    expect("create");
    bool isStream;
    if (cur().text == "stream") {
      isStream = true;
    } else if (cur().text == "table") {
      isStream = false;
    } else {
      throw ParseError("expected STREAM or TABLE, got '" + cur().text + "'");
    }
    ++p;
    RelationDecl rel;
    rel.isStream = isStream;
    rel.name = eat().text;
    expect("(");
    while (true) {
      std::string col = eat().text;
      std::string ty = eat().text;
      ColType ct;
      if (ty == "int" || ty == "bigint" || ty == "decimal" || ty == "number" ||
          ty == "numeric" || ty == "float" || ty == "double")
        ct = ColType::Number;
      else if (ty == "varchar" || ty == "char" || ty == "text" || ty == "string")
        ct = ColType::Text;
      else if (ty == "date")
        ct = ColType::Day;
      else
        throw ParseError("unknown column type: " + ty);
      // Optional length argument, e.g. varchar(25).
      if (cur().text == "(") {
        ++p;
        while (cur().text != ")") ++p;
        ++p;
      }
      rel.cols.push_back(col);
      rel.types.push_back(ct);
      if (cur().text == ",") {
        ++p;
        continue;
      }
      break;
    }
    expect(")");
    if (cur().text == ";") ++p;
    cat.rels.push_back(std::move(rel));
  }
  return cat;
}

// ---------------------------------------------------------------------------
// Query parser
// ---------------------------------------------------------------------------

namespace sqldetail {

struct Atom {
  std::string alias;
  const RelationDecl* rel;
};

struct Scope {
  std::vector<Atom> atoms;
  const Scope* parent = nullptr;

  /// Resolves a column reference to its globally unique "alias.col" name.
  std::string resolve(const std::string& alias, const std::string& col) const {
    for (const Scope* s = this; s; s = s->parent)
      for (const auto& a : s->atoms)
        if (a.alias == alias) {
          if (!schema_has(a.rel->cols, col))
            throw ParseError("relation " + a.rel->name + " has no column " + col);
          return alias + "." + col;
        }
    throw ParseError("unknown alias: " + alias);
  }

  std::string resolve_bare(const std::string& col) const {
    for (const Scope* s = this; s; s = s->parent) {
      const Atom* found = nullptr;
      for (const auto& a : s->atoms)
        if (schema_has(a.rel->cols, col)) {
          if (found) throw ParseError("ambiguous column: " + col);
          found = &a;
        }
      if (found) return found->alias + "." + col;
    }
    throw ParseError("unknown column: " + col);
  }
};

class QueryParser {
 public:
  QueryParser(const std::string& sql, const Catalog& cat)
      : toks_(tokenize(sql)), cat_(cat) {}

  QueryPtr parse() {
    QueryPtr q = parse_select(nullptr, /*scalar=*/false);
    if (cur().text == ";") ++p_;
    if (cur().kind != Token::Kind::End) throw ParseError("trailing tokens after query");
    return q;
  }

 private:
  const Token& cur(size_t k = 0) const { return toks_[std::min(p_ + k, toks_.size() - 1)]; }
  const Token& eat() { return toks_[p_++]; }
  bool accept(const std::string& t) {
    if (cur().text == t) {
      ++p_;
      return true;
    }
    return false;
  }
  void expect(const std::string& t) {
    if (!accept(t)) throw ParseError("expected '" + t + "' got '" + cur().text + "'");
  }

  QueryPtr parse_select(const Scope* parent, bool scalar) {
    expect("select");
    // Select items: either column references (the group-by key) or a single
    // SUM(expr); '*' means every column of every atom with f = 1.
    struct Item {
      bool isSum;
      bool isStar;
      // For non-sum items the tokens are re-parsed after FROM resolution.
      size_t startTok, endTok;
    };
    std::vector<Item> items;
    bool star = false;
    while (true) {
      if (cur().text == "*") {
        ++p_;
        star = true;
      } else {
        Item it{false, false, p_, p_};
        if (cur().text == "sum") it.isSum = true;
        // Skip to the end of this item (comma at depth 0 or FROM).
        int depth = 0;
        while (!(depth == 0 && (cur().text == "," || cur().text == "from")) &&
               cur().kind != Token::Kind::End) {
          if (cur().text == "(") ++depth;
          if (cur().text == ")") --depth;
          ++p_;
        }
        it.endTok = p_;
        items.push_back(it);
      }
      if (!accept(",")) break;
    }
    expect("from");
    Scope scope;
    scope.parent = parent;
    while (true) {
      std::string relName = eat().text;
      const RelationDecl* rel = cat_.find(relName);
      if (!rel) throw ParseError("unknown relation: " + relName);
      std::string alias = relName;
      accept("as");
      if (cur().kind == Token::Kind::Ident && cur().text != "where" && cur().text != "group" &&
          cur().text != "," && !is_keyword(cur().text))
        alias = eat().text;
      for (const auto& a : scope.atoms)
        if (a.alias == alias) throw ParseError("duplicate alias: " + alias);
      scope.atoms.push_back({alias, rel});
      if (!accept(",")) break;
    }

    CondPtr where = cond_true();
    if (accept("where")) where = parse_or(scope);

    Schema groupBy;
    if (accept("group")) {
      expect("by");
      while (true) {
        groupBy.push_back(parse_colref(scope));
        if (!accept(",")) break;
      }
    }

    // Build atoms with alias-qualified instance columns.
    std::vector<QueryPtr> atoms;
    for (const auto& a : scope.atoms) {
      Schema cols;
      for (const auto& c : a.rel->cols) cols.push_back(a.alias + "." + c);
      atoms.push_back(q_relation(a.rel->name, std::move(cols)));
    }
    QueryPtr body = q_select(where, q_join(std::move(atoms)));

    // Re-parse the saved select items under the now-known scope.
    TermPtr f;
    Schema keyCols;
    if (star) {
      for (const auto& a : scope.atoms)
        for (const auto& c : a.rel->cols) keyCols.push_back(a.alias + "." + c);
      f = term_num(1);
    }
    size_t resume = p_;
    for (const auto& it : items) {
      p_ = it.startTok;
      if (it.isSum) {
        if (f && !star) throw ParseError("multiple aggregates are not supported");
        expect("sum");
        expect("(");
        f = parse_expr(scope);
        expect(")");
        if (accept("as")) eat();
      } else {
        keyCols.push_back(parse_colref(scope));
        if (accept("as")) eat();
      }
      if (p_ != it.endTok) throw ParseError("unsupported select item");
    }
    p_ = resume;

    if (scalar) {
      if (!groupBy.empty()) throw ParseError("scalar subquery cannot have GROUP BY");
      if (!keyCols.empty()) throw ParseError("scalar subquery selects a single aggregate");
      if (!f) throw ParseError("scalar subquery needs an aggregate");
      return q_sum({}, f, body);
    }
    if (!f) f = term_num(1);
    if (!groupBy.empty()) {
      // GROUP BY must agree with the non-aggregate select items (as a set);
      // the select-item order defines the output schema.
      for (const auto& c : keyCols)
        if (!schema_has(groupBy, c)) throw ParseError("select item not in GROUP BY: " + c);
      for (const auto& c : groupBy)
        if (!schema_has(keyCols, c)) throw ParseError("GROUP BY column not selected: " + c);
    }
    return q_sum(keyCols, f, body);
  }

  static bool is_keyword(const std::string& t) {
    return t == "select" || t == "from" || t == "where" || t == "group" || t == "by" ||
           t == "and" || t == "or" || t == "not" || t == "as" || t == "sum" || t == "date";
  }

  std::string parse_colref(const Scope& scope) {
    std::string first = eat().text;
    if (accept(".")) {
      std::string col = eat().text;
      return scope.resolve(first, col);
    }
    return scope.resolve_bare(first);
  }

  CondPtr parse_or(const Scope& scope) {
    std::vector<CondPtr> parts{parse_and(scope)};
    while (accept("or")) parts.push_back(parse_and(scope));
    return cond_or(std::move(parts));
  }

  CondPtr parse_and(const Scope& scope) {
    std::vector<CondPtr> parts{parse_not(scope)};
    while (accept("and")) parts.push_back(parse_not(scope));
    return cond_and(std::move(parts));
  }

  CondPtr parse_not(const Scope& scope) {
    if (accept("not")) return cond_not(parse_not(scope));
    if (cur().text == "(" && looks_like_cond_paren()) {
      expect("(");
      CondPtr c = parse_or(scope);
      expect(")");
      return c;
    }
    return parse_cmp(scope);
  }

  /// Distinguishes "(cond)" from a parenthesized arithmetic/select operand.
  bool looks_like_cond_paren() const {
    // Scan ahead for a comparison operator or AND/OR at depth 1 before the
    // matching close paren; a top-level SELECT means a scalar subquery.
    int depth = 0;
    for (size_t k = 0;; ++k) {
      const Token& t = cur(k);
      if (t.kind == Token::Kind::End) return false;
      if (t.text == "(") ++depth;
      if (t.text == ")") {
        --depth;
        if (depth == 0) return false;
      }
      if (depth == 1) {
        if (t.text == "select") return false;
        if (t.text == "=" || t.text == "<" || t.text == "<=" || t.text == ">" ||
            t.text == ">=" || t.text == "<>" || t.text == "!=" || t.text == "and" ||
            t.text == "or")
          return true;
      }
    }
  }

  CondPtr parse_cmp(const Scope& scope) {
    TermPtr lhs = parse_expr(scope);
    std::string op = eat().text;
    TermPtr rhs = parse_expr(scope);
    if (op == "=") return cond_cmp(Condition::CmpOp::Eq, lhs, rhs);
    if (op == "<>" || op == "!=") return cond_cmp(Condition::CmpOp::Ne, lhs, rhs);
    if (op == "<") return cond_cmp(Condition::CmpOp::Lt, lhs, rhs);
    if (op == "<=") return cond_cmp(Condition::CmpOp::Le, lhs, rhs);
    if (op == ">") return cond_cmp(Condition::CmpOp::Lt, rhs, lhs);
    if (op == ">=") return cond_cmp(Condition::CmpOp::Le, rhs, lhs);
    throw ParseError("expected comparison operator, got '" + op + "'");
  }

  TermPtr parse_expr(const Scope& scope) {
    TermPtr t = parse_term(scope);
    while (cur().text == "+" || cur().text == "-") {
      bool add = eat().text == "+";
      TermPtr r = parse_term(scope);
      t = add ? term_add(t, r) : term_sub(t, r);
    }
    return t;
  }

  TermPtr parse_term(const Scope& scope) {
    TermPtr t = parse_factor(scope);
    while (cur().text == "*" || cur().text == "/") {
      bool mul = eat().text == "*";
      TermPtr r = parse_factor(scope);
      t = mul ? term_mul(t, r) : term_div(t, r);
    }
    return t;
  }

  TermPtr parse_factor(const Scope& scope) {
    if (accept("-")) return term_sub(term_num(0), parse_factor(scope));
    if (cur().kind == Token::Kind::Number) return term_const(Value(parse_rational(eat().text)));
    if (cur().kind == Token::Kind::String) return term_const(Value(std::string(eat().text)));
    if (cur().text == "date") {
      ++p_;
      bool paren = accept("(");
      if (cur().kind != Token::Kind::String) throw ParseError("DATE expects a string literal");
      TermPtr t = term_const(Value(parse_date(eat().text)));
      if (paren) expect(")");
      return t;
    }
    if (cur().text == "(") {
      if (cur(1).text == "select") {
        expect("(");
        QueryPtr sub = parse_select(&scope, /*scalar=*/true);
        expect(")");
        return term_agg(sub);
      }
      expect("(");
      TermPtr t = parse_expr(scope);
      expect(")");
      return t;
    }
    if (cur().kind == Token::Kind::Ident) return term_var(parse_colref(scope));
    throw ParseError("unexpected token in expression: '" + cur().text + "'");
  }

  std::vector<Token> toks_;
  size_t p_ = 0;
  const Catalog& cat_;
};

}  // namespace sqldetail

inline QueryPtr parse_sql(const std::string& sql, const Catalog& cat) {
  sqldetail::QueryParser p(sql, cat);
  return p.parse();
}

}  // namespace deltaview
