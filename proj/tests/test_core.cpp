// Tests for scalar values and generalized multiset relations.
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "deltaview/gmr.hpp"

using namespace deltaview;

namespace {

Value S(const char* s) { return Value(std::string(s)); }
Value N(long long n) { return Value(Rational(n)); }

// The worked three-relation pipeline used across several tests:
// S1, S2 over (B, C); R over (A, B).
Gmr make_s1() {
  Gmr g({"B", "C"});
  g.add({S("b1"), S("c1")}, 2);
  g.add({S("b1"), S("c2")}, -10);
  return g;
}
Gmr make_s2() {
  Gmr g({"B", "C"});
  g.add({S("b1"), S("c1")}, 3);
  g.add({S("b1"), S("c2")}, 3);
  g.add({S("b2"), S("c1")}, -11);
  return g;
}
Gmr make_r() {
  Gmr g({"A", "B"});
  g.add({S("a"), S("b1")}, 2);
  g.add({S("a"), S("b2")}, -3);
  return g;
}

std::mt19937_64 rng(20260825);

Gmr random_gmr(const Schema& schema, int maxTuples = 8) {
  Gmr g(schema);
  std::uniform_int_distribution<int> nt(0, maxTuples);
  std::uniform_int_distribution<int> dv(-3, 3);
  std::uniform_int_distribution<int> dm(-5, 5);
  int n = nt(rng);
  for (int i = 0; i < n; ++i) {
    Tuple t;
    for (size_t c = 0; c < schema.size(); ++c) t.push_back(N(dv(rng)));
    g.add(t, dm(rng));
  }
  return g;
}

Gmr negate(const Gmr& g) { return gmr_scale(g, Rational(-1)); }

void check_compacted(const Gmr& g) {
  for (const auto& [t, m] : g.entries()) REQUIRE(m != 0);
}

}  // namespace

TEST_CASE("rational parsing and formatting") {
  CHECK(parse_rational("21.5") == Rational(43, 2));
  CHECK(parse_rational("-0.005") == Rational(-1, 200));
  CHECK(parse_rational("0.25") == Rational(1, 4));
  CHECK(parse_rational("43/2") == Rational(43, 2));
  CHECK(parse_rational("-7") == Rational(-7));
  CHECK(format_rational(Rational(43, 2)) == "43/2");
  CHECK(format_rational(Rational(-7)) == "-7");
  CHECK(format_rational(Rational(6, 3)) == "2");
  CHECK_THROWS_AS(parse_rational("1/0"), EvalError);
}

TEST_CASE("dates") {
  CHECK(days_from_civil(1970, 1, 1) == 0);
  CHECK(days_from_civil(1970, 1, 2) == 1);
  Date d = parse_date("1995-03-15");
  CHECK(format_date(d) == "1995-03-15");
  CHECK(parse_date("1995-03-15") < parse_date("1995-03-16"));
  Value v = Value::parse("1998-09-02");
  REQUIRE(v.is_date());
  CHECK(v.to_text() == "1998-09-02");
}

TEST_CASE("value ordering and comparison") {
  CHECK(Value::order_compare(N(1), N(2)) < 0);
  CHECK(Value::order_compare(S("a"), S("b")) < 0);
  // Full order across types (for containers) puts numbers before strings.
  CHECK(Value::order_compare(N(5), S("a")) < 0);
  // Query-level comparison across types is an error.
  CHECK_THROWS_AS(Value::query_compare(N(5), S("a")), EvalError);
  CHECK(N(2) == Value(Rational(4, 2)));
  CHECK(N(2).hash() == Value(Rational(4, 2)).hash());
}

TEST_CASE("union adds multiplicities") {
  Gmr u = gmr_union(make_s1(), make_s2());
  REQUIRE(u.size() == 3);
  CHECK(u.multiplicity({S("b1"), S("c1")}) == 5);
  CHECK(u.multiplicity({S("b1"), S("c2")}) == -7);
  CHECK(u.multiplicity({S("b2"), S("c1")}) == -11);
}

TEST_CASE("union identities") {
  Gmr r = make_r();
  CHECK(gmr_union(r, Gmr({"A", "B"})) == r);
  CHECK(gmr_union(r, negate(r)).empty());
}

TEST_CASE("natural join multiplies multiplicities") {
  Gmr j = gmr_join(make_r(), gmr_union(make_s1(), make_s2()));
  REQUIRE(j.schema() == Schema{"A", "B", "C"});
  REQUIRE(j.size() == 3);
  CHECK(j.multiplicity({S("a"), S("b1"), S("c1")}) == 10);
  CHECK(j.multiplicity({S("a"), S("b1"), S("c2")}) == -14);
  CHECK(j.multiplicity({S("a"), S("b2"), S("c1")}) == 33);
}

TEST_CASE("join identities and cross product") {
  Gmr r = make_r();
  CHECK(gmr_join(r, Gmr::singleton({}, {}, 1)) == r);
  Gmr a = Gmr::singleton({"A"}, {S("a")}, 2);
  Gmr b = Gmr::singleton({"B"}, {S("b")}, 3);
  Gmr ab = gmr_join(a, b);
  CHECK(ab.multiplicity({S("a"), S("b")}) == 6);
}

TEST_CASE("select keeps matching tuples") {
  Gmr u = gmr_union(make_s1(), make_s2());
  Gmr sel = gmr_select(u, [&](const Tuple& t) { return t[0] == S("b1"); });
  REQUIRE(sel.size() == 2);
  CHECK(sel.multiplicity({S("b1"), S("c1")}) == 5);
  CHECK(sel.multiplicity({S("b1"), S("c2")}) == -7);
  CHECK(gmr_select(u, [](const Tuple&) { return true; }) == u);
  CHECK(gmr_select(u, [](const Tuple&) { return false; }).empty());
}

TEST_CASE("sum aggregate with rational weight") {
  Gmr j = gmr_join(make_r(), gmr_union(make_s1(), make_s2()));
  Gmr agg = gmr_sum(j, {"A", "C"}, [](const Tuple&) { return Rational(1, 2); });
  REQUIRE(agg.size() == 2);
  CHECK(agg.multiplicity({S("a"), S("c1")}) == Rational(43, 2));
  CHECK(agg.multiplicity({S("a"), S("c1")}) == parse_rational("21.5"));
  CHECK(agg.multiplicity({S("a"), S("c2")}) == -7);

  Gmr r = make_r();
  CHECK(gmr_sum(r, r.schema(), [](const Tuple&) { return Rational(1); }) == r);

  Gmr total = gmr_sum(gmr_union(make_s1(), make_s2()), {},
                      [](const Tuple&) { return Rational(1); });
  CHECK(total.multiplicity({}) == -13);
}

TEST_CASE("rename") {
  Gmr g = Gmr::singleton({"A", "B"}, {S("a"), S("b")}, 1);
  Gmr r = gmr_rename(g, {{"B", "C"}});
  CHECK(r.schema() == Schema{"A", "C"});
  CHECK(r.multiplicity({S("a"), S("b")}) == 1);
  CHECK(gmr_rename(g, {}) == g);
  Gmr s1r = gmr_rename(make_s1(), {{"B", "B'"}, {"C", "C'"}});
  CHECK(s1r.schema() == Schema{"B'", "C'"});
  CHECK(s1r.multiplicity({S("b1"), S("c1")}) == 2);
  CHECK(s1r.multiplicity({S("b1"), S("c2")}) == -10);
  CHECK_THROWS_AS(gmr_rename(g, {{"B", "A"}}), StructureError);
}

TEST_CASE("singleton") {
  Gmr neg = Gmr::singleton({}, {}, -1);
  CHECK(neg.multiplicity({}) == -1);
  CHECK(Gmr::singleton({"A"}, {N(5)}, 0).empty());
  Gmr s = Gmr::singleton({"A", "B"}, {S("x"), S("y")}, 3);
  CHECK(gmr_union(s, s).multiplicity({S("x"), S("y")}) == 6);
}

TEST_CASE("serialization format and round trip") {
  Gmr j = gmr_join(make_r(), gmr_union(make_s1(), make_s2()));
  Gmr agg = gmr_sum(j, {"A", "C"}, [](const Tuple&) { return Rational(1, 2); });
  std::string text = gmr_to_text(agg);
  CHECK(text == "A=a\tC=c1 |-> 43/2\nA=a\tC=c2 |-> -7\n");
  Gmr back = gmr_parse(text, agg.schema());
  CHECK(back == agg);

  Gmr scalar = Gmr::singleton({}, {}, Rational(-13));
  CHECK(gmr_to_text(scalar) == "<> |-> -13\n");
  CHECK(gmr_parse(gmr_to_text(scalar), {}) == scalar);

  Gmr empty({"A", "B"});
  CHECK(gmr_to_text(empty) == "<empty schema='A,B'>\n");
  CHECK(gmr_parse(gmr_to_text(empty), {"A", "B"}) == empty);

  // Mixed value kinds round-trip through the untyped reader.
  Gmr mixed({"K", "D", "W"});
  mixed.add({S("key"), Value(parse_date("2026-08-25")), Value(Rational(-3, 7))}, Rational(5, 3));
  CHECK(gmr_parse(gmr_to_text(mixed), mixed.schema()) == mixed);
}

TEST_CASE("schema mismatch is a structural error") {
  CHECK_THROWS_AS(gmr_union(make_r(), make_s1()), StructureError);
  Gmr g({"A"});
  CHECK_THROWS_AS(g.add({S("a"), S("b")}, 1), StructureError);
}

TEST_CASE("additive group properties on random inputs") {
  Schema sch{"A", "B"};
  for (int i = 0; i < 200; ++i) {
    Gmr a = random_gmr(sch), b = random_gmr(sch), c = random_gmr(sch);
    CHECK(gmr_union(a, b) == gmr_union(b, a));
    CHECK(gmr_union(gmr_union(a, b), c) == gmr_union(a, gmr_union(b, c)));
    CHECK(negate(negate(a)) == a);
    CHECK(gmr_union(a, negate(a)).empty());
    check_compacted(gmr_union(a, b));
  }
}

TEST_CASE("join distributes over union") {
  Schema left{"A", "B"}, right{"B", "C"};
  for (int i = 0; i < 200; ++i) {
    Gmr a = random_gmr(left), b = random_gmr(left), c = random_gmr(right);
    Gmr lhs = gmr_join(gmr_union(a, b), c);
    Gmr rhs = gmr_union(gmr_join(a, c), gmr_join(b, c));
    CHECK(lhs == rhs);
    check_compacted(lhs);
  }
}

TEST_CASE("selection and aggregation are linear") {
  Schema sch{"A", "B"};
  auto pred = [](const Tuple& t) { return Value::order_compare(t[0], t[1]) < 0; };
  auto f = [](const Tuple& t) { return t[0].num() + 1; };
  for (int i = 0; i < 200; ++i) {
    Gmr a = random_gmr(sch), b = random_gmr(sch);
    CHECK(gmr_select(gmr_union(a, b), pred) ==
          gmr_union(gmr_select(a, pred), gmr_select(b, pred)));
    CHECK(gmr_sum(gmr_union(a, b), {"A"}, f) ==
          gmr_union(gmr_sum(a, {"A"}, f), gmr_sum(b, {"A"}, f)));
  }
}

TEST_CASE("serialization round trip on random inputs") {
  Schema sch{"A", "B", "C"};
  for (int i = 0; i < 100; ++i) {
    Gmr a = random_gmr(sch);
    CHECK(gmr_parse(gmr_to_text(a), sch) == a);
  }
}
