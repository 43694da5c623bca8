// deltaview: stream event files and workload generators. Event files are
// tab-separated lines `+|-<TAB>relation<TAB>value...` with values in declared
// column order; dates are written YYYY-MM-DD. The generators produce
// deterministic pseudo-random order-book and condensed-TPC-H-shaped streams
// whose key/foreign-key structure matches the workload catalogs.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deltaview/gmr.hpp"
#include "deltaview/sql.hpp"
#include "deltaview/value.hpp"

namespace deltaview {

struct StreamEvent {
  int sign = 1;
  std::string relation;
  Tuple vals;
};

// ---------------------------------------------------------------------------
// Parsing and serialization
// ---------------------------------------------------------------------------

inline Value parse_typed_value(const std::string& tok, ColType type) {
  switch (type) {
    case ColType::Number:
      return Value(parse_rational(tok));
    case ColType::Day:
      return Value(parse_date(tok));
    case ColType::Text:
    default:
      return Value(tok);
  }
}

inline std::vector<StreamEvent> parse_events(std::istream& in, const Catalog& cat) {
  std::vector<StreamEvent> out;
  std::string line;
  size_t lineNo = 0;
  auto fail = [&](const std::string& what) {
    throw EvalError("event stream line " + std::to_string(lineNo) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() < 2) fail("expected `+|-<TAB>relation<TAB>values...`");
    StreamEvent ev;
    if (f[0] == "+")
      ev.sign = 1;
    else if (f[0] == "-")
      ev.sign = -1;
    else
      fail("sign must be + or -, got `" + f[0] + "`");
    ev.relation = f[1];
    const RelationDecl* rd = cat.find(ev.relation);
    if (!rd) fail("unknown relation `" + ev.relation + "`");
    if (f.size() - 2 != rd->cols.size())
      fail(ev.relation + " expects " + std::to_string(rd->cols.size()) + " values, got " +
           std::to_string(f.size() - 2));
    for (size_t i = 0; i < rd->cols.size(); ++i) {
      try {
        ev.vals.push_back(parse_typed_value(f[i + 2], rd->types[i]));
      } catch (const std::exception& e) {
        fail("column " + rd->cols[i] + ": " + e.what());
      }
    }
    out.push_back(std::move(ev));
  }
  return out;
}

inline std::string event_to_line(const StreamEvent& ev) {
  std::string s = ev.sign > 0 ? "+" : "-";
  s += '\t';
  s += ev.relation;
  for (const auto& v : ev.vals) {
    s += '\t';
    s += v.to_text();
  }
  return s;
}

inline void write_events(std::ostream& out, const std::vector<StreamEvent>& events) {
  for (const auto& ev : events) out << event_to_line(ev) << '\n';
}

/// Folds a prefix of all-insert events (an initial-database file) into
/// per-relation multisets.
inline std::map<std::string, Gmr> events_to_db(const std::vector<StreamEvent>& events,
                                               const Catalog& cat) {
  std::map<std::string, Gmr> db;
  for (const auto& r : cat.rels) db.emplace(r.name, Gmr(r.cols));
  for (const auto& ev : events) db.at(ev.relation).add(ev.vals, Rational(ev.sign));
  return db;
}

// ---------------------------------------------------------------------------
// Deterministic RNG helpers. We draw through our own modulo reduction so
// streams are byte-identical across standard libraries.
// ---------------------------------------------------------------------------

namespace streamsdetail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  std::uint64_t next() {
    // xorshift64*; fixed algorithm keeps generated corpora stable.
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545f4914f6cdd1dull;
  }
  std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
  bool chance(double p) { return static_cast<double>(next() % 1000000) < p * 1000000.0; }

 private:
  std::uint64_t s_;
};

}  // namespace streamsdetail

// ---------------------------------------------------------------------------
// Order-book stream: Bids/Asks(t, id, broker_id, price, volume)
// ---------------------------------------------------------------------------

struct OrderbookOptions {
  std::uint64_t seed = 1;
  std::size_t events = 1000;
  std::size_t targetLive = 40;  // steady-state live orders per side
  long long brokers = 10;
  long long priceDomain = 50;
  long long volumeDomain = 50;
};

inline std::vector<StreamEvent> gen_orderbook_stream(const OrderbookOptions& opt) {
  streamsdetail::Rng rng(opt.seed);
  std::vector<StreamEvent> out;
  out.reserve(opt.events);
  std::vector<Tuple> live[2];  // 0 = bids, 1 = asks
  const char* names[2] = {"bids", "asks"};
  long long t = 0, id = 0;
  while (out.size() < opt.events) {
    int side = static_cast<int>(rng.below(2));
    bool insert;
    if (live[side].empty())
      insert = true;
    else if (live[side].size() >= opt.targetLive)
      insert = false;
    else
      insert = rng.chance(0.65);
    if (insert) {
      Tuple v{Value(Rational(t++)), Value(Rational(id++)),
              Value(Rational(static_cast<long long>(rng.below(opt.brokers)))),
              Value(Rational(1 + static_cast<long long>(rng.below(opt.priceDomain)))),
              Value(Rational(1 + static_cast<long long>(rng.below(opt.volumeDomain))))};
      live[side].push_back(v);
      out.push_back(StreamEvent{+1, names[side], std::move(v)});
    } else {
      size_t k = rng.below(live[side].size());
      out.push_back(StreamEvent{-1, names[side], live[side][k]});
      live[side][k] = live[side].back();
      live[side].pop_back();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Condensed TPC-H-shaped stream.
//
// Schemas: customer(custkey, nationkey, acctbal, mktsegment),
// orders(orderkey, custkey, orderdate, shippriority), lineitem(orderkey,
// partkey, suppkey, quantity, extendedprice, discount, shipdate),
// part(partkey, type), supplier(suppkey, nationkey), partsupp(partkey,
// suppkey, availqty, supplycost). The nation relation is a static table and
// is not part of the stream.
//
// Orders hover near `activeOrders` (deletions remove the order's remaining
// lineitems first, keeping foreign keys sound); customer, part, supplier and
// partsupp rows are inserted and never deleted. `dimFrontLoad` > 0 pushes all
// dimension insertions into that leading fraction of the stream.
// ---------------------------------------------------------------------------

struct TpchOptions {
  std::uint64_t seed = 1;
  std::size_t events = 10000;
  long long activeOrders = 100;
  long long customers = 50;
  long long parts = 30;
  long long suppliers = 10;
  long long nations = 5;
  double dimFrontLoad = 0;  // 0 = dimensions interleaved across the stream
};

inline std::vector<StreamEvent> gen_tpch_stream(const TpchOptions& opt) {
  streamsdetail::Rng rng(opt.seed);
  std::vector<StreamEvent> out;
  out.reserve(opt.events + 8);

  static const char* segments[5] = {"AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD",
                                    "MACHINERY"};
  static const char* types[6] = {"ECONOMY BRUSHED TIN",  "LARGE POLISHED COPPER",
                                 "MEDIUM PLATED BRASS",  "PROMO ANODIZED STEEL",
                                 "SMALL BURNISHED NICKEL", "STANDARD PLATED TIN"};
  const std::int32_t day0 = days_from_civil(1994, 6, 1);
  const std::int32_t daySpan = 1460;  // through mid-1998, covering all query windows

  long long nextCust = 0, nextPart = 0, nextSupp = 0, nextOrder = 0;
  struct LiveOrder {
    Tuple row;
    std::vector<Tuple> lineitems;
  };
  std::vector<LiveOrder> orders;

  auto val = [](long long x) { return Value(Rational(x)); };
  auto emit = [&](int sign, const char* rel, Tuple v) {
    out.push_back(StreamEvent{sign, rel, std::move(v)});
  };
  auto add_customer = [&]() {
    emit(+1, "customer",
         Tuple{val(nextCust), val(static_cast<long long>(rng.below(opt.nations))),
               val(static_cast<long long>(rng.below(20001)) - 10000),
               Value(std::string(segments[rng.below(5)]))});
    nextCust++;
  };
  auto add_supplier = [&]() {
    emit(+1, "supplier",
         Tuple{val(nextSupp), val(static_cast<long long>(rng.below(opt.nations)))});
    nextSupp++;
  };
  auto add_part = [&]() {
    emit(+1, "part", Tuple{val(nextPart), Value(std::string(types[rng.below(6)]))});
    // Each part is supplied by 1-2 existing suppliers.
    size_t nsup = 1 + rng.below(2);
    for (size_t i = 0; i < nsup && nextSupp > 0; ++i)
      emit(+1, "partsupp",
           Tuple{val(nextPart), val(static_cast<long long>(rng.below(nextSupp))),
                 val(1 + static_cast<long long>(rng.below(1000))),
                 val(1 + static_cast<long long>(rng.below(1000)))});
    nextPart++;
  };
  auto add_lineitem = [&](LiveOrder& o) {
    Tuple li{o.row[0],
             val(static_cast<long long>(rng.below(nextPart))),
             val(static_cast<long long>(rng.below(nextSupp))),
             val(1 + static_cast<long long>(rng.below(50))),
             val(900 + static_cast<long long>(rng.below(99101))),
             Value(Rational(static_cast<long long>(rng.below(11)), 100)),
             Value(Date{day0 + static_cast<std::int32_t>(rng.below(daySpan))})};
    o.lineitems.push_back(li);
    emit(+1, "lineitem", std::move(li));
  };
  auto add_order = [&]() {
    LiveOrder o;
    o.row = Tuple{val(nextOrder), val(static_cast<long long>(rng.below(nextCust))),
                  Value(Date{day0 + static_cast<std::int32_t>(rng.below(daySpan))}),
                  val(static_cast<long long>(rng.below(2)))};
    nextOrder++;
    emit(+1, "orders", Tuple(o.row));
    orders.push_back(std::move(o));
    size_t nli = 1 + rng.below(4);
    for (size_t i = 0; i < nli; ++i) add_lineitem(orders.back());
  };
  auto delete_order = [&]() {
    size_t k = rng.below(orders.size());
    for (const auto& li : orders[k].lineitems) emit(-1, "lineitem", li);
    emit(-1, "orders", orders[k].row);
    orders[k] = std::move(orders.back());
    orders.pop_back();
  };

  // Minimal seed so every foreign key has a referent.
  size_t seedCust = static_cast<size_t>(std::min<long long>(opt.customers, 5));
  size_t seedSupp = static_cast<size_t>(std::min<long long>(opt.suppliers, 2));
  size_t seedPart = static_cast<size_t>(std::min<long long>(opt.parts, 4));
  for (size_t i = 0; i < seedCust; ++i) add_customer();
  for (size_t i = 0; i < seedSupp; ++i) add_supplier();
  for (size_t i = 0; i < seedPart; ++i) add_part();

  const long long low = opt.activeOrders / 2;
  const long long high = opt.activeOrders + opt.activeOrders / 2;
  while (out.size() < opt.events) {
    bool dimsOpen = opt.dimFrontLoad <= 0 ||
                    out.size() < static_cast<size_t>(opt.dimFrontLoad *
                                                     static_cast<double>(opt.events));
    bool wantCust = dimsOpen && nextCust < opt.customers;
    bool wantPart = dimsOpen && nextPart < opt.parts;
    bool wantSupp = dimsOpen && nextSupp < opt.suppliers;
    long long liveOrders = static_cast<long long>(orders.size());
    if (liveOrders >= high) {
      delete_order();
    } else if (wantCust && rng.chance(opt.dimFrontLoad > 0 ? 0.4 : 0.06)) {
      add_customer();
    } else if (wantSupp && rng.chance(opt.dimFrontLoad > 0 ? 0.3 : 0.03)) {
      add_supplier();
    } else if (wantPart && rng.chance(opt.dimFrontLoad > 0 ? 0.35 : 0.05)) {
      add_part();
    } else if (liveOrders < low || liveOrders == 0) {
      add_order();
    } else if (rng.chance(0.10) && liveOrders > 0) {
      delete_order();
    } else if (rng.chance(0.25) && liveOrders > 0) {
      add_lineitem(orders[rng.below(orders.size())]);
    } else {
      add_order();
    }
  }
  out.resize(opt.events);
  return out;
}

/// Static nation rows (a table, loaded as initial data rather than streamed).
inline std::vector<StreamEvent> gen_nation_rows(long long nations) {
  std::vector<StreamEvent> out;
  for (long long k = 0; k < nations; ++k)
    out.push_back(
        StreamEvent{+1, "nation", Tuple{Value(Rational(k)), Value(Rational(k / 2))}});
  return out;
}

}  // namespace deltaview
