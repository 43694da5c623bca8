// deltaview: rewrite trace. Compilation records which of the four rewrite
// families fired while materializing a query's triggers: (1) join-graph
// decomposition, (2) polynomial expansion/factorization, (3) input-variable
// extraction (as a grouped subquery view or as a view cache), and (4)
// nested-aggregate handling (reevaluation or guarded incremental update).
// The trace is diagnostic output only; it never influences compilation.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace deltaview {

/// Which rewrites fired for one compiled query, with one note per firing.
struct RuleTrace {
  bool decomposed = false;        ///< rule 1: disconnected pieces materialized apart
  bool expanded = false;          ///< rule 2: a union/polynomial was expanded
  bool subqueryView = false;      ///< rule 3, S: correlated subquery became a keyed view
  bool viewCache = false;         ///< rule 3, C: input variable kept as a cache key
  bool reevalNested = false;      ///< rule 4, R: nested change forced reevaluation
  bool incrementalNested = false; ///< rule 4, I: nested aggregate maintained in place
  std::vector<std::string> notes;

  void fire1(const std::string& why) { decomposed = true; notes.push_back("rule1: " + why); }
  void fire2(const std::string& why) { expanded = true; notes.push_back("rule2: " + why); }
  void fire3(char kind, const std::string& why) {
    (kind == 'C' ? viewCache : subqueryView) = true;
    notes.push_back(std::string("rule3") + kind + ": " + why);
  }
  void fire4(char kind, const std::string& why) {
    (kind == 'R' ? reevalNested : incrementalNested) = true;
    notes.push_back(std::string("rule4") + kind + ": " + why);
  }

  /// Four tab-separated cells: "y"/"-" for rules 1 and 2, letter sets for
  /// rules 3 and 4 ("-" when nothing fired).
  std::string row() const {
    std::string r3;
    if (subqueryView) r3 += "S";
    if (viewCache) r3 += (r3.empty() ? "C" : ",C");
    std::string r4;
    if (reevalNested) r4 += "R";
    if (incrementalNested) r4 += (r4.empty() ? "I" : ",I");
    std::string out;
    out += decomposed ? "y" : "-";
    out += '\t';
    out += expanded ? "y" : "-";
    out += '\t';
    out += r3.empty() ? "-" : r3;
    out += '\t';
    out += r4.empty() ? "-" : r4;
    return out;
  }
};

}  // namespace deltaview
