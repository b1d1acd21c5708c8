#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfesta/transport/ledger.hpp"
#include "pfesta/util/keyvalue.hpp"

namespace pfesta::costs {

enum class Strategy { PFESTA, FESTA, FL, SL };
inline constexpr Strategy kAllStrategies[] = {Strategy::FL, Strategy::SL, Strategy::FESTA, Strategy::PFESTA};

std::string_view to_string(Strategy s);         // "pfesta", "festa", "fl", "sl"
std::string_view display_name(Strategy s);      // "p-FeSTA", "FeSTA", "FL", "SL"
std::optional<Strategy> strategy_from_string(std::string_view s);

// Element counts for one client link. Rounds over interval is used as a real
// number, so non-dividing intervals are allowed here.
struct CostParams {
  double samples = 0;            // training samples held by the client
  double batch = 0;              // samples per round
  double rounds = 0;
  double interval = 1;           // rounds between unifications
  double feature_elements = 0;   // per sample, one way
  double gradient_elements = 0;  // per sample, one way
  double head_params = 0;
  double body_params = 0;
  double tail_params = 0;

  void validate() const;
  CostParams scaled(double factor) const;  // every element count times factor
};

struct CostBreakdown {
  double features = 0;
  double gradients = 0;
  double parameters = 0;

  double exchange() const { return features + gradients; }
  double total() const { return features + gradients + parameters; }
};

// Per single client, both directions. Features:
//   FL      none
//   SL      2BR F        (uploaded features + returned body outputs)
//   FeSTA   2BR F
//   p-FeSTA D F + BR F   (one cached upload + body outputs)
// gradients: SL/FeSTA 2BR G, p-FeSTA BR G; parameters: FL (2R/n)(Ph+Pb+Pt),
// FeSTA (2R/n)(Ph+Pt), p-FeSTA 2R Pt/n.
CostBreakdown cost_breakdown(Strategy s, const CostParams& p);
double cost_closed_form(Strategy s, const CostParams& p);

struct CategoryCheck {
  transport::Category category;
  std::uint64_t expected = 0;
  std::uint64_t measured = 0;
  bool ok() const { return expected == measured; }
};

struct LedgerComparison {
  Strategy strategy;
  std::uint32_t client_id = 0;
  std::vector<CategoryCheck> categories;
  std::uint64_t expected_total = 0;
  std::uint64_t measured_total = 0;

  bool pass() const;
  std::string to_text() const;
};

// Exact integer comparison of one client's metered traffic against the closed
// form. Throws ContractError when the closed form is not an integer count.
LedgerComparison verify_ledger(Strategy s, const CostParams& p, const transport::TrafficLedger& ledger,
                               std::uint32_t client_id);

class CostsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TaskConstants {
  std::string name;
  CostParams params;
};

// Shared keys: batch, rounds, interval, feature_elements, gradient_elements, tasks.
// Per task <t>: <t>.samples, <t>.head_params, <t>.body_params, <t>.tail_params.
// Comment lines above a key are its provenance.
struct CostConstants {
  std::vector<TaskConstants> tasks;
  util::KeyValueDoc source;
};

CostConstants load_constants(const util::KeyValueDoc& doc);
CostConstants load_constants_file(const std::string& path);

struct ReportRow {
  std::string task;
  Strategy strategy;
  CostBreakdown cost;
};

std::vector<ReportRow> report_rows(const CostConstants& constants);

// Cells in millions of elements with 3 decimals ("-" where a strategy has no
// traffic of that kind).
std::string format_millions(double elements);
std::string cost_table_text(const CostConstants& constants, bool with_provenance);
std::string cost_table_csv(const CostConstants& constants);

}  // namespace pfesta::costs
