#include "pfesta/costs/costs.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "pfesta/engine/tensor.hpp"

namespace pfesta::costs {

using transport::Category;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::PFESTA: return "pfesta";
    case Strategy::FESTA: return "festa";
    case Strategy::FL: return "fl";
    case Strategy::SL: return "sl";
  }
  return "unknown";
}

std::string_view display_name(Strategy s) {
  switch (s) {
    case Strategy::PFESTA: return "p-FeSTA";
    case Strategy::FESTA: return "FeSTA";
    case Strategy::FL: return "FL";
    case Strategy::SL: return "SL";
  }
  return "unknown";
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  for (auto st : kAllStrategies)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

void CostParams::validate() const {
  for (double v : {samples, batch, rounds, interval, feature_elements, gradient_elements, head_params, body_params,
                   tail_params}) {
    if (!(v >= 0) || !std::isfinite(v)) throw CostsError("cost parameters must be finite and non-negative");
  }
  if (interval <= 0) throw CostsError("unifying interval must be positive");
}

CostParams CostParams::scaled(double f) const {
  CostParams p = *this;
  p.feature_elements *= f;
  p.gradient_elements *= f;
  p.head_params *= f;
  p.body_params *= f;
  p.tail_params *= f;
  return p;
}

CostBreakdown cost_breakdown(Strategy s, const CostParams& p) {
  p.validate();
  const double br = p.batch * p.rounds;
  const double cycles = 2 * p.rounds / p.interval;
  CostBreakdown c;
  switch (s) {
    case Strategy::FL:
      c.parameters = cycles * (p.head_params + p.body_params + p.tail_params);
      break;
    case Strategy::SL:
      c.features = 2 * br * p.feature_elements;
      c.gradients = 2 * br * p.gradient_elements;
      break;
    case Strategy::FESTA:
      c.features = 2 * br * p.feature_elements;
      c.gradients = 2 * br * p.gradient_elements;
      c.parameters = cycles * (p.head_params + p.tail_params);
      break;
    case Strategy::PFESTA:
      c.features = p.samples * p.feature_elements + br * p.feature_elements;
      c.gradients = br * p.gradient_elements;
      c.parameters = 2 * p.rounds * p.tail_params / p.interval;
      break;
  }
  return c;
}

double cost_closed_form(Strategy s, const CostParams& p) {
  const auto br = p.batch * p.rounds;
  p.validate();
  switch (s) {
    case Strategy::FL: return 2 * p.rounds / p.interval * (p.head_params + p.body_params + p.tail_params);
    case Strategy::SL: return 2 * br * (p.feature_elements + p.gradient_elements);
    case Strategy::FESTA:
      return 2 * br * (p.feature_elements + p.gradient_elements) +
             2 * p.rounds / p.interval * (p.head_params + p.tail_params);
    case Strategy::PFESTA:
      return p.samples * p.feature_elements + br * (p.feature_elements + p.gradient_elements) +
             2 * p.rounds * p.tail_params / p.interval;
  }
  throw CostsError("unknown strategy");
}

namespace {
std::uint64_t exact_count(double v, const char* what) {
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-6 * std::max(1.0, std::abs(v)) || r < 0) {
    throw ContractError(std::string("closed-form ") + what + " count " + std::to_string(v) +
                        " is not an integer; the parameters do not describe a realizable run");
  }
  return static_cast<std::uint64_t>(r);
}
}  // namespace

bool LedgerComparison::pass() const {
  if (expected_total != measured_total) return false;
  for (const auto& c : categories)
    if (!c.ok()) return false;
  return true;
}

std::string LedgerComparison::to_text() const {
  std::ostringstream out;
  out << display_name(strategy) << " client " << client_id << ": " << (pass() ? "PASS" : "FAIL") << '\n';
  for (const auto& c : categories) {
    out << "  " << std::left << std::setw(11) << transport::to_string(c.category) << " expected " << c.expected
        << " measured " << c.measured << (c.ok() ? "" : "  <-- mismatch") << '\n';
  }
  out << "  total       expected " << expected_total << " measured " << measured_total << '\n';
  return out.str();
}

LedgerComparison verify_ledger(Strategy s, const CostParams& p, const transport::TrafficLedger& ledger,
                               std::uint32_t client_id) {
  const auto cost = cost_breakdown(s, p);
  LedgerComparison r{s, client_id, {}, 0, 0};
  const std::pair<Category, double> parts[] = {
      {Category::Features, cost.features}, {Category::Gradients, cost.gradients}, {Category::Parameters, cost.parameters}};
  for (const auto& [cat, expected] : parts) {
    CategoryCheck c{cat, exact_count(expected, "category"), ledger.elements(client_id, cat)};
    r.categories.push_back(c);
    r.measured_total += c.measured;
  }
  r.expected_total = exact_count(cost_closed_form(s, p), "total");
  return r;
}

namespace {
const char* const kSharedKeys[] = {"batch", "rounds", "interval", "feature_elements", "gradient_elements", "tasks"};
const char* const kTaskKeys[] = {"samples", "head_params", "body_params", "tail_params"};
}  // namespace

CostConstants load_constants(const util::KeyValueDoc& doc) {
  CostConstants out{{}, doc};
  std::set<std::string> known(std::begin(kSharedKeys), std::end(kSharedKeys));
  const auto names = util::split_list(doc.get_string("tasks"));
  if (names.empty()) throw CostsError(doc.source() + ": 'tasks' lists no task");
  for (const auto& t : names)
    for (const char* k : kTaskKeys) known.insert(t + "." + k);
  for (const auto& e : doc.entries())
    if (!known.contains(e.key)) throw CostsError(doc.source() + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
  for (const auto& t : names) {
    CostParams p;
    p.batch = doc.get_double("batch");
    p.rounds = doc.get_double("rounds");
    p.interval = doc.get_double("interval");
    p.feature_elements = doc.get_double("feature_elements");
    p.gradient_elements = doc.get_double("gradient_elements");
    p.samples = doc.get_double(t + ".samples");
    p.head_params = doc.get_double(t + ".head_params");
    p.body_params = doc.get_double(t + ".body_params");
    p.tail_params = doc.get_double(t + ".tail_params");
    p.validate();
    out.tasks.push_back({t, p});
  }
  return out;
}

CostConstants load_constants_file(const std::string& path) { return load_constants(util::KeyValueDoc::load(path)); }

std::vector<ReportRow> report_rows(const CostConstants& constants) {
  std::vector<ReportRow> rows;
  for (const auto& t : constants.tasks)
    for (auto s : kAllStrategies) rows.push_back({t.name, s, cost_breakdown(s, t.params)});
  return rows;
}

std::string format_millions(double elements) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3fM", elements / 1e6);
  return buf;
}

namespace {
std::string exchange_cell(const ReportRow& r) {
  return r.strategy == Strategy::FL ? "-" : format_millions(r.cost.exchange());
}
std::string parameter_cell(const ReportRow& r) {
  return r.strategy == Strategy::SL ? "-" : format_millions(r.cost.parameters);
}
}  // namespace

std::string cost_table_text(const CostConstants& constants, bool with_provenance) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "" << std::right << std::setw(14) << "Total" << std::setw(22)
      << "Features/gradients" << std::setw(14) << "Parameters" << '\n';
  std::string task;
  for (const auto& r : report_rows(constants)) {
    if (r.task != task) {
      task = r.task;
      out << task << '\n';
    }
    out << "  " << std::left << std::setw(12) << display_name(r.strategy) << std::right << std::setw(14)
        << format_millions(r.cost.total()) << std::setw(22) << exchange_cell(r) << std::setw(14) << parameter_cell(r)
        << '\n';
  }
  if (with_provenance) {
    out << "\nConstants (" << constants.source.source() << ")\n";
    for (const auto& e : constants.source.entries()) {
      out << "  " << e.key << " = " << e.value << '\n';
      for (const auto& n : e.notes) out << "      " << n << '\n';
    }
  }
  return out.str();
}

std::string cost_table_csv(const CostConstants& constants) {
  std::ostringstream out;
  out << "task,strategy,total,features_gradients,parameters\n";
  out << std::fixed << std::setprecision(0);
  for (const auto& r : report_rows(constants)) {
    out << r.task << ',' << to_string(r.strategy) << ',' << r.cost.total() << ',' << r.cost.exchange() << ','
        << r.cost.parameters << '\n';
  }
  return out.str();
}

}  // namespace pfesta::costs
