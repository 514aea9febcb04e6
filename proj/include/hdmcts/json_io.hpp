#pragma once

#include <json.hpp>

#include "hdmcts/metrics.hpp"
#include "hdmcts/tree_store.hpp"

namespace hdmcts {

// Canonical text encoding shared by the wire format, config files and run
// reports. ordered_json keeps fields in insertion order, so dump() is stable.
using Json = nlohmann::ordered_json;

Json counters_to_json(const WorkerCounters &c);
WorkerCounters counters_from_json(const Json &j);

Json summary_to_json(const ReportSummary &summary);

Json history_to_json(const HistoryTable &table);
HistoryTable history_from_json(const Json &j);

/// Throws std::invalid_argument naming the offending key when `j` does not
/// contain exactly `keys` in that order.
void expect_fields(const Json &j, std::initializer_list<const char *> keys, const char *what);

}  // namespace hdmcts
