#pragma once

#include <string>
#include <vector>

#include "fusionnet/graph.hpp"

namespace fusionnet {

/// Compiled-in copy of data/multifusionnet_ledger.csv; the expected rows of
/// the full-scale m4 summary.
const std::string& multifusionnet_ledger_csv();

std::vector<LedgerRow> multifusionnet_ledger();

}  // namespace fusionnet
