#pragma once

#include <json.hpp>

#include "pvmle/bias.hpp"
#include "pvmle/dgp.hpp"
#include "pvmle/estimators.hpp"
#include "pvmle/io.hpp"
#include "pvmle/montecarlo.hpp"
#include "pvmle/semiparam.hpp"

namespace pvmle {

using json = nlohmann::ordered_json;

json to_json(const DesignConfig& c);
DesignConfig design_from_json(const json& j);

json to_json(const MCConfig& c);
MCConfig mc_config_from_json(const json& j);

ColumnSpec column_spec_from_json(const json& j);
json to_json(const ColumnSpec& s);

json to_json(const KernelConfig& c);
KernelConfig kernel_config_from_json(const json& j);

json to_json(const FitResult& fit);
json to_json(const BiasReport& rep);
json to_json(const SmlFit& fit);
json to_json(const MCSummary& s, bool include_records = false);
json to_json(const ReplicationRecord& rec);

// Flat CSV rows (with headers) for harness aggregation.
std::string fit_csv_header(const FitResult& fit);
std::string fit_csv_row(const FitResult& fit);
std::string sml_csv_header(const SmlFit& fit);
std::string sml_csv_row(const SmlFit& fit);

// FNV-1a hash of the canonical dump, for the run manifest.
std::string config_hash(const json& j);

}  // namespace pvmle
