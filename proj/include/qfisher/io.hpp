#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfisher/bounds.hpp"
#include "qfisher/fisher.hpp"
#include "qfisher/models.hpp"
#include "qfisher/quantizers.hpp"
#include "qfisher/simulate.hpp"

namespace qfisher {

using Json = nlohmann::ordered_json;

/// Nine significant digits, '.' decimal separator, "inf"/"nan" spelled out.
std::string format_number(double value);
/// value rounded to nine significant digits, for JSON output.
double round_sig9(double value);
/// JSON number rounded to nine significant digits; non-finite values become
/// the strings "inf", "-inf" and "nan".
Json json_number(double value);
Json json_vector(const Vector& v);
Json json_matrix(const Matrix& m);

/// Parses JSON text; throws Error(Parse) with the parser's message.
Json parse_json_text(const std::string& text, const std::string& what);
Json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);

/// Model from its JSON description. Field errors name the JSON path below
/// `path`, e.g. "model.sigma".
Model parse_model(const Json& j, const std::string& path = "model");
Json model_to_json(const Model& model);

/// Comma-separated list or JSON array of numbers.
Vector parse_vector(const std::string& text, const std::string& what);

/// Quantizer spec: identity, onecell, sign@c, cells@[b1,...], csv@path,
/// coords@[j1,...] (1-based coordinates, threshold 0).
Quantizer parse_quantizer_spec(const std::string& spec, const Model& model);

/// DiscreteTable from CSV: one row per support point, one column per message.
Quantizer load_table_csv(const std::string& path);

/// {"n":2,"k":1,"nodes":[{"label":1,"bit":"sign@0.0"},...]}; labels are 1-based.
ProtocolTree parse_tree(const Json& j);
Json tree_to_json(const ProtocolTree& tree);

Json to_json(const FisherReport& report);
Json to_json(const BoundCertificate& cert);
Json to_json(const LowerBound& bound);
Json to_json(const I0Result& result);
Json to_json(const SlopeFit& fit);
std::string to_string(BoundRegime regime);

/// One sweep of experiments: every (n, k) pair of the lists shares the rest
/// of the configuration. `fit` names the swept axis for slope_fit.
struct SweepConfig {
  ExperimentConfig base;
  std::vector<int> ns;
  std::vector<int> ks;
  std::optional<std::string> fit;  // "n" or "k"
  Json resolved;                   // normalized echo of the input
};

/// Accepts one sweep object or {"sweeps": [...]}. Errors name the JSON path.
std::vector<SweepConfig> parse_simulate_config(const Json& j);

Json to_json(const ExperimentConfig& config, const RiskEstimate& estimate);

inline constexpr const char* kResultsCsvHeader =
    "model,d,n,k,protocol,scheme,trials,risk,stderr,bound,ratio";
std::string results_csv_row(const ExperimentConfig& config, const RiskEstimate& estimate);

}  // namespace qfisher
