#pragma once

#include "harmscope/audit_classification.hpp"
#include "harmscope/audit_regression.hpp"
#include "harmscope/core.hpp"
#include "harmscope/mitigation.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace harmscope::report {

#ifdef HARMSCOPE_VERSION
inline constexpr std::string_view kToolVersion = HARMSCOPE_VERSION;
#else
inline constexpr std::string_view kToolVersion = "0.0.0";
#endif

using Payload = std::variant<audit::SignificanceGrid, audit::RegressionAuditReport, mitigation::DeltaMatrix>;

struct AuditReportDocument {
    std::string tool_version{kToolVersion};
    AuditSpec spec;
    std::map<std::string, std::string> input_digests;  // input name -> sha256 hex
    Payload payload;
    std::vector<std::string> warnings;

    /// classification_grid, regression_report or delta_matrix.
    std::string_view kind() const;
};

enum class Format { json, markdown };

/// Rounds to 6 significant digits. Every serialized real passes through this.
double canonical(double value);

/// JSON: sorted keys, 2-space indent, trailing newline, canonical numbers.
/// Re-rendering a parsed document reproduces the same bytes.
std::string render_report(const AuditReportDocument& doc, Format format);

/// Inverse of render_report(doc, Format::json). Throws FormatError.
AuditReportDocument parse_report(std::string_view json_text);

nlohmann::json spec_to_json(const AuditSpec& spec);

/// Missing keys keep their defaults; unknown keys are rejected. Throws InputError.
AuditSpec spec_from_json(const nlohmann::json& j, AuditSpec base = {});

}  // namespace harmscope::report
