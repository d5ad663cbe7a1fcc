#include "harmscope/report.hpp"

#include "harmscope/error.hpp"
#include "harmscope/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace harmscope::report {

using nlohmann::json;

std::string_view AuditReportDocument::kind() const {
    switch (payload.index()) {
        case 0: return "classification_grid";
        case 1: return "regression_report";
        default: return "delta_matrix";
    }
}

double canonical(double value) {
    if (!std::isfinite(value)) return value;
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 6);
    if (ec != std::errc{}) throw Error("canonical: formatting failed");
    double out = 0.0;
    std::from_chars(buf.data(), end, out);
    return out == 0.0 ? 0.0 : out;  // no negative zero
}

namespace {

// ----------------------------------------------------------------------------
// JSON helpers
// ----------------------------------------------------------------------------

json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return canonical(v);
}

double real(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

json optional_string(const std::optional<std::string>& s) {
    if (!s) return nullptr;
    return *s;
}

std::optional<std::string> read_optional_string(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<std::string>();
}

// ---- classification grid ----

json grid_to_json(const audit::SignificanceGrid& grid) {
    json cells = json::array();
    for (const auto& [key, cell] : grid.cells) {
        cells.push_back({
            {"model_id", key.model_id},
            {"dataset_id", key.dataset_id},
            {"attribute", key.attribute},
            {"metric", to_string(key.metric)},
            {"skipped_reason", optional_string(cell.skipped_reason)},
            {"raw_p", number(cell.raw_p)},
            {"u_statistic", number(cell.u_statistic)},
            {"z_score", number(cell.z_score)},
            {"n_protected", cell.n_protected},
            {"n_unprotected", cell.n_unprotected},
            {"rank", cell.rank},
            {"family_size", cell.family_size},
            {"threshold", number(cell.threshold)},
            {"significant", cell.significant},
        });
    }
    return {
        {"correction_mode", to_string(grid.correction_mode)},
        {"correction_family", to_string(grid.correction_family)},
        {"fdr_q", number(grid.fdr_q)},
        {"alpha_cap", number(grid.alpha_cap)},
        {"cells", std::move(cells)},
    };
}

audit::SignificanceGrid grid_from_json(const json& j) {
    audit::SignificanceGrid grid;
    grid.correction_mode = parse_correction_mode(j.at("correction_mode").get<std::string>());
    grid.correction_family = parse_correction_family(j.at("correction_family").get<std::string>());
    grid.fdr_q = real(j.at("fdr_q"));
    grid.alpha_cap = real(j.at("alpha_cap"));
    for (const auto& c : j.at("cells")) {
        audit::CellKey key{c.at("model_id").get<std::string>(), c.at("dataset_id").get<std::string>(),
                           c.at("attribute").get<std::string>(),
                           parse_metric(c.at("metric").get<std::string>())};
        audit::GridCell cell;
        cell.skipped_reason = read_optional_string(c.at("skipped_reason"));
        cell.raw_p = real(c.at("raw_p"));
        cell.u_statistic = real(c.at("u_statistic"));
        cell.z_score = real(c.at("z_score"));
        cell.n_protected = c.at("n_protected").get<std::size_t>();
        cell.n_unprotected = c.at("n_unprotected").get<std::size_t>();
        cell.rank = c.at("rank").get<std::size_t>();
        cell.family_size = c.at("family_size").get<std::size_t>();
        cell.threshold = real(c.at("threshold"));
        cell.significant = c.at("significant").get<bool>();
        if (!grid.cells.emplace(std::move(key), std::move(cell)).second)
            throw FormatError("duplicate grid cell in report");
    }
    return grid;
}

// ---- regression report ----

std::string_view to_string(lmm::Boundary b) {
    switch (b) {
        case lmm::Boundary::none: return "none";
        case lmm::Boundary::lower: return "lower";
        case lmm::Boundary::upper: return "upper";
    }
    return "none";
}

lmm::Boundary parse_boundary(const std::string& s) {
    if (s == "none") return lmm::Boundary::none;
    if (s == "lower") return lmm::Boundary::lower;
    if (s == "upper") return lmm::Boundary::upper;
    throw FormatError("unknown boundary: " + s);
}

json fit_to_json(const lmm::LMMFit& fit) {
    json coefs = json::array();
    for (const auto& c : fit.coefficients) {
        const double p = canonical(c.p_two_sided);
        coefs.push_back({
            {"term", c.term},
            {"estimate", number(c.estimate)},
            {"std_error", number(c.std_error)},
            {"z", number(c.z)},
            {"p_two_sided", number(p)},
            {"stars", std::isfinite(p) ? audit::significance_stars(p) : ""},
        });
    }
    return {
        {"coefficients", std::move(coefs)},
        {"sigma_u_sq", number(fit.sigma_u_sq)},
        {"sigma_e_sq", number(fit.sigma_e_sq)},
        {"lambda", number(fit.lambda)},
        {"log_likelihood", number(fit.log_likelihood)},
        {"criterion", fit.criterion == lmm::Criterion::reml ? "reml" : "ml"},
        {"converged", fit.converged},
        {"boundary", to_string(fit.boundary)},
        {"degenerate", fit.degenerate},
        {"n_obs", fit.n_obs},
        {"n_subjects", fit.n_subjects},
        {"iterations", fit.iterations},
    };
}

lmm::LMMFit fit_from_json(const json& j) {
    lmm::LMMFit fit;
    for (const auto& c : j.at("coefficients")) {
        fit.coefficients.push_back({c.at("term").get<std::string>(), real(c.at("estimate")),
                                    real(c.at("std_error")), real(c.at("z")), real(c.at("p_two_sided"))});
    }
    fit.sigma_u_sq = real(j.at("sigma_u_sq"));
    fit.sigma_e_sq = real(j.at("sigma_e_sq"));
    fit.lambda = real(j.at("lambda"));
    fit.log_likelihood = real(j.at("log_likelihood"));
    const auto crit = j.at("criterion").get<std::string>();
    if (crit != "reml" && crit != "ml") throw FormatError("unknown criterion: " + crit);
    fit.criterion = crit == "reml" ? lmm::Criterion::reml : lmm::Criterion::ml;
    fit.converged = j.at("converged").get<bool>();
    fit.boundary = parse_boundary(j.at("boundary").get<std::string>());
    fit.degenerate = j.at("degenerate").get<bool>();
    fit.n_obs = j.at("n_obs").get<std::size_t>();
    fit.n_subjects = j.at("n_subjects").get<std::size_t>();
    fit.iterations = j.at("iterations").get<int>();
    return fit;
}

json regression_to_json(const audit::RegressionAuditReport& rep) {
    json blocks = json::array();
    for (const auto& [key, block] : rep.blocks) {
        json rows = json::array();
        for (const auto& r : block.stats.rows) {
            rows.push_back({{"level", r.level},
                            {"n_individuals", r.n_individuals},
                            {"n_observations", r.n_observations},
                            {"mse", number(r.mse)},
                            {"mean_residual", number(r.mean_residual)}});
        }
        blocks.push_back({
            {"model_id", key.model_id},
            {"dataset_id", key.dataset_id},
            {"dimension", key.dimension},
            {"factor", key.factor},
            {"reference_level", block.reference_level},
            {"error", optional_string(block.error)},
            {"fit", block.fit ? fit_to_json(*block.fit) : json(nullptr)},
            {"group_stats", {{"excluded_observations", block.stats.excluded_observations}, {"rows", rows}}},
        });
    }
    return {{"blocks", std::move(blocks)}};
}

audit::RegressionAuditReport regression_from_json(const json& j) {
    audit::RegressionAuditReport rep;
    for (const auto& b : j.at("blocks")) {
        audit::RegressionBlockKey key{b.at("model_id").get<std::string>(), b.at("dataset_id").get<std::string>(),
                                      b.at("dimension").get<std::string>(), b.at("factor").get<std::string>()};
        audit::RegressionBlock block;
        block.reference_level = b.at("reference_level").get<std::string>();
        block.error = read_optional_string(b.at("error"));
        if (!b.at("fit").is_null()) block.fit = fit_from_json(b.at("fit"));
        const auto& gs = b.at("group_stats");
        block.stats.factor = key.factor;
        block.stats.excluded_observations = gs.at("excluded_observations").get<std::size_t>();
        for (const auto& r : gs.at("rows")) {
            block.stats.rows.push_back({r.at("level").get<std::string>(), r.at("n_individuals").get<std::size_t>(),
                                        r.at("n_observations").get<std::size_t>(), real(r.at("mse")),
                                        real(r.at("mean_residual"))});
        }
        if (!rep.blocks.emplace(std::move(key), std::move(block)).second)
            throw FormatError("duplicate regression block in report");
    }
    return rep;
}

// ---- delta matrix ----

json delta_to_json(const mitigation::DeltaMatrix& delta) {
    json cells = json::array();
    for (const auto& [key, value] : delta.cells) {
        cells.push_back({{"model_id", key.model_id},
                         {"added_attribute", key.added_attribute},
                         {"evaluated_attribute", key.evaluated_attribute},
                         {"metric", to_string(key.metric)},
                         {"delta", value}});
    }
    return {{"dataset_count", delta.dataset_count}, {"cells", std::move(cells)}};
}

mitigation::DeltaMatrix delta_from_json(const json& j) {
    mitigation::DeltaMatrix delta;
    delta.dataset_count = j.at("dataset_count").get<std::size_t>();
    for (const auto& c : j.at("cells")) {
        mitigation::DeltaKey key{c.at("model_id").get<std::string>(), c.at("added_attribute").get<std::string>(),
                                 c.at("evaluated_attribute").get<std::string>(),
                                 parse_metric(c.at("metric").get<std::string>())};
        delta.cells[key] = c.at("delta").get<int>();
    }
    return delta;
}

// ----------------------------------------------------------------------------
// Markdown
// ----------------------------------------------------------------------------

std::string md_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '|' || c == '*' || c == '_') out += '\\';
        out += c;
    }
    return out;
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return "n/a";
    return io::format_number(canonical(v));
}

std::string escaped_stars(const std::string& stars) {
    std::string out;
    for (std::size_t i = 0; i < stars.size(); ++i) out += "\\*";
    return out;
}

std::string marked_p(double p, bool significant) {
    const std::string value = fmt(p);
    if (!significant) return value;
    return "**" + value + "**" + escaped_stars(audit::significance_stars(canonical(p)));
}

void table_row(std::ostringstream& os, const std::vector<std::string>& cells) {
    os << "|";
    for (const auto& c : cells) os << " " << c << " |";
    os << "\n";
}

void table_header(std::ostringstream& os, const std::vector<std::string>& cells) {
    table_row(os, cells);
    os << "|";
    for (std::size_t i = 0; i < cells.size(); ++i) os << "---|";
    os << "\n";
}

std::string metric_label(Metric m) {
    switch (m) {
        case Metric::acc: return "Acc";
        case Metric::fnr: return "Fnr";
        case Metric::fpr: return "Fpr";
        case Metric::mse: return "MSE";
    }
    return "?";
}

void grid_markdown(std::ostringstream& os, const audit::SignificanceGrid& grid) {
    os << "# Classification disparity audit\n\n";
    os << "Mann-Whitney U per cell; correction " << to_string(grid.correction_mode) << " over "
       << to_string(grid.correction_family) << ", Q = " << fmt(grid.fdr_q) << ", alpha cap = " << fmt(grid.alpha_cap)
       << ". Significant cells are bold with \\* p<0.05, \\*\\* p<0.01, \\*\\*\\* p<0.001 (raw p).\n";

    std::set<std::string> models;
    for (const auto& [key, _] : grid.cells) models.insert(key.model_id);
    for (const auto& model : models) {
        std::set<std::string> datasets, attributes;
        std::set<Metric> metrics;
        for (const auto& [key, _] : grid.cells) {
            if (key.model_id != model) continue;
            datasets.insert(key.dataset_id);
            attributes.insert(key.attribute);
            metrics.insert(key.metric);
        }
        os << "\n## Model " << md_escape(model) << "\n\n";
        std::vector<std::string> header{"Attribute"};
        for (const auto& ds : datasets)
            for (Metric m : metrics) header.push_back(md_escape(ds) + " " + metric_label(m));
        table_header(os, header);
        for (const auto& attr : attributes) {
            std::vector<std::string> row{md_escape(attr)};
            for (const auto& ds : datasets) {
                for (Metric m : metrics) {
                    auto it = grid.cells.find({model, ds, attr, m});
                    if (it == grid.cells.end())
                        row.emplace_back("");
                    else if (it->second.skipped())
                        row.emplace_back("skipped");
                    else
                        row.push_back(marked_p(it->second.raw_p, it->second.significant));
                }
            }
            table_row(os, row);
        }
    }
}

void regression_markdown(std::ostringstream& os, const audit::RegressionAuditReport& rep) {
    os << "# Regression residual audit\n\n";
    os << "Residual = truth - prediction. Random-intercept linear mixed model per factor; "
          "\\* p<0.05, \\*\\* p<0.01, \\*\\*\\* p<0.001.\n";

    std::set<std::pair<std::string, std::string>> slices;
    for (const auto& [key, _] : rep.blocks) slices.insert({key.model_id, key.dataset_id});
    for (const auto& [model, dataset] : slices) {
        std::set<std::string> dimensions;
        std::vector<std::string> factors;
        for (const auto& [key, _] : rep.blocks) {
            if (key.model_id != model || key.dataset_id != dataset) continue;
            dimensions.insert(key.dimension);
            if (std::find(factors.begin(), factors.end(), key.factor) == factors.end())
                factors.push_back(key.factor);
        }
        std::sort(factors.begin(), factors.end());
        auto block_of = [&](const std::string& dim, const std::string& factor) -> const audit::RegressionBlock* {
            auto it = rep.blocks.find({model, dataset, dim, factor});
            return it == rep.blocks.end() ? nullptr : &it->second;
        };

        os << "\n## Model " << md_escape(model) << ", dataset " << md_escape(dataset) << "\n\n";
        os << "### Linear mixed models\n\n";
        std::vector<std::string> header{"Factor", "Term"};
        for (const auto& dim : dimensions) {
            const std::string d = dim.empty() ? "" : md_escape(dim) + " ";
            header.push_back(d + "Coef.");
            header.push_back(d + "Std. Error");
            header.push_back(d + "P>\\|z\\|");
        }
        table_header(os, header);
        for (const auto& factor : factors) {
            std::vector<std::string> terms;
            for (const auto& dim : dimensions) {
                const auto* b = block_of(dim, factor);
                if (b && b->fit)
                    for (const auto& c : b->fit->coefficients)
                        if (std::find(terms.begin(), terms.end(), c.term) == terms.end()) terms.push_back(c.term);
            }
            for (const auto& term : terms) {
                std::vector<std::string> row{md_escape(factor), md_escape(term)};
                for (const auto& dim : dimensions) {
                    const auto* b = block_of(dim, factor);
                    const lmm::Coefficient* c = b && b->fit ? b->fit->find(term) : nullptr;
                    if (c == nullptr) {
                        row.insert(row.end(), {"", "", ""});
                        continue;
                    }
                    const double p = canonical(c->p_two_sided);
                    row.push_back(fmt(c->estimate));
                    row.push_back(fmt(c->std_error));
                    row.push_back(marked_p(p, std::isfinite(p) && p < 0.05));
                }
                table_row(os, row);
            }
            std::vector<std::string> gv{md_escape(factor), "Group Var"};
            for (const auto& dim : dimensions) {
                const auto* b = block_of(dim, factor);
                if (b && b->fit)
                    gv.push_back(fmt(b->fit->sigma_u_sq));
                else if (b && b->error)
                    gv.push_back("error: " + md_escape(*b->error));
                else
                    gv.emplace_back("");
                gv.insert(gv.end(), {"", ""});
            }
            table_row(os, gv);
        }

        os << "\n### Group error statistics\n\n";
        std::vector<std::string> sheader{"Factor", "Level"};
        for (const auto& dim : dimensions) {
            const std::string d = dim.empty() ? "" : md_escape(dim) + " ";
            sheader.push_back(d + "Ind/Obs");
            sheader.push_back(d + "MSE");
            sheader.push_back(d + "MR");
        }
        table_header(os, sheader);
        for (const auto& factor : factors) {
            std::set<std::string> levels;
            for (const auto& dim : dimensions)
                if (const auto* b = block_of(dim, factor))
                    for (const auto& r : b->stats.rows) levels.insert(r.level);
            for (const auto& level : levels) {
                std::vector<std::string> row{md_escape(factor), md_escape(level)};
                for (const auto& dim : dimensions) {
                    const audit::GroupErrorRow* found = nullptr;
                    if (const auto* b = block_of(dim, factor))
                        for (const auto& r : b->stats.rows)
                            if (r.level == level) found = &r;
                    if (found == nullptr) {
                        row.insert(row.end(), {"", "", ""});
                        continue;
                    }
                    row.push_back(std::to_string(found->n_individuals) + "/" + std::to_string(found->n_observations));
                    row.push_back(fmt(found->mse));
                    row.push_back(fmt(found->mean_residual));
                }
                table_row(os, row);
            }
        }
    }
}

void delta_markdown(std::ostringstream& os, const mitigation::DeltaMatrix& delta) {
    os << "# Bias change after mitigation\n\n";
    os << "Signed count over " << delta.dataset_count
       << " dataset(s): positive = disparity introduced, negative = disparity removed.\n";

    std::set<std::string> models;
    for (const auto& [key, _] : delta.cells) models.insert(key.model_id);
    for (const auto& model : models) {
        std::set<Metric> metrics;
        std::set<std::string> added, evaluated;
        for (const auto& [key, _] : delta.cells) {
            if (key.model_id != model) continue;
            metrics.insert(key.metric);
            added.insert(key.added_attribute);
            evaluated.insert(key.evaluated_attribute);
        }
        for (Metric m : metrics) {
            os << "\n## Model " << md_escape(model) << ", " << metric_label(m) << "\n\n";
            std::vector<std::string> header{"Added attribute"};
            for (const auto& e : evaluated) header.push_back(md_escape(e));
            table_header(os, header);
            for (const auto& a : added) {
                std::vector<std::string> row{md_escape(a)};
                for (const auto& e : evaluated) {
                    auto it = delta.cells.find({model, a, e, m});
                    if (it == delta.cells.end()) {
                        row.emplace_back("");
                    } else if (it->second == 0) {
                        row.emplace_back("0");
                    } else {
                        row.push_back("**" + std::string(it->second > 0 ? "+" : "") + std::to_string(it->second) +
                                      "**");
                    }
                }
                table_row(os, row);
            }
        }
    }
}

}  // namespace

// ----------------------------------------------------------------------------
// Spec
// ----------------------------------------------------------------------------

json spec_to_json(const AuditSpec& spec) {
    json metrics = json::array();
    for (Metric m : spec.metrics) metrics.push_back(to_string(m));
    return {
        {"metrics", metrics},
        {"fdr_q", number(spec.fdr_q)},
        {"correction_mode", to_string(spec.correction_mode)},
        {"correction_family", to_string(spec.correction_family)},
        {"alpha_cap", number(spec.alpha_cap)},
        {"reference_overrides", spec.reference_overrides},
        {"min_group_size", spec.min_group_size},
        {"truth_range", json::array({number(spec.truth_min), number(spec.truth_max)})},
    };
}

AuditSpec spec_from_json(const json& j, AuditSpec base) {
    if (!j.is_object()) throw InputError("audit spec must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "metrics") {
                base.metrics.clear();
                for (const auto& m : value) base.metrics.push_back(parse_metric(m.get<std::string>()));
            } else if (key == "fdr_q") {
                base.fdr_q = value.get<double>();
            } else if (key == "correction_mode") {
                base.correction_mode = parse_correction_mode(value.get<std::string>());
            } else if (key == "correction_family") {
                base.correction_family = parse_correction_family(value.get<std::string>());
            } else if (key == "alpha_cap") {
                base.alpha_cap = value.get<double>();
            } else if (key == "reference_overrides") {
                base.reference_overrides = value.get<std::map<std::string, std::string>>();
            } else if (key == "min_group_size") {
                base.min_group_size = value.get<int>();
            } else if (key == "truth_range") {
                if (!value.is_array() || value.size() != 2) throw InputError("truth_range must be [min, max]");
                base.truth_min = value[0].get<double>();
                base.truth_max = value[1].get<double>();
            } else {
                throw InputError("unknown audit spec key: " + key);
            }
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("audit spec: ") + e.what());
    }
    base.validate();
    return base;
}

// ----------------------------------------------------------------------------
// Documents
// ----------------------------------------------------------------------------

std::string render_report(const AuditReportDocument& doc, Format format) {
    if (format == Format::json) {
        json j{
            {"kind", doc.kind()},
            {"tool_version", doc.tool_version},
            {"spec", spec_to_json(doc.spec)},
            {"input_digests", doc.input_digests},
            {"warnings", doc.warnings},
        };
        std::visit(
            [&](const auto& payload) {
                using T = std::decay_t<decltype(payload)>;
                if constexpr (std::is_same_v<T, audit::SignificanceGrid>)
                    j["grid"] = grid_to_json(payload);
                else if constexpr (std::is_same_v<T, audit::RegressionAuditReport>)
                    j["regression"] = regression_to_json(payload);
                else
                    j["delta"] = delta_to_json(payload);
            },
            doc.payload);
        return j.dump(2) + "\n";
    }

    std::ostringstream os;
    std::visit(
        [&](const auto& payload) {
            using T = std::decay_t<decltype(payload)>;
            if constexpr (std::is_same_v<T, audit::SignificanceGrid>)
                grid_markdown(os, payload);
            else if constexpr (std::is_same_v<T, audit::RegressionAuditReport>)
                regression_markdown(os, payload);
            else
                delta_markdown(os, payload);
        },
        doc.payload);
    if (!doc.warnings.empty()) {
        os << "\n## Warnings\n\n";
        for (const auto& w : doc.warnings) os << "- " << md_escape(w) << "\n";
    }
    return os.str();
}

AuditReportDocument parse_report(std::string_view json_text) {
    try {
        const json j = json::parse(json_text);
        AuditReportDocument doc;
        doc.tool_version = j.at("tool_version").get<std::string>();
        doc.spec = spec_from_json(j.at("spec"));
        doc.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
        doc.warnings = j.at("warnings").get<std::vector<std::string>>();
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "classification_grid") {
            auto grid = grid_from_json(j.at("grid"));
            grid.warnings = doc.warnings;
            doc.payload = std::move(grid);
        } else if (kind == "regression_report") {
            auto rep = regression_from_json(j.at("regression"));
            rep.warnings = doc.warnings;
            doc.payload = std::move(rep);
        } else if (kind == "delta_matrix") {
            doc.payload = delta_from_json(j.at("delta"));
        } else {
            throw FormatError("unknown report kind: " + kind);
        }
        return doc;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report JSON: ") + e.what());
    } catch (const FormatError&) {
        throw;
    } catch (const InputError& e) {
        throw FormatError(std::string("malformed report JSON: ") + e.what());
    }
}

}  // namespace harmscope::report
