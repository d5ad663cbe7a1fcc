#include "harmscope/cli.hpp"

#include "harmscope/audit_classification.hpp"
#include "harmscope/audit_regression.hpp"
#include "harmscope/error.hpp"
#include "harmscope/io.hpp"
#include "harmscope/mitigation.hpp"
#include "harmscope/report.hpp"
#include "harmscope/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>

namespace harmscope::cli {

namespace fs = std::filesystem;

namespace {

struct SpecOverrides {
    std::optional<double> fdr_q;
    std::optional<double> alpha_cap;
    std::optional<std::string> correction_mode;
    std::optional<std::string> correction_family;
    std::optional<int> min_group_size;
    std::vector<std::string> metrics;
};

struct Options {
    std::string predictions;
    std::string cohort;
    std::string spec;
    std::string out;
    std::string format = "json";
    std::string dimension;
    std::vector<std::string> factors;
    std::string criterion = "reml";
    std::string before;
    std::string after;
    std::string added_attribute;
    SpecOverrides overrides;

    std::string kind = "appendix-example";
    synth::SynthSpec synth;
    std::string scope = "subject";
};

AuditSpec load_spec(const Options& opt, std::map<std::string, std::string>& digests) {
    AuditSpec spec;
    if (!opt.spec.empty()) {
        const std::string text = io::read_file(opt.spec);
        digests["spec"] = io::sha256_hex(text);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(opt.spec + ": " + e.what());
        }
        spec = report::spec_from_json(j);
    }
    const auto& o = opt.overrides;
    if (o.fdr_q) spec.fdr_q = *o.fdr_q;
    if (o.alpha_cap) spec.alpha_cap = *o.alpha_cap;
    if (o.correction_mode) spec.correction_mode = parse_correction_mode(*o.correction_mode);
    if (o.correction_family) spec.correction_family = parse_correction_family(*o.correction_family);
    if (o.min_group_size) spec.min_group_size = *o.min_group_size;
    if (!o.metrics.empty()) {
        spec.metrics.clear();
        for (const auto& m : o.metrics) spec.metrics.push_back(parse_metric(m));
    }
    spec.validate();
    return spec;
}

struct Inputs {
    std::vector<PredictionRecord> records;
    CohortTable cohort;
    std::map<std::string, std::string> digests;
};

Inputs load_inputs(const Options& opt) {
    Inputs in;
    const std::string preds = io::read_file(opt.predictions);
    const std::string cohort = io::read_file(opt.cohort);
    in.digests["predictions"] = io::sha256_hex(preds);
    in.digests["cohort"] = io::sha256_hex(cohort);
    in.records = io::parse_predictions(preds, opt.predictions);
    in.cohort = io::parse_cohort(cohort, opt.cohort);
    return in;
}

std::vector<std::string> merged(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

std::map<std::string, std::string> merged_digests(std::map<std::string, std::string> a,
                                                  const std::map<std::string, std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
}

/// Fails with exit 1 on hard validation errors; returns the warnings otherwise.
std::vector<std::string> check_inputs(const Inputs& in, const AuditSpec& spec, std::ostream& err) {
    const ValidationReport v = validate_inputs(in.records, in.cohort, spec);
    if (!v.ok) {
        for (const auto& e : v.errors) err << "error: " << e << "\n";
        throw InputError("input validation failed with " + std::to_string(v.errors.size()) + " error(s)");
    }
    return v.warnings;
}

void emit(const report::AuditReportDocument& doc, const Options& opt) {
    if (opt.format == "json" || opt.format == "both")
        io::write_file(opt.out, report::render_report(doc, report::Format::json));
    if (opt.format == "markdown") io::write_file(opt.out, report::render_report(doc, report::Format::markdown));
    if (opt.format == "both") {
        fs::path md = opt.out;
        md.replace_extension(".md");
        io::write_file(md, report::render_report(doc, report::Format::markdown));
    }
}

int cmd_validate(const Options& opt, std::ostream& out) {
    std::map<std::string, std::string> digests;
    const AuditSpec spec = load_spec(opt, digests);
    const Inputs in = load_inputs(opt);
    const ValidationReport v = validate_inputs(in.records, in.cohort, spec);
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& g : v.skipped_groups)
        skipped.push_back({{"model_id", g.model_id},
                           {"dataset_id", g.dataset_id},
                           {"attribute", g.attribute},
                           {"level", g.level},
                           {"size", g.size}});
    nlohmann::json j{{"ok", v.ok},
                     {"errors", v.errors},
                     {"missing_subjects", v.missing_subjects},
                     {"skipped_groups", skipped},
                     {"warnings", v.warnings}};
    const std::string text = j.dump(2) + "\n";
    if (opt.out.empty())
        out << text;
    else
        io::write_file(opt.out, text);
    return v.ok ? kOk : kInputError;
}

int cmd_audit_cls(const Options& opt, std::ostream& err) {
    std::map<std::string, std::string> digests;
    const AuditSpec spec = load_spec(opt, digests);
    Inputs in = load_inputs(opt);
    const auto warnings = check_inputs(in, spec, err);

    auto grid = audit::run_classification_audit(in.records, in.cohort, spec);
    report::AuditReportDocument doc;
    doc.spec = spec;
    doc.input_digests = merged_digests(digests, in.digests);
    doc.warnings = merged(grid.warnings, warnings);
    grid.warnings = doc.warnings;
    doc.payload = std::move(grid);
    emit(doc, opt);
    return kOk;
}

int cmd_audit_reg(const Options& opt, std::ostream& err) {
    std::map<std::string, std::string> digests;
    const AuditSpec spec = load_spec(opt, digests);
    Inputs in = load_inputs(opt);
    if (!opt.dimension.empty()) {
        std::erase_if(in.records, [&](const PredictionRecord& r) {
            return r.task == TaskKind::regression && r.dimension != opt.dimension;
        });
    }
    const auto warnings = check_inputs(in, spec, err);

    lmm::FitOptions fit_options;
    if (opt.criterion == "ml") fit_options.criterion = lmm::Criterion::ml;
    auto rep = audit::run_regression_audit(in.records, opt.factors, in.cohort, spec, fit_options);
    report::AuditReportDocument doc;
    doc.spec = spec;
    doc.input_digests = merged_digests(digests, in.digests);
    doc.warnings = merged(rep.warnings, warnings);
    rep.warnings = doc.warnings;
    doc.payload = std::move(rep);
    emit(doc, opt);
    return kOk;
}

report::AuditReportDocument load_grid_report(const std::string& path, std::string& digest) {
    const std::string text = io::read_file(path);
    digest = io::sha256_hex(text);
    auto doc = report::parse_report(text);
    if (!std::holds_alternative<audit::SignificanceGrid>(doc.payload))
        throw FormatError(path + ": expected a classification_grid report, got " + std::string(doc.kind()));
    return doc;
}

int cmd_compare(const Options& opt) {
    report::AuditReportDocument doc;
    const auto before = load_grid_report(opt.before, doc.input_digests["before"]);
    const auto after = load_grid_report(opt.after, doc.input_digests["after"]);
    doc.spec = after.spec;
    doc.payload = mitigation::significance_delta(std::get<audit::SignificanceGrid>(before.payload),
                                                 std::get<audit::SignificanceGrid>(after.payload),
                                                 opt.added_attribute);
    emit(doc, opt);
    return kOk;
}

int cmd_synth(Options opt, std::ostream& out) {
    auto& s = opt.synth;
    if (opt.kind == "appendix-example")
        s.kind = synth::SynthKind::appendix_example;
    else if (opt.kind == "lmm-cohort")
        s.kind = synth::SynthKind::lmm_cohort;
    else
        throw InputError("unknown synth kind: " + opt.kind);
    s.scope = opt.scope == "observation" ? synth::FactorScope::observation : synth::FactorScope::subject;
    const auto files = synth::generate(s, opt.out);
    out << files.predictions.string() << "\n" << files.cohort.string() << "\n";
    return kOk;
}

void add_common_inputs(CLI::App* sub, Options& opt) {
    sub->add_option("--predictions", opt.predictions, "Predictions CSV")->required();
    sub->add_option("--cohort", opt.cohort, "Cohort CSV")->required();
    sub->add_option("--spec", opt.spec, "Audit spec JSON; flags override its values");
}

void add_spec_flags(CLI::App* sub, Options& opt) {
    sub->add_option("--fdr-q", opt.overrides.fdr_q, "FDR level Q");
    sub->add_option("--alpha-cap", opt.overrides.alpha_cap, "Raw p-value cap for paper_variant");
    sub->add_option("--correction-mode", opt.overrides.correction_mode, "paper_variant or bh_step_up");
    sub->add_option("--correction-family", opt.overrides.correction_family,
                    "per_dataset_all_tests, per_dataset_per_metric or none");
    sub->add_option("--min-group-size", opt.overrides.min_group_size, "Minimum subjects per group");
    sub->add_option("--metrics", opt.overrides.metrics, "Metrics to test")->delimiter(',');
}

void add_report_output(CLI::App* sub, Options& opt) {
    sub->add_option("--out", opt.out, "Report path")->required();
    sub->add_option("--format", opt.format, "json, markdown or both (markdown goes to <out stem>.md)")
        ->check(CLI::IsMember({"json", "markdown", "both"}));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options opt;
    CLI::App app{"harmscope: fairness audits for classification and regression predictions", "harmscope"};
    app.set_version_flag("--version", std::string(report::kToolVersion));
    app.require_subcommand(1);

    auto* validate = app.add_subcommand("validate", "Check inputs without auditing");
    add_common_inputs(validate, opt);
    add_spec_flags(validate, opt);
    validate->add_option("--out", opt.out, "Write the validation report here instead of stdout");

    auto* audit_cls = app.add_subcommand("audit-cls", "Classification disparity audit");
    add_common_inputs(audit_cls, opt);
    add_spec_flags(audit_cls, opt);
    add_report_output(audit_cls, opt);

    auto* audit_reg = app.add_subcommand("audit-reg", "Regression residual audit with mixed models");
    add_common_inputs(audit_reg, opt);
    add_spec_flags(audit_reg, opt);
    add_report_output(audit_reg, opt);
    audit_reg->add_option("--factors", opt.factors, "Comma-separated factor names")->delimiter(',')->required();
    audit_reg->add_option("--dimension", opt.dimension, "Only audit this regression dimension");
    audit_reg->add_option("--criterion", opt.criterion, "reml or ml")->check(CLI::IsMember({"reml", "ml"}));

    auto* compare = app.add_subcommand("compare", "Difference two classification reports");
    compare->add_option("--before", opt.before, "Report before the intervention")->required();
    compare->add_option("--after", opt.after, "Report after the intervention")->required();
    compare->add_option("--added-attribute", opt.added_attribute, "Attribute added by the intervention")
        ->required();
    add_report_output(compare, opt);

    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic inputs");
    auto& s = opt.synth;
    synth_cmd->add_option("--kind", opt.kind, "appendix-example or lmm-cohort")
        ->check(CLI::IsMember({"appendix-example", "lmm-cohort"}));
    synth_cmd->add_option("--seed", s.seed, "64-bit seed");
    synth_cmd->add_option("--out", opt.out, "Output directory")->required();
    synth_cmd->add_option("--n-subjects", s.n_subjects);
    synth_cmd->add_option("--obs-per-subject", s.obs_per_subject);
    synth_cmd->add_option("--factor", s.factor);
    synth_cmd->add_option("--levels", s.levels, "Comma list, first is the reference")->delimiter(',');
    synth_cmd->add_option("--effects", s.effects, "Comma list, one per level")->delimiter(',');
    synth_cmd->add_option("--intercept", s.intercept);
    synth_cmd->add_option("--sigma-u-sq", s.sigma_u_sq);
    synth_cmd->add_option("--sigma-e-sq", s.sigma_e_sq);
    synth_cmd->add_option("--scope", opt.scope, "subject or observation")
        ->check(CLI::IsMember({"subject", "observation"}));
    synth_cmd->add_option("--dimension", s.dimension);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << report::kToolVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return kInputError;
    }

    try {
        if (validate->parsed()) return cmd_validate(opt, out);
        if (audit_cls->parsed()) return cmd_audit_cls(opt, err);
        if (audit_reg->parsed()) return cmd_audit_reg(opt, err);
        if (compare->parsed()) return cmd_compare(opt);
        return cmd_synth(opt, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kAuditError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
}

}  // namespace harmscope::cli
