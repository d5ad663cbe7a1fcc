#include "harmscope/synth.hpp"

#include "harmscope/error.hpp"
#include "harmscope/io.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <system_error>

namespace harmscope::synth {

std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t CounterRng::next_u64() {
    ++counter_;
    return splitmix64_mix(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::int64_t CounterRng::uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t top = next_u64() >> 32;
    return lo + static_cast<std::int64_t>((top * span) >> 32);
}

double CounterRng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthSpec::validate() const {
    if (kind == SynthKind::appendix_example) return;
    if (n_subjects == 0) throw InputError("n_subjects must be positive");
    if (obs_per_subject == 0) throw InputError("obs_per_subject must be positive");
    if (factor.empty()) throw InputError("factor name must not be empty");
    if (levels.size() < 2) throw InputError("need at least 2 factor levels");
    if (effects.size() != levels.size()) throw InputError("need one effect per factor level");
    if (!(sigma_u_sq >= 0.0) || !(sigma_e_sq >= 0.0) || !std::isfinite(sigma_u_sq) || !std::isfinite(sigma_e_sq))
        throw InputError("variance components must be finite and non-negative");
    for (double e : effects)
        if (!std::isfinite(e)) throw InputError("effects must be finite");
    if (!std::isfinite(intercept)) throw InputError("intercept must be finite");
}

namespace {

std::string subject_name(std::string_view prefix, std::size_t i, std::size_t width) {
    std::string digits = std::to_string(i);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return std::string(prefix) + digits;
}

template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

SynthData appendix_example(const SynthSpec& spec) {
    // (truth, correct, count) per group
    struct Block {
        int truth;
        bool correct;
        int count;
    };
    const std::vector<Block> protected_blocks{{1, true, 1}, {1, false, 3}, {0, true, 1}, {0, false, 1}};
    const std::vector<Block> unprotected_blocks{{1, true, 4}, {1, false, 1}, {0, true, 7}, {0, false, 2}};

    std::vector<PredictionRecord> records;
    std::map<std::string, std::map<std::string, std::string>> entries;
    auto emit = [&](std::string_view prefix, const std::vector<Block>& blocks, const std::string& level) {
        std::size_t i = 0;
        for (const auto& b : blocks) {
            for (int k = 0; k < b.count; ++k) {
                PredictionRecord r;
                r.subject_id = subject_name(prefix, ++i, 2);
                r.dataset_id = "DS1";
                r.model_id = "example";
                r.task = TaskKind::classification;
                r.truth = b.truth;
                r.prediction = b.correct ? b.truth : 1 - b.truth;
                entries[r.subject_id]["first_gen"] = level;
                records.push_back(std::move(r));
            }
        }
    };
    emit("p", protected_blocks, "protected");
    emit("u", unprotected_blocks, "unprotected");

    CounterRng rng(spec.seed);
    shuffle(records, rng);
    AttributeSchema attr{"first_gen", {"protected", "unprotected"}, "protected", AttributeKind::binary};
    return {std::move(records), CohortTable({attr}, std::move(entries))};
}

SynthData lmm_cohort(const SynthSpec& spec) {
    CounterRng rng(spec.seed);
    const double sd_u = std::sqrt(spec.sigma_u_sq);
    const double sd_e = std::sqrt(spec.sigma_e_sq);
    const std::size_t width = std::to_string(spec.n_subjects).size();
    const auto n_levels = static_cast<std::int64_t>(spec.levels.size());

    std::vector<PredictionRecord> records;
    std::map<std::string, std::map<std::string, std::string>> entries;
    for (std::size_t i = 0; i < spec.n_subjects; ++i) {
        const std::string subject = subject_name("s", i + 1, width);
        const double u = sd_u * rng.normal();
        auto& row = entries[subject];
        std::size_t subject_level = i % spec.levels.size();
        if (spec.scope == FactorScope::subject) row[spec.factor] = spec.levels[subject_level];
        for (std::size_t k = 0; k < spec.obs_per_subject; ++k) {
            const std::size_t level = spec.scope == FactorScope::subject
                                          ? subject_level
                                          : static_cast<std::size_t>(rng.uniform_int(0, n_levels - 1));
            const double truth = static_cast<double>(rng.uniform_int(1, 5));
            const double residual = spec.intercept + spec.effects[level] + u + sd_e * rng.normal();
            PredictionRecord r;
            r.subject_id = subject;
            r.dataset_id = spec.dataset_id;
            r.model_id = spec.model_id;
            r.task = TaskKind::regression;
            r.dimension = spec.dimension;
            r.truth = truth;
            r.prediction = truth - residual;
            if (spec.scope == FactorScope::observation) r.context[spec.factor] = spec.levels[level];
            r.observation = k;
            records.push_back(std::move(r));
        }
    }

    std::vector<AttributeSchema> schema;
    if (spec.scope == FactorScope::subject) {
        const auto kind = spec.levels.size() == 2 ? AttributeKind::binary : AttributeKind::categorical;
        schema.push_back({spec.factor, spec.levels, spec.levels.front(), kind});
    }
    return {std::move(records), CohortTable(std::move(schema), std::move(entries))};
}

}  // namespace

SynthData synthesize(const SynthSpec& spec) {
    spec.validate();
    return spec.kind == SynthKind::appendix_example ? appendix_example(spec) : lmm_cohort(spec);
}

GeneratedFiles generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    const SynthData data = synthesize(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    GeneratedFiles files{out_dir / "preds.csv", out_dir / "cohort.csv"};
    io::write_file(files.predictions, io::format_predictions(data.records));
    io::write_file(files.cohort, io::format_cohort(data.cohort));
    return files;
}

}  // namespace harmscope::synth
