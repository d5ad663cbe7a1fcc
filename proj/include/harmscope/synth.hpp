#pragma once

#include "harmscope/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace harmscope::synth {

/// Counter-based generator: draw k of stream `seed` is splitmix64 finalization
/// of seed + (k + 1) * 0x9E3779B97F4A7C15. No hidden state beyond the counter,
/// so any draw can be reproduced from (seed, k) alone.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 bits.
    double uniform();
    /// Uniform integer in [lo, hi], via multiply-shift on the top 32 bits.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal by Box-Muller; consumes two draws per call.
    double normal();

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

enum class SynthKind { appendix_example, lmm_cohort };

enum class FactorScope {
    observation,  // level drawn per observation, written as a context column
    subject,      // level fixed per subject (i mod #levels), written to the cohort
};

struct SynthSpec {
    std::uint64_t seed = 0;
    SynthKind kind = SynthKind::appendix_example;

    // lmm_cohort
    std::size_t n_subjects = 40;
    std::size_t obs_per_subject = 5;
    std::string factor = "group";
    std::vector<std::string> levels{"A", "B"};  // first is the reference
    std::vector<double> effects{0.0, 0.5};      // per level, added to the intercept
    double intercept = 0.0;
    double sigma_u_sq = 1.0;
    double sigma_e_sq = 1.0;
    FactorScope scope = FactorScope::subject;
    std::string dimension = "score";
    std::string dataset_id = "DS1";
    std::string model_id = "synthetic";

    /// Throws InputError on inconsistent parameters.
    void validate() const;
};

struct SynthData {
    std::vector<PredictionRecord> records;
    CohortTable cohort;
};

/// In-memory generation; generate() writes exactly this.
SynthData synthesize(const SynthSpec& spec);

struct GeneratedFiles {
    std::filesystem::path predictions;  // <out_dir>/preds.csv
    std::filesystem::path cohort;       // <out_dir>/cohort.csv
};

/// Creates out_dir if needed. Throws IoError when it cannot be written.
GeneratedFiles generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace harmscope::synth
