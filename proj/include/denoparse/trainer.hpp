#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "denoparse/dataset.hpp"
#include "denoparse/filter.hpp"
#include "denoparse/index.hpp"
#include "denoparse/model.hpp"

namespace denoparse {

// Gold trains on the generator's logical forms; Denotation never sees them
// and must infer a consistent form for every example.
enum class SupervisionMode { Gold, Denotation };

const char* supervision_name(SupervisionMode mode);

struct CurriculumStage {
    int max_content_length;  // 3, 5 or 7 words
    int epochs;
};

std::vector<CurriculumStage> default_curriculum();  // 3:20, 5:20, 7:160

// The flag spelling, e.g. "3:20,5:20,7:160". Structural errors throw
// ValidationError; semantic checks live in TrainConfig::validate.
std::vector<CurriculumStage> parse_curriculum(const std::string& text);

struct TrainConfig {
    SupervisionMode supervision = SupervisionMode::Denotation;
    GrammarMode grammar = GrammarMode::NoBrackets;
    int epochs = 200;
    std::uint64_t seed = 0;
    std::vector<CurriculumStage> curriculum = default_curriculum();

    double lr = 0.001;
    double rho = 0.9;
    double eps = 1e-8;

    std::string train_path, test_path;
    std::string index_path;      // required in Denotation mode
    std::string base_case_path;  // empty -> built-in base cases
    std::string metrics_path;    // empty -> metrics not written
    std::string checkpoint_path; // empty -> checkpoint not written

    void validate() const;  // throws ValidationError
};

// Piecewise-constant schedule: the last stage extends to any later epoch.
int curriculum_stage(int epoch, const TrainConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    // Share of this epoch's trained denotation-mode examples whose selected
    // form equals the gold form (1.0 in gold mode, which trains on it).
    double returned_correct_fraction = 0.0;
    double test_denotation_accuracy = 0.0;
    int skipped = 0;                 // examples with no consistent candidates
    int consistency_violations = 0;  // trained targets not executing to d; must stay 0
};

// epoch <TAB> mean_loss <TAB> returned_correct_fraction
//       <TAB> test_denotation_accuracy <TAB> skipped
std::string metrics_line(const EpochMetrics& m);

// The filtered candidate pool for one example: consistent forms from the
// index, narrowed to the ties sharing the most features with the selected
// base case. Parameter-independent. Empty when the index has no candidates.
std::vector<TgtSeq> filtered_candidates(const Utterance& u, const Rational& d,
                                        const CandidateIndex& index,
                                        const BaseCaseSet& bases, GrammarMode grammar);

// infer -> filter -> score: the model picks its own training target from
// the filtered pool. nullopt when there is nothing to pick (skip + count).
// Every returned form executes exactly to d by construction.
std::optional<TgtSeq> infer_training_form(const Utterance& u, const Rational& d,
                                          const CandidateIndex& index,
                                          const BaseCaseSet& bases,
                                          const ModelParams& params,
                                          GrammarMode grammar);

struct TrainState {
    ModelParams params;
    RmsProp opt;
    Rng rng;  // drives shuffle order and dropout; one stream per run
    // Candidate pools are parameter-independent; computed once per example.
    // nullopt = not yet computed; empty vector = no candidates (skip).
    std::vector<std::optional<std::vector<TgtSeq>>> gamma_cache;
};

TrainState make_state(const TrainConfig& config, const Dataset& train);

// One pass over the curriculum-admitted slice of the training set in a
// seeded shuffle order, one optimizer update per example. The index may be
// null in gold mode.
EpochMetrics train_epoch(const Dataset& train, const Dataset& test, int epoch,
                         const TrainConfig& config, const CandidateIndex* index,
                         const BaseCaseSet& bases, TrainState& state);

struct EvalResult {
    int correct = 0;
    int total = 0;
    double accuracy = 0.0;
};

// Greedy decode, parse, execute, exact-rational compare. Malformed output
// and division by zero count as incorrect. No float tolerance anywhere.
EvalResult evaluate(const Dataset& test, const ModelParams& params, GrammarMode grammar);

// Full run: load inputs, train, stream per-epoch metrics, write the final
// checkpoint. Deterministic for a fixed config. on_epoch (when set) fires
// after each epoch's metrics are complete.
using EpochCallback = std::function<void(const EpochMetrics&)>;
std::vector<EpochMetrics> run_training(const TrainConfig& config,
                                       const EpochCallback& on_epoch = {});

}  // namespace denoparse
