#include "denoparse/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "denoparse/errors.hpp"

namespace denoparse {

const char* supervision_name(SupervisionMode mode) {
    return mode == SupervisionMode::Gold ? "gold" : "denotation";
}

std::vector<CurriculumStage> default_curriculum() {
    return {{3, 20}, {5, 20}, {7, 160}};
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (curriculum.empty()) throw ValidationError("curriculum must have at least one stage");
    int total = 0;
    int prev_len = 0;
    for (const auto& stage : curriculum) {
        if (stage.max_content_length != 3 && stage.max_content_length != 5 &&
            stage.max_content_length != 7) {
            throw ValidationError("curriculum stage length must be 3, 5 or 7");
        }
        if (stage.epochs <= 0) throw ValidationError("curriculum stage epochs must be positive");
        if (stage.max_content_length < prev_len) {
            throw ValidationError("curriculum stage lengths must be non-decreasing");
        }
        prev_len = stage.max_content_length;
        total += stage.epochs;
    }
    if (total > epochs && epochs > 0) {
        throw ValidationError("curriculum stage epochs exceed the total epoch count");
    }
    if (lr <= 0 || rho <= 0 || rho >= 1 || eps <= 0) {
        throw ValidationError("optimizer hyperparameters out of range");
    }
}

int curriculum_stage(int epoch, const TrainConfig& config) {
    int acc = 0;
    for (const auto& stage : config.curriculum) {
        acc += stage.epochs;
        if (epoch < acc) return stage.max_content_length;
    }
    return config.curriculum.back().max_content_length;
}

std::vector<CurriculumStage> parse_curriculum(const std::string& text) {
    std::vector<CurriculumStage> stages;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == part.size()) {
            throw ValidationError("curriculum stage must look like LENGTH:EPOCHS, got '" + part +
                                  "'");
        }
        CurriculumStage stage{};
        try {
            std::size_t used = 0;
            stage.max_content_length = std::stoi(part.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument(part);
            const std::string epochs_text = part.substr(colon + 1);
            stage.epochs = std::stoi(epochs_text, &used);
            if (used != epochs_text.size()) throw std::invalid_argument(part);
        } catch (const std::logic_error&) {
            throw ValidationError("curriculum stage must be numeric, got '" + part + "'");
        }
        stages.push_back(stage);
    }
    if (stages.empty()) throw ValidationError("curriculum must have at least one stage");
    return stages;
}

std::string metrics_line(const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%d", m.epoch, m.mean_loss,
                  m.returned_correct_fraction, m.test_denotation_accuracy, m.skipped);
    return buf;
}

std::vector<TgtSeq> filtered_candidates(const Utterance& u, const Rational& d,
                                        const CandidateIndex& index,
                                        const BaseCaseSet& bases, GrammarMode grammar) {
    CandidateSet omega = index.lookup(d, u.operand_count(), grammar);
    if (omega.empty()) return {};
    const BaseCase& base = bases[select_base_case(u, bases)];
    return filter_candidates(omega, u, base).members;
}

std::optional<TgtSeq> infer_training_form(const Utterance& u, const Rational& d,
                                          const CandidateIndex& index,
                                          const BaseCaseSet& bases,
                                          const ModelParams& params, GrammarMode grammar) {
    std::vector<TgtSeq> gamma = filtered_candidates(u, d, index, bases, grammar);
    if (gamma.empty()) return std::nullopt;
    return gamma[score_candidates(params, u.padded(), gamma)];
}

TrainState make_state(const TrainConfig& config, const Dataset& train) {
    Rng rng(config.seed);
    ModelParams params = ModelParams::init(ModelDims{}, rng);
    RmsProp opt(params);
    opt.lr = config.lr;
    opt.rho = config.rho;
    opt.eps = config.eps;
    // The stream continues past the init draws, so shuffle order and dropout
    // all hang off the single run seed.
    return TrainState{std::move(params), std::move(opt), rng,
                      std::vector<std::optional<std::vector<TgtSeq>>>(train.size())};
}

namespace {

// Audit, not control flow: the pipeline guarantees consistency by
// construction, and the metric proves it held.
bool executes_to(const TgtSeq& seq, GrammarMode grammar, const Rational& d) {
    auto tree = parse_logical_form(seq, grammar);
    if (!tree) return false;
    auto value = try_evaluate(*tree);
    return value && *value == d;
}

}  // namespace

EpochMetrics train_epoch(const Dataset& train, const Dataset& test, int epoch,
                         const TrainConfig& config, const CandidateIndex* index,
                         const BaseCaseSet& bases, TrainState& state) {
    EpochMetrics m;
    m.epoch = epoch;

    const int max_len = curriculum_stage(epoch, config);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.records[i].utterance.content_length() <= max_len) order.push_back(i);
    }
    state.rng.shuffle(order);

    double loss_sum = 0.0;
    int trained = 0;
    int gold_picks = 0;

    for (std::size_t idx : order) {
        const DatasetRecord& rec = train.records[idx];
        TgtSeq target;
        if (config.supervision == SupervisionMode::Gold) {
            target = rec.gold(config.grammar);
            ++gold_picks;
        } else {
            if (index == nullptr) throw ValidationError("denotation supervision needs an index");
            auto& slot = state.gamma_cache[idx];
            if (!slot) {
                slot = filtered_candidates(rec.utterance, rec.denotation, *index, bases,
                                           config.grammar);
            }
            if (slot->empty()) {
                ++m.skipped;
                continue;
            }
            std::size_t pick =
                slot->size() == 1 ? 0 : score_candidates(state.params, rec.utterance.padded(), *slot);
            target = (*slot)[pick];
            if (!executes_to(target, config.grammar, rec.denotation)) ++m.consistency_violations;
            if (target == rec.gold(config.grammar)) ++gold_picks;
        }

        ForwardTrace trace;
        loss_sum += nll(state.params, rec.utterance.padded(), target, Dropout::On, state.rng, &trace);
        ModelParams grads = backprop(trace, state.params);
        state.opt.step(state.params, grads);
        ++trained;
    }

    m.mean_loss = trained > 0 ? loss_sum / trained : 0.0;
    m.returned_correct_fraction = trained > 0 ? static_cast<double>(gold_picks) / trained : 0.0;
    m.test_denotation_accuracy = evaluate(test, state.params, config.grammar).accuracy;
    return m;
}

EvalResult evaluate(const Dataset& test, const ModelParams& params, GrammarMode grammar) {
    EvalResult r;
    r.total = static_cast<int>(test.size());
    for (const DatasetRecord& rec : test.records) {
        TgtSeq out = greedy_decode(params, rec.utterance.padded());
        if (executes_to(out, grammar, rec.denotation)) ++r.correct;
    }
    r.accuracy = r.total > 0 ? static_cast<double>(r.correct) / r.total : 0.0;
    return r;
}

std::vector<EpochMetrics> run_training(const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    Dataset train = load_dataset(config.train_path);
    Dataset test = load_dataset(config.test_path);
    BaseCaseSet bases = config.base_case_path.empty() ? BaseCaseSet::builtin()
                                                      : BaseCaseSet::load(config.base_case_path);
    std::optional<CandidateIndex> index;
    if (config.supervision == SupervisionMode::Denotation) {
        if (config.index_path.empty()) {
            throw ValidationError("denotation supervision needs an index path");
        }
        index = CandidateIndex::load(config.index_path);
    }

    std::ofstream metrics_out;
    if (!config.metrics_path.empty()) {
        metrics_out.open(config.metrics_path, std::ios::trunc);
        if (!metrics_out) throw IoError("cannot write metrics to " + config.metrics_path);
    }

    TrainState state = make_state(config, train);
    std::vector<EpochMetrics> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        EpochMetrics m = train_epoch(train, test, epoch, config,
                                     index ? &*index : nullptr, bases, state);
        if (metrics_out.is_open()) {
            metrics_out << metrics_line(m) << '\n';
            metrics_out.flush();
        }
        if (on_epoch) on_epoch(m);
        history.push_back(m);
    }

    if (!config.checkpoint_path.empty()) {
        save_checkpoint(config.checkpoint_path, state.params, config.seed, config.grammar);
    }
    return history;
}

}  // namespace denoparse
