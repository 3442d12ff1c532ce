#pragma once

#include <map>
#include <string>
#include <vector>

#include "denoparse/arith.hpp"
#include "denoparse/index.hpp"

namespace denoparse {

// Bag-of-words feature map.  Framing tokens (PAD, <eos>, Go, End) carry no
// signal and are excluded; digits, operator symbols and brackets all count.
using FeatureBag = std::map<std::string, int>;

FeatureBag features(const std::vector<std::string>& tokens);
FeatureBag features_src(const SrcSeq& seq);
FeatureBag features_tgt(const TgtSeq& seq);

// Shared-feature count: sum over tokens of min(count_a, count_b).
int similarity(const FeatureBag& a, const FeatureBag& b);

// A curated utterance / logical-form pair used as a similarity pivot.
// The stored form is always the bracketed one; seq_for() strips brackets
// for the flat grammar.
struct BaseCase {
    Utterance utterance;
    TgtSeq bracketed;
    Rational denotation;

    TgtSeq seq_for(GrammarMode mode) const {
        return mode == GrammarMode::WithBrackets ? bracketed : strip_brackets(bracketed);
    }
};

class BaseCaseSet {
public:
    // The seven built-in pivot pairs (one per utterance length bucket and
    // then some), matching data/base_cases.tsv.
    static BaseCaseSet builtin();

    // File format: utterance <TAB> bracketed logical form <TAB> num/den.
    // Every loaded form is executed and checked against its denotation.
    static BaseCaseSet load(const std::string& path);
    void save(const std::string& path) const;

    const std::vector<BaseCase>& cases() const { return cases_; }
    std::size_t size() const { return cases_.size(); }
    const BaseCase& operator[](std::size_t i) const { return cases_[i]; }

private:
    static BaseCaseSet from_cases(std::vector<BaseCase> cases);
    std::vector<BaseCase> cases_;
};

// Index of the base case sharing the most utterance features with the
// input; ties break toward the lowest index.
std::size_t select_base_case(const Utterance& input, const BaseCaseSet& bases);

// Gamma: the candidates whose content overlap with the base case's form
// equals the word overlap between the input utterance and the base case's
// utterance.  Digit words render as digits and operator words as operator
// symbols one for one, so the utterance-side overlap says how many content
// tokens a faithful translation must share with the base form; matching on
// that level keeps the faithful candidates and drops forms that merely
// imitate the base case.  Brackets have no utterance counterpart and are
// ignored.  All matches are retained (the model disambiguates); empty input
// yields an empty set.
CandidateSet filter_candidates(const CandidateSet& omega, const Utterance& utterance,
                               const BaseCase& base);

}  // namespace denoparse
