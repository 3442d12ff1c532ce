#include "denoparse/filter.hpp"

#include <fstream>
#include <sstream>

namespace denoparse {

namespace {

bool is_framing(const std::string& token) {
    return token == "PAD" || token == "<eos>" || token == "Go" || token == "End";
}

struct TableRow {
    const char* utterance;
    const char* logical_form;
};

// Rows of the built-in pivot table (utterance, bracketed logical form).
constexpr TableRow kBuiltinRows[] = {
    {"one plus two", "Go [ 1 + 2 ] End"},
    {"three minus four times five", "Go [ 3 - ( 4 * 5 ) ] End"},
    {"one times two divide three", "Go ( ( 1 * 2 ) / 3 ) End"},
    {"two divide four plus five", "Go [ ( 2 / 4 ) + 5 ] End"},
    {"five divide one times two plus three", "Go [ ( ( 5 / 1 ) * 2 ) + 3 ] End"},
    {"four minus two times three plus one", "Go [ [ 4 - ( 2 * 3 ) ] + 1 ] End"},
    {"three divide four minus five plus two", "Go [ [ ( 3 / 4 ) - 5 ] + 2 ] End"},
};

}  // namespace

FeatureBag features(const std::vector<std::string>& tokens) {
    FeatureBag bag;
    for (const auto& t : tokens) {
        if (!is_framing(t)) ++bag[t];
    }
    return bag;
}

FeatureBag features_src(const SrcSeq& seq) {
    FeatureBag bag;
    for (int id : seq) {
        if (id != src_tok::kPad && id != src_tok::kEos) ++bag[src_token_string(id)];
    }
    return bag;
}

FeatureBag features_tgt(const TgtSeq& seq) {
    FeatureBag bag;
    for (int id : seq) {
        if (id != tgt_tok::kPad && id != tgt_tok::kGo && id != tgt_tok::kEnd) {
            ++bag[tgt_token_string(id)];
        }
    }
    return bag;
}

int similarity(const FeatureBag& a, const FeatureBag& b) {
    int shared = 0;
    for (const auto& [token, count] : a) {
        auto it = b.find(token);
        if (it != b.end()) shared += std::min(count, it->second);
    }
    return shared;
}

BaseCaseSet BaseCaseSet::from_cases(std::vector<BaseCase> cases) {
    if (cases.empty()) throw ValidationError("base case set is empty");
    bool seen[3] = {false, false, false};
    for (const auto& c : cases) {
        int len = c.utterance.content_length();
        if (len == 3 || len == 5 || len == 7) seen[(len - 3) / 2] = true;
        auto tree = parse_logical_form(c.bracketed, GrammarMode::WithBrackets);
        if (!tree) throw ValidationError("base case logical form is malformed");
        if (evaluate(*tree) != c.denotation) {
            throw ValidationError("base case form does not execute to its denotation");
        }
    }
    if (!(seen[0] && seen[1] && seen[2])) {
        throw ValidationError("base case set must cover utterance lengths 3, 5 and 7");
    }
    BaseCaseSet set;
    set.cases_ = std::move(cases);
    return set;
}

BaseCaseSet BaseCaseSet::builtin() {
    std::vector<BaseCase> cases;
    for (const auto& row : kBuiltinRows) {
        auto utt = Utterance::parse(row.utterance);
        auto seq = tgt_from_string(row.logical_form);
        auto tree = parse_logical_form(*seq, GrammarMode::WithBrackets);
        cases.push_back(BaseCase{*utt, *seq, evaluate(*tree)});
    }
    return from_cases(std::move(cases));
}

BaseCaseSet BaseCaseSet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open base case file: " + path);
    std::vector<BaseCase> cases;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string utt_str, form_str, denot_str;
        if (!std::getline(fields, utt_str, '\t') || !std::getline(fields, form_str, '\t') ||
            !std::getline(fields, denot_str)) {
            throw ValidationError("base case line " + std::to_string(lineno) +
                                  ": expected 3 tab-separated fields");
        }
        auto utt = Utterance::parse(utt_str);
        if (!utt) throw ValidationError("base case line " + std::to_string(lineno) + ": bad utterance");
        auto seq = tgt_from_string(form_str);
        if (!seq) throw ValidationError("base case line " + std::to_string(lineno) + ": bad form");
        auto d = Rational::parse(denot_str);
        if (!d) throw ValidationError("base case line " + std::to_string(lineno) + ": bad denotation");
        cases.push_back(BaseCase{*utt, *seq, *d});
    }
    try {
        return from_cases(std::move(cases));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void BaseCaseSet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open base case file for writing: " + path);
    for (const auto& c : cases_) {
        out << c.utterance.to_string() << '\t' << tgt_to_string(c.bracketed) << '\t'
            << c.denotation.to_string() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::size_t select_base_case(const Utterance& input, const BaseCaseSet& bases) {
    if (bases.size() == 0) throw ValidationError("base case set is empty");
    FeatureBag input_bag = features_src(input.tokens());
    std::size_t best = 0;
    int best_sim = -1;
    for (std::size_t i = 0; i < bases.size(); ++i) {
        int sim = similarity(features_src(bases[i].utterance.tokens()), input_bag);
        if (sim > best_sim) {
            best_sim = sim;
            best = i;
        }
    }
    return best;
}

CandidateSet filter_candidates(const CandidateSet& omega, const Utterance& utterance,
                               const BaseCase& base) {
    CandidateSet gamma;
    gamma.mode = omega.mode;
    const int level = similarity(features_src(utterance.tokens()),
                                 features_src(base.utterance.tokens()));
    const FeatureBag base_bag = features_tgt(strip_brackets(base.bracketed));
    for (const auto& cand : omega.members) {
        if (similarity(base_bag, features_tgt(strip_brackets(cand))) == level) {
            gamma.members.push_back(cand);
        }
    }
    return gamma;
}

}  // namespace denoparse
