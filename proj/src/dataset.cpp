#include "denoparse/dataset.hpp"

#include <fstream>
#include <sstream>

#include "denoparse/errors.hpp"
#include "denoparse/index.hpp"

namespace denoparse {

namespace {

// Utterance words without the trailing <eos>, the on-disk spelling.
std::string plain_words(const Utterance& u) {
    const SrcSeq& toks = u.tokens();
    std::string out;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        if (i) out += ' ';
        out += src_token_string(toks[i]);
    }
    return out;
}

}  // namespace

std::vector<FlatExpr> legal_space() {
    std::vector<FlatExpr> space;
    space.reserve(42100);
    for (int n = 2; n <= 4; ++n) {
        std::vector<FlatExpr> of_size = all_flat_exprs(n);
        space.insert(space.end(), of_size.begin(), of_size.end());
    }
    return space;
}

DatasetRecord record_from_flat(const FlatExpr& flat) {
    DatasetRecord r{Utterance::from_flat(flat), precedence_parse(flat), Rational(0)};
    // Flat division is always by a bare operand (1..5), never zero, so the
    // gold denotation is total.
    r.denotation = evaluate(r.tree);
    return r;
}

std::pair<Dataset, Dataset> generate_datasets(std::uint64_t seed, std::size_t total,
                                              std::size_t train_size) {
    std::vector<FlatExpr> space = legal_space();
    if (total > space.size())
        throw ValidationError("requested " + std::to_string(total) + " examples but the space has " +
                              std::to_string(space.size()));
    if (train_size > total)
        throw ValidationError("train size exceeds the total sample size");

    // Partial Fisher-Yates: after i swaps the prefix is a uniform sample
    // without replacement.
    Rng rng(seed);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(space.size() - i));
        std::swap(space[i], space[j]);
    }

    std::pair<Dataset, Dataset> out;
    out.first.records.reserve(train_size);
    out.second.records.reserve(total - train_size);
    for (std::size_t i = 0; i < total; ++i) {
        DatasetRecord r = record_from_flat(space[i]);
        (i < train_size ? out.first : out.second).records.push_back(std::move(r));
    }
    return out;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open dataset for writing: " + path);
    for (const DatasetRecord& r : data.records) {
        os << plain_words(r.utterance) << '\t'
           << tgt_to_string(r.gold(GrammarMode::WithBrackets)) << '\t'
           << tgt_to_string(r.gold(GrammarMode::NoBrackets)) << '\t'
           << r.denotation.to_string() << '\n';
    }
    if (!os) throw IoError("failed writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open dataset: " + path);
    Dataset data;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != 4)
            throw ValidationError(where + ": expected 4 tab-separated fields");

        auto utt = Utterance::parse(fields[0]);
        if (!utt) throw ValidationError(where + ": unparseable utterance");
        auto bracketed = tgt_from_string(fields[1]);
        auto flat = tgt_from_string(fields[2]);
        auto denot = Rational::parse(fields[3]);
        if (!bracketed || !flat || !denot)
            throw ValidationError(where + ": unparseable logical form or denotation");

        auto tree = parse_logical_form(*bracketed, GrammarMode::WithBrackets);
        if (!tree) throw ValidationError(where + ": malformed bracketed form");
        auto flat_tree = parse_logical_form(*flat, GrammarMode::NoBrackets);
        if (!flat_tree) throw ValidationError(where + ": malformed flat form");
        if (!(*tree == *flat_tree))
            throw ValidationError(where + ": bracketed and flat forms disagree");
        if (flatten(*tree) != utt->flat())
            throw ValidationError(where + ": logical form does not describe the utterance");
        auto value = try_evaluate(*tree);
        if (!value || !(*value == *denot))
            throw ValidationError(where + ": logical form does not execute to the denotation");

        data.records.push_back(DatasetRecord{std::move(*utt), std::move(*tree), *denot});
    }
    return data;
}

}  // namespace denoparse
