#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "denoparse/arith.hpp"
#include "denoparse/rational.hpp"
#include "denoparse/rng.hpp"

namespace denoparse {

// One (utterance, denotation) pair plus the gold logical form kept aside for
// metrics. The gold form is never shown to the model in denotation mode.
struct DatasetRecord {
    Utterance utterance;
    ExprTree tree;  // precedence-canonical reading of the utterance
    Rational denotation;

    TgtSeq gold(GrammarMode mode) const { return linearize(tree, mode); }
};

struct Dataset {
    std::vector<DatasetRecord> records;

    std::size_t size() const { return records.size(); }
};

// The full legal space: every alternating operand/operator sequence with
// 2, 3 or 4 operands (content lengths 3, 5, 7) — 100 + 2,000 + 40,000.
std::vector<FlatExpr> legal_space();

DatasetRecord record_from_flat(const FlatExpr& flat);

// Uniform sample of `total` distinct expressions, split into disjoint
// train/test sets of train_size and total - train_size. Reproducible:
// the same seed always yields the same files.
std::pair<Dataset, Dataset> generate_datasets(std::uint64_t seed, std::size_t total,
                                              std::size_t train_size);

// One record per line: utterance <TAB> bracketed form <TAB> flat form
// <TAB> num/den. Loading revalidates every line: both forms must parse and
// execute to the recorded denotation, and both must describe the utterance.
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace denoparse
