#pragma once

#include <map>
#include <string>
#include <vector>

#include "denoparse/arith.hpp"

namespace denoparse {

// Omega: every logical form of one operand count executing to one
// denotation.  Members are linearized Go..End sequences, sorted
// lexicographically by their token strings (the canonical order used for
// serialization and downstream tie-breaking).  WithBrackets members are
// bracketed trees; NoBrackets members are flat precedence-interpreted
// sequences.
struct CandidateSet {
    GrammarMode mode = GrammarMode::WithBrackets;
    std::vector<TgtSeq> members;

    bool empty() const { return members.empty(); }
    std::size_t size() const { return members.size(); }
    bool contains(const TgtSeq& seq) const;
};

// Forward dynamic program on denotations: D[1] = {1..5} and D[n] combines
// every split, operator and child-denotation pair, recording how each value
// was derived so the full candidate set can be reconstructed backward.
class DenotationTable {
public:
    struct Derivation {
        Op op;
        int left_size;
        Rational left, right;
    };

    static DenotationTable build(int max_operands);

    int max_operands() const { return max_operands_; }

    // Reachable denotations of the given operand count, ascending.
    const std::vector<Rational>& reachable(int size) const;

    bool is_reachable(int size, const Rational& d) const;

    // Recorded ways of producing d at this size; empty when unreachable.
    const std::vector<Derivation>& derivations(int size, const Rational& d) const;

    // All trees of the given size evaluating to d (shared substructure).
    std::vector<ExprTree> reconstruct_trees(int size, const Rational& d) const;

    CandidateSet enumerate_candidates(const Rational& d, int size, GrammarMode mode) const;

    // One pass over every reachable denotation of one size; cheaper than
    // per-denotation queries when building the persisted index.
    std::map<Rational, CandidateSet> enumerate_all(int size, GrammarMode mode) const;

private:
    int max_operands_ = 0;
    // reachable_[n-1]: sorted denotations of size n.
    std::vector<std::vector<Rational>> reachable_;
    // derivs_[n-1]: denotation -> derivations, keyed in sorted order.
    std::vector<std::map<Rational, std::vector<Derivation>>> derivs_;
};

// Exhaustive reference enumeration, deliberately independent of the
// dynamic program: walks every tree (or flat sequence) of the size and
// keeps those evaluating to d.  Tractable for sizes up to 4.
CandidateSet brute_force_candidates(const Rational& d, int size, GrammarMode mode);

// Every well-formed tree with exactly `size` leaves, in generation order.
std::vector<ExprTree> all_trees(int size);
// Every alternating operand/operator list with `size` operands.
std::vector<FlatExpr> all_flat_exprs(int size);

// On-disk index: one record per line,
//   size <TAB> num/den <TAB> candidate ; candidate ; ...
// Candidates are stored in WithBrackets form; NoBrackets lookups keep the
// precedence-canonical members and drop the bracket tokens.
void persist_index(const DenotationTable& table, const std::vector<int>& sizes,
                   const std::string& path);

class CandidateIndex {
public:
    static CandidateIndex load(const std::string& path);

    // Equals enumerate_candidates on the persisted table.  Empty set when
    // the denotation is unreachable; IndexMissingError when the size was
    // never persisted.
    CandidateSet lookup(const Rational& d, int size, GrammarMode mode) const;

    const std::vector<int>& sizes() const { return sizes_; }

private:
    std::vector<int> sizes_;
    std::map<std::pair<int, Rational>, std::vector<TgtSeq>> records_;
};

}  // namespace denoparse
