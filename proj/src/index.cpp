#include "denoparse/index.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace denoparse {

namespace {

Rational apply_op(Op op, const Rational& a, const Rational& b) {
    switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div: return a / b;
    }
    throw ValidationError("unknown operator");
}

bool string_less(const TgtSeq& a, const TgtSeq& b) {
    return tgt_to_string(a) < tgt_to_string(b);
}

void sort_canonical(std::vector<TgtSeq>& seqs) {
    std::sort(seqs.begin(), seqs.end(), string_less);
    seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
}

// Backward reconstruction with memoized (size, denotation) subresults.
struct Reconstructor {
    const DenotationTable& table;
    std::map<std::pair<int, Rational>, std::vector<ExprTree>> memo;

    const std::vector<ExprTree>& trees(int size, const Rational& d);
};

const std::vector<ExprTree>& Reconstructor::trees(int size, const Rational& d) {
    auto key = std::make_pair(size, d);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::vector<ExprTree> out;
    if (size == 1) {
        if (d.den() == 1 && d.num() >= 1 && d.num() <= 5) {
            out.push_back(ExprTree::leaf(static_cast<int>(d.num())));
        }
    } else {
        for (const auto& deriv : table.derivations(size, d)) {
            // std::map nodes are stable, so references returned by the
            // recursive calls stay valid while we combine them.
            const auto& lefts = trees(deriv.left_size, deriv.left);
            const auto& rights = trees(size - deriv.left_size, deriv.right);
            for (const auto& l : lefts) {
                for (const auto& r : rights) {
                    out.push_back(ExprTree::node(deriv.op, l, r));
                }
            }
        }
    }
    return memo.emplace(key, std::move(out)).first->second;
}

}  // namespace

bool CandidateSet::contains(const TgtSeq& seq) const {
    return std::find(members.begin(), members.end(), seq) != members.end();
}

DenotationTable DenotationTable::build(int max_operands) {
    if (max_operands < 1 || max_operands > 4) {
        throw ValidationError("table size must be between 1 and 4 operands");
    }
    DenotationTable t;
    t.max_operands_ = max_operands;
    t.reachable_.resize(static_cast<std::size_t>(max_operands));
    t.derivs_.resize(static_cast<std::size_t>(max_operands));
    for (int v = 1; v <= 5; ++v) t.reachable_[0].push_back(Rational(v));
    for (int n = 2; n <= max_operands; ++n) {
        std::map<Rational, std::vector<Derivation>>& derivs = t.derivs_[static_cast<std::size_t>(n - 1)];
        for (int i = 1; i < n; ++i) {
            const auto& lefts = t.reachable_[static_cast<std::size_t>(i - 1)];
            const auto& rights = t.reachable_[static_cast<std::size_t>(n - i - 1)];
            for (const auto& d1 : lefts) {
                for (const auto& d2 : rights) {
                    for (Op op : {Op::Add, Op::Sub, Op::Mul, Op::Div}) {
                        if (op == Op::Div && d2.is_zero()) continue;
                        Rational v = apply_op(op, d1, d2);
                        derivs[v].push_back(Derivation{op, i, d1, d2});
                    }
                }
            }
        }
        auto& vals = t.reachable_[static_cast<std::size_t>(n - 1)];
        vals.reserve(derivs.size());
        for (const auto& [d, _] : derivs) vals.push_back(d);  // map order: ascending
    }
    return t;
}

const std::vector<Rational>& DenotationTable::reachable(int size) const {
    if (size < 1 || size > max_operands_) {
        throw ValidationError("size outside built table");
    }
    return reachable_[static_cast<std::size_t>(size - 1)];
}

bool DenotationTable::is_reachable(int size, const Rational& d) const {
    const auto& vals = reachable(size);
    return std::binary_search(vals.begin(), vals.end(), d);
}

const std::vector<DenotationTable::Derivation>& DenotationTable::derivations(
    int size, const Rational& d) const {
    static const std::vector<Derivation> kNone;
    if (size < 2 || size > max_operands_) return kNone;
    const auto& by_d = derivs_[static_cast<std::size_t>(size - 1)];
    auto it = by_d.find(d);
    return it == by_d.end() ? kNone : it->second;
}

std::vector<ExprTree> DenotationTable::reconstruct_trees(int size, const Rational& d) const {
    Reconstructor rec{*this, {}};
    return rec.trees(size, d);
}

CandidateSet DenotationTable::enumerate_candidates(const Rational& d, int size,
                                                   GrammarMode mode) const {
    CandidateSet out;
    out.mode = mode;
    for (const auto& t : reconstruct_trees(size, d)) {
        if (mode == GrammarMode::NoBrackets && !is_precedence_canonical(t)) continue;
        out.members.push_back(linearize(t, mode));
    }
    sort_canonical(out.members);
    return out;
}

std::map<Rational, CandidateSet> DenotationTable::enumerate_all(int size, GrammarMode mode) const {
    std::map<Rational, CandidateSet> out;
    Reconstructor rec{*this, {}};
    for (const auto& d : reachable(size)) {
        CandidateSet set;
        set.mode = mode;
        for (const auto& t : rec.trees(size, d)) {
            if (mode == GrammarMode::NoBrackets && !is_precedence_canonical(t)) continue;
            set.members.push_back(linearize(t, mode));
        }
        sort_canonical(set.members);
        out.emplace(d, std::move(set));
    }
    return out;
}

std::vector<ExprTree> all_trees(int size) {
    std::vector<std::vector<ExprTree>> by_size(static_cast<std::size_t>(size) + 1);
    for (int v = 1; v <= 5; ++v) by_size[1].push_back(ExprTree::leaf(v));
    for (int n = 2; n <= size; ++n) {
        for (int i = 1; i < n; ++i) {
            for (const auto& l : by_size[static_cast<std::size_t>(i)]) {
                for (const auto& r : by_size[static_cast<std::size_t>(n - i)]) {
                    for (Op op : {Op::Add, Op::Sub, Op::Mul, Op::Div}) {
                        by_size[static_cast<std::size_t>(n)].push_back(ExprTree::node(op, l, r));
                    }
                }
            }
        }
    }
    return by_size[static_cast<std::size_t>(size)];
}

std::vector<FlatExpr> all_flat_exprs(int size) {
    std::vector<FlatExpr> out;
    std::vector<int> operands(static_cast<std::size_t>(size), 1);
    std::vector<int> ops(static_cast<std::size_t>(size - 1), 0);
    while (true) {
        std::vector<Op> op_list;
        for (int o : ops) op_list.push_back(static_cast<Op>(o));
        out.push_back(*FlatExpr::make(operands, op_list));
        // Odometer: operators advance fastest, then operands.
        int k = static_cast<int>(ops.size()) - 1;
        while (k >= 0 && ops[static_cast<std::size_t>(k)] == 3) {
            ops[static_cast<std::size_t>(k)] = 0;
            --k;
        }
        if (k >= 0) {
            ++ops[static_cast<std::size_t>(k)];
            continue;
        }
        int j = size - 1;
        while (j >= 0 && operands[static_cast<std::size_t>(j)] == 5) {
            operands[static_cast<std::size_t>(j)] = 1;
            --j;
        }
        if (j < 0) break;
        ++operands[static_cast<std::size_t>(j)];
    }
    return out;
}

CandidateSet brute_force_candidates(const Rational& d, int size, GrammarMode mode) {
    if (size < 1 || size > 4) {
        throw ValidationError("brute force limited to 4 operands");
    }
    CandidateSet out;
    out.mode = mode;
    if (mode == GrammarMode::WithBrackets) {
        for (const auto& t : all_trees(size)) {
            auto v = try_evaluate(t);
            if (v && *v == d) out.members.push_back(linearize(t, mode));
        }
    } else {
        for (const auto& f : all_flat_exprs(size)) {
            auto v = try_evaluate(precedence_parse(f));
            if (v && *v == d) out.members.push_back(linearize_flat(f));
        }
    }
    sort_canonical(out.members);
    return out;
}

void persist_index(const DenotationTable& table, const std::vector<int>& sizes,
                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open index file for writing: " + path);
    for (int size : sizes) {
        auto all = table.enumerate_all(size, GrammarMode::WithBrackets);
        for (const auto& [d, set] : all) {
            out << size << '\t' << d.to_string() << '\t';
            for (std::size_t i = 0; i < set.members.size(); ++i) {
                if (i) out << " ; ";
                out << tgt_to_string(set.members[i]);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

CandidateIndex CandidateIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index file: " + path);
    CandidateIndex idx;
    std::set<int> sizes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string size_str, denot_str, cands_str;
        if (!std::getline(fields, size_str, '\t') || !std::getline(fields, denot_str, '\t') ||
            !std::getline(fields, cands_str)) {
            throw ValidationError("index line " + std::to_string(lineno) + ": expected 3 fields");
        }
        int size = 0;
        try {
            size = std::stoi(size_str);
        } catch (const std::exception&) {
            throw ValidationError("index line " + std::to_string(lineno) + ": bad size");
        }
        auto d = Rational::parse(denot_str);
        if (!d) throw ValidationError("index line " + std::to_string(lineno) + ": bad denotation");
        std::vector<TgtSeq> members;
        std::size_t start = 0;
        while (start <= cands_str.size()) {
            std::size_t sep = cands_str.find(" ; ", start);
            std::string one = cands_str.substr(
                start, sep == std::string::npos ? std::string::npos : sep - start);
            auto seq = tgt_from_string(one);
            if (!seq) {
                throw ValidationError("index line " + std::to_string(lineno) + ": bad candidate");
            }
            auto tree = parse_logical_form(*seq, GrammarMode::WithBrackets);
            if (!tree || tree->leaf_count() != size || evaluate(*tree) != *d) {
                throw ValidationError("index line " + std::to_string(lineno) +
                                      ": candidate does not execute to keyed denotation");
            }
            members.push_back(std::move(*seq));
            if (sep == std::string::npos) break;
            start = sep + 3;
        }
        if (members.empty()) {
            throw ValidationError("index line " + std::to_string(lineno) + ": empty record");
        }
        auto key = std::make_pair(size, *d);
        if (!idx.records_.emplace(key, std::move(members)).second) {
            throw ValidationError("index line " + std::to_string(lineno) + ": duplicate record");
        }
        sizes.insert(size);
    }
    idx.sizes_.assign(sizes.begin(), sizes.end());
    return idx;
}

CandidateSet CandidateIndex::lookup(const Rational& d, int size, GrammarMode mode) const {
    if (!std::binary_search(sizes_.begin(), sizes_.end(), size)) {
        throw IndexMissingError("index does not cover operand count " + std::to_string(size));
    }
    CandidateSet out;
    out.mode = mode;
    auto it = records_.find(std::make_pair(size, d));
    if (it == records_.end()) return out;
    if (mode == GrammarMode::WithBrackets) {
        out.members = it->second;
        return out;
    }
    for (const auto& seq : it->second) {
        auto tree = parse_logical_form(seq, GrammarMode::WithBrackets);
        if (tree && is_precedence_canonical(*tree)) {
            out.members.push_back(strip_brackets(seq));
        }
    }
    sort_canonical(out.members);
    return out;
}

}  // namespace denoparse
