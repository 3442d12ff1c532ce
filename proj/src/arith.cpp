#include "denoparse/arith.hpp"

#include <array>
#include <sstream>

namespace denoparse {

namespace {

const std::array<std::string, src_tok::kCount> kSrcTokens = {
    "PAD", "one", "two", "three", "four", "five",
    "plus", "minus", "times", "divide", "<eos>"};

const std::array<std::string, tgt_tok::kCount> kTgtTokens = {
    "PAD", "Go", "End", "[", "]", "(", ")",
    "1", "2", "3", "4", "5", "+", "-", "*", "/"};

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <std::size_t N>
std::uint64_t vocab_hash(const std::array<std::string, N>& tokens) {
    std::string joined;
    for (const auto& t : tokens) {
        joined += t;
        joined += '\n';
    }
    return fnv1a(joined);
}

std::vector<std::string> split_ws(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) out.push_back(word);
    return out;
}

}  // namespace

const std::string& src_token_string(int id) { return kSrcTokens.at(static_cast<std::size_t>(id)); }
const std::string& tgt_token_string(int id) { return kTgtTokens.at(static_cast<std::size_t>(id)); }

std::optional<int> src_token_id(const std::string& word) {
    for (int i = 0; i < src_tok::kCount; ++i) {
        if (kSrcTokens[static_cast<std::size_t>(i)] == word) return i;
    }
    return std::nullopt;
}

std::optional<int> tgt_token_id(const std::string& symbol) {
    for (int i = 0; i < tgt_tok::kCount; ++i) {
        if (kTgtTokens[static_cast<std::size_t>(i)] == symbol) return i;
    }
    return std::nullopt;
}

std::string src_to_string(const SrcSeq& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) out += ' ';
        out += src_token_string(seq[i]);
    }
    return out;
}

std::string tgt_to_string(const TgtSeq& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) out += ' ';
        out += tgt_token_string(seq[i]);
    }
    return out;
}

std::optional<SrcSeq> src_from_string(const std::string& text) {
    SrcSeq seq;
    for (const auto& word : split_ws(text)) {
        auto id = src_token_id(word);
        if (!id) return std::nullopt;
        seq.push_back(*id);
    }
    return seq;
}

std::optional<TgtSeq> tgt_from_string(const std::string& text) {
    TgtSeq seq;
    for (const auto& word : split_ws(text)) {
        auto id = tgt_token_id(word);
        if (!id) return std::nullopt;
        seq.push_back(*id);
    }
    return seq;
}

std::uint64_t src_vocab_hash() {
    static const std::uint64_t h = vocab_hash(kSrcTokens);
    return h;
}

std::uint64_t tgt_vocab_hash() {
    static const std::uint64_t h = vocab_hash(kTgtTokens);
    return h;
}

int precedence(Op op) { return (op == Op::Mul || op == Op::Div) ? 2 : 1; }

char op_char(Op op) {
    switch (op) {
        case Op::Add: return '+';
        case Op::Sub: return '-';
        case Op::Mul: return '*';
        case Op::Div: return '/';
    }
    return '?';
}

int op_tgt_token(Op op) {
    switch (op) {
        case Op::Add: return tgt_tok::kPlus;
        case Op::Sub: return tgt_tok::kMinus;
        case Op::Mul: return tgt_tok::kTimes;
        case Op::Div: return tgt_tok::kDivide;
    }
    return tgt_tok::kPad;
}

int op_src_token(Op op) {
    switch (op) {
        case Op::Add: return src_tok::kPlus;
        case Op::Sub: return src_tok::kMinus;
        case Op::Mul: return src_tok::kTimes;
        case Op::Div: return src_tok::kDivide;
    }
    return src_tok::kPad;
}

ExprTree ExprTree::leaf(int value) {
    if (value < 1 || value > 5) {
        throw ValidationError("leaf value out of range: " + std::to_string(value));
    }
    auto n = std::make_shared<Node>();
    n->value = value;
    n->leaves = 1;
    return ExprTree(std::move(n));
}

ExprTree ExprTree::node(Op op, ExprTree left, ExprTree right) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->leaves = left.leaf_count() + right.leaf_count();
    n->left = left.node_;
    n->right = right.node_;
    return ExprTree(std::move(n));
}

bool ExprTree::operator==(const ExprTree& o) const {
    if (node_ == o.node_) return true;
    if (is_leaf() != o.is_leaf()) return false;
    if (is_leaf()) return leaf_value() == o.leaf_value();
    return op() == o.op() && left() == o.left() && right() == o.right();
}

std::optional<Rational> try_evaluate(const ExprTree& tree) {
    if (tree.is_leaf()) return Rational(tree.leaf_value());
    auto l = try_evaluate(tree.left());
    if (!l) return std::nullopt;
    auto r = try_evaluate(tree.right());
    if (!r) return std::nullopt;
    switch (tree.op()) {
        case Op::Add: return *l + *r;
        case Op::Sub: return *l - *r;
        case Op::Mul: return *l * *r;
        case Op::Div:
            if (r->is_zero()) return std::nullopt;
            return *l / *r;
    }
    return std::nullopt;
}

Rational evaluate(const ExprTree& tree) {
    auto v = try_evaluate(tree);
    if (!v) throw DivisionByZeroError("expression divides by zero");
    return *v;
}

std::optional<FlatExpr> FlatExpr::make(std::vector<int> operands, std::vector<Op> ops) {
    if (operands.empty() || ops.size() + 1 != operands.size()) return std::nullopt;
    for (int v : operands) {
        if (v < 1 || v > 5) return std::nullopt;
    }
    FlatExpr f;
    f.operands = std::move(operands);
    f.ops = std::move(ops);
    return f;
}

ExprTree precedence_parse(const FlatExpr& flat) {
    // Shunting-yard over the alternating list; left-associative within a
    // precedence level, so reduce while the stack top binds at least as
    // tightly as the incoming operator.
    std::vector<ExprTree> operands;
    std::vector<Op> pending;
    auto reduce = [&]() {
        ExprTree r = operands.back();
        operands.pop_back();
        ExprTree l = operands.back();
        operands.pop_back();
        operands.push_back(ExprTree::node(pending.back(), l, r));
        pending.pop_back();
    };
    operands.push_back(ExprTree::leaf(flat.operands[0]));
    for (std::size_t i = 0; i < flat.ops.size(); ++i) {
        Op op = flat.ops[i];
        while (!pending.empty() && precedence(pending.back()) >= precedence(op)) reduce();
        pending.push_back(op);
        operands.push_back(ExprTree::leaf(flat.operands[i + 1]));
    }
    while (!pending.empty()) reduce();
    return operands.back();
}

namespace {

void flatten_into(const ExprTree& tree, FlatExpr& out) {
    if (tree.is_leaf()) {
        out.operands.push_back(tree.leaf_value());
        return;
    }
    flatten_into(tree.left(), out);
    out.ops.push_back(tree.op());
    flatten_into(tree.right(), out);
}

}  // namespace

FlatExpr flatten(const ExprTree& tree) {
    FlatExpr out;
    flatten_into(tree, out);
    return out;
}

bool is_precedence_canonical(const ExprTree& tree) {
    return precedence_parse(flatten(tree)) == tree;
}

const char* grammar_mode_name(GrammarMode mode) {
    return mode == GrammarMode::WithBrackets ? "brackets" : "flat";
}

namespace {

void linearize_into(const ExprTree& tree, bool brackets, TgtSeq& out) {
    if (tree.is_leaf()) {
        out.push_back(tgt_tok::kDigit1 + tree.leaf_value() - 1);
        return;
    }
    const bool additive = precedence(tree.op()) == 1;
    if (brackets) out.push_back(additive ? tgt_tok::kOpenSquare : tgt_tok::kOpenParen);
    linearize_into(tree.left(), brackets, out);
    out.push_back(op_tgt_token(tree.op()));
    linearize_into(tree.right(), brackets, out);
    if (brackets) out.push_back(additive ? tgt_tok::kCloseSquare : tgt_tok::kCloseParen);
}

}  // namespace

TgtSeq linearize(const ExprTree& tree, GrammarMode mode) {
    TgtSeq out;
    out.push_back(tgt_tok::kGo);
    linearize_into(tree, mode == GrammarMode::WithBrackets, out);
    out.push_back(tgt_tok::kEnd);
    return out;
}

TgtSeq linearize_flat(const FlatExpr& flat) {
    TgtSeq out;
    out.push_back(tgt_tok::kGo);
    for (std::size_t i = 0; i < flat.operands.size(); ++i) {
        if (i) out.push_back(op_tgt_token(flat.ops[i - 1]));
        out.push_back(tgt_tok::kDigit1 + flat.operands[i] - 1);
    }
    out.push_back(tgt_tok::kEnd);
    return out;
}

TgtSeq strip_brackets(const TgtSeq& seq) {
    TgtSeq out;
    for (int t : seq) {
        if (t == tgt_tok::kOpenSquare || t == tgt_tok::kCloseSquare ||
            t == tgt_tok::kOpenParen || t == tgt_tok::kCloseParen) {
            continue;
        }
        out.push_back(t);
    }
    return out;
}

namespace {

bool is_digit_token(int t) { return t >= tgt_tok::kDigit1 && t <= tgt_tok::kDigit5; }

std::optional<Op> op_of_tgt_token(int t) {
    switch (t) {
        case tgt_tok::kPlus: return Op::Add;
        case tgt_tok::kMinus: return Op::Sub;
        case tgt_tok::kTimes: return Op::Mul;
        case tgt_tok::kDivide: return Op::Div;
        default: return std::nullopt;
    }
}

// expr := digit | '[' expr addop expr ']' | '(' expr mulop expr ')'
std::optional<ExprTree> parse_bracketed(const TgtSeq& seq, std::size_t& pos) {
    if (pos >= seq.size()) return std::nullopt;
    int t = seq[pos];
    if (is_digit_token(t)) {
        ++pos;
        return ExprTree::leaf(t - tgt_tok::kDigit1 + 1);
    }
    if (t != tgt_tok::kOpenSquare && t != tgt_tok::kOpenParen) return std::nullopt;
    const bool additive = t == tgt_tok::kOpenSquare;
    ++pos;
    auto left = parse_bracketed(seq, pos);
    if (!left) return std::nullopt;
    if (pos >= seq.size()) return std::nullopt;
    auto op = op_of_tgt_token(seq[pos]);
    if (!op) return std::nullopt;
    // Bracket class must match the operator class.
    if ((precedence(*op) == 1) != additive) return std::nullopt;
    ++pos;
    auto right = parse_bracketed(seq, pos);
    if (!right) return std::nullopt;
    if (pos >= seq.size()) return std::nullopt;
    if (seq[pos] != (additive ? tgt_tok::kCloseSquare : tgt_tok::kCloseParen)) return std::nullopt;
    ++pos;
    return ExprTree::node(*op, *left, *right);
}

// Strips "Go ... End [PAD...]" framing; nullopt when the frame is broken.
std::optional<TgtSeq> unframe(const TgtSeq& seq) {
    if (seq.size() < 2 || seq.front() != tgt_tok::kGo) return std::nullopt;
    std::size_t end = 1;
    while (end < seq.size() && seq[end] != tgt_tok::kEnd) ++end;
    if (end == seq.size()) return std::nullopt;
    for (std::size_t i = end + 1; i < seq.size(); ++i) {
        if (seq[i] != tgt_tok::kPad) return std::nullopt;
    }
    return TgtSeq(seq.begin() + 1, seq.begin() + static_cast<std::ptrdiff_t>(end));
}

}  // namespace

std::optional<ExprTree> parse_logical_form(const TgtSeq& seq, GrammarMode mode) {
    auto content = unframe(seq);
    if (!content || content->empty()) return std::nullopt;
    if (mode == GrammarMode::WithBrackets) {
        std::size_t pos = 0;
        auto tree = parse_bracketed(*content, pos);
        if (!tree || pos != content->size()) return std::nullopt;
        return tree;
    }
    // NoBrackets: alternating digits and operators, precedence meaning.
    std::vector<int> operands;
    std::vector<Op> ops;
    for (std::size_t i = 0; i < content->size(); ++i) {
        int t = (*content)[i];
        if (i % 2 == 0) {
            if (!is_digit_token(t)) return std::nullopt;
            operands.push_back(t - tgt_tok::kDigit1 + 1);
        } else {
            auto op = op_of_tgt_token(t);
            if (!op) return std::nullopt;
            ops.push_back(*op);
        }
    }
    auto flat = FlatExpr::make(std::move(operands), std::move(ops));
    if (!flat) return std::nullopt;
    return precedence_parse(*flat);
}

Utterance Utterance::from_flat(const FlatExpr& flat) {
    if (flat.operand_count() < 2 || flat.operand_count() > 4) {
        throw ValidationError("utterance must have 2..4 operands");
    }
    Utterance u;
    u.flat_ = flat;
    for (std::size_t i = 0; i < flat.operands.size(); ++i) {
        if (i) u.tokens_.push_back(op_src_token(flat.ops[i - 1]));
        u.tokens_.push_back(flat.operands[i]);  // digit word ids equal values
    }
    u.tokens_.push_back(src_tok::kEos);
    return u;
}

std::optional<Utterance> Utterance::parse(const std::string& text) {
    auto ids = src_from_string(text);
    if (!ids) return std::nullopt;
    // Trim one optional <eos> plus trailing PADs.
    std::size_t end = ids->size();
    while (end > 0 && (*ids)[end - 1] == src_tok::kPad) --end;
    if (end > 0 && (*ids)[end - 1] == src_tok::kEos) --end;
    std::vector<int> operands;
    std::vector<Op> ops;
    for (std::size_t i = 0; i < end; ++i) {
        int t = (*ids)[i];
        if (i % 2 == 0) {
            if (t < src_tok::kOne || t > src_tok::kFive) return std::nullopt;
            operands.push_back(t);
        } else {
            if (t < src_tok::kPlus || t > src_tok::kDivide) return std::nullopt;
            ops.push_back(static_cast<Op>(t - src_tok::kPlus));
        }
    }
    auto flat = FlatExpr::make(std::move(operands), std::move(ops));
    if (!flat || flat->operand_count() < 2 || flat->operand_count() > 4) return std::nullopt;
    return from_flat(*flat);
}

SrcSeq Utterance::padded(int len) const {
    if (static_cast<int>(tokens_.size()) > len) {
        throw ValidationError("utterance longer than padded length");
    }
    SrcSeq out = tokens_;
    out.resize(static_cast<std::size_t>(len), src_tok::kPad);
    return out;
}

std::string Utterance::to_string() const { return src_to_string(tokens_); }

Utterance render_utterance(const FlatExpr& flat) { return Utterance::from_flat(flat); }

}  // namespace denoparse
