#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "denoparse/rational.hpp"

namespace denoparse {

// ---------------------------------------------------------------------------
// Vocabularies.  Both are closed; PAD is id 0 on both sides.
// ---------------------------------------------------------------------------

namespace src_tok {
// "one".."five" have ids equal to their numeric value.
enum : int {
    kPad = 0,
    kOne = 1,
    kTwo = 2,
    kThree = 3,
    kFour = 4,
    kFive = 5,
    kPlus = 6,
    kMinus = 7,
    kTimes = 8,
    kDivide = 9,
    kEos = 10,
    kCount = 11,
};
}  // namespace src_tok

namespace tgt_tok {
enum : int {
    kPad = 0,
    kGo = 1,
    kEnd = 2,
    kOpenSquare = 3,   // [  encloses +/- nodes
    kCloseSquare = 4,  // ]
    kOpenParen = 5,    // (  encloses * and / nodes
    kCloseParen = 6,   // )
    kDigit1 = 7,
    kDigit2 = 8,
    kDigit3 = 9,
    kDigit4 = 10,
    kDigit5 = 11,
    kPlus = 12,
    kMinus = 13,
    kTimes = 14,
    kDivide = 15,
    kCount = 16,
};
}  // namespace tgt_tok

constexpr int kMaxSourceLen = 8;   // 7 words + <eos>
constexpr int kMaxTargetLen = 16;  // Go + 13 bracketed content tokens + End

using SrcSeq = std::vector<int>;
using TgtSeq = std::vector<int>;

const std::string& src_token_string(int id);
const std::string& tgt_token_string(int id);
std::optional<int> src_token_id(const std::string& word);
std::optional<int> tgt_token_id(const std::string& symbol);

// Space-joined token strings, the on-disk form for both sequence kinds.
std::string src_to_string(const SrcSeq& seq);
std::string tgt_to_string(const TgtSeq& seq);
std::optional<SrcSeq> src_from_string(const std::string& text);
std::optional<TgtSeq> tgt_from_string(const std::string& text);

// FNV-1a over the token inventory; stamped into checkpoints.
std::uint64_t src_vocab_hash();
std::uint64_t tgt_vocab_hash();

// ---------------------------------------------------------------------------
// Operators and expression trees.
// ---------------------------------------------------------------------------

enum class Op : int { Add = 0, Sub = 1, Mul = 2, Div = 3 };

// Mul/Div bind strictly tighter than Add/Sub.
int precedence(Op op);
char op_char(Op op);
int op_tgt_token(Op op);
int op_src_token(Op op);

// Immutable binary expression tree; the logical form s.  Cheap to copy
// (shared structure), structural equality.
class ExprTree {
public:
    static ExprTree leaf(int value);  // value in 1..5
    static ExprTree node(Op op, ExprTree left, ExprTree right);

    bool is_leaf() const { return node_->left == nullptr; }
    int leaf_value() const { return node_->value; }
    Op op() const { return node_->op; }
    ExprTree left() const { return ExprTree(node_->left); }
    ExprTree right() const { return ExprTree(node_->right); }

    int leaf_count() const { return node_->leaves; }

    bool operator==(const ExprTree& o) const;
    bool operator!=(const ExprTree& o) const { return !(*this == o); }

private:
    struct Node {
        Op op = Op::Add;
        int value = 0;
        int leaves = 1;
        std::shared_ptr<const Node> left, right;
    };
    explicit ExprTree(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

// Bottom-up exact evaluation; depends only on child denotations.
// Throws DivisionByZeroError when a division's right subtree is zero.
Rational evaluate(const ExprTree& tree);
// Same, but nullopt instead of throwing (for exhaustive enumeration).
std::optional<Rational> try_evaluate(const ExprTree& tree);

// ---------------------------------------------------------------------------
// Flat expressions: the alternating operand/operator backbone shared by
// utterances and bracket-free logical forms.
// ---------------------------------------------------------------------------

struct FlatExpr {
    std::vector<int> operands;  // each in 1..5
    std::vector<Op> ops;        // size == operands.size() - 1

    int operand_count() const { return static_cast<int>(operands.size()); }
    // 2*n - 1 content tokens.
    int content_length() const { return static_cast<int>(operands.size() + ops.size()); }

    bool operator==(const FlatExpr& o) const { return operands == o.operands && ops == o.ops; }

    static std::optional<FlatExpr> make(std::vector<int> operands, std::vector<Op> ops);
};

// The unique tree honoring precedence and left associativity.
ExprTree precedence_parse(const FlatExpr& flat);

// In-order leaf/operator projection of a tree.
FlatExpr flatten(const ExprTree& tree);

// A tree already in the shape precedence_parse would rebuild from its
// flattening; flat-mode candidate sets contain exactly these.
bool is_precedence_canonical(const ExprTree& tree);

// ---------------------------------------------------------------------------
// Grammar modes and linearization.
// ---------------------------------------------------------------------------

enum class GrammarMode { WithBrackets, NoBrackets };

const char* grammar_mode_name(GrammarMode mode);

// Go ... End framed target token sequence.  WithBrackets wraps every
// Add/Sub node in [ ] and every Mul/Div node in ( ); NoBrackets drops all
// bracket tokens (the flat projection).
TgtSeq linearize(const ExprTree& tree, GrammarMode mode);
TgtSeq linearize_flat(const FlatExpr& flat);

// Strict parse of a decoder output sequence.  Requires Go/End framing and,
// WithBrackets, matched brackets whose class agrees with the operator.
// nullopt on any malformed input; callers treat that as a wrong answer.
std::optional<ExprTree> parse_logical_form(const TgtSeq& seq, GrammarMode mode);

// Drops bracket tokens; turns a WithBrackets sequence into its flat form.
TgtSeq strip_brackets(const TgtSeq& seq);

// ---------------------------------------------------------------------------
// Utterances.
// ---------------------------------------------------------------------------

// Word sequence "three divide four ... <eos>".  Content alternates
// number/operator with 2..4 operands; exactly one <eos> closes it.
class Utterance {
public:
    static Utterance from_flat(const FlatExpr& flat);
    // Validating parse of a space-joined word string (trailing "<eos>"
    // optional; PAD tokens after <eos> accepted).
    static std::optional<Utterance> parse(const std::string& text);

    const SrcSeq& tokens() const { return tokens_; }  // content + <eos>
    SrcSeq padded(int len = kMaxSourceLen) const;

    int content_length() const { return static_cast<int>(tokens_.size()) - 1; }
    int operand_count() const { return (content_length() + 1) / 2; }

    const FlatExpr& flat() const { return flat_; }
    std::string to_string() const;  // includes trailing <eos>

    bool operator==(const Utterance& o) const { return tokens_ == o.tokens_; }

private:
    Utterance() = default;
    SrcSeq tokens_;
    FlatExpr flat_;
};

// render_utterance in the style of the dataset generator.
Utterance render_utterance(const FlatExpr& flat);

}  // namespace denoparse
