#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "denoparse/arith.hpp"
#include "denoparse/rng.hpp"

namespace denoparse {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// All sizes the parameter shapes derive from. The defaults are the full
// model; tests shrink hidden/embed for the finite-difference oracle.
struct ModelDims {
    int src_vocab = src_tok::kCount;
    int tgt_vocab = tgt_tok::kCount;
    int embed = 20;
    int hidden = 20;
    int layers = 3;
    int att_hidden = 20;

    bool operator==(const ModelDims&) const = default;
};

// One LSTM layer in one direction: four gates over [x; h_prev].
struct LstmCell {
    Mat Wi, Wf, Wo, Wc;  // hidden x (input + hidden)
    Vec bi, bf, bo, bc;
};

// Flat views over a parameter tensor's storage, used by the optimizer, the
// initializer, the serializer, and the gradient checker.
struct TensorView {
    const char* name;
    double* data;
    std::size_t size;
};

struct ConstTensorView {
    const char* name;
    const double* data;
    std::size_t size;
};

enum class Dropout { Off, On };

struct ModelParams {
    ModelDims dims;

    Mat src_embed;  // src_vocab x embed
    Mat tgt_embed;  // tgt_vocab x embed

    std::vector<LstmCell> enc_fwd;  // [layers]; layer 0 input = embed, rest 2*hidden
    std::vector<LstmCell> enc_bwd;
    std::vector<LstmCell> dec;      // layer 0 input = embed + 2*hidden, rest hidden

    // Additive attention: e_j = v . tanh(Wq q + Wa h_j + b). No output bias;
    // a constant shift would cancel in the softmax and sit at zero gradient.
    Mat att_Wq;  // att_hidden x hidden
    Mat att_Wa;  // att_hidden x 2*hidden
    Vec att_b;   // att_hidden
    Vec att_v;   // att_hidden

    // Affine maps from the concatenated final encoder states (2*hidden) to
    // each decoder layer's initial h and c.
    std::vector<Mat> bridge_Wh, bridge_Wc;  // [layers], hidden x 2*hidden
    std::vector<Vec> bridge_bh, bridge_bc;

    Mat out_W;  // tgt_vocab x hidden
    Vec out_b;  // tgt_vocab

    // Every weight i.i.d. uniform on [-0.05, 0.05], drawn in tensor order
    // (column-major within a tensor).
    static ModelParams init(const ModelDims& dims, Rng& rng);
    static ModelParams zeros_like(const ModelParams& other);

    // All tensors in one fixed, documented order. This order is the
    // serialization and optimizer contract; never reorder without bumping
    // the checkpoint version.
    std::vector<TensorView> tensors();
    std::vector<ConstTensorView> tensors() const;

    std::size_t parameter_count() const;
};

// ---------------------------------------------------------------------------
// Forward traces. Everything the exact backward pass needs is recorded here.

struct GateTrace {
    Vec xh;      // concatenated [layer input; h_prev] the gates saw
    Vec c_prev;
    Vec i, f, o, cbar, c, h;
};

struct EncoderTrace {
    SrcSeq tokens;  // padded to kMaxSourceLen
    int valid_len = 0;
    std::vector<std::vector<GateTrace>> fwd, bwd;  // [layer][pos], pos < valid_len
    std::vector<std::vector<Vec>> drop_mask;       // [layer-1][pos], 2*hidden
    std::vector<Vec> annotations;                  // [pos], 2*hidden
    Vec final_concat;                              // 2*hidden (zeros when empty)
};

struct DecoderStepTrace {
    int y_prev = 0;
    int y_true = 0;
    Vec query;                    // top-layer h fed to attention (bridged h for step 0)
    std::vector<Vec> att_tanh;    // [pos] tanh(Wq q + Wa h_j + b)
    Vec alpha;                    // attention weights over valid positions
    Vec context;                  // 2*hidden
    std::vector<GateTrace> layers;
    std::vector<Vec> drop_mask;   // [layer-1], hidden
    Vec presoftmax_mask;          // hidden
    Vec top_dropped;              // hidden
    Vec probs;                    // tgt_vocab
};

struct ForwardTrace {
    EncoderTrace enc;
    std::vector<Vec> h0, c0;  // bridged decoder initial states, [layers]
    std::vector<DecoderStepTrace> steps;
    double loss = 0.0;
};

// ---------------------------------------------------------------------------
// Inference-facing pieces.

struct EncodeResult {
    std::vector<Vec> annotations;  // one per unmasked source position
    Vec final_concat;
};

struct AttendResult {
    Vec weights;  // sums to 1 over the annotations
    Vec context;
};

struct DecoderState {
    std::vector<Vec> h, c;  // [layers]
};

// Positions after the first <eos> are masked: trailing PAD slots never
// influence anything, whatever tokens they hold.
int masked_length(const SrcSeq& padded);

EncodeResult encode(const ModelParams& params, const SrcSeq& padded,
                    Dropout dropout, Rng& rng);

// Throws AllMaskedError when there is nothing to attend to.
AttendResult attend(const ModelParams& params, const Vec& query,
                    const std::vector<Vec>& annotations);

DecoderState bridge_state(const ModelParams& params, const Vec& final_concat);

// One decoder step; mutates state in place and returns the logits.
Vec decode_step(const ModelParams& params, int y_prev, DecoderState& state,
                const Vec& context, Dropout dropout, Rng& rng);

// Teacher-forced summed negative log likelihood over non-PAD target steps.
// `target` must be framed Go ... End (PAD tail allowed).
double nll(const ModelParams& params, const SrcSeq& padded_src,
           const TgtSeq& target, Dropout dropout, Rng& rng,
           ForwardTrace* trace = nullptr);

// Exact gradients of the traced loss w.r.t. every parameter; dropout masks
// are replayed from the trace.
ModelParams backprop(const ForwardTrace& trace, const ModelParams& params);

// Argmax decoding from "Go", stopping at "End" or max_len total tokens.
TgtSeq greedy_decode(const ModelParams& params, const SrcSeq& padded_src,
                     int max_len = kMaxTargetLen);

// Index of the least-loss candidate; ties go to the earliest. Throws
// EmptyCandidatesError on an empty list. Candidates are walked as a prefix
// trie (one decoder step per distinct prefix), which matches per-candidate
// teacher forcing bit for bit while skipping repeated work. `losses`, when
// given, receives each candidate's summed NLL.
std::size_t score_candidates(const ModelParams& params, const SrcSeq& padded_src,
                             const std::vector<TgtSeq>& candidates,
                             std::vector<double>* losses = nullptr);

// ---------------------------------------------------------------------------
// Optimizer.

struct RmsProp {
    double lr = 0.001;
    double rho = 0.9;
    double eps = 1e-8;
    std::vector<Eigen::ArrayXd> cache;  // aligned with ModelParams::tensors()

    explicit RmsProp(const ModelParams& params);
    void step(ModelParams& params, const ModelParams& grads);
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned header + tensors in ModelParams::tensors() order,
// little-endian IEEE doubles in column-major element order.

struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    GrammarMode grammar = GrammarMode::WithBrackets;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t seed, GrammarMode grammar);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace denoparse
