#include "denoparse/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "denoparse/errors.hpp"

namespace denoparse {

namespace {

constexpr double kDropRate = 0.3;
constexpr double kKeep = 1.0 - kDropRate;
constexpr double kInitRange = 0.05;

Vec sigmoid(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

int lstm_input_size(const LstmCell& cell, int hidden) {
    return static_cast<int>(cell.Wi.cols()) - hidden;
}

LstmCell make_cell(int input, int hidden) {
    LstmCell c;
    for (Mat* w : {&c.Wi, &c.Wf, &c.Wo, &c.Wc}) *w = Mat::Zero(hidden, input + hidden);
    for (Vec* b : {&c.bi, &c.bf, &c.bo, &c.bc}) *b = Vec::Zero(hidden);
    return c;
}

// Zero-valued parameters with the shapes implied by dims.
ModelParams build(const ModelDims& d) {
    ModelParams p;
    p.dims = d;
    p.src_embed = Mat::Zero(d.src_vocab, d.embed);
    p.tgt_embed = Mat::Zero(d.tgt_vocab, d.embed);
    for (int l = 0; l < d.layers; ++l) {
        const int enc_in = (l == 0) ? d.embed : 2 * d.hidden;
        const int dec_in = (l == 0) ? d.embed + 2 * d.hidden : d.hidden;
        p.enc_fwd.push_back(make_cell(enc_in, d.hidden));
        p.enc_bwd.push_back(make_cell(enc_in, d.hidden));
        p.dec.push_back(make_cell(dec_in, d.hidden));
        p.bridge_Wh.push_back(Mat::Zero(d.hidden, 2 * d.hidden));
        p.bridge_Wc.push_back(Mat::Zero(d.hidden, 2 * d.hidden));
        p.bridge_bh.push_back(Vec::Zero(d.hidden));
        p.bridge_bc.push_back(Vec::Zero(d.hidden));
    }
    p.att_Wq = Mat::Zero(d.att_hidden, d.hidden);
    p.att_Wa = Mat::Zero(d.att_hidden, 2 * d.hidden);
    p.att_b = Vec::Zero(d.att_hidden);
    p.att_v = Vec::Zero(d.att_hidden);
    p.out_W = Mat::Zero(d.tgt_vocab, d.hidden);
    p.out_b = Vec::Zero(d.tgt_vocab);
    return p;
}

template <class Params, class View>
std::vector<View> collect(Params& p) {
    std::vector<View> out;
    out.reserve(2 + 8 * 3 * static_cast<std::size_t>(p.dims.layers) + 4 +
                4 * static_cast<std::size_t>(p.dims.layers) + 2);
    auto add = [&out](const char* name, auto& m) {
        out.push_back(View{name, m.data(), static_cast<std::size_t>(m.size())});
    };
    auto add_cell = [&](const char* base, auto& cell) {
        // One shared label per group keeps names static; the position in the
        // list identifies the layer.
        add(base, cell.Wi);
        add(base, cell.bi);
        add(base, cell.Wf);
        add(base, cell.bf);
        add(base, cell.Wo);
        add(base, cell.bo);
        add(base, cell.Wc);
        add(base, cell.bc);
    };
    add("src_embed", p.src_embed);
    add("tgt_embed", p.tgt_embed);
    for (auto& c : p.enc_fwd) add_cell("enc_fwd", c);
    for (auto& c : p.enc_bwd) add_cell("enc_bwd", c);
    for (auto& c : p.dec) add_cell("dec", c);
    add("att_Wq", p.att_Wq);
    add("att_Wa", p.att_Wa);
    add("att_b", p.att_b);
    add("att_v", p.att_v);
    for (int l = 0; l < p.dims.layers; ++l) {
        add("bridge_Wh", p.bridge_Wh[static_cast<std::size_t>(l)]);
        add("bridge_bh", p.bridge_bh[static_cast<std::size_t>(l)]);
        add("bridge_Wc", p.bridge_Wc[static_cast<std::size_t>(l)]);
        add("bridge_bc", p.bridge_bc[static_cast<std::size_t>(l)]);
    }
    add("out_W", p.out_W);
    add("out_b", p.out_b);
    return out;
}

GateTrace lstm_forward(const LstmCell& cell, const Vec& x, const Vec& h_prev,
                       const Vec& c_prev) {
    GateTrace t;
    t.xh.resize(x.size() + h_prev.size());
    t.xh << x, h_prev;
    t.c_prev = c_prev;
    t.i = sigmoid(cell.Wi * t.xh + cell.bi);
    t.f = sigmoid(cell.Wf * t.xh + cell.bf);
    t.o = sigmoid(cell.Wo * t.xh + cell.bo);
    t.cbar = (cell.Wc * t.xh + cell.bc).array().tanh().matrix();
    t.c = t.f.cwiseProduct(c_prev) + t.i.cwiseProduct(t.cbar);
    t.h = t.o.cwiseProduct(t.c.array().tanh().matrix());
    return t;
}

// Backward through one LSTM step. dh/dc are the gradients flowing into h_t
// and c_t; outputs are the gradients for the step input, the previous h, and
// the previous c. Parameter gradients accumulate into g.
void lstm_backward(const LstmCell& cell, const GateTrace& t, const Vec& dh,
                   const Vec& dc_in, LstmCell& g, Vec& dx, Vec& dh_prev,
                   Vec& dc_prev) {
    const Eigen::ArrayXd tc = t.c.array().tanh();
    Vec d_o = dh.cwiseProduct(tc.matrix());
    Vec dc = dc_in + (dh.array() * t.o.array() * (1.0 - tc.square())).matrix();

    Vec di = dc.cwiseProduct(t.cbar);
    Vec dcb = dc.cwiseProduct(t.i);
    Vec df = dc.cwiseProduct(t.c_prev);
    dc_prev = dc.cwiseProduct(t.f);

    Vec dzi = (di.array() * t.i.array() * (1.0 - t.i.array())).matrix();
    Vec dzf = (df.array() * t.f.array() * (1.0 - t.f.array())).matrix();
    Vec dzo = (d_o.array() * t.o.array() * (1.0 - t.o.array())).matrix();
    Vec dzc = (dcb.array() * (1.0 - t.cbar.array().square())).matrix();

    g.Wi.noalias() += dzi * t.xh.transpose();
    g.Wf.noalias() += dzf * t.xh.transpose();
    g.Wo.noalias() += dzo * t.xh.transpose();
    g.Wc.noalias() += dzc * t.xh.transpose();
    g.bi += dzi;
    g.bf += dzf;
    g.bo += dzo;
    g.bc += dzc;

    Vec dxh = cell.Wi.transpose() * dzi + cell.Wf.transpose() * dzf +
              cell.Wo.transpose() * dzo + cell.Wc.transpose() * dzc;
    const int in = lstm_input_size(cell, static_cast<int>(t.h.size()));
    dx = dxh.head(in);
    dh_prev = dxh.tail(t.h.size());
}

Vec draw_mask(int n, Dropout mode, Rng& rng) {
    if (mode == Dropout::Off) return Vec::Ones(n);
    Vec m(n);
    for (int k = 0; k < n; ++k) m[k] = rng.unit() < kKeep ? 1.0 / kKeep : 0.0;
    return m;
}

double log_sum_exp(const Vec& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

Vec softmax(const Vec& z) {
    const double m = z.maxCoeff();
    Vec e = (z.array() - m).exp().matrix();
    return e / e.sum();
}

// The rng is consumed in a fixed documented order so a fixed seed replays the
// same masks: encoder layer boundaries first (position-major), then per
// decoder step its two layer-boundary masks followed by the pre-softmax mask.
EncoderTrace forward_encoder(const ModelParams& p, const SrcSeq& padded,
                             Dropout mode, Rng& rng) {
    const ModelDims& d = p.dims;
    const int H = d.hidden;
    EncoderTrace tr;
    tr.tokens = padded;
    tr.valid_len = masked_length(padded);
    const int T = tr.valid_len;

    tr.fwd.resize(static_cast<std::size_t>(d.layers));
    tr.bwd.resize(static_cast<std::size_t>(d.layers));
    if (d.layers > 1) tr.drop_mask.resize(static_cast<std::size_t>(d.layers - 1));

    std::vector<Vec> input(static_cast<std::size_t>(T));
    for (int pos = 0; pos < T; ++pos)
        input[static_cast<std::size_t>(pos)] =
            p.src_embed.row(padded[static_cast<std::size_t>(pos)]).transpose();

    for (int l = 0; l < d.layers; ++l) {
        auto& fl = tr.fwd[static_cast<std::size_t>(l)];
        auto& bl = tr.bwd[static_cast<std::size_t>(l)];
        fl.resize(static_cast<std::size_t>(T));
        bl.resize(static_cast<std::size_t>(T));
        Vec h = Vec::Zero(H), c = Vec::Zero(H);
        for (int pos = 0; pos < T; ++pos) {
            auto& t = fl[static_cast<std::size_t>(pos)];
            t = lstm_forward(p.enc_fwd[static_cast<std::size_t>(l)],
                             input[static_cast<std::size_t>(pos)], h, c);
            h = t.h;
            c = t.c;
        }
        h = Vec::Zero(H);
        c = Vec::Zero(H);
        for (int pos = T - 1; pos >= 0; --pos) {
            auto& t = bl[static_cast<std::size_t>(pos)];
            t = lstm_forward(p.enc_bwd[static_cast<std::size_t>(l)],
                             input[static_cast<std::size_t>(pos)], h, c);
            h = t.h;
            c = t.c;
        }
        if (l + 1 < d.layers) {
            auto& masks = tr.drop_mask[static_cast<std::size_t>(l)];
            masks.resize(static_cast<std::size_t>(T));
            for (int pos = 0; pos < T; ++pos) {
                auto& m = masks[static_cast<std::size_t>(pos)];
                m = draw_mask(2 * H, mode, rng);
                Vec concat(2 * H);
                concat << fl[static_cast<std::size_t>(pos)].h,
                    bl[static_cast<std::size_t>(pos)].h;
                input[static_cast<std::size_t>(pos)] = m.cwiseProduct(concat);
            }
        }
    }

    tr.annotations.resize(static_cast<std::size_t>(T));
    const std::size_t top = static_cast<std::size_t>(d.layers - 1);
    for (int pos = 0; pos < T; ++pos) {
        Vec a(2 * H);
        a << tr.fwd[top][static_cast<std::size_t>(pos)].h,
            tr.bwd[top][static_cast<std::size_t>(pos)].h;
        tr.annotations[static_cast<std::size_t>(pos)] = a;
    }
    if (T > 0) {
        tr.final_concat.resize(2 * H);
        tr.final_concat << tr.fwd[top][static_cast<std::size_t>(T - 1)].h,
            tr.bwd[top][0].h;
    } else {
        tr.final_concat = Vec::Zero(2 * H);
    }
    return tr;
}

// e_j = v . tanh(Wq q + Wa h_j + b) over the valid positions; softmax; then
// the context is the alpha-weighted annotation average.
void attend_traced(const ModelParams& p, const Vec& query,
                   const std::vector<Vec>& annotations, DecoderStepTrace& st) {
    if (annotations.empty()) throw AllMaskedError("no unmasked source positions to attend to");
    const std::size_t T = annotations.size();
    const Vec q_lin = p.att_Wq * query + p.att_b;
    Vec scores(static_cast<Eigen::Index>(T));
    st.att_tanh.resize(T);
    for (std::size_t j = 0; j < T; ++j) {
        st.att_tanh[j] = (q_lin + p.att_Wa * annotations[j]).array().tanh().matrix();
        scores[static_cast<Eigen::Index>(j)] = p.att_v.dot(st.att_tanh[j]);
    }
    st.alpha = softmax(scores);
    st.context = Vec::Zero(annotations[0].size());
    for (std::size_t j = 0; j < T; ++j)
        st.context += st.alpha[static_cast<Eigen::Index>(j)] * annotations[j];
}

int effective_target_length(const TgtSeq& target) {
    std::size_t len = target.size();
    for (std::size_t k = 0; k < target.size(); ++k) {
        if (target[k] == tgt_tok::kPad) {
            len = k;
            break;
        }
    }
    if (len < 2 || target[0] != tgt_tok::kGo || target[len - 1] != tgt_tok::kEnd)
        throw ValidationError("target sequence must be framed Go ... End");
    for (std::size_t k = len; k < target.size(); ++k)
        if (target[k] != tgt_tok::kPad)
            throw ValidationError("target sequence has tokens after the PAD tail begins");
    return static_cast<int>(len);
}

// Teacher-forced decoder over a framed target. Appends step traces and the
// bridged initial states to `ft` and returns the summed loss.
double run_decoder(const ModelParams& p, const EncoderTrace& enc,
                   const TgtSeq& target, Dropout mode, Rng& rng,
                   ForwardTrace* ft) {
    const ModelDims& d = p.dims;
    const int H = d.hidden;
    const int len = effective_target_length(target);

    std::vector<Vec> h(static_cast<std::size_t>(d.layers)),
        c(static_cast<std::size_t>(d.layers));
    for (int l = 0; l < d.layers; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        h[ul] = p.bridge_Wh[ul] * enc.final_concat + p.bridge_bh[ul];
        c[ul] = p.bridge_Wc[ul] * enc.final_concat + p.bridge_bc[ul];
    }
    if (ft) {
        ft->h0 = h;
        ft->c0 = c;
    }

    double loss = 0.0;
    for (int s = 0; s + 1 < len; ++s) {
        DecoderStepTrace st;
        st.y_prev = target[static_cast<std::size_t>(s)];
        st.y_true = target[static_cast<std::size_t>(s + 1)];
        st.query = h[static_cast<std::size_t>(d.layers - 1)];
        attend_traced(p, st.query, enc.annotations, st);

        Vec x(d.embed + 2 * H);
        x << p.tgt_embed.row(st.y_prev).transpose(), st.context;
        st.layers.resize(static_cast<std::size_t>(d.layers));
        if (d.layers > 1) st.drop_mask.resize(static_cast<std::size_t>(d.layers - 1));
        for (int l = 0; l < d.layers; ++l) {
            const auto ul = static_cast<std::size_t>(l);
            st.layers[ul] = lstm_forward(p.dec[ul], x, h[ul], c[ul]);
            h[ul] = st.layers[ul].h;
            c[ul] = st.layers[ul].c;
            if (l + 1 < d.layers) {
                st.drop_mask[ul] = draw_mask(H, mode, rng);
                x = st.drop_mask[ul].cwiseProduct(h[ul]);
            }
        }
        st.presoftmax_mask = draw_mask(H, mode, rng);
        st.top_dropped =
            st.presoftmax_mask.cwiseProduct(h[static_cast<std::size_t>(d.layers - 1)]);
        Vec logits = p.out_W * st.top_dropped + p.out_b;
        const double lse = log_sum_exp(logits);
        loss += lse - logits[st.y_true];
        st.probs = ((logits.array() - lse).exp()).matrix();
        if (ft) ft->steps.push_back(std::move(st));
    }
    return loss;
}

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    write_bytes(os, b, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    write_bytes(os, b, 4);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | b[k];
    return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr char kMagic[8] = {'D', 'P', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

int masked_length(const SrcSeq& padded) {
    for (std::size_t k = 0; k < padded.size(); ++k) {
        if (padded[k] == src_tok::kEos) return static_cast<int>(k) + 1;
        if (padded[k] == src_tok::kPad) return static_cast<int>(k);
    }
    return static_cast<int>(padded.size());
}

ModelParams ModelParams::init(const ModelDims& dims, Rng& rng) {
    ModelParams p = build(dims);
    for (TensorView v : p.tensors())
        for (std::size_t k = 0; k < v.size; ++k)
            v.data[k] = rng.uniform(-kInitRange, kInitRange);
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) { return build(other.dims); }

std::vector<TensorView> ModelParams::tensors() {
    return collect<ModelParams, TensorView>(*this);
}

std::vector<ConstTensorView> ModelParams::tensors() const {
    return collect<const ModelParams, ConstTensorView>(*this);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const ConstTensorView& v : tensors()) n += v.size;
    return n;
}

EncodeResult encode(const ModelParams& params, const SrcSeq& padded,
                    Dropout dropout, Rng& rng) {
    EncoderTrace tr = forward_encoder(params, padded, dropout, rng);
    return EncodeResult{std::move(tr.annotations), std::move(tr.final_concat)};
}

AttendResult attend(const ModelParams& params, const Vec& query,
                    const std::vector<Vec>& annotations) {
    DecoderStepTrace st;
    attend_traced(params, query, annotations, st);
    return AttendResult{std::move(st.alpha), std::move(st.context)};
}

DecoderState bridge_state(const ModelParams& params, const Vec& final_concat) {
    DecoderState s;
    for (int l = 0; l < params.dims.layers; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        s.h.push_back(params.bridge_Wh[ul] * final_concat + params.bridge_bh[ul]);
        s.c.push_back(params.bridge_Wc[ul] * final_concat + params.bridge_bc[ul]);
    }
    return s;
}

Vec decode_step(const ModelParams& params, int y_prev, DecoderState& state,
                const Vec& context, Dropout dropout, Rng& rng) {
    const ModelDims& d = params.dims;
    Vec x(d.embed + 2 * d.hidden);
    x << params.tgt_embed.row(y_prev).transpose(), context;
    for (int l = 0; l < d.layers; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        GateTrace t = lstm_forward(params.dec[ul], x, state.h[ul], state.c[ul]);
        state.h[ul] = t.h;
        state.c[ul] = t.c;
        if (l + 1 < d.layers)
            x = draw_mask(d.hidden, dropout, rng).cwiseProduct(t.h);
    }
    Vec top = draw_mask(d.hidden, dropout, rng)
                  .cwiseProduct(state.h[static_cast<std::size_t>(d.layers - 1)]);
    return params.out_W * top + params.out_b;
}

double nll(const ModelParams& params, const SrcSeq& padded_src,
           const TgtSeq& target, Dropout dropout, Rng& rng, ForwardTrace* trace) {
    ForwardTrace local;
    ForwardTrace* ft = trace ? trace : &local;
    *ft = ForwardTrace{};
    ft->enc = forward_encoder(params, padded_src, dropout, rng);
    ft->loss = run_decoder(params, ft->enc, target, dropout, rng, ft);
    return ft->loss;
}

ModelParams backprop(const ForwardTrace& trace, const ModelParams& params) {
    const ModelDims& d = params.dims;
    const int H = d.hidden;
    const int L = d.layers;
    const int T = trace.enc.valid_len;
    ModelParams g = ModelParams::zeros_like(params);

    // --- decoder, last step first ---
    std::vector<Vec> dh_rec(static_cast<std::size_t>(L), Vec::Zero(H));
    std::vector<Vec> dc_rec(static_cast<std::size_t>(L), Vec::Zero(H));
    Vec dquery_pending = Vec::Zero(H);  // attention-query grad for the previous step
    std::vector<Vec> dann(static_cast<std::size_t>(T), Vec::Zero(2 * H));

    for (std::size_t s = trace.steps.size(); s-- > 0;) {
        const DecoderStepTrace& st = trace.steps[s];
        const std::size_t top = static_cast<std::size_t>(L - 1);

        Vec dlogits = st.probs;
        dlogits[st.y_true] -= 1.0;
        g.out_W.noalias() += dlogits * st.top_dropped.transpose();
        g.out_b += dlogits;
        Vec dh_top = st.presoftmax_mask.cwiseProduct(params.out_W.transpose() * dlogits);
        dh_top += dh_rec[top] + dquery_pending;

        Vec dx;  // input gradient flowing down the layer stack
        for (int l = L - 1; l >= 0; --l) {
            const auto ul = static_cast<std::size_t>(l);
            Vec dh = (l == L - 1) ? dh_top
                                  : Vec(st.drop_mask[ul].cwiseProduct(dx) + dh_rec[ul]);
            Vec dh_prev, dc_prev;
            lstm_backward(params.dec[ul], st.layers[ul], dh, dc_rec[ul], g.dec[ul], dx,
                          dh_prev, dc_prev);
            dh_rec[ul] = dh_prev;
            dc_rec[ul] = dc_prev;
        }

        // layer-0 input was [tgt_embed(y_prev); context]
        g.tgt_embed.row(st.y_prev) += dx.head(d.embed).transpose();
        Vec dcontext = dx.tail(2 * H);

        // attention backward
        Vec dalpha(static_cast<Eigen::Index>(T));
        for (int j = 0; j < T; ++j) {
            dalpha[j] = trace.enc.annotations[static_cast<std::size_t>(j)].dot(dcontext);
            dann[static_cast<std::size_t>(j)] += st.alpha[j] * dcontext;
        }
        const double mix = st.alpha.dot(dalpha);
        Vec de = (st.alpha.array() * (dalpha.array() - mix)).matrix();
        Vec dquery = Vec::Zero(H);
        for (int j = 0; j < T; ++j) {
            const Vec& u = st.att_tanh[static_cast<std::size_t>(j)];
            g.att_v += de[j] * u;
            Vec dz = (de[j] * params.att_v.array() * (1.0 - u.array().square())).matrix();
            g.att_Wq.noalias() += dz * st.query.transpose();
            g.att_Wa.noalias() +=
                dz * trace.enc.annotations[static_cast<std::size_t>(j)].transpose();
            g.att_b += dz;
            dquery += params.att_Wq.transpose() * dz;
            dann[static_cast<std::size_t>(j)] += params.att_Wa.transpose() * dz;
        }
        dquery_pending = dquery;
    }

    // remaining recurrent grads land on the bridged initial states
    Vec dfinal = Vec::Zero(2 * H);
    for (int l = 0; l < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        Vec dh0 = dh_rec[ul];
        if (l == L - 1) dh0 += dquery_pending;
        const Vec& dc0 = dc_rec[ul];
        g.bridge_Wh[ul].noalias() += dh0 * trace.enc.final_concat.transpose();
        g.bridge_bh[ul] += dh0;
        g.bridge_Wc[ul].noalias() += dc0 * trace.enc.final_concat.transpose();
        g.bridge_bc[ul] += dc0;
        dfinal += params.bridge_Wh[ul].transpose() * dh0 +
                  params.bridge_Wc[ul].transpose() * dc0;
    }

    // --- encoder ---
    // Gradients w.r.t. each layer's concatenated [fwd; bwd] output, before
    // the dropout between layers.
    std::vector<Vec> dout(static_cast<std::size_t>(T), Vec::Zero(2 * H));
    for (int pos = 0; pos < T; ++pos) dout[static_cast<std::size_t>(pos)] = dann[static_cast<std::size_t>(pos)];
    if (T > 0) {
        dout[static_cast<std::size_t>(T - 1)].head(H) += dfinal.head(H);
        dout[0].tail(H) += dfinal.tail(H);
    }

    for (int l = L - 1; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        std::vector<Vec> dx_fwd(static_cast<std::size_t>(T)), dx_bwd(static_cast<std::size_t>(T));

        Vec dh_r = Vec::Zero(H), dc_r = Vec::Zero(H);
        for (int pos = T - 1; pos >= 0; --pos) {
            const auto up = static_cast<std::size_t>(pos);
            Vec dh = dout[up].head(H) + dh_r;
            Vec dh_prev, dc_prev;
            lstm_backward(params.enc_fwd[ul], trace.enc.fwd[ul][up], dh, dc_r,
                          g.enc_fwd[ul], dx_fwd[up], dh_prev, dc_prev);
            dh_r = dh_prev;
            dc_r = dc_prev;
        }
        // The backward direction's recurrence runs right-to-left, so its
        // gradient sweep runs left-to-right.
        dh_r = Vec::Zero(H);
        dc_r = Vec::Zero(H);
        for (int pos = 0; pos < T; ++pos) {
            const auto up = static_cast<std::size_t>(pos);
            Vec dh = dout[up].tail(H) + dh_r;
            Vec dh_prev, dc_prev;
            lstm_backward(params.enc_bwd[ul], trace.enc.bwd[ul][up], dh, dc_r,
                          g.enc_bwd[ul], dx_bwd[up], dh_prev, dc_prev);
            dh_r = dh_prev;
            dc_r = dc_prev;
        }

        if (l > 0) {
            for (int pos = 0; pos < T; ++pos) {
                const auto up = static_cast<std::size_t>(pos);
                dout[up] = trace.enc.drop_mask[static_cast<std::size_t>(l - 1)][up]
                               .cwiseProduct(dx_fwd[up] + dx_bwd[up]);
            }
        } else {
            for (int pos = 0; pos < T; ++pos) {
                const auto up = static_cast<std::size_t>(pos);
                g.src_embed.row(trace.enc.tokens[up]) +=
                    (dx_fwd[up] + dx_bwd[up]).transpose();
            }
        }
    }
    return g;
}

TgtSeq greedy_decode(const ModelParams& params, const SrcSeq& padded_src, int max_len) {
    Rng unused(0);  // dropout is off; never drawn from
    EncodeResult enc = encode(params, padded_src, Dropout::Off, unused);
    DecoderState state = bridge_state(params, enc.final_concat);
    TgtSeq seq{tgt_tok::kGo};
    int y = tgt_tok::kGo;
    while (static_cast<int>(seq.size()) < max_len) {
        AttendResult att = attend(params, state.h.back(), enc.annotations);
        Vec logits = decode_step(params, y, state, att.context, Dropout::Off, unused);
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        y = static_cast<int>(best);
        seq.push_back(y);
        if (y == tgt_tok::kEnd) break;
    }
    return seq;
}

namespace {

// Prefix-trie node for batch candidate scoring. An edge is the token
// consumed to reach the node; a candidate is registered on its End node.
struct ScoreTrieNode {
    int token;
    int cand = -1;
    std::vector<int> children;
};

}  // namespace

std::size_t score_candidates(const ModelParams& params, const SrcSeq& padded_src,
                             const std::vector<TgtSeq>& candidates,
                             std::vector<double>* losses) {
    if (candidates.empty()) throw EmptyCandidatesError("no candidates to score");
    Rng unused(0);
    const EncoderTrace enc = forward_encoder(params, padded_src, Dropout::Off, unused);
    const ModelDims& d = params.dims;
    const int L = d.layers;
    const int H = d.hidden;
    const std::size_t T = enc.annotations.size();
    if (T == 0) throw AllMaskedError("no unmasked source positions to attend to");

    // Candidates overlap heavily (same denotation, same operand count), so
    // the teacher-forced walk is shared per distinct prefix. Each step
    // repeats run_decoder's dropout-off arithmetic exactly: identical
    // operations in identical order, so losses and tie-breaks are the same
    // as scoring each candidate alone.
    std::vector<ScoreTrieNode> nodes;
    nodes.push_back(ScoreTrieNode{tgt_tok::kGo, -1, {}});
    std::size_t max_len = 0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const int len = effective_target_length(candidates[k]);
        max_len = std::max(max_len, static_cast<std::size_t>(len));
        int cur = 0;
        for (int s = 1; s < len; ++s) {
            const int tok = candidates[k][static_cast<std::size_t>(s)];
            int next = -1;
            for (int ch : nodes[static_cast<std::size_t>(cur)].children) {
                if (nodes[static_cast<std::size_t>(ch)].token == tok) {
                    next = ch;
                    break;
                }
            }
            if (next < 0) {
                next = static_cast<int>(nodes.size());
                nodes[static_cast<std::size_t>(cur)].children.push_back(next);
                nodes.push_back(ScoreTrieNode{tok, -1, {}});
            }
            cur = next;
        }
        if (nodes[static_cast<std::size_t>(cur)].cand < 0) {
            nodes[static_cast<std::size_t>(cur)].cand = static_cast<int>(k);
        }
    }

    // The annotation half of every attention score is query-independent.
    std::vector<Vec> a_lin(T);
    for (std::size_t j = 0; j < T; ++j) a_lin[j] = params.att_Wa * enc.annotations[j];

    struct DepthState {
        std::vector<Vec> h, c;
    };
    std::vector<DepthState> states(max_len + 1);
    for (auto& st : states) {
        st.h.assign(static_cast<std::size_t>(L), Vec());
        st.c.assign(static_cast<std::size_t>(L), Vec());
    }
    for (int l = 0; l < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        states[0].h[ul] = params.bridge_Wh[ul] * enc.final_concat + params.bridge_bh[ul];
        states[0].c[ul] = params.bridge_Wc[ul] * enc.final_concat + params.bridge_bc[ul];
    }

    std::vector<double> totals(candidates.size(),
                               std::numeric_limits<double>::quiet_NaN());

    // Scratch reused across every step; each op below mirrors the plain
    // forward pass element for element, just without fresh allocations.
    Vec scores(static_cast<Eigen::Index>(T));
    Vec ebuf(static_cast<Eigen::Index>(T));
    Vec alpha(static_cast<Eigen::Index>(T));
    Vec att_tanh;
    Vec logits;
    Vec q_lin;
    Vec context(2 * H);
    Vec x0(d.embed + 2 * H);
    Vec xh0(d.embed + 3 * H);
    Vec xhs(2 * H);
    Vec zg, gi, gf, go, gcb;

    auto lstm_step = [&](const LstmCell& cell, const Vec& xh, const Vec& c_prev,
                         Vec& h_out, Vec& c_out) {
        zg.noalias() = cell.Wi * xh;
        zg += cell.bi;
        gi = (1.0 / (1.0 + (-zg.array()).exp())).matrix();
        zg.noalias() = cell.Wf * xh;
        zg += cell.bf;
        gf = (1.0 / (1.0 + (-zg.array()).exp())).matrix();
        zg.noalias() = cell.Wo * xh;
        zg += cell.bo;
        go = (1.0 / (1.0 + (-zg.array()).exp())).matrix();
        zg.noalias() = cell.Wc * xh;
        zg += cell.bc;
        gcb = zg.array().tanh().matrix();
        c_out = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gcb);
        h_out = go.cwiseProduct(c_out.array().tanh().matrix());
    };

    // One decoder step: consume y_prev from states[depth] into
    // states[depth+1] and leave the next-token logits + log-sum-exp.
    auto step = [&](int y_prev, std::size_t depth, double& lse) {
        const DepthState& in = states[depth];
        DepthState& out = states[depth + 1];
        const Vec& query = in.h[static_cast<std::size_t>(L - 1)];
        q_lin.noalias() = params.att_Wq * query;
        q_lin += params.att_b;
        for (std::size_t j = 0; j < T; ++j) {
            att_tanh = (q_lin + a_lin[j]).array().tanh().matrix();
            scores[static_cast<Eigen::Index>(j)] = params.att_v.dot(att_tanh);
        }
        const double m = scores.maxCoeff();
        ebuf = (scores.array() - m).exp().matrix();
        alpha = ebuf / ebuf.sum();
        context.setZero();
        for (std::size_t j = 0; j < T; ++j)
            context += alpha[static_cast<Eigen::Index>(j)] * enc.annotations[j];

        x0 << params.tgt_embed.row(y_prev).transpose(), context;
        for (int l = 0; l < L; ++l) {
            const auto ul = static_cast<std::size_t>(l);
            if (l == 0) {
                xh0 << x0, in.h[0];
                lstm_step(params.dec[0], xh0, in.c[0], out.h[0], out.c[0]);
            } else {
                xhs << out.h[ul - 1], in.h[ul];
                lstm_step(params.dec[ul], xhs, in.c[ul], out.h[ul], out.c[ul]);
            }
        }
        logits.noalias() = params.out_W * out.h[static_cast<std::size_t>(L - 1)];
        logits += params.out_b;
        lse = log_sum_exp(logits);
    };

    // DFS; siblings reuse their parent's depth state, which deeper visits
    // never touch. Edge costs are read out before recursing because the
    // logits buffer is shared across depths.
    auto visit = [&](auto&& self, int node, std::size_t depth, double cost) -> void {
        const ScoreTrieNode& n = nodes[static_cast<std::size_t>(node)];
        double lse = 0.0;
        step(n.token, depth, lse);
        std::vector<double> child_cost(n.children.size());
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            const ScoreTrieNode& c = nodes[static_cast<std::size_t>(n.children[i])];
            child_cost[i] = cost + (lse - logits[c.token]);
            if (c.cand >= 0) totals[static_cast<std::size_t>(c.cand)] = child_cost[i];
        }
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            const ScoreTrieNode& c = nodes[static_cast<std::size_t>(n.children[i])];
            if (!c.children.empty()) self(self, n.children[i], depth + 1, child_cost[i]);
        }
    };
    visit(visit, 0, 0, 0.0);

    // Duplicate candidates collapse onto one trie path; give them the same
    // loss so the earliest-index tie-break behaves as in a plain scan.
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (!std::isnan(totals[k])) continue;
        int cur = 0;
        const int len = effective_target_length(candidates[k]);
        for (int s = 1; s < len; ++s) {
            for (int ch : nodes[static_cast<std::size_t>(cur)].children) {
                if (nodes[static_cast<std::size_t>(ch)].token ==
                    candidates[k][static_cast<std::size_t>(s)]) {
                    cur = ch;
                    break;
                }
            }
        }
        totals[k] = totals[static_cast<std::size_t>(
            nodes[static_cast<std::size_t>(cur)].cand)];
    }

    std::size_t best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (totals[k] < best_loss) {
            best_loss = totals[k];
            best = k;
        }
    }
    if (losses) *losses = std::move(totals);
    return best;
}

RmsProp::RmsProp(const ModelParams& params) {
    for (const ConstTensorView& v : params.tensors())
        cache.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(v.size)));
}

void RmsProp::step(ModelParams& params, const ModelParams& grads) {
    std::vector<TensorView> pv = params.tensors();
    std::vector<ConstTensorView> gv = grads.tensors();
    if (pv.size() != gv.size() || pv.size() != cache.size())
        throw ValidationError("optimizer state does not match parameter shapes");
    for (std::size_t k = 0; k < pv.size(); ++k) {
        if (pv[k].size != gv[k].size) throw ValidationError("gradient shape mismatch");
        Eigen::Map<Eigen::ArrayXd> p(pv[k].data, static_cast<Eigen::Index>(pv[k].size));
        Eigen::Map<const Eigen::ArrayXd> g(gv[k].data, static_cast<Eigen::Index>(gv[k].size));
        cache[k] = rho * cache[k] + (1.0 - rho) * g.square();
        p -= lr * g / (cache[k].sqrt() + eps);
    }
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t seed, GrammarMode grammar) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    write_bytes(os, kMagic, sizeof(kMagic));
    const ModelDims& d = params.dims;
    for (int v : {d.src_vocab, d.tgt_vocab, d.embed, d.hidden, d.layers, d.att_hidden})
        put_u32(os, static_cast<std::uint32_t>(v));
    put_u64(os, src_vocab_hash());
    put_u64(os, tgt_vocab_hash());
    put_u64(os, seed);
    os.put(grammar == GrammarMode::WithBrackets ? '\0' : '\x01');
    std::vector<ConstTensorView> views = params.tensors();
    put_u64(os, views.size());
    for (const ConstTensorView& v : views) {
        put_u64(os, v.size);
        for (std::size_t k = 0; k < v.size; ++k) put_f64(os, v.data[k]);
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    ModelDims d;
    d.src_vocab = static_cast<int>(get_u32(is));
    d.tgt_vocab = static_cast<int>(get_u32(is));
    d.embed = static_cast<int>(get_u32(is));
    d.hidden = static_cast<int>(get_u32(is));
    d.layers = static_cast<int>(get_u32(is));
    d.att_hidden = static_cast<int>(get_u32(is));
    for (int v : {d.src_vocab, d.tgt_vocab, d.embed, d.hidden, d.layers, d.att_hidden})
        if (v < 1 || v > 100000) throw ValidationError("checkpoint header has invalid dimensions");
    if (get_u64(is) != src_vocab_hash() || get_u64(is) != tgt_vocab_hash())
        throw ValidationError("checkpoint was written for a different vocabulary");

    Checkpoint ck;
    ck.seed = get_u64(is);
    const int mode_byte = is.get();
    if (mode_byte != 0 && mode_byte != 1) throw ValidationError("bad grammar mode byte");
    ck.grammar = mode_byte == 0 ? GrammarMode::WithBrackets : GrammarMode::NoBrackets;

    ck.params = build(d);
    std::vector<TensorView> views = ck.params.tensors();
    if (get_u64(is) != views.size())
        throw ValidationError("checkpoint tensor count does not match dimensions");
    for (TensorView& v : views) {
        if (get_u64(is) != v.size)
            throw ValidationError("checkpoint tensor size does not match dimensions");
        for (std::size_t k = 0; k < v.size; ++k) v.data[k] = get_f64(is);
    }
    is.peek();
    if (!is.eof()) throw ValidationError("trailing bytes after checkpoint payload");
    return ck;
}

}  // namespace denoparse
