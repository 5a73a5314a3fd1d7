#include "hybridlm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hybridlm {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

constexpr double kLnEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / M_PI);

double gelu(double x) {
    double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    double u = kGeluC * (x + 0.044715 * x * x * x);
    double th = std::tanh(u);
    double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// y = xhat * diag(g) + b, xhat = (x - mu) * rstd per row
void layernorm_fwd(const MatrixXd& x, const MatrixXd& g, const MatrixXd& b, MatrixXd& xhat,
                   VectorXd& rstd, MatrixXd& y) {
    const auto T = x.rows();
    const auto D = x.cols();
    xhat.resize(T, D);
    y.resize(T, D);
    rstd.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        double mu = x.row(t).mean();
        double var = (x.row(t).array() - mu).square().mean();
        double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd(t) = rs;
        xhat.row(t) = (x.row(t).array() - mu) * rs;
        y.row(t) = xhat.row(t).cwiseProduct(g.row(0)) + b.row(0);
    }
}

void layernorm_bwd(const MatrixXd& dy, const MatrixXd& xhat, const VectorXd& rstd,
                   const MatrixXd& g, MatrixXd& dx, MatrixXd& dg, MatrixXd& db) {
    const auto T = dy.rows();
    const auto D = dy.cols();
    dx.resize(T, D);
    for (Eigen::Index t = 0; t < T; ++t) {
        RowVectorXd dxhat = dy.row(t).cwiseProduct(g.row(0));
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(t)).mean();
        dx.row(t) = rstd(t) * (dxhat.array() - m1 - xhat.row(t).array() * m2);
    }
    dg.row(0) += (dy.cwiseProduct(xhat)).colwise().sum();
    db.row(0) += dy.colwise().sum();
}

void softmax_rows(const MatrixXd& logits, MatrixXd& probs) {
    probs.resize(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        double mx = logits.row(t).maxCoeff();
        probs.row(t) = (logits.row(t).array() - mx).exp();
        probs.row(t) /= probs.row(t).sum();
    }
}

double row_logsumexp(const MatrixXd& logits, Eigen::Index t) {
    double mx = logits.row(t).maxCoeff();
    return mx + std::log((logits.row(t).array() - mx).exp().sum());
}

MatrixXd randn(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

double Rng::uniform() {
    return (double)(eng_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

int Rng::uniform_int(int lo, int hi) {
    uint64_t span = (uint64_t)(hi - lo) + 1;
    return lo + (int)(eng_() % span);
}

// ---------------------------------------------------------------------------
// config / parameters
// ---------------------------------------------------------------------------

ModelConfig model_config_from_kv(const KvMap& kv) {
    ModelConfig cfg;
    cfg.layers = (int)kv_int(kv, "layers");
    cfg.d_model = (int)kv_int(kv, "d_model");
    cfg.attn_heads = (int)kv_int(kv, "attn_heads");
    cfg.max_seq = (int)kv_int(kv, "max_seq");
    cfg.speaker_dim = (int)kv_int(kv, "speaker_dim", 8);
    cfg.adapter_in_dim = (int)kv_int(kv, "adapter_in_dim", 8);
    cfg.seed = (uint64_t)kv_int(kv, "seed", 1);
    cfg.vocab = vocab_from_kv(kv);
    return cfg;
}

KvMap model_config_to_kv(const ModelConfig& cfg) {
    KvMap kv = vocab_to_kv(cfg.vocab);
    kv["layers"] = std::to_string(cfg.layers);
    kv["d_model"] = std::to_string(cfg.d_model);
    kv["attn_heads"] = std::to_string(cfg.attn_heads);
    kv["max_seq"] = std::to_string(cfg.max_seq);
    kv["speaker_dim"] = std::to_string(cfg.speaker_dim);
    kv["adapter_in_dim"] = std::to_string(cfg.adapter_in_dim);
    kv["seed"] = std::to_string(cfg.seed);
    return kv;
}

void visit_params(
    Parameters& p,
    const std::function<void(const std::string&, ParamGroup, Eigen::MatrixXd&)>& fn) {
    fn("emb_text", ParamGroup::Embeddings, p.emb_text);
    for (size_t j = 0; j < p.emb_cb.size(); ++j)
        fn("emb_cb" + std::to_string(j), ParamGroup::Embeddings, p.emb_cb[j]);
    fn("emb_pad", ParamGroup::Embeddings, p.emb_pad);
    fn("emb_pos", ParamGroup::Embeddings, p.emb_pos);
    for (size_t l = 0; l < p.blocks.size(); ++l) {
        BlockParams& b = p.blocks[l];
        std::string pre = "block" + std::to_string(l) + ".";
        fn(pre + "ln1_g", ParamGroup::Blocks, b.ln1_g);
        fn(pre + "ln1_b", ParamGroup::Blocks, b.ln1_b);
        fn(pre + "wq", ParamGroup::Blocks, b.wq);
        fn(pre + "bq", ParamGroup::Blocks, b.bq);
        fn(pre + "wk", ParamGroup::Blocks, b.wk);
        fn(pre + "bk", ParamGroup::Blocks, b.bk);
        fn(pre + "wv", ParamGroup::Blocks, b.wv);
        fn(pre + "bv", ParamGroup::Blocks, b.bv);
        fn(pre + "wo", ParamGroup::Blocks, b.wo);
        fn(pre + "bo", ParamGroup::Blocks, b.bo);
        fn(pre + "ln2_g", ParamGroup::Blocks, b.ln2_g);
        fn(pre + "ln2_b", ParamGroup::Blocks, b.ln2_b);
        fn(pre + "w1", ParamGroup::Blocks, b.w1);
        fn(pre + "b1", ParamGroup::Blocks, b.b1);
        fn(pre + "w2", ParamGroup::Blocks, b.w2);
        fn(pre + "b2", ParamGroup::Blocks, b.b2);
    }
    fn("lnf_g", ParamGroup::Blocks, p.lnf_g);
    fn("lnf_b", ParamGroup::Blocks, p.lnf_b);
    fn("head0_w", ParamGroup::Heads, p.head0_w);
    fn("head0_b", ParamGroup::Heads, p.head0_b);
    for (size_t j = 0; j < p.head_w.size(); ++j) {
        fn("head" + std::to_string(j + 1) + "_w", ParamGroup::Heads, p.head_w[j]);
        fn("head" + std::to_string(j + 1) + "_b", ParamGroup::Heads, p.head_b[j]);
    }
    fn("spk_w", ParamGroup::SpeakerAdapter, p.spk_w);
    fn("spk_b", ParamGroup::SpeakerAdapter, p.spk_b);
    fn("ad1_w", ParamGroup::FeatureAdapter, p.ad1_w);
    fn("ad1_b", ParamGroup::FeatureAdapter, p.ad1_b);
    fn("ad2_w", ParamGroup::FeatureAdapter, p.ad2_w);
    fn("ad2_b", ParamGroup::FeatureAdapter, p.ad2_b);
}

bool group_trainable(ParamGroup group, TrainableSet set) {
    switch (set) {
        case TrainableSet::AdapterOnly:
            return group == ParamGroup::SpeakerAdapter || group == ParamGroup::FeatureAdapter;
        case TrainableSet::AdapterAndBackbone: return group != ParamGroup::Heads;
        case TrainableSet::All: return true;
    }
    return true;
}

static Parameters zero_like(const Parameters& p) {
    Parameters z = p;
    visit_params(z, [](const std::string&, ParamGroup, MatrixXd& m) { m.setZero(); });
    return z;
}

ToyModel::ToyModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.d_model < 1 || cfg.attn_heads < 1 || cfg.d_model % cfg.attn_heads != 0)
        throw std::invalid_argument("d_model must be divisible by attn_heads");
    if (cfg.max_seq < 1) throw std::invalid_argument("max_seq must be >= 1");
    if (cfg.layers < 1) throw std::invalid_argument("layers must be >= 1");
    ValidationResult v = validate(cfg.vocab);
    if (!v.ok) throw std::invalid_argument("invalid vocab: " + v.message);

    const int d = cfg.d_model;
    const int J = cfg.vocab.num_codebooks();
    Rng rng(cfg.seed);
    const double s = 0.02;

    params_.emb_text = randn(rng, cfg.vocab.text_size, d, s);
    for (int j = 0; j < J; ++j)
        params_.emb_cb.push_back(randn(rng, cfg.vocab.codebook_sizes[(size_t)j], d, s));
    params_.emb_pad = randn(rng, 1, d, s);
    params_.emb_pos = randn(rng, cfg.max_seq, d, s);
    for (int l = 0; l < cfg.layers; ++l) {
        BlockParams b;
        b.ln1_g = MatrixXd::Ones(1, d);
        b.ln1_b = MatrixXd::Zero(1, d);
        b.wq = randn(rng, d, d, s);
        b.bq = MatrixXd::Zero(1, d);
        b.wk = randn(rng, d, d, s);
        b.bk = MatrixXd::Zero(1, d);
        b.wv = randn(rng, d, d, s);
        b.bv = MatrixXd::Zero(1, d);
        b.wo = randn(rng, d, d, s);
        b.bo = MatrixXd::Zero(1, d);
        b.ln2_g = MatrixXd::Ones(1, d);
        b.ln2_b = MatrixXd::Zero(1, d);
        b.w1 = randn(rng, d, 4 * d, s);
        b.b1 = MatrixXd::Zero(1, 4 * d);
        b.w2 = randn(rng, 4 * d, d, s);
        b.b2 = MatrixXd::Zero(1, d);
        params_.blocks.push_back(std::move(b));
    }
    params_.lnf_g = MatrixXd::Ones(1, d);
    params_.lnf_b = MatrixXd::Zero(1, d);
    params_.head0_w = randn(rng, d, cfg.vocab.unified_head0_size(), s);
    params_.head0_b = MatrixXd::Zero(1, cfg.vocab.unified_head0_size());
    for (int j = 1; j < J; ++j) {
        params_.head_w.push_back(randn(rng, d, cfg.vocab.codebook_sizes[(size_t)j], s));
        params_.head_b.push_back(MatrixXd::Zero(1, cfg.vocab.codebook_sizes[(size_t)j]));
    }
    params_.spk_w = randn(rng, cfg.speaker_dim, d, s);
    params_.spk_b = MatrixXd::Zero(1, d);
    params_.ad1_w = randn(rng, cfg.adapter_in_dim, d, s);
    params_.ad1_b = MatrixXd::Zero(1, d);
    params_.ad2_w = randn(rng, d, d, s);
    params_.ad2_b = MatrixXd::Zero(1, d);
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

Eigen::RowVectorXd ToyModel::embed_item(const ContextItem& item) const {
    const int d = cfg_.d_model;
    const int J = cfg_.vocab.num_codebooks();
    switch (item.kind) {
        case ContextItem::Kind::Token: {
            const HybridToken& tok = item.token;
            if (tok.is_text()) {
                if (tok.text_id < 0 || tok.text_id >= cfg_.vocab.text_size)
                    throw std::invalid_argument("text id out of range: " +
                                                std::to_string(tok.text_id));
                return params_.emb_text.row(tok.text_id);
            }
            if ((int)tok.frame.size() != J)
                throw std::invalid_argument("frame arity != num_codebooks");
            RowVectorXd acc = RowVectorXd::Zero(d);
            for (int j = 0; j < J; ++j) {
                int32_t id = tok.frame[(size_t)j];
                if (id == cfg_.vocab.pad_audio_id) {
                    acc += params_.emb_pad.row(0);
                } else {
                    if (id < 0 || id >= cfg_.vocab.codebook_sizes[(size_t)j])
                        throw std::invalid_argument("codebook id out of range: " +
                                                    std::to_string(id));
                    acc += params_.emb_cb[(size_t)j].row(id);
                }
            }
            return acc / (double)J;
        }
        case ContextItem::Kind::SpeakerSlot: {
            if ((int)item.vec.size() != cfg_.speaker_dim)
                throw std::invalid_argument("speaker vector width != speaker_dim");
            RowVectorXd v = Eigen::Map<const RowVectorXd>(item.vec.data(), (long)item.vec.size());
            return v * params_.spk_w + params_.spk_b.row(0);
        }
        case ContextItem::Kind::Feature: {
            if ((int)item.vec.size() != cfg_.adapter_in_dim)
                throw std::invalid_argument("feature width != adapter_in_dim");
            RowVectorXd v = Eigen::Map<const RowVectorXd>(item.vec.data(), (long)item.vec.size());
            RowVectorXd h = v * params_.ad1_w + params_.ad1_b.row(0);
            RowVectorXd a(h.size());
            for (Eigen::Index i = 0; i < h.size(); ++i) a(i) = gelu(h(i));
            return a * params_.ad2_w + params_.ad2_b.row(0);
        }
    }
    throw std::logic_error("unreachable");
}

struct ToyModel::SeqCache {
    struct BlockCache {
        MatrixXd x_in, xhat1, y1, q, k, v;
        VectorXd rstd1;
        std::vector<MatrixXd> att;   // per head, T x T
        MatrixXd att_concat, x_mid, xhat2, y2, h1, a1;
        VectorXd rstd2;
    };
    struct AdapterCache {
        size_t pos;
        RowVectorXd in, h_pre, act;
    };
    MatrixXd x0;
    std::vector<AdapterCache> adapters;
    std::vector<BlockCache> blocks;
    MatrixXd xhatf, f;
    VectorXd rstdf;
    MatrixXd logits0, p0;
    std::vector<MatrixXd> logitsj, pj;
    MatrixXd dlogits0;
    std::vector<MatrixXd> dlogitsj;
};

void ToyModel::forward_cached(const Context& items, SeqCache& c) const {
    const int d = cfg_.d_model;
    const int J = cfg_.vocab.num_codebooks();
    const int H = cfg_.attn_heads;
    const int hd = d / H;
    const Eigen::Index T = (Eigen::Index)items.size();
    if (T == 0) throw std::invalid_argument("empty context");
    if (T > cfg_.max_seq)
        throw std::invalid_argument("context length " + std::to_string(T) + " exceeds max_seq " +
                                    std::to_string(cfg_.max_seq));

    c.x0.resize(T, d);
    c.adapters.clear();
    for (Eigen::Index t = 0; t < T; ++t) {
        const ContextItem& item = items[(size_t)t];
        if (item.kind == ContextItem::Kind::Feature) {
            // keep adapter intermediates for the backward pass
            if ((int)item.vec.size() != cfg_.adapter_in_dim)
                throw std::invalid_argument("feature width != adapter_in_dim");
            SeqCache::AdapterCache ac;
            ac.pos = (size_t)t;
            ac.in = Eigen::Map<const RowVectorXd>(item.vec.data(), (long)item.vec.size());
            ac.h_pre = ac.in * params_.ad1_w + params_.ad1_b.row(0);
            ac.act.resize(ac.h_pre.size());
            for (Eigen::Index i = 0; i < ac.h_pre.size(); ++i) ac.act(i) = gelu(ac.h_pre(i));
            c.x0.row(t) = ac.act * params_.ad2_w + params_.ad2_b.row(0);
            c.adapters.push_back(std::move(ac));
        } else {
            c.x0.row(t) = embed_item(item);
        }
        c.x0.row(t) += params_.emb_pos.row(t);
    }

    c.blocks.assign((size_t)cfg_.layers, {});
    MatrixXd x = c.x0;
    const double scale = 1.0 / std::sqrt((double)hd);
    for (int l = 0; l < cfg_.layers; ++l) {
        SeqCache::BlockCache& bc = c.blocks[(size_t)l];
        const BlockParams& bp = params_.blocks[(size_t)l];
        bc.x_in = x;
        layernorm_fwd(x, bp.ln1_g, bp.ln1_b, bc.xhat1, bc.rstd1, bc.y1);
        bc.q = bc.y1 * bp.wq + bp.bq.row(0).replicate(T, 1);
        bc.k = bc.y1 * bp.wk + bp.bk.row(0).replicate(T, 1);
        bc.v = bc.y1 * bp.wv + bp.bv.row(0).replicate(T, 1);
        bc.att.assign((size_t)H, MatrixXd());
        bc.att_concat.resize(T, d);
        for (int h = 0; h < H; ++h) {
            MatrixXd qh = bc.q.middleCols(h * hd, hd);
            MatrixXd kh = bc.k.middleCols(h * hd, hd);
            MatrixXd vh = bc.v.middleCols(h * hd, hd);
            MatrixXd scores = qh * kh.transpose() * scale;
            for (Eigen::Index i = 0; i < T; ++i)
                for (Eigen::Index j = i + 1; j < T; ++j)
                    scores(i, j) = -std::numeric_limits<double>::infinity();
            softmax_rows(scores, bc.att[(size_t)h]);
            bc.att_concat.middleCols(h * hd, hd) = bc.att[(size_t)h] * vh;
        }
        MatrixXd attn_out = bc.att_concat * bp.wo + bp.bo.row(0).replicate(T, 1);
        bc.x_mid = x + attn_out;
        layernorm_fwd(bc.x_mid, bp.ln2_g, bp.ln2_b, bc.xhat2, bc.rstd2, bc.y2);
        bc.h1 = bc.y2 * bp.w1 + bp.b1.row(0).replicate(T, 1);
        bc.a1.resize(T, bc.h1.cols());
        for (Eigen::Index i = 0; i < bc.h1.size(); ++i) bc.a1(i) = gelu(bc.h1(i));
        x = bc.x_mid + bc.a1 * bp.w2 + bp.b2.row(0).replicate(T, 1);
    }

    layernorm_fwd(x, params_.lnf_g, params_.lnf_b, c.xhatf, c.rstdf, c.f);
    c.logits0 = c.f * params_.head0_w + params_.head0_b.row(0).replicate(T, 1);
    softmax_rows(c.logits0, c.p0);
    c.logitsj.assign((size_t)(J - 1), MatrixXd());
    c.pj.assign((size_t)(J - 1), MatrixXd());
    for (int j = 1; j < J; ++j) {
        c.logitsj[(size_t)j - 1] =
            c.f * params_.head_w[(size_t)j - 1] + params_.head_b[(size_t)j - 1].row(0).replicate(T, 1);
        softmax_rows(c.logitsj[(size_t)j - 1], c.pj[(size_t)j - 1]);
    }
}

std::vector<PositionPrediction> ToyModel::forward(const Context& items) const {
    SeqCache c;
    forward_cached(items, c);
    const int J = cfg_.vocab.num_codebooks();
    std::vector<PositionPrediction> out((size_t)c.p0.rows());
    for (Eigen::Index t = 0; t < c.p0.rows(); ++t) {
        PositionPrediction& pp = out[(size_t)t];
        pp.head0.resize((size_t)c.p0.cols());
        for (Eigen::Index i = 0; i < c.p0.cols(); ++i) pp.head0[(size_t)i] = c.p0(t, i);
        pp.heads.resize((size_t)(J - 1));
        for (int j = 1; j < J; ++j) {
            const MatrixXd& pj = c.pj[(size_t)j - 1];
            pp.heads[(size_t)j - 1].resize((size_t)pj.cols());
            for (Eigen::Index i = 0; i < pj.cols(); ++i)
                pp.heads[(size_t)j - 1][(size_t)i] = pj(t, i);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// loss and backward
// ---------------------------------------------------------------------------

double ToyModel::position_nll(const HybridToken& target, Eigen::Index t, SeqCache& c,
                              bool want_grads) const {
    const VocabSpec& vocab = cfg_.vocab;
    const int J = vocab.num_codebooks();

    auto cell_head0 = [&](int32_t uid, double w) {
        double lse = row_logsumexp(c.logits0, t);
        double nll = lse - c.logits0(t, uid);
        if (want_grads) {
            c.dlogits0.row(t) += w * c.p0.row(t);
            c.dlogits0(t, uid) -= w;
        }
        return nll;
    };
    auto cell_headj = [&](int j, int32_t id, double w) {
        MatrixXd& lj = c.logitsj[(size_t)j - 1];
        double lse = row_logsumexp(lj, t);
        double nll = lse - lj(t, id);
        if (want_grads) {
            c.dlogitsj[(size_t)j - 1].row(t) += w * c.pj[(size_t)j - 1].row(t);
            c.dlogitsj[(size_t)j - 1](t, id) -= w;
        }
        return nll;
    };

    if (target.is_text()) {
        int32_t uid = to_unified_head0(target, vocab);
        return cell_head0(uid, 1.0);
    }

    if ((int)target.frame.size() != J)
        throw std::invalid_argument("audio target arity != num_codebooks");
    // count scored cells first so each carries weight 1/K
    int K = 0;
    for (int j = 0; j < J; ++j) {
        bool is_pad = target.frame[(size_t)j] == vocab.pad_audio_id;
        if (j == 0)
            K += (!is_pad || vocab.audio_eos_mode == AudioEosMode::Token) ? 1 : 0;
        else
            K += is_pad ? 0 : 1;
    }
    if (K == 0) return 0.0;
    double w = 1.0 / (double)K;
    double sum = 0.0;
    for (int j = 0; j < J; ++j) {
        int32_t id = target.frame[(size_t)j];
        bool is_pad = id == vocab.pad_audio_id;
        if (j == 0) {
            if (!is_pad)
                sum += cell_head0(vocab.text_size + id, w);
            else if (vocab.audio_eos_mode == AudioEosMode::Token)
                sum += cell_head0(vocab.eos_audio_id, w);   // stop signal
        } else if (!is_pad) {
            sum += cell_headj(j, id, w);
        }
    }
    return sum / (double)K;
}

double ToyModel::sequence_nll(const Context& items, const LossMask& item_mask, SeqCache& c,
                              size_t& scored, bool want_grads) const {
    if (item_mask.size() != items.size())
        throw std::invalid_argument("item mask length mismatch");
    const int J = cfg_.vocab.num_codebooks();
    if (want_grads) {
        c.dlogits0 = MatrixXd::Zero(c.logits0.rows(), c.logits0.cols());
        c.dlogitsj.assign((size_t)(J - 1), MatrixXd());
        for (int j = 1; j < J; ++j)
            c.dlogitsj[(size_t)j - 1] =
                MatrixXd::Zero(c.logitsj[(size_t)j - 1].rows(), c.logitsj[(size_t)j - 1].cols());
    }

    double total = 0.0;
    scored = 0;
    // prediction at position t targets item t+1
    for (size_t t = 0; t + 1 < items.size(); ++t) {
        const ContextItem& next = items[t + 1];
        if (next.kind != ContextItem::Kind::Token || !item_mask[t + 1]) continue;
        total += position_nll(next.token, (Eigen::Index)t, c, want_grads);
        ++scored;
    }
    return total;
}

void ToyModel::backward(const Context& items, SeqCache& c, double scale, Parameters& g) const {
    const int d = cfg_.d_model;
    const int J = cfg_.vocab.num_codebooks();
    const int H = cfg_.attn_heads;
    const int hd = d / H;
    const Eigen::Index T = c.x0.rows();
    const double att_scale = 1.0 / std::sqrt((double)hd);

    c.dlogits0 *= scale;
    for (auto& m : c.dlogitsj) m *= scale;

    // heads
    MatrixXd df = c.dlogits0 * params_.head0_w.transpose();
    g.head0_w += c.f.transpose() * c.dlogits0;
    g.head0_b.row(0) += c.dlogits0.colwise().sum();
    for (int j = 1; j < J; ++j) {
        const MatrixXd& dl = c.dlogitsj[(size_t)j - 1];
        df += dl * params_.head_w[(size_t)j - 1].transpose();
        g.head_w[(size_t)j - 1] += c.f.transpose() * dl;
        g.head_b[(size_t)j - 1].row(0) += dl.colwise().sum();
    }

    // final layernorm
    MatrixXd dx;
    layernorm_bwd(df, c.xhatf, c.rstdf, params_.lnf_g, dx, g.lnf_g, g.lnf_b);

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        SeqCache::BlockCache& bc = c.blocks[(size_t)l];
        const BlockParams& bp = params_.blocks[(size_t)l];
        BlockParams& bg = g.blocks[(size_t)l];

        // x_out = x_mid + a1 * w2 + b2
        MatrixXd dmlp = dx;  // gradient w.r.t. the mlp branch output
        bg.w2 += bc.a1.transpose() * dmlp;
        bg.b2.row(0) += dmlp.colwise().sum();
        MatrixXd da1 = dmlp * bp.w2.transpose();
        MatrixXd dh1(da1.rows(), da1.cols());
        for (Eigen::Index i = 0; i < dh1.size(); ++i) dh1(i) = da1(i) * gelu_grad(bc.h1(i));
        bg.w1 += bc.y2.transpose() * dh1;
        bg.b1.row(0) += dh1.colwise().sum();
        MatrixXd dy2 = dh1 * bp.w1.transpose();
        MatrixXd dx_mid_ln;
        layernorm_bwd(dy2, bc.xhat2, bc.rstd2, bp.ln2_g, dx_mid_ln, bg.ln2_g, bg.ln2_b);
        MatrixXd dx_mid = dx + dx_mid_ln;

        // x_mid = x_in + att_concat * wo + bo
        MatrixXd dattn_out = dx_mid;
        bg.wo += bc.att_concat.transpose() * dattn_out;
        bg.bo.row(0) += dattn_out.colwise().sum();
        MatrixXd dconcat = dattn_out * bp.wo.transpose();

        MatrixXd dq = MatrixXd::Zero(T, d), dk = MatrixXd::Zero(T, d), dv = MatrixXd::Zero(T, d);
        for (int h = 0; h < H; ++h) {
            const MatrixXd& A = bc.att[(size_t)h];
            MatrixXd vh = bc.v.middleCols(h * hd, hd);
            MatrixXd dOh = dconcat.middleCols(h * hd, hd);
            MatrixXd dA = dOh * vh.transpose();
            dv.middleCols(h * hd, hd) = A.transpose() * dOh;
            // softmax backward per row; masked entries have A == 0
            MatrixXd dS(T, T);
            for (Eigen::Index i = 0; i < T; ++i) {
                double dot = dA.row(i).cwiseProduct(A.row(i)).sum();
                dS.row(i) = A.row(i).cwiseProduct((dA.row(i).array() - dot).matrix());
            }
            MatrixXd qh = bc.q.middleCols(h * hd, hd);
            MatrixXd kh = bc.k.middleCols(h * hd, hd);
            dq.middleCols(h * hd, hd) = dS * kh * att_scale;
            dk.middleCols(h * hd, hd) = dS.transpose() * qh * att_scale;
        }
        bg.wq += bc.y1.transpose() * dq;
        bg.bq.row(0) += dq.colwise().sum();
        bg.wk += bc.y1.transpose() * dk;
        bg.bk.row(0) += dk.colwise().sum();
        bg.wv += bc.y1.transpose() * dv;
        bg.bv.row(0) += dv.colwise().sum();
        MatrixXd dy1 = dq * bp.wq.transpose() + dk * bp.wk.transpose() + dv * bp.wv.transpose();
        MatrixXd dx_in_ln;
        layernorm_bwd(dy1, bc.xhat1, bc.rstd1, bp.ln1_g, dx_in_ln, bg.ln1_g, bg.ln1_b);
        dx = dx_mid + dx_in_ln;
    }

    // embeddings and adapters
    size_t adapter_idx = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
        const ContextItem& item = items[(size_t)t];
        RowVectorXd drow = dx.row(t);
        g.emb_pos.row(t) += drow;
        switch (item.kind) {
            case ContextItem::Kind::Token: {
                const HybridToken& tok = item.token;
                if (tok.is_text()) {
                    g.emb_text.row(tok.text_id) += drow;
                } else {
                    RowVectorXd share = drow / (double)J;
                    for (int j = 0; j < J; ++j) {
                        int32_t id = tok.frame[(size_t)j];
                        if (id == cfg_.vocab.pad_audio_id)
                            g.emb_pad.row(0) += share;
                        else
                            g.emb_cb[(size_t)j].row(id) += share;
                    }
                }
                break;
            }
            case ContextItem::Kind::SpeakerSlot: {
                RowVectorXd v =
                    Eigen::Map<const RowVectorXd>(item.vec.data(), (long)item.vec.size());
                g.spk_w += v.transpose() * drow;
                g.spk_b.row(0) += drow;
                break;
            }
            case ContextItem::Kind::Feature: {
                const SeqCache::AdapterCache& ac = c.adapters[adapter_idx++];
                g.ad2_w += ac.act.transpose() * drow;
                g.ad2_b.row(0) += drow;
                RowVectorXd dact = drow * params_.ad2_w.transpose();
                RowVectorXd dh(dact.size());
                for (Eigen::Index i = 0; i < dh.size(); ++i)
                    dh(i) = dact(i) * gelu_grad(ac.h_pre(i));
                g.ad1_w += ac.in.transpose() * dh;
                g.ad1_b.row(0) += dh;
                break;
            }
        }
    }
}

double ToyModel::batch_loss(const std::vector<TrainExample>& batch) const {
    double total = 0.0;
    size_t scored_total = 0;
    for (const TrainExample& ex : batch) {
        SeqCache c;
        forward_cached(ex.items, c);
        size_t scored = 0;
        total += sequence_nll(ex.items, ex.item_mask, c, scored, false);
        scored_total += scored;
    }
    return scored_total == 0 ? 0.0 : total / (double)scored_total;
}

TrainStepResult ToyModel::train_step(const std::vector<TrainExample>& batch,
                                     const StageConfig& stage) {
    std::vector<SeqCache> caches(batch.size());
    double total = 0.0;
    size_t scored_total = 0;
    std::vector<size_t> scored_per(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        forward_cached(batch[i].items, caches[i]);
        total += sequence_nll(batch[i].items, batch[i].item_mask, caches[i],
                              scored_per[i], true);
        scored_total += scored_per[i];
    }
    double loss = scored_total == 0 ? 0.0 : total / (double)scored_total;
    if (!std::isfinite(loss)) return {loss, false};
    if (scored_total == 0) return {loss, false};

    Parameters grads = zero_like(params_);
    double scale = 1.0 / (double)scored_total;
    for (size_t i = 0; i < batch.size(); ++i) backward(batch[i].items, caches[i], scale, grads);

    if (stage.grad_clip > 0.0) {
        double sq = 0.0;
        visit_params(grads, [&](const std::string&, ParamGroup gr, MatrixXd& m) {
            if (group_trainable(gr, stage.trainable)) sq += m.squaredNorm();
        });
        double norm = std::sqrt(sq);
        if (norm > stage.grad_clip) {
            double f = stage.grad_clip / norm;
            visit_params(grads, [&](const std::string&, ParamGroup, MatrixXd& m) { m *= f; });
        }
    }

    if (stage.optimizer == Optimizer::Sgd) {
        // pair trainable parameter matrices with their gradients by name
        std::map<std::string, MatrixXd*> gmap;
        visit_params(grads, [&](const std::string& n, ParamGroup, MatrixXd& m) { gmap[n] = &m; });
        visit_params(params_, [&](const std::string& n, ParamGroup gr, MatrixXd& m) {
            if (group_trainable(gr, stage.trainable)) m -= stage.learning_rate * (*gmap[n]);
        });
    } else {
        ++adam_t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double bc1 = 1.0 - std::pow(b1, (double)adam_t_);
        double bc2 = 1.0 - std::pow(b2, (double)adam_t_);
        std::map<std::string, MatrixXd*> gmap;
        visit_params(grads, [&](const std::string& n, ParamGroup, MatrixXd& m) { gmap[n] = &m; });
        visit_params(params_, [&](const std::string& n, ParamGroup gr, MatrixXd& m) {
            if (!group_trainable(gr, stage.trainable)) return;
            const MatrixXd& gm = *gmap[n];
            auto& [mm, vm] = adam_m_[n];
            if (mm.size() == 0) {
                mm = MatrixXd::Zero(m.rows(), m.cols());
                vm = MatrixXd::Zero(m.rows(), m.cols());
            }
            mm = b1 * mm + (1.0 - b1) * gm;
            vm = b2 * vm + (1.0 - b2) * gm.cwiseProduct(gm);
            MatrixXd mhat = mm / bc1;
            MatrixXd vhat = vm / bc2;
            m -= stage.learning_rate * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
        });
    }
    return {loss, true};
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
    int32_t id;      // meaning depends on context (unified or local)
    double p;
};

int pick(const std::vector<Candidate>& cands, const DecodeConfig& decode, Rng& rng) {
    if (cands.empty()) throw std::logic_error("empty candidate set");
    if (decode.greedy) {
        int best = 0;
        for (size_t i = 1; i < cands.size(); ++i)
            if (cands[i].p > cands[best].p) best = (int)i;
        return best;
    }
    double tau = decode.temperature > 0.0 ? decode.temperature : 1.0;
    std::vector<double> w(cands.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < cands.size(); ++i) {
        w[i] = std::log(std::max(cands[i].p, 1e-300)) / tau;
        mx = std::max(mx, w[i]);
    }
    double sum = 0.0;
    for (double& x : w) {
        x = std::exp(x - mx);
        sum += x;
    }
    double u = rng.uniform() * sum;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) return (int)i;
    }
    return (int)w.size() - 1;
}

}  // namespace

GenerateResult ToyModel::generate(const Context& prompt, const InterleaveConfig& ratio,
                                  const DecodeConfig& decode, const GenLimits& limits) const {
    if (limits.max_text_tokens < 1 || limits.max_frames < 1 || limits.max_steps < 1)
        throw std::invalid_argument("generation limits must be >= 1");
    const VocabSpec& vocab = cfg_.vocab;
    const int J = vocab.num_codebooks();
    const bool token_mode = vocab.audio_eos_mode == AudioEosMode::Token;
    Rng rng(decode.seed);

    Context items = prompt;
    GenerateResult res;
    size_t text_used = 0, audio_used = 0;
    bool text_done = false, audio_done = false;
    long T_frames = -1;  // undecided until the stop signal / frame limit

    // item count of the audio side: grid columns plus, in token mode, one
    // full-pad terminator column
    auto audio_item_total = [&](long T) -> size_t {
        size_t W = T == 0 ? 0 : (size_t)T + (size_t)J - 1;
        return W + (token_mode ? 1 : 0);
    };

    int steps = 0;
    while (!(text_done && audio_done)) {
        if (steps++ >= limits.max_steps) {
            res.truncated = true;
            break;
        }
        if (items.size() >= (size_t)cfg_.max_seq) {
            res.truncated = true;
            break;
        }
        Modality mod = modality_at(
            text_used, audio_used, ratio,
            text_done ? std::optional<size_t>(text_used) : std::nullopt,
            audio_done ? std::optional<size_t>(audio_used) : std::nullopt);

        SeqCache c;
        forward_cached(items, c);
        Eigen::Index last = c.p0.rows() - 1;

        if (mod == Modality::Text) {
            std::vector<Candidate> cands;
            cands.reserve((size_t)vocab.text_size);
            for (int32_t id = 0; id < vocab.text_size; ++id)
                cands.push_back({id, c.p0(last, id)});
            int32_t id = cands[(size_t)pick(cands, decode, rng)].id;
            items.push_back(ContextItem::from_token(HybridToken::text(id)));
            res.response.push_back(HybridToken::text(id));
            ++text_used;
            if (id == vocab.eos_text_id) text_done = true;
            if (!text_done && (int)text_used >= limits.max_text_tokens) {
                text_done = true;
                res.truncated = true;
            }
        } else {
            const size_t col_idx = audio_used;
            Frame col((size_t)J, vocab.pad_audio_id);
            if (T_frames < 0) {
                // layer-0 stream open: head 0 decides continue vs stop
                std::vector<Candidate> cands;
                for (int32_t u = 0; u < vocab.codebook_sizes[0]; ++u) {
                    if (u == vocab.pad_audio_id) continue;
                    cands.push_back({vocab.text_size + u, c.p0(last, vocab.text_size + u)});
                }
                if (token_mode)
                    cands.push_back({vocab.eos_audio_id, c.p0(last, vocab.eos_audio_id)});
                int32_t uid = cands[(size_t)pick(cands, decode, rng)].id;
                if (token_mode && uid == vocab.eos_audio_id) {
                    T_frames = (long)col_idx;
                } else {
                    col[0] = uid - vocab.text_size;
                }
                if (T_frames < 0 && (long)col_idx + 1 >= (long)limits.max_frames) {
                    // frame limit closes the stream; truncation only matters
                    // in token mode where a stop signal was expected
                    T_frames = (long)col_idx + 1;
                    if (token_mode) res.truncated = true;
                }
            }
            for (int j = 1; j < J; ++j) {
                bool real = (size_t)j <= col_idx &&
                            (T_frames < 0 || (long)j > (long)col_idx - T_frames);
                if (!real) continue;
                std::vector<Candidate> cands;
                for (int32_t u = 0; u < vocab.codebook_sizes[(size_t)j]; ++u) {
                    if (u == vocab.pad_audio_id) continue;
                    cands.push_back({u, c.pj[(size_t)j - 1](last, u)});
                }
                col[(size_t)j] = cands[(size_t)pick(cands, decode, rng)].id;
            }
            // the column exists only while the audio item stream is open
            if (T_frames < 0 || audio_used < audio_item_total(T_frames)) {
                items.push_back(ContextItem::from_token(HybridToken::audio(col)));
                res.response.push_back(HybridToken::audio(col));
                ++audio_used;
            }
            if (T_frames >= 0 && audio_used >= audio_item_total(T_frames)) audio_done = true;
        }
    }

    // assemble the emitted grid (terminator column excluded)
    std::vector<Frame> cols;
    for (const HybridToken& tok : res.response)
        if (tok.is_audio()) cols.push_back(tok.frame);
    size_t grid_cols = cols.size();
    if (token_mode && T_frames >= 0 && grid_cols > 0 && audio_done) grid_cols -= 1;
    res.grid.num_codebooks = J;
    res.grid.pad_id = vocab.pad_audio_id;
    res.grid.num_frames = T_frames >= 0 ? (int)T_frames : 0;
    res.grid.rows.assign((size_t)J, std::vector<int32_t>(grid_cols));
    for (size_t t = 0; t < grid_cols; ++t)
        for (int j = 0; j < J; ++j) res.grid.rows[(size_t)j][t] = cols[t][(size_t)j];
    if (audio_done && T_frames >= 0) {
        res.audio_complete = true;
        res.frames = invert_delay(res.grid);
    }
    return res;
}

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

double ToyModel::grad_check(const std::vector<TrainExample>& batch, double epsilon, int coords,
                            uint64_t seed) {
    if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    if (coords < 1) throw std::invalid_argument("coords must be >= 1");

    // analytic gradients of the mean-per-position loss
    std::vector<SeqCache> caches(batch.size());
    double total = 0.0;
    size_t scored_total = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        forward_cached(batch[i].items, caches[i]);
        size_t scored = 0;
        total += sequence_nll(batch[i].items, batch[i].item_mask, caches[i], scored, true);
        scored_total += scored;
    }
    if (scored_total == 0) throw std::invalid_argument("no scored positions in batch");
    Parameters grads = zero_like(params_);
    double scale = 1.0 / (double)scored_total;
    for (size_t i = 0; i < batch.size(); ++i) backward(batch[i].items, caches[i], scale, grads);

    // flatten index space
    struct Entry {
        MatrixXd* param;
        MatrixXd* grad;
        Eigen::Index size;
    };
    std::vector<Entry> entries;
    {
        std::map<std::string, MatrixXd*> gmap;
        visit_params(grads, [&](const std::string& n, ParamGroup, MatrixXd& m) { gmap[n] = &m; });
        visit_params(params_, [&](const std::string& n, ParamGroup, MatrixXd& m) {
            entries.push_back({&m, gmap[n], m.size()});
        });
    }
    int64_t total_coords = 0;
    for (const Entry& e : entries) total_coords += e.size;

    Rng rng(seed);
    double worst = 0.0;
    for (int k = 0; k < coords; ++k) {
        int64_t flat = (int64_t)(rng.next() % (uint64_t)total_coords);
        MatrixXd* pm = nullptr;
        MatrixXd* gm = nullptr;
        for (const Entry& e : entries) {
            if (flat < e.size) {
                pm = e.param;
                gm = e.grad;
                break;
            }
            flat -= e.size;
        }
        double orig = (*pm)(flat);
        double h = epsilon * std::max(1.0, std::abs(orig));
        (*pm)(flat) = orig + h;
        double lp = batch_loss(batch);
        (*pm)(flat) = orig - h;
        double lm = batch_loss(batch);
        (*pm)(flat) = orig;
        double numeric = (lp - lm) / (2.0 * h);
        double analytic = (*gm)(flat);
        double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-8);
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

static const char kMagic[8] = {'H', 'Y', 'B', 'L', 'M', 'C', 'K', '1'};

static void write_blob(std::ofstream& out, const std::string& name, const MatrixXd& m) {
    uint32_t nlen = (uint32_t)name.size();
    uint32_t rows = (uint32_t)m.rows(), cols = (uint32_t)m.cols();
    out.write((const char*)&nlen, 4);
    out.write(name.data(), nlen);
    out.write((const char*)&rows, 4);
    out.write((const char*)&cols, 4);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c2 = 0; c2 < m.cols(); ++c2) {
            double v = m(r, c2);
            out.write((const char*)&v, 8);
        }
}

void ToyModel::save_checkpoint(const std::string& path,
                               const std::map<std::string, Eigen::MatrixXd>& extras) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(kMagic, 8);
    uint32_t version = 1;
    out.write((const char*)&version, 4);
    std::string cfg_text = dump_kv(model_config_to_kv(cfg_));
    uint64_t cfg_len = cfg_text.size();
    out.write((const char*)&cfg_len, 8);
    out.write(cfg_text.data(), (std::streamsize)cfg_len);

    Parameters copy = params_;
    uint32_t count = 0;
    visit_params(copy, [&](const std::string&, ParamGroup, MatrixXd&) { ++count; });
    count += (uint32_t)extras.size();
    out.write((const char*)&count, 4);
    visit_params(copy, [&](const std::string& n, ParamGroup, MatrixXd& m) {
        write_blob(out, n, m);
    });
    for (const auto& [name, m] : extras) write_blob(out, "extra:" + name, m);
    if (!out) throw std::runtime_error("write failed on " + path);
}

ToyModel ToyModel::load_checkpoint(const std::string& path,
                                   std::map<std::string, Eigen::MatrixXd>* extras) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    uint32_t version = 0;
    in.read((char*)&version, 4);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    uint64_t cfg_len = 0;
    in.read((char*)&cfg_len, 8);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), (std::streamsize)cfg_len);
    ModelConfig cfg = model_config_from_kv(parse_kv_text(cfg_text));
    ToyModel model(cfg);

    uint32_t count = 0;
    in.read((char*)&count, 4);
    std::map<std::string, MatrixXd*> pmap;
    visit_params(model.params_, [&](const std::string& n, ParamGroup, MatrixXd& m) {
        pmap[n] = &m;
    });
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = 0, rows = 0, cols = 0;
        in.read((char*)&nlen, 4);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        in.read((char*)&rows, 4);
        in.read((char*)&cols, 4);
        MatrixXd m(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c2 = 0; c2 < cols; ++c2) {
                double v;
                in.read((char*)&v, 8);
                m(r, c2) = v;
            }
        if (!in) throw std::runtime_error(path + ": truncated checkpoint");
        if (name.rfind("extra:", 0) == 0) {
            if (extras) (*extras)[name.substr(6)] = std::move(m);
        } else {
            auto it = pmap.find(name);
            if (it == pmap.end()) throw std::runtime_error("unknown blob '" + name + "'");
            if (it->second->rows() != m.rows() || it->second->cols() != m.cols())
                throw std::runtime_error("blob shape mismatch for '" + name + "'");
            *it->second = std::move(m);
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// canonical response body
// ---------------------------------------------------------------------------

HybridSeq build_response_body(const std::vector<int32_t>& text, const std::vector<Frame>& frames,
                              const VocabSpec& spec, const InterleaveConfig& ratio) {
    std::vector<int32_t> y = text;
    y.push_back(spec.eos_text_id);
    DelayGrid grid = apply_delay(frames, spec.num_codebooks(), spec.pad_audio_id);
    std::vector<Frame> cols;
    for (size_t t = 0; t < grid.width(); ++t) cols.push_back(delayed_column(grid, t));
    if (spec.audio_eos_mode == AudioEosMode::Token)
        cols.push_back(Frame((size_t)spec.num_codebooks(), spec.pad_audio_id));
    return interleave(y, cols, ratio);
}

}  // namespace hybridlm
