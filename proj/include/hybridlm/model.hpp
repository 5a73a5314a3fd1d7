#pragma once
// Desk-scale decoder-only transformer: frame-averaged hybrid input
// embeddings, a unified text/audio-layer-0 head plus J-1 auxiliary codebook
// heads, speaker-vector injection, an MLP adapter path for continuous
// features, staged freeze/train, and schedule-driven hybrid generation.
//
// Double precision throughout, single threaded, deterministic per seed.
// Pre-norm blocks, learned absolute positions, tanh-GELU, no dropout.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hybridlm/config.hpp"
#include "hybridlm/delay.hpp"
#include "hybridlm/dialog.hpp"
#include "hybridlm/interleave.hpp"
#include "hybridlm/loss.hpp"
#include "hybridlm/token_space.hpp"

namespace hybridlm {

struct ModelConfig {
    int layers = 2;
    int d_model = 64;
    int attn_heads = 4;
    VocabSpec vocab;
    int max_seq = 128;
    int speaker_dim = 8;
    int adapter_in_dim = 8;
    uint64_t seed = 1;
};

ModelConfig model_config_from_kv(const KvMap& kv);
KvMap model_config_to_kv(const ModelConfig& cfg);

enum class ParamGroup { Embeddings, Blocks, Heads, SpeakerAdapter, FeatureAdapter };

struct BlockParams {
    Eigen::MatrixXd ln1_g, ln1_b;          // 1 x d
    Eigen::MatrixXd wq, wk, wv, wo;        // d x d
    Eigen::MatrixXd bq, bk, bv, bo;        // 1 x d
    Eigen::MatrixXd ln2_g, ln2_b;          // 1 x d
    Eigen::MatrixXd w1, b1;                // d x 4d, 1 x 4d
    Eigen::MatrixXd w2, b2;                // 4d x d, 1 x d
};

struct Parameters {
    Eigen::MatrixXd emb_text;              // |V| x d
    std::vector<Eigen::MatrixXd> emb_cb;   // J tables, |U^j| x d
    Eigen::MatrixXd emb_pad;               // 1 x d, shared across layers
    Eigen::MatrixXd emb_pos;               // max_seq x d
    std::vector<BlockParams> blocks;
    Eigen::MatrixXd lnf_g, lnf_b;          // 1 x d
    Eigen::MatrixXd head0_w, head0_b;      // d x (|V|+|U^0|), 1 x ..
    std::vector<Eigen::MatrixXd> head_w;   // layers 1..J-1: d x |U^j|
    std::vector<Eigen::MatrixXd> head_b;
    Eigen::MatrixXd spk_w, spk_b;          // speaker_dim x d, 1 x d
    Eigen::MatrixXd ad1_w, ad1_b;          // adapter_in_dim x d, 1 x d
    Eigen::MatrixXd ad2_w, ad2_b;          // d x d, 1 x d
};

// Canonical iteration order over all parameter matrices; names are stable
// and used as checkpoint blob keys.
void visit_params(Parameters& p,
                  const std::function<void(const std::string&, ParamGroup, Eigen::MatrixXd&)>& fn);

enum class TrainableSet { AdapterOnly, AdapterAndBackbone, All };
enum class Optimizer { Sgd, Adam };

struct StageConfig {
    TrainableSet trainable = TrainableSet::All;
    double learning_rate = 1e-2;
    int steps = 100;
    int batch_size = 8;
    Optimizer optimizer = Optimizer::Sgd;
    double grad_clip = 0.0;                // 0 = off; global L2 norm otherwise
};

bool group_trainable(ParamGroup group, TrainableSet set);

struct TrainExample {
    Context items;
    LossMask item_mask;                    // scored flags over items
};

struct TrainStepResult {
    double loss = 0.0;                     // mean per scored position
    bool applied = false;                  // false when the loss was non-finite
};

struct DecodeConfig {
    bool greedy = true;
    double temperature = 1.0;
    uint64_t seed = 0;
};

struct GenLimits {
    int max_text_tokens = 64;
    int max_frames = 256;
    int max_steps = 1024;
};

struct GenerateResult {
    HybridSeq response;                    // interleaved body (no terminator)
    bool truncated = false;
    DelayGrid grid;                        // emitted audio columns
    std::vector<Frame> frames;             // invert_delay(grid) when complete
    bool audio_complete = false;
};

class ToyModel {
   public:
    explicit ToyModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    Parameters& params() { return params_; }
    const Parameters& params() const { return params_; }

    // Text -> its embedding row; audio column -> mean of the J per-codebook
    // embeddings (pads contribute the shared pad embedding); features go
    // through the MLP adapter, speaker slots through the speaker adapter.
    Eigen::RowVectorXd embed_item(const ContextItem& item) const;

    // Causal forward pass; softmax-normalized distributions per position.
    // Throws std::invalid_argument on overlong input or out-of-range ids.
    std::vector<PositionPrediction> forward(const Context& items) const;

    // Mean hybrid NLL per scored position over the batch, next-item targets.
    double batch_loss(const std::vector<TrainExample>& batch) const;

    // One gradient step; parameters outside the stage's trainable set are
    // bit-unchanged. A non-finite loss aborts the step (applied = false).
    TrainStepResult train_step(const std::vector<TrainExample>& batch, const StageConfig& stage);

    // Schedule-driven hybrid generation; see README for the stop protocol.
    GenerateResult generate(const Context& prompt, const InterleaveConfig& ratio,
                            const DecodeConfig& decode, const GenLimits& limits) const;

    // Max relative error between analytic gradients and central finite
    // differences on `coords` sampled coordinates. Throws on epsilon <= 0.
    double grad_check(const std::vector<TrainExample>& batch, double epsilon, int coords,
                      uint64_t seed);

    void save_checkpoint(const std::string& path,
                         const std::map<std::string, Eigen::MatrixXd>& extras = {}) const;
    static ToyModel load_checkpoint(const std::string& path,
                                    std::map<std::string, Eigen::MatrixXd>* extras = nullptr);

   private:
    struct SeqCache;
    void forward_cached(const Context& items, SeqCache& cache) const;
    double position_nll(const HybridToken& target, Eigen::Index t, SeqCache& c,
                        bool want_grads) const;
    // sum of position losses with next-item targets; fills per-head dlogits
    // (unit position weights) when want_grads
    double sequence_nll(const Context& items, const LossMask& item_mask, SeqCache& c,
                        size_t& scored, bool want_grads) const;
    void backward(const Context& items, SeqCache& cache, double scale, Parameters& grads) const;

    ModelConfig cfg_;
    Parameters params_;

    // Adam state, keyed by parameter name
    std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> adam_m_;
    int64_t adam_t_ = 0;
};

// Deterministic RNG used across the toolkit (engine-defined sequences only;
// no libstdc++ distribution objects, so runs reproduce across platforms).
class Rng {
   public:
    explicit Rng(uint64_t seed) : eng_(seed) {}
    double uniform();                      // [0, 1)
    double normal();                       // Box-Muller
    uint64_t next() { return eng_(); }
    int uniform_int(int lo, int hi);       // inclusive bounds

   private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Builds the canonical response body for training and evaluation:
// Y + eos_text interleaved with the delayed audio columns. In Token mode one
// full-pad stream-terminator column follows the grid columns; its layer-0
// cell is what scores head 0 toward eos_audio_id.
HybridSeq build_response_body(const std::vector<int32_t>& text, const std::vector<Frame>& frames,
                              const VocabSpec& spec, const InterleaveConfig& ratio);

}  // namespace hybridlm
