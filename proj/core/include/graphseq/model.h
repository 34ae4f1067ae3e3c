#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace graphseq {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// Which derived graph the message-passing layers run over.
enum class MpMode { kNone, kEdges, kCorrespondences };

std::string_view mp_mode_name(MpMode mode);
MpMode parse_mp_mode(std::string_view name);

struct ModelConfig {
  int vocab_size = 0;  // 0 means the byte-level vocabulary size
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ff_dim = 256;
  int max_seq_len = 512;
  MpMode mp_mode = MpMode::kNone;
  // Block indices followed by a message-passing layer.
  std::vector<int> mp_after_layers;
  // When false the message-passing output is injected without tanh(a).
  bool gate_enabled = true;
  std::uint64_t seed = 0;

  // Throws ConfigError on a broken invariant.
  void validate() const;
  int resolved_vocab_size() const;

  // Sets mp_mode and places a message-passing layer after every block
  // (none for MpMode::kNone).
  ModelConfig with_mp(MpMode mode) const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Offsets of every learnable tensor inside the flat parameter vector.
struct ParamLayout {
  struct Block {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o;
    std::size_t ln2_g, ln2_b, w_in, b_in, w_out, b_out;
  };
  struct MessagePassing {
    int after_layer;
    std::size_t w_self, w_neigh, bias, gate;
  };
  std::size_t tok_emb = 0, pos_emb = 0;
  std::vector<Block> blocks;
  std::vector<MessagePassing> mp;
  std::vector<int> mp_of_layer;  // index into mp, or -1
  std::size_t lnf_g = 0, lnf_b = 0, lm_head = 0;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;

  explicit ParamLayout(const ModelConfig& config);
  ParamLayout() = default;
};

// Every learnable value of the model in one flat vector, so optimizers,
// gradient buffers and checkpoints share a single layout.
class ModelParams {
 public:
  ModelParams() = default;
  // All-zero parameters with the layout implied by `config`.
  explicit ModelParams(const ModelConfig& config);

  // N(0, 0.02) matrices, zero biases, unit layer-norm gains and zero gate
  // scalars. Each tensor draws from a stream keyed by (seed, tensor name),
  // so shared tensors agree across message-passing modes.
  static ModelParams initialize(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<TensorInfo>& tensors() const { return layout_.tensors; }
  const TensorInfo& tensor(std::string_view name) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  // Copies every tensor whose name and shape also exist in `other`.
  void copy_shared(const ModelParams& other);

  // Flat indices of the gate scalars, one per message-passing layer.
  std::vector<std::size_t> gate_indices() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.data_ == b.data_ && a.config_.to_kv() == b.config_.to_kv();
  }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<double> data_;
};

// Message-passing input for one sequence: the derived graph with anchors
// expressed as absolute token positions.
struct GraphStructure {
  std::vector<int> anchor;
  std::vector<std::vector<int>> in_neighbors;

  int size() const { return static_cast<int>(anchor.size()); }
};

// Parses tokens[graph_start..] as a growing prefix and builds the derived
// graph for `mode` over the committed items only. Empty for kNone.
GraphStructure derive_structure(std::span<const int> tokens, int graph_start,
                                MpMode mode);

// One GraphSAGE layer: out[v] = W_self h[v] + W_neigh mean(h[u] : u in
// in(v)) + bias, with the empty mean taken as zero and no activation.
// Throws MismatchError on inconsistent shapes.
Matrix graphsage_layer(const Matrix& features,
                       const std::vector<std::vector<int>>& in_neighbors,
                       const Matrix& w_self, const Matrix& w_neigh,
                       const Vector& bias);

// Activations kept by forward() for the backward pass. Exposed so tests can
// inspect the residual stream around each message-passing layer.
struct ForwardCache {
  struct Layer {
    Matrix x_in;
    Matrix ln1_xhat, ln1_out;
    Vector ln1_rstd;
    Matrix qkv;
    std::vector<Matrix> probs;  // per head, T x T
    Matrix attn;
    Matrix x_mid;
    Matrix ln2_xhat, ln2_out;
    Vector ln2_rstd;
    Matrix ff_pre, ff_act;
    Matrix x_out;   // after the block, before message passing
    Matrix mp_in, mp_agg, mp_out;
    Matrix x_post;  // after message passing (== x_out without it)
  };
  std::vector<int> tokens;
  GraphStructure structure;
  int first_row = 0;
  std::vector<Layer> layers;
  Matrix lnf_xhat, lnf_out;
  Vector lnf_rstd;
};

// Next-token logits for rows first_row..T-1, as a (T - first_row) x V
// matrix. logits row r depends only on tokens[0..first_row + r].
// Throws MismatchError if the sequence is too long or an anchor lies
// outside it. Message-passing output for an anchor at T-1 is dropped.
Matrix forward(const ModelParams& params, std::span<const int> tokens,
               const GraphStructure& structure, ForwardCache* cache = nullptr,
               int first_row = 0);

// Accumulates dL/dtheta into `grad` (same layout as params.data()) given
// dL/dlogits for the rows returned by forward().
void backward(const ModelParams& params, const ForwardCache& cache,
              const Matrix& dlogits, std::span<double> grad);

}  // namespace graphseq
