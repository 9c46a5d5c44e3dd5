#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qfisher/models.hpp"

namespace qfisher {

/// Messages are 0-based indices into [2^k]. User-facing output adds one.
using Message = int;

/// p(m | x) for every support point; rows are indexed by support_index().
struct DiscreteTable {
  std::vector<std::vector<double>> rows;
};

/// Ordered breakpoints on the real line. Without cell_probs, cell j maps to
/// message j (cells <= 2^k). With cell_probs, cell j emits message m with
/// probability cell_probs[j][m]; any number of cells is allowed.
/// Cells are (b_{j-1}, b_j], the last one open to +infinity.
struct CellPartition {
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> cell_probs;
};

/// Bit t of the message is 1(x[coords[t]] > thresholds[t]).
struct CoordinateSign {
  std::vector<int> coords;
  std::vector<double> thresholds;
};

class Quantizer {
 public:
  using Representation = std::variant<DiscreteTable, CellPartition, CoordinateSign>;

  /// Validates the representation invariants; throws InvalidArgument.
  Quantizer(int k, Representation rep);

  static Quantizer identity(std::size_t support_size);
  static Quantizer one_cell(int k = 1);
  static Quantizer sign(double threshold);
  static Quantizer cells(std::vector<double> breakpoints);
  /// Deterministic table from a block assignment (support index -> message).
  static Quantizer from_assignment(std::span<const int> assignment, int k);

  int k() const { return k_; }
  int num_messages() const { return 1 << k_; }
  const Representation& representation() const { return rep_; }

  /// p(m | x).
  double message_probability(const Model& model, const Sample& x, Message m) const;
  /// The message when p(. | x) is a point mass, without allocating.
  std::optional<Message> deterministic_message(const Model& model, const Sample& x) const;
  /// Full conditional distribution over [2^k].
  std::vector<double> conditional(const Model& model, const Sample& x) const;
  /// Points at which p(. | x) may jump, for one-dimensional continuous models.
  std::vector<double> breakpoints() const;

 private:
  int k_;
  Representation rep_;
};

/// Smallest k with 2^k >= count (at least 1).
int bits_for(std::size_t count);

Message quantize(const Quantizer& q, const Model& model, const Sample& x, Rng& rng);

/// A cell of the sample space over which every piecewise-constant function
/// of interest is constant: its probability, E[S(X) 1(cell)] and a point
/// inside it for evaluating those functions. Finite-support models give one
/// atom per support point.
struct Atom {
  Sample point;
  double mass;
  Vector score_mass;
};

/// Exact for finite supports; adaptive quadrature per cell for 1-d continuous
/// models, splitting at `cuts` and the model's density kinks.
std::vector<Atom> atomize(const Model& model, const Vector& theta, std::span<const double> cuts);

double message_likelihood(const Quantizer& q, const Model& model, const Vector& theta, Message m);

/// Sequential protocol: history (m_1..m_{i-1}) -> quantizer for node i.
/// Listed histories are stored sparsely; the rule covers everything else.
class SequentialStrategy {
 public:
  using History = std::vector<Message>;
  using Rule = std::function<Quantizer(std::span<const Message>)>;

  SequentialStrategy(int k, Rule default_rule);

  void set(History history, Quantizer q);
  /// Throws InvalidArgument if the produced quantizer has a different k.
  Quantizer for_history(std::span<const Message> history) const;
  int k() const { return k_; }

 private:
  int k_;
  Rule rule_;
  std::map<History, Quantizer> listed_;
};

// ---------------------------------------------------------------------------
// Blackboard protocols

struct SignBit {
  double c;
  int coord = 0;
};  // 1(x[coord] > c)
struct IntervalBit {
  double a;
  double b;
};  // 1(a < x <= b)
struct TableBit {
  std::vector<double> probs;
};  // by support index
struct ConstBit {
  double p;
};
/// Bit `bit` of a quantizer's message given the lower bits already written:
/// P(bit = 1 | lower bits == prefix, x).
struct MessageBit {
  std::shared_ptr<const Quantizer> q;
  int bit;
  unsigned prefix;
};

/// b_v(x) = probability that the writing node emits 1.
class BitFunction {
 public:
  using Kind = std::variant<SignBit, IntervalBit, TableBit, ConstBit, MessageBit>;

  BitFunction(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(runtime/explicit)

  /// Parses the catalog syntax: sign@c, interval@[a,b], table@[p1,...], const@p.
  static BitFunction parse(const std::string& text);
  std::string to_string() const;

  double operator()(const Model& model, const Sample& x) const;
  std::vector<double> breakpoints() const;
  /// Range check of b_v over the support (finite) or by construction.
  bool in_unit_interval(const Model* model) const;
  const Kind& kind() const { return kind_; }

 private:
  Kind kind_;
};

struct TreeNode {
  int label;  // 0-based writer index in [0, n)
  BitFunction bit;
};

/// Full binary tree of depth n*k stored in breadth-first array order; the
/// children of node v are 2v+1 (bit 0) and 2v+2 (bit 1).
class ProtocolTree {
 public:
  static constexpr int kMaxExactDepth = 20;

  ProtocolTree(int n, int k, std::vector<TreeNode> nodes);

  int n() const { return n_; }
  int k() const { return k_; }
  int depth() const { return n_ * k_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t index) const { return nodes_[index]; }
  std::vector<double> breakpoints() const;

 private:
  int n_;
  int k_;
  std::vector<TreeNode> nodes_;
};

struct PathViolation {
  std::vector<std::uint8_t> path;
  std::vector<int> label_counts;
};

struct TreeValidity {
  bool valid = true;
  bool depth_ok = true;
  bool bits_in_range = true;
  std::vector<PathViolation> violations;
};

/// Checks the per-path label counts, the depth and b_v in [0, 1]. The model
/// (optional) is used to range-check table bits over a finite support.
TreeValidity validate_tree(const ProtocolTree& tree, int n, int k, const Model* model = nullptr);

/// View of one tree node: who writes and with which bit function.
struct NodeRef {
  int label;
  const BitFunction* bit;
};

/// Any blackboard protocol: the node reached after `prefix` bits.
class TreeProtocol {
 public:
  virtual ~TreeProtocol() = default;
  virtual int n() const = 0;
  virtual int k() const = 0;
  virtual NodeRef at(std::span<const std::uint8_t> prefix) const = 0;
};

class ExplicitTree final : public TreeProtocol {
 public:
  explicit ExplicitTree(const ProtocolTree& tree) : tree_(tree) {}
  int n() const override { return tree_.n(); }
  int k() const override { return tree_.k(); }
  NodeRef at(std::span<const std::uint8_t> prefix) const override;

 private:
  const ProtocolTree& tree_;
};

/// An independent protocol written as a blackboard tree: node i writes its
/// k message bits (least significant first) at depths ik..ik+k-1. The tree is
/// never materialized, so n is unbounded.
class IndependentTree final : public TreeProtocol {
 public:
  IndependentTree(int k, std::vector<std::shared_ptr<const Quantizer>> node_quantizers);
  int n() const override { return static_cast<int>(quantizers_.size()); }
  int k() const override { return k_; }
  NodeRef at(std::span<const std::uint8_t> prefix) const override;
  /// Splits a transcript into the n messages.
  std::vector<Message> decode(std::span<const std::uint8_t> transcript) const;

 private:
  int k_;
  std::vector<std::shared_ptr<const Quantizer>> quantizers_;
  // Bit functions per distinct quantizer, indexed (1 << t) - 1 + lower bits.
  std::vector<std::size_t> slot_;
  std::vector<std::vector<BitFunction>> bits_;
};

/// Explicit tree for a small independent protocol (n k <= 20).
ProtocolTree make_independent_tree(const std::vector<Quantizer>& node_quantizers);

/// Walks the tree from the root, writing 1 at node v with probability
/// b_v(x_{l_v}). Requires a valid tree; samples.size() == n.
std::vector<std::uint8_t> run_tree(const TreeProtocol& tree, const Model& model,
                                   std::span<const Sample> samples, Rng& rng);
std::vector<std::uint8_t> run_tree(const ProtocolTree& tree, const Model& model,
                                   std::span<const Sample> samples, Rng& rng);

/// P(Y = y) = prod_i E[p_{i,y}(X_i)].
double transcript_probability(const ProtocolTree& tree, const Model& model, const Vector& theta,
                              std::span<const std::uint8_t> y);

/// Per-transcript quantities shared by the exact blackboard computations.
struct TranscriptTerms {
  std::vector<std::uint8_t> y;
  std::vector<double> node_mass;        // E[p_{i,y}(X_i)]
  std::vector<Vector> node_score_mass;  // E[S(X_i) p_{i,y}(X_i)]
};

/// Enumerates every transcript of a valid tree (n k <= 20).
void for_each_transcript(const ProtocolTree& tree, const Model& model, const Vector& theta,
                         const std::function<void(const TranscriptTerms&)>& visit);

/// Random labelled tree satisfying the per-path label counts; bits are random
/// tables over a support of the given size.
ProtocolTree random_valid_tree(int n, int k, std::size_t support_size, Rng& rng);

}  // namespace qfisher
