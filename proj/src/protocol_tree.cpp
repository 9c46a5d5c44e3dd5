#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "qfisher/error.hpp"
#include "qfisher/quantizers.hpp"

namespace qfisher {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double parse_number(const std::string& text, const std::string& whole) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, fmt::format("bad number in bit function '{}'", whole));
  }
}

std::vector<double> parse_array(const std::string& text, const std::string& whole) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto values = j.get<std::vector<double>>();
    return values;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, fmt::format("bad array in bit function '{}'", whole));
  }
}

std::size_t checked_leaf_count(int depth) {
  if (depth > ProtocolTree::kMaxExactDepth) {
    throw Error(ErrorKind::ExactComputationInfeasible,
                fmt::format("tree depth {} exceeds the exact limit {}", depth,
                            ProtocolTree::kMaxExactDepth));
  }
  return std::size_t{1} << depth;
}

}  // namespace

// ---------------------------------------------------------------------------
// BitFunction

BitFunction BitFunction::parse(const std::string& text) {
  const auto at = text.find('@');
  if (at == std::string::npos) {
    throw Error(ErrorKind::Parse, fmt::format("bit function '{}' lacks '@'", text));
  }
  const std::string name = text.substr(0, at);
  const std::string arg = text.substr(at + 1);
  if (name == "sign") return BitFunction(SignBit{parse_number(arg, text)});
  if (name == "const") {
    const double p = parse_number(arg, text);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::Parse, fmt::format("const bit {} outside [0, 1]", p));
    }
    return BitFunction(ConstBit{p});
  }
  if (name == "interval") {
    const auto v = parse_array(arg, text);
    if (v.size() != 2 || !(v[0] < v[1])) {
      throw Error(ErrorKind::Parse, fmt::format("interval needs [a,b] with a < b: '{}'", text));
    }
    return BitFunction(IntervalBit{v[0], v[1]});
  }
  if (name == "table") {
    auto v = parse_array(arg, text);
    if (v.empty()) throw Error(ErrorKind::Parse, "empty table bit");
    return BitFunction(TableBit{std::move(v)});
  }
  throw Error(ErrorKind::Parse, fmt::format("unknown bit function '{}'", name));
}

std::string BitFunction::to_string() const {
  return std::visit(
      Overloaded{
          [](const SignBit& b) {
            return b.coord == 0 ? fmt::format("sign@{}", b.c)
                                : fmt::format("sign@{}#{}", b.c, b.coord);
          },
          [](const IntervalBit& b) { return fmt::format("interval@[{},{}]", b.a, b.b); },
          [](const TableBit& b) { return fmt::format("table@[{}]", fmt::join(b.probs, ",")); },
          [](const ConstBit& b) { return fmt::format("const@{}", b.p); },
          [](const MessageBit& b) { return fmt::format("message-bit@{}|{}", b.bit, b.prefix); },
      },
      kind_);
}

double BitFunction::operator()(const Model& model, const Sample& x) const {
  return std::visit(
      Overloaded{
          [&](const SignBit& b) {
            if (b.coord < 0 || b.coord >= x.size()) {
              throw Error(ErrorKind::InvalidSample, "sign bit coordinate outside the sample");
            }
            return x[b.coord] > b.c ? 1.0 : 0.0;
          },
          [&](const IntervalBit& b) {
            if (x.size() != 1) {
              throw Error(ErrorKind::InvalidSample, "interval bits need 1-d samples");
            }
            return (x[0] > b.a && x[0] <= b.b) ? 1.0 : 0.0;
          },
          [&](const TableBit& b) {
            const std::size_t idx = support_index(model, x);
            if (idx >= b.probs.size()) {
              throw Error(ErrorKind::InvalidSample,
                          fmt::format("table bit has no entry for support index {}", idx));
            }
            return b.probs[idx];
          },
          [&](const ConstBit& b) { return b.p; },
          [&](const MessageBit& b) {
            const std::vector<double> probs = b.q->conditional(model, x);
            const unsigned mask = (1U << b.bit) - 1U;
            double reach = 0.0;
            double one = 0.0;
            for (std::size_t m = 0; m < probs.size(); ++m) {
              if ((m & mask) != b.prefix) continue;
              reach += probs[m];
              if ((m >> b.bit) & 1U) one += probs[m];
            }
            return reach > 0.0 ? std::min(1.0, one / reach) : 0.0;
          },
      },
      kind_);
}

std::vector<double> BitFunction::breakpoints() const {
  return std::visit(Overloaded{
                        [](const SignBit& b) -> std::vector<double> {
                          if (b.coord == 0) return {b.c};
                          return {};
                        },
                        [](const IntervalBit& b) -> std::vector<double> { return {b.a, b.b}; },
                        [](const MessageBit& b) { return b.q->breakpoints(); },
                        [](const auto&) -> std::vector<double> { return {}; },
                    },
                    kind_);
}

bool BitFunction::in_unit_interval(const Model* model) const {
  const auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (const auto* c = std::get_if<ConstBit>(&kind_)) return unit(c->p);
  if (const auto* t = std::get_if<TableBit>(&kind_)) {
    if (!std::all_of(t->probs.begin(), t->probs.end(), unit)) return false;
    if (model && has_finite_support(*model) && t->probs.size() < support_size(*model)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// ProtocolTree

ProtocolTree::ProtocolTree(int n, int k, std::vector<TreeNode> nodes)
    : n_(n), k_(k), nodes_(std::move(nodes)) {
  if (n < 1 || k < 1) throw Error(ErrorKind::ProtocolInvalid, "trees need n >= 1 and k >= 1");
  const std::size_t leaves = checked_leaf_count(n * k);
  if (nodes_.size() != leaves - 1) {
    throw Error(ErrorKind::ProtocolInvalid,
                fmt::format("a depth-{} tree has {} internal nodes, got {}", n * k, leaves - 1,
                            nodes_.size()));
  }
  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    if (nodes_[v].label < 0 || nodes_[v].label >= n) {
      throw Error(ErrorKind::ProtocolInvalid,
                  fmt::format("node {} has label {} outside 1..{}", v, nodes_[v].label + 1, n));
    }
  }
}

std::vector<double> ProtocolTree::breakpoints() const {
  std::vector<double> all;
  for (const TreeNode& node : nodes_) {
    const auto b = node.bit.breakpoints();
    all.insert(all.end(), b.begin(), b.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

TreeValidity validate_tree(const ProtocolTree& tree, int n, int k, const Model* model) {
  TreeValidity report;
  if (tree.n() != n || tree.k() != k) {
    report.depth_ok = false;
    report.valid = false;
    return report;
  }
  for (const TreeNode& node : tree.nodes()) {
    if (!node.bit.in_unit_interval(model)) report.bits_in_range = false;
  }

  std::vector<int> counts(n, 0);
  std::vector<std::uint8_t> path;
  const std::size_t internal = tree.nodes().size();
  const auto walk = [&](auto&& self, std::size_t v) -> void {
    if (v >= internal) {
      if (std::any_of(counts.begin(), counts.end(), [&](int c) { return c != k; })) {
        report.violations.push_back({path, counts});
      }
      return;
    }
    const int label = tree.node(v).label;
    ++counts[label];
    for (std::uint8_t bit : {std::uint8_t{0}, std::uint8_t{1}}) {
      path.push_back(bit);
      self(self, 2 * v + 1 + bit);
      path.pop_back();
    }
    --counts[label];
  };
  walk(walk, 0);
  report.valid = report.depth_ok && report.bits_in_range && report.violations.empty();
  return report;
}

NodeRef ExplicitTree::at(std::span<const std::uint8_t> prefix) const {
  std::size_t v = 0;
  for (std::uint8_t bit : prefix) v = 2 * v + 1 + bit;
  const TreeNode& node = tree_.node(v);
  return {node.label, &node.bit};
}

IndependentTree::IndependentTree(int k,
                                 std::vector<std::shared_ptr<const Quantizer>> node_quantizers)
    : k_(k), quantizers_(std::move(node_quantizers)) {
  if (quantizers_.empty()) throw Error(ErrorKind::InsufficientNodes, "no nodes");
  std::map<const Quantizer*, std::size_t> seen;
  for (const auto& q : quantizers_) {
    if (!q || q->k() != k) {
      throw Error(ErrorKind::ProtocolInvalid, "every node quantizer must use k bits");
    }
    auto [it, fresh] = seen.try_emplace(q.get(), bits_.size());
    if (fresh) {
      std::vector<BitFunction> bits;
      bits.reserve((std::size_t{1} << k) - 1);
      for (int t = 0; t < k; ++t) {
        for (unsigned p = 0; p < (1U << t); ++p) bits.emplace_back(MessageBit{q, t, p});
      }
      bits_.push_back(std::move(bits));
    }
    slot_.push_back(it->second);
  }
}

NodeRef IndependentTree::at(std::span<const std::uint8_t> prefix) const {
  const std::size_t depth = prefix.size();
  const std::size_t i = depth / k_;
  const int t = static_cast<int>(depth % k_);
  if (i >= quantizers_.size()) throw Error(ErrorKind::InvalidArgument, "prefix past the leaves");
  unsigned lower = 0;
  for (int b = 0; b < t; ++b) lower |= unsigned(prefix[i * k_ + b]) << b;
  return {static_cast<int>(i), &bits_[slot_[i]][((std::size_t{1} << t) - 1) + lower]};
}

std::vector<Message> IndependentTree::decode(std::span<const std::uint8_t> transcript) const {
  if (transcript.size() != quantizers_.size() * k_) {
    throw Error(ErrorKind::InvalidArgument, "transcript length differs from n k");
  }
  std::vector<Message> messages(quantizers_.size(), 0);
  for (std::size_t i = 0; i < messages.size(); ++i) {
    for (int t = 0; t < k_; ++t) messages[i] |= Message(transcript[i * k_ + t]) << t;
  }
  return messages;
}

ProtocolTree make_independent_tree(const std::vector<Quantizer>& node_quantizers) {
  if (node_quantizers.empty()) throw Error(ErrorKind::InsufficientNodes, "no nodes");
  const int n = static_cast<int>(node_quantizers.size());
  const int k = node_quantizers.front().k();
  const std::size_t leaves = checked_leaf_count(n * k);
  std::vector<std::shared_ptr<const Quantizer>> shared;
  for (const auto& q : node_quantizers) shared.push_back(std::make_shared<const Quantizer>(q));
  const IndependentTree lazy(k, std::move(shared));

  std::vector<TreeNode> nodes;
  nodes.reserve(leaves - 1);
  std::vector<std::uint8_t> prefix;
  for (std::size_t v = 0; v + 1 < leaves; ++v) {
    // Node v sits at depth floor(log2(v+1)); its path is the binary expansion of v+1.
    const std::size_t id = v + 1;
    int depth = 0;
    while ((id >> (depth + 1)) != 0) ++depth;
    prefix.assign(depth, 0);
    for (int b = 0; b < depth; ++b) prefix[b] = std::uint8_t((id >> (depth - 1 - b)) & 1U);
    const NodeRef ref = lazy.at(prefix);
    nodes.push_back({ref.label, *ref.bit});
  }
  return ProtocolTree(n, k, std::move(nodes));
}

// ---------------------------------------------------------------------------
// Execution and exact transcript sums

std::vector<std::uint8_t> run_tree(const TreeProtocol& tree, const Model& model,
                                   std::span<const Sample> samples, Rng& rng) {
  if (samples.size() != static_cast<std::size_t>(tree.n())) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("tree has {} nodes but {} samples were given", tree.n(),
                            samples.size()));
  }
  const std::size_t depth = static_cast<std::size_t>(tree.n()) * tree.k();
  std::vector<std::uint8_t> y;
  y.reserve(depth);
  while (y.size() < depth) {
    const NodeRef node = tree.at(y);
    const double b = (*node.bit)(model, samples[node.label]);
    std::uint8_t bit;
    if (b >= 1.0) bit = 1;
    else if (b <= 0.0) bit = 0;
    else bit = uniform01(rng) < b ? 1 : 0;
    y.push_back(bit);
  }
  return y;
}

std::vector<std::uint8_t> run_tree(const ProtocolTree& tree, const Model& model,
                                   std::span<const Sample> samples, Rng& rng) {
  if (!validate_tree(tree, tree.n(), tree.k(), &model).valid) {
    throw Error(ErrorKind::ProtocolInvalid, "tree violates the labelling constraints");
  }
  return run_tree(ExplicitTree(tree), model, samples, rng);
}

namespace {

// Per-label weights p_{i,y}(x) over the atoms, refined bit by bit along a path.
struct TranscriptWalker {
  const ProtocolTree& tree;
  const Model& model;
  std::vector<Atom> atoms;
  std::vector<std::vector<double>> bit_values;  // bit_values[v][atom], lazily filled
  std::vector<std::vector<double>> weights;     // weights[label][atom]

  TranscriptWalker(const ProtocolTree& t, const Model& m, const Vector& theta)
      : tree(t), model(m), atoms(atomize(m, theta, t.breakpoints())),
        bit_values(t.nodes().size()),
        weights(t.n(), std::vector<double>(atoms.size(), 1.0)) {
    if (!validate_tree(t, t.n(), t.k(), &m).valid) {
      throw Error(ErrorKind::ProtocolInvalid, "tree violates the labelling constraints");
    }
  }

  const std::vector<double>& bits_at(std::size_t v) {
    auto& vals = bit_values[v];
    if (vals.empty()) {
      vals.reserve(atoms.size());
      for (const Atom& a : atoms) vals.push_back(tree.node(v).bit(model, a.point));
    }
    return vals;
  }

  void descend(std::size_t v, std::uint8_t bit) {
    const auto& b = bits_at(v);
    auto& w = weights[tree.node(v).label];
    for (std::size_t a = 0; a < w.size(); ++a) w[a] *= bit ? b[a] : 1.0 - b[a];
  }

  double node_mass(int label) const {
    double total = 0.0;
    for (std::size_t a = 0; a < atoms.size(); ++a) total += atoms[a].mass * weights[label][a];
    return total;
  }
};

}  // namespace

double transcript_probability(const ProtocolTree& tree, const Model& model, const Vector& theta,
                              std::span<const std::uint8_t> y) {
  if (y.size() != static_cast<std::size_t>(tree.depth())) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("transcript has {} bits, tree depth is {}", y.size(), tree.depth()));
  }
  TranscriptWalker walker(tree, model, theta);
  std::size_t v = 0;
  for (std::uint8_t bit : y) {
    if (bit > 1) throw Error(ErrorKind::InvalidArgument, "transcript bits must be 0 or 1");
    walker.descend(v, bit);
    v = 2 * v + 1 + bit;
  }
  double p = 1.0;
  for (int i = 0; i < tree.n(); ++i) p *= walker.node_mass(i);
  return p;
}

void for_each_transcript(const ProtocolTree& tree, const Model& model, const Vector& theta,
                         const std::function<void(const TranscriptTerms&)>& visit) {
  TranscriptWalker walker(tree, model, theta);
  const int d = param_dim(model);
  const std::size_t internal = tree.nodes().size();
  TranscriptTerms terms;
  terms.node_mass.resize(tree.n());
  terms.node_score_mass.assign(tree.n(), Vector::Zero(d));

  const auto walk = [&](auto&& self, std::size_t v) -> void {
    if (v >= internal) {
      for (int i = 0; i < tree.n(); ++i) {
        terms.node_mass[i] = walker.node_mass(i);
        Vector& sm = terms.node_score_mass[i];
        sm.setZero();
        for (std::size_t a = 0; a < walker.atoms.size(); ++a) {
          sm += walker.weights[i][a] * walker.atoms[a].score_mass;
        }
      }
      visit(terms);
      return;
    }
    const int label = tree.node(v).label;
    const std::vector<double> saved = walker.weights[label];
    for (std::uint8_t bit : {std::uint8_t{0}, std::uint8_t{1}}) {
      walker.descend(v, bit);
      terms.y.push_back(bit);
      self(self, 2 * v + 1 + bit);
      terms.y.pop_back();
      walker.weights[label] = saved;
    }
  };
  walk(walk, 0);
}

ProtocolTree random_valid_tree(int n, int k, std::size_t support_size, Rng& rng) {
  if (n < 1 || k < 1 || support_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "random trees need n, k, support size >= 1");
  }
  const std::size_t leaves = checked_leaf_count(n * k);
  std::vector<TreeNode> nodes(leaves - 1, TreeNode{0, BitFunction(ConstBit{0.5})});
  std::vector<int> remaining(n, k);

  const auto fill = [&](auto&& self, std::size_t v) -> void {
    if (v >= nodes.size()) return;
    std::vector<int> open;
    for (int i = 0; i < n; ++i) {
      if (remaining[i] > 0) open.push_back(i);
    }
    const int label = open[static_cast<std::size_t>(uniform01(rng) * open.size())];
    std::vector<double> probs(support_size);
    for (double& p : probs) p = uniform01(rng);
    nodes[v] = TreeNode{label, BitFunction(TableBit{std::move(probs)})};
    --remaining[label];
    self(self, 2 * v + 1);
    self(self, 2 * v + 2);
    ++remaining[label];
  };
  fill(fill, 0);
  return ProtocolTree(n, k, std::move(nodes));
}

}  // namespace qfisher
