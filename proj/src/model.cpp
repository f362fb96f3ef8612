#include "mmformer/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mmformer/ops.hpp"

namespace mmf {

namespace {

[[noreturn]] void bad(const std::string& what) { throw std::invalid_argument("model config: " + what); }

}  // namespace

void ModelConfig::validate() const {
  if (joints < 2) bad("joints must be at least 2");
  if (coords != 2 && coords != 3) bad("coords must be 2 or 3");
  if (T < 1 || S < 1 || S > T) bad("need 1 <= S <= T");
  if (tau < 1) bad("tau must be at least 1");
  if (num_classes < 2) bad("need at least 2 classes");
  if (orders.empty()) bad("orders must not be empty");
  for (std::size_t k = 0; k < orders.size(); ++k) {
    if (orders[k] < 1 || orders[k] > 3) bad("orders must lie in 1..3");
    if (k > 0 && orders[k] <= orders[k - 1]) bad("orders must be strictly increasing");
    if (orders[k] > joints) bad("order exceeds the joint count");
  }
  if (d < 1 || d_prime < 1 || depth < 1 || heads < 1 || d_k < 1) {
    bad("d, d_prime, depth, heads and d_k must be positive");
  }
  if (d_head == 0 && d % heads != 0) bad("d must be divisible by heads when d_head is unset");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
  if (torso >= joints) bad("torso_index out of range");
}

HotBranchSpec ModelConfig::branch(std::size_t order) const {
  HotBranchSpec spec;
  spec.m = order;
  spec.depth = depth;
  spec.d = d;
  spec.d_out = d_prime;
  spec.heads = heads;
  spec.d_head = d_head == 0 ? d / heads : d_head;
  spec.d_ff = d_ff == 0 ? d : d_ff;
  spec.d_k = d_k;
  spec.mode = attention;
  return spec;
}

HeadSpec ModelConfig::head() const {
  HeadSpec spec;
  spec.variant = variant;
  spec.pool = pool;
  spec.d_prime = d_prime;
  spec.tau = tau;
  spec.num_classes = num_classes;
  spec.layout = MultiOrderLayout::make(joints, orders);
  return spec;
}

std::vector<std::size_t> resample_blocks(std::size_t have, std::size_t want) {
  std::vector<std::size_t> idx(want, 0);
  if (want == 1) {
    idx[0] = (have - 1) / 2;
    return idx;
  }
  for (std::size_t k = 0; k < want; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(have - 1) /
                       static_cast<double>(want - 1);
    idx[k] = static_cast<std::size_t>(std::lround(pos));
  }
  return idx;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  head_ = config_.head();
  std::mt19937_64 rng(config_.seed);
  init_mlp_unit(params_, "mlp", MlpUnitSpec{config_.coords * config_.T, config_.d}, rng);
  for (std::size_t m : config_.orders) {
    init_hot_branch(params_, "hot" + std::to_string(m), config_.branch(m), rng);
  }
  init_head(params_, head_, rng);
}

Model::Model(ModelConfig config, const ParamSet& params) : Model(std::move(config)) {
  if (params.size() != params_.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) +
                                " tensors, the configured model needs " +
                                std::to_string(params_.size()));
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const std::string& name = params_.name(k);
    if (!params.contains(name)) throw std::invalid_argument("checkpoint lacks tensor " + name);
    const Tensor& value = params.at(name);
    if (value.shape() != params_.value(k).shape()) {
      throw std::invalid_argument("checkpoint tensor " + name + " has shape " +
                                  shape_str(value.shape()) + ", expected " +
                                  shape_str(params_.value(k).shape()));
    }
    params_.value(k) = value;
  }
}

PreparedSequence Model::prepare(const SkeletonSequence& seq) const {
  validate(seq);
  if (seq.joints() != config_.joints || seq.coords() != config_.coords) {
    throw std::invalid_argument("sequence has " + std::to_string(seq.joints()) + " joints and " +
                                std::to_string(seq.coords()) + " coordinates, model expects " +
                                std::to_string(config_.joints) + " and " +
                                std::to_string(config_.coords));
  }
  const SkeletonSequence norm = normalize_sequence(seq, config_.torso);
  PreparedSequence out;
  out.label = seq.label;
  const std::size_t J = config_.joints, width = config_.coords * config_.T;
  for (const Tensor& subject : norm.subjects) {
    BlockedSequence b = split_blocks(subject, config_.T, config_.S);
    if (b.tau == config_.tau) {
      out.blocks.push_back(std::move(b.blocks));
      continue;
    }
    Tensor picked({config_.tau * J, width});
    const auto idx = resample_blocks(b.tau, config_.tau);
    for (std::size_t t = 0; t < config_.tau; ++t) {
      std::copy_n(b.blocks.raw() + idx[t] * J * width, J * width, picked.raw() + t * J * width);
    }
    out.blocks.push_back(std::move(picked));
  }
  return out;
}

ad::Var Model::encode(Binding& bind, const PreparedSequence& seq,
                      const DropoutSource& dropout) const {
  if (seq.blocks.empty()) throw std::invalid_argument("encode: sequence has no subjects");
  const MlpUnitSpec mlp{config_.coords * config_.T, config_.d};
  ad::Var total;
  for (const Tensor& blocks : seq.blocks) {
    ad::Var h = mlp_unit(bind, "mlp", mlp, bind.tape().leaf_ref(blocks, false), dropout);
    std::vector<std::vector<ad::Var>> phi;
    for (std::size_t m : config_.orders) {
      phi.push_back(hot_branch(bind, "hot" + std::to_string(m), config_.branch(m), h,
                               config_.joints));
    }
    ad::Var m = assemble_multi_order(phi, head_.layout);
    total = total.valid() ? ad::add(total, m) : m;
  }
  if (seq.blocks.size() > 1) total = ad::scale(total, 1.0 / static_cast<double>(seq.blocks.size()));
  return total;
}

ad::Var Model::forward(Binding& bind, const PreparedSequence& seq, const DropoutSource& dropout,
                       AttentionTrace* trace) const {
  return head_forward(bind, head_, encode(bind, seq, dropout), trace);
}

Tensor Model::logits(const PreparedSequence& seq, AttentionTrace* trace) const {
  ad::Tape tape;
  Binding bind(tape, params_, false);
  return forward(bind, seq, DropoutSource{}, trace).value();
}

}  // namespace mmf
