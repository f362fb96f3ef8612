#include "mmformer/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmformer/ops.hpp"

namespace mmf {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written in host order and assume a little-endian host");

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(x)) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  return out;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + std::to_string(xs[k]);
  return s;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

AttentionMode parse_attention(const std::string& v) {
  if (v == "exact") return AttentionMode::exact;
  if (v == "performer") return AttentionMode::performer;
  if (v == "auto") return AttentionMode::automatic;
  throw std::invalid_argument("attention: expected exact, performer or auto, got '" + v + "'");
}

std::string attention_name(AttentionMode m) {
  switch (m) {
    case AttentionMode::exact:
      return "exact";
    case AttentionMode::performer:
      return "performer";
    default:
      return "auto";
  }
}

std::vector<std::string> lines_of(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Calls set(key, value) for every key=value line; errors are prefixed with the line number.
template <typename Set>
void parse_kv(std::istream& in, Set set) {
  const auto lines = lines_of(in);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty() || line[0] == '#') continue;
    try {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("expected key=value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(n + 1) + ": " + e.what());
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (!(lr0 > 0.0)) bad("lr0 must be positive");
  if (momentum < 0.0 || momentum >= 1.0) bad("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) bad("weight_decay must be non-negative");
  if (batch_size < 1) bad("batch_size must be at least 1");
  if (epochs < 1) bad("epochs must be at least 1");
  for (std::size_t k = 1; k < lr_drops.size(); ++k) {
    if (lr_drops[k] <= lr_drops[k - 1]) bad("lr_drops must be strictly ascending");
  }
  if (T < 1 || S < 1 || S > T) bad("need 1 <= S <= T");
  if (r < 1 || r > 3) bad("r must lie in 1..3");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
}

std::vector<std::size_t> TrainConfig::effective_orders() const {
  if (!orders.empty()) return orders;
  std::vector<std::size_t> out;
  for (std::size_t m = 1; m <= r; ++m) out.push_back(m);
  return out;
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "lr0") c.lr0 = parse_double(key, v);
  else if (key == "momentum") c.momentum = parse_double(key, v);
  else if (key == "weight_decay") c.weight_decay = parse_double(key, v);
  else if (key == "batch_size") c.batch_size = parse_size(key, v);
  else if (key == "epochs") c.epochs = parse_size(key, v);
  else if (key == "lr_drops") c.lr_drops = parse_list(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else if (key == "T") c.T = parse_size(key, v);
  else if (key == "S") c.S = parse_size(key, v);
  else if (key == "J") c.joints = parse_size(key, v);
  else if (key == "r") c.r = parse_size(key, v);
  else if (key == "orders") c.orders = parse_list(key, v);
  else if (key == "d") c.d = parse_size(key, v);
  else if (key == "d_prime") c.d_prime = parse_size(key, v);
  else if (key == "depth") c.depth = parse_size(key, v);
  else if (key == "heads") c.heads = parse_size(key, v);
  else if (key == "d_head") c.d_head = parse_size(key, v);
  else if (key == "d_ff") c.d_ff = parse_size(key, v);
  else if (key == "d_K") c.d_k = parse_size(key, v);
  else if (key == "attention") c.attention = parse_attention(v);
  else if (key == "pool") c.pool = parse_pool_method(v);
  else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "torso_index") c.torso_index = parse_size(key, v);
  else if (key == "dropout") c.dropout = parse_double(key, v);
  else if (key == "train_per_class") c.train_per_class = parse_size(key, v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  parse_kv(in, [&](const std::string& k, const std::string& v) { set_config_value(cfg, k, v); });
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return parse_config(in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "lr0=" << fmt(c.lr0) << "\nmomentum=" << fmt(c.momentum)
     << "\nweight_decay=" << fmt(c.weight_decay) << "\nbatch_size=" << c.batch_size
     << "\nepochs=" << c.epochs << "\nlr_drops=" << join(c.lr_drops) << "\nseed=" << c.seed
     << "\nT=" << c.T << "\nS=" << c.S << "\nJ=" << c.joints << "\nr=" << c.r
     << "\norders=" << join(c.orders) << "\nd=" << c.d << "\nd_prime=" << c.d_prime
     << "\ndepth=" << c.depth << "\nheads=" << c.heads << "\nd_head=" << c.d_head
     << "\nd_ff=" << c.d_ff << "\nd_K=" << c.d_k << "\nattention=" << attention_name(c.attention)
     << "\npool=" << to_string(c.pool) << "\nvariant=" << to_string(c.variant)
     << "\ntorso_index=" << c.torso_index << "\ndropout=" << fmt(c.dropout)
     << "\ntrain_per_class=" << c.train_per_class << "\n";
  return os.str();
}

ModelConfig model_config(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  ModelConfig mc;
  mc.joints = data[0].joints();
  mc.coords = data[0].coords();
  if (cfg.joints != 0 && cfg.joints != mc.joints) {
    throw std::invalid_argument("config J = " + std::to_string(cfg.joints) + " but the data has " +
                                std::to_string(mc.joints) + " joints");
  }
  std::size_t frames = 0, classes = 0;
  for (const SkeletonSequence& s : data) {
    frames = std::max(frames, s.frames());
    classes = std::max(classes, s.label + 1);
  }
  mc.T = cfg.T;
  mc.S = cfg.S;
  mc.tau = block_count(frames, cfg.T, cfg.S);
  mc.num_classes = std::max<std::size_t>(classes, 2);
  mc.orders = cfg.effective_orders();
  mc.d = cfg.d;
  mc.d_prime = cfg.d_prime;
  mc.depth = cfg.depth;
  mc.heads = cfg.heads;
  mc.d_head = cfg.d_head;
  mc.d_ff = cfg.d_ff;
  mc.d_k = cfg.d_k;
  mc.attention = cfg.attention;
  mc.variant = cfg.variant;
  mc.pool = cfg.pool;
  mc.dropout = cfg.dropout;
  mc.torso = cfg.torso_index;
  mc.seed = cfg.seed;
  mc.validate();
  return mc;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr0;
  for (std::size_t drop : cfg.lr_drops) {
    if (epoch >= drop) lr /= 10.0;
  }
  return lr;
}

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  }
  if (state.velocity.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      state.velocity.emplace_back(params.value(k).shape(), 0.0);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params.value(k);
    if (grads[k].shape() != p.shape() || state.velocity[k].shape() != p.shape()) {
      throw std::invalid_argument("sgd_step: shape mismatch for " + params.name(k));
    }
    if (!params.trainable(k)) continue;
    Tensor& v = state.velocity[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + (g[i] + weight_decay * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

std::vector<EpochStats> train_model(Model& model, const std::vector<PreparedSequence>& data,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  const std::size_t n = data.size();
  ParamSet& params = model.params();
  SgdState state;
  std::mt19937_64 order_rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochStats> history;
  const auto seed_lo = static_cast<std::uint32_t>(cfg.seed);
  const auto seed_hi = static_cast<std::uint32_t>(cfg.seed >> 32);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      std::vector<std::vector<Tensor>> grads(b);
      std::vector<double> losses(b, 0.0);
      std::exception_ptr error;
      // Samples of a batch are independent; the reduction below runs in sample order, so the
      // result does not depend on the thread count.
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t i = 0; i < b; ++i) {
        try {
          std::seed_seq seq{seed_lo, seed_hi, static_cast<std::uint32_t>(epoch),
                            static_cast<std::uint32_t>(start + i)};
          std::mt19937_64 rng(seq);
          ad::Tape tape;
          Binding bind(tape, params, true);
          const PreparedSequence& sample = data[order[start + i]];
          ad::Var loss = ad::cross_entropy(
              model.forward(bind, sample, DropoutSource{&rng, model.config().dropout}),
              sample.label);
          tape.backward(loss);
          grads[i] = bind.gradients();
          losses[i] = loss.value()[0];
        } catch (...) {
#pragma omp critical
          error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);
      for (std::size_t i = 0; i < b; ++i) {
        if (!std::isfinite(losses[i])) {
          throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + " on sample " +
                                   std::to_string(order[start + i]));
        }
      }
      std::vector<Tensor> total = std::move(grads[0]);
      for (std::size_t i = 1; i < b; ++i) {
        for (std::size_t k = 0; k < total.size(); ++k) {
          double* dst = total[k].raw();
          const double* src = grads[i][k].raw();
          for (std::size_t e = 0; e < total[k].size(); ++e) dst[e] += src[e];
        }
      }
      const double inv = 1.0 / static_cast<double>(b);
      for (Tensor& g : total) {
        for (double& x : g.data()) x *= inv;
      }
      sgd_step(params, total, state, lr, cfg.momentum, cfg.weight_decay);
      for (double l : losses) loss_sum += l;
    }
    history.push_back({epoch, lr, loss_sum / static_cast<double>(n)});
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  Model model(model_config(cfg, data));
  std::vector<PreparedSequence> prepared;
  prepared.reserve(data.size());
  for (const SkeletonSequence& s : data) prepared.push_back(model.prepare(s));
  std::vector<EpochStats> history = train_model(model, prepared, cfg, on_epoch);
  return {std::move(model), std::move(history)};
}

std::size_t label_rank(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("label_rank: label out of range");
  const double y = logits[label];
  // A non-finite score ranks last.
  if (!std::isfinite(y)) return logits.size() - 1;
  std::size_t rank = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (logits[k] > y || (logits[k] == y && k < label)) ++rank;
  }
  return rank;
}

Metrics evaluate_prepared(const Model& model, const std::vector<PreparedSequence>& data) {
  Metrics m;
  m.count = data.size();
  if (data.empty()) return m;
  std::vector<std::size_t> ranks(data.size());
  std::vector<double> losses(data.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      ad::Tape tape;
      Binding bind(tape, model.params(), false);
      ad::Var logits = model.forward(bind, data[i], DropoutSource{});
      ranks[i] = label_rank(logits.value(), data[i].label);
      losses[i] = ad::cross_entropy(logits, data[i].label).value()[0];
    } catch (...) {
#pragma omp critical
      error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t i = 0; i < data.size(); ++i) {
    m.top1 += ranks[i] == 0 ? 1.0 : 0.0;
    m.top5 += ranks[i] < 5 ? 1.0 : 0.0;
    m.loss += losses[i];
  }
  const double n = static_cast<double>(data.size());
  m.top1 /= n;
  m.top5 /= n;
  m.loss /= n;
  return m;
}

Metrics evaluate(const Model& model, const Dataset& data) {
  std::vector<PreparedSequence> prepared;
  prepared.reserve(data.size());
  for (const SkeletonSequence& s : data) prepared.push_back(model.prepare(s));
  return evaluate_prepared(model, prepared);
}

void split_dataset(const Dataset& data, const TrainConfig& cfg, Dataset& train, Dataset& test) {
  std::size_t keep = cfg.train_per_class;
  if (keep == 0) {
    std::vector<std::size_t> counts;
    for (const SkeletonSequence& s : data) {
      if (s.label >= counts.size()) counts.resize(s.label + 1, 0);
      ++counts[s.label];
    }
    std::size_t smallest = counts.empty() ? 0 : counts[0];
    for (std::size_t c : counts) smallest = std::min(smallest, c);
    keep = smallest * 2 / 3;
  }
  split_per_class(data, keep, train, test);
}

namespace {

constexpr char kMagic[8] = {'M', 'M', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint is truncated");
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 32)) throw std::runtime_error("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint is truncated");
  return s;
}

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream os;
  os << "joints=" << c.joints << "\ncoords=" << c.coords << "\nT=" << c.T << "\nS=" << c.S
     << "\ntau=" << c.tau << "\nnum_classes=" << c.num_classes << "\norders=" << join(c.orders)
     << "\nd=" << c.d << "\nd_prime=" << c.d_prime << "\ndepth=" << c.depth
     << "\nheads=" << c.heads << "\nd_head=" << c.d_head << "\nd_ff=" << c.d_ff
     << "\nd_K=" << c.d_k << "\nattention=" << attention_name(c.attention)
     << "\nvariant=" << to_string(c.variant) << "\npool=" << to_string(c.pool)
     << "\ndropout=" << fmt(c.dropout) << "\ntorso_index=" << c.torso << "\nseed=" << c.seed
     << "\n";
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  parse_kv(in, [&](const std::string& k, const std::string& v) {
    if (k == "joints") c.joints = parse_size(k, v);
    else if (k == "coords") c.coords = parse_size(k, v);
    else if (k == "T") c.T = parse_size(k, v);
    else if (k == "S") c.S = parse_size(k, v);
    else if (k == "tau") c.tau = parse_size(k, v);
    else if (k == "num_classes") c.num_classes = parse_size(k, v);
    else if (k == "orders") c.orders = parse_list(k, v);
    else if (k == "d") c.d = parse_size(k, v);
    else if (k == "d_prime") c.d_prime = parse_size(k, v);
    else if (k == "depth") c.depth = parse_size(k, v);
    else if (k == "heads") c.heads = parse_size(k, v);
    else if (k == "d_head") c.d_head = parse_size(k, v);
    else if (k == "d_ff") c.d_ff = parse_size(k, v);
    else if (k == "d_K") c.d_k = parse_size(k, v);
    else if (k == "attention") c.attention = parse_attention(v);
    else if (k == "variant") c.variant = parse_variant(v);
    else if (k == "pool") c.pool = parse_pool_method(v);
    else if (k == "dropout") c.dropout = parse_double(k, v);
    else if (k == "torso_index") c.torso = parse_size(k, v);
    else if (k == "seed") c.seed = parse_size(k, v);
    else throw std::invalid_argument("unknown model key '" + k + "'");
  });
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put_string(out, format_model_config(model.config()));
  const ParamSet& params = model.params();
  put<std::uint64_t>(out, params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& t = params.value(k);
    put_string(out, params.name(k));
    put<std::uint64_t>(out, t.rank());
    for (std::size_t dim : t.shape()) put<std::uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(t.raw()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Model read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const ModelConfig config = parse_model_config(get_string(in));
  const auto count = get<std::uint64_t>(in);
  ParamSet params;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = get_string(in);
    const auto rank = get<std::uint64_t>(in);
    if (rank > 8) throw std::runtime_error("checkpoint tensor " + name + " has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint64_t q = 0; q < rank; ++q) shape.push_back(get<std::uint64_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint is truncated");
    params.add(name, std::move(t));
  }
  return Model(config, params);
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_checkpoint(out, model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return read_checkpoint(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

Tensor attention_matrix(const Model& model, const SkeletonSequence& seq, const std::string& token) {
  static const char* const kTokens[] = {"channel_only", "channel_edge", "order_channel_joint",
                                        "channel_block"};
  if (std::find(std::begin(kTokens), std::end(kTokens), token) == std::end(kTokens)) {
    throw std::invalid_argument("unknown token type '" + token +
                                "' (expected channel_only, channel_edge, order_channel_joint or "
                                "channel_block)");
  }
  AttentionTrace trace;
  model.logits(model.prepare(seq), &trace);
  const auto it = trace.find(token);
  if (it == trace.end()) {
    throw std::invalid_argument("token type '" + token + "' is not used by variant " +
                                to_string(model.config().variant));
  }
  return it->second;
}

void write_matrix_csv(std::ostream& out, const Tensor& m) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  out << std::setprecision(17);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out << (j ? "," : "") << m[i * cols + j];
    out << '\n';
  }
}

void write_pgm(std::ostream& out, const Tensor& m) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  double lo = m[0], hi = m[0];
  for (double v : m.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (double v : m.data()) {
    const double u = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u))));
  }
}

Tensor export_attention(const Model& model, const SkeletonSequence& seq, const std::string& token,
                        const std::string& prefix) {
  Tensor a = attention_matrix(model, seq, token);
  std::ofstream csv(prefix + ".csv");
  std::ofstream pgm(prefix + ".pgm", std::ios::binary);
  if (!csv || !pgm) throw std::runtime_error("cannot write " + prefix + ".csv/.pgm");
  write_matrix_csv(csv, a);
  write_pgm(pgm, a);
  return a;
}

std::vector<AblationRow> ablate(const Dataset& data, const TrainConfig& cfg, std::size_t seeds,
                                const std::vector<PoolMethod>& pools,
                                const std::function<void(const AblationRow&)>& on_row) {
  if (seeds < 1) throw std::invalid_argument("ablate: need at least one seed");
  if (pools.empty()) throw std::invalid_argument("ablate: need at least one pooling method");
  Dataset train_set, test_set;
  split_dataset(data, cfg, train_set, test_set);
  if (train_set.empty() || test_set.empty()) {
    throw std::invalid_argument("ablate: the train/test split leaves an empty side");
  }
  std::vector<AblationRow> rows;
  for (PoolMethod pool : pools) {
    for (Variant variant : {Variant::baseline, Variant::tp_only, Variant::mp_only, Variant::mp_tp,
                            Variant::tp_mp, Variant::two_branch}) {
      for (std::size_t s = 0; s < seeds; ++s) {
        TrainConfig run = cfg;
        run.pool = pool;
        run.variant = variant;
        run.seed = cfg.seed + s;
        Model model(model_config(run, data));
        std::vector<PreparedSequence> tr, te;
        for (const auto& q : train_set) tr.push_back(model.prepare(q));
        for (const auto& q : test_set) te.push_back(model.prepare(q));
        const auto history = train_model(model, tr, run);
        AblationRow row{variant, pool, run.seed, evaluate_prepared(model, te),
                        history.back().loss};
        rows.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,pool,seed,top1,top5,test_loss,train_loss\n";
  out << std::fixed << std::setprecision(6);
  for (const AblationRow& r : rows) {
    out << to_string(r.variant) << ',' << to_string(r.pool) << ',' << r.seed << ',' << r.test.top1
        << ',' << r.test.top5 << ',' << r.test.loss << ',' << r.train_loss << '\n';
  }
}

}  // namespace mmf
