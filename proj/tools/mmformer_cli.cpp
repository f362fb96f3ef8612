// Command-line front end: synth, train, eval, ablate, inspect.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmformer/train.hpp"

using namespace mmf;

namespace {

struct Overrides {
  std::vector<std::string> sets;
  std::string variant, pool;
  std::size_t epochs = 0, batch = 0;
  double lr = 0.0;
  long long seed = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--set", sets, "config override key=value (repeatable)");
    cmd->add_option("--variant", variant, "two_branch|mp_tp|tp_mp|mp_only|tp_only|baseline");
    cmd->add_option("--pool", pool, "avg|max|sum|attn|tri|rank");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch);
    cmd->add_option("--lr", lr);
    cmd->add_option("--seed", seed);
  }

  void apply(TrainConfig& cfg) const {
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!variant.empty()) set_config_value(cfg, "variant", variant);
    if (!pool.empty()) set_config_value(cfg, "pool", pool);
    if (epochs) set_config_value(cfg, "epochs", std::to_string(epochs));
    if (batch) set_config_value(cfg, "batch_size", std::to_string(batch));
    if (lr != 0.0) cfg.lr0 = lr;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();
  }
};

TrainConfig load_or_default(const std::string& path, const Overrides& o) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  o.apply(cfg);
  return cfg;
}

void write_metrics_csv(std::ostream& out, const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", m.count, m.top1, m.top5, m.loss);
  out << "count,top1,top5,loss\n" << buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmformer: multi-order hypergraph transformer for skeleton sequences"};
  app.require_subcommand(1);

  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--classes", sc.num_classes)->required();
  synth->add_option("--per-class", sc.per_class)->required();
  synth->add_option("--joints", sc.joints)->required();
  synth->add_option("--frames", sc.frames)->required();
  synth->add_option("--seed", sc.seed);
  synth->add_option("--noise", sc.noise);
  synth->add_option("--out", synth_out)->required();

  std::string data_path, config_path, history_path, out_path;
  bool subset = false;
  std::size_t train_per_class = 0;

  Overrides train_o;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--data", data_path)->required();
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--out", out_path)->required();
  train_cmd->add_flag("--subset", subset, "train only on the per-class train split");
  train_cmd->add_option("--history", history_path, "per-epoch loss CSV");
  train_o.add_to(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
  std::string eval_model;
  eval_cmd->add_option("--data", data_path)->required();
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_flag("--subset", subset, "score only the per-class test split");
  eval_cmd->add_option("--train-per-class", train_per_class, "split size used with --subset");
  eval_cmd->add_option("--out", out_path, "metrics CSV (default: stdout)");

  Overrides ablate_o;
  std::size_t seeds = 5;
  std::vector<std::string> pools{"rank"};
  auto* ablate_cmd = app.add_subcommand("ablate", "variant x pool x seed grid");
  ablate_cmd->add_option("--data", data_path)->required();
  ablate_cmd->add_option("--config", config_path);
  ablate_cmd->add_option("--seeds", seeds);
  ablate_cmd->add_option("--pools", pools)->delimiter(',');
  ablate_cmd->add_option("--out", out_path)->required();
  ablate_o.add_to(ablate_cmd);

  std::size_t index = 0;
  std::string token;
  auto* inspect = app.add_subcommand("inspect", "export one attention matrix");
  inspect->add_option("--model", eval_model)->required();
  inspect->add_option("--data", data_path)->required();
  inspect->add_option("--index", index)->required();
  inspect->add_option("--token", token)->required();
  inspect->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) {
      save_jsonl(synth_out, synth_dataset(sc));
    } else if (*train_cmd) {
      TrainConfig cfg = load_or_default(config_path, train_o);
      Dataset data = load_jsonl(data_path);
      if (subset) {
        Dataset train, test;
        split_dataset(data, cfg, train, test);
        data = std::move(train);
      }
      TrainResult r = train(data, cfg, [](const EpochStats& s) {
        std::fprintf(stderr, "epoch %zu lr %.6g loss %.6f\n", s.epoch, s.lr, s.loss);
      });
      save_checkpoint(out_path, r.model);
      if (!history_path.empty()) {
        auto f = open_out(history_path);
        f << "epoch,lr,loss\n";
        char buf[96];
        for (const EpochStats& s : r.history) {
          std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6f\n", s.epoch, s.lr, s.loss);
          f << buf;
        }
      }
    } else if (*eval_cmd) {
      const Model model = load_checkpoint(eval_model);
      Dataset data = load_jsonl(data_path);
      if (subset) {
        TrainConfig cfg;
        cfg.train_per_class = train_per_class;
        Dataset train, test;
        split_dataset(data, cfg, train, test);
        data = std::move(test);
      }
      const Metrics m = evaluate(model, data);
      if (out_path.empty()) {
        write_metrics_csv(std::cout, m);
      } else {
        auto f = open_out(out_path);
        write_metrics_csv(f, m);
      }
    } else if (*ablate_cmd) {
      TrainConfig cfg = load_or_default(config_path, ablate_o);
      if (seeds == 0) throw std::invalid_argument("--seeds must be at least 1");
      std::vector<PoolMethod> pm;
      for (const std::string& p : pools) pm.push_back(parse_pool_method(p));
      const Dataset data = load_jsonl(data_path);
      const auto rows = ablate(data, cfg, seeds, pm, [](const AblationRow& r) {
        std::fprintf(stderr, "%s %s seed %llu top1 %.4f\n", to_string(r.variant).c_str(),
                     to_string(r.pool).c_str(), static_cast<unsigned long long>(r.seed),
                     r.test.top1);
      });
      auto f = open_out(out_path);
      write_ablation_csv(f, rows);
    } else if (*inspect) {
      const Model model = load_checkpoint(eval_model);
      const Dataset data = load_jsonl(data_path);
      if (index >= data.size()) {
        throw std::out_of_range("--index " + std::to_string(index) + " but the dataset has " +
                                std::to_string(data.size()) + " sequences");
      }
      const Tensor a = export_attention(model, data[index], token, out_path);
      std::printf("%zu x %zu written to %s.csv and %s.pgm\n", a.shape()[0], a.shape()[1],
                  out_path.c_str(), out_path.c_str());
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
