#include "mmformer/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mmf {

using nlohmann::json;

void validate(const SkeletonSequence& seq) {
  if (seq.subjects.empty() || seq.subjects.size() > 2) {
    throw std::invalid_argument("sequence must have one or two subjects");
  }
  const Tensor& first = seq.subjects[0];
  if (first.rank() != 3 || first.dim(0) < 1 || first.dim(1) < 2 ||
      (first.dim(2) != 2 && first.dim(2) != 3)) {
    throw std::invalid_argument("sequence must be F x J x C with F >= 1, J >= 2, C in {2,3}; got " +
                                shape_str(first.shape()));
  }
  for (const Tensor& s : seq.subjects) {
    if (s.shape() != first.shape()) {
      throw std::invalid_argument("second subject has shape " + shape_str(s.shape()) +
                                  ", expected " + shape_str(first.shape()));
    }
    if (!s.all_finite()) throw std::invalid_argument("sequence has non-finite coordinates");
  }
}

Tensor center_on_torso(const Tensor& frames, std::size_t torso) {
  if (frames.rank() != 3) throw std::invalid_argument("center_on_torso: expects (F, J, C)");
  const std::size_t F = frames.dim(0), J = frames.dim(1), C = frames.dim(2);
  if (torso >= J) {
    throw std::out_of_range("center_on_torso: torso index " + std::to_string(torso) +
                            " out of range for " + std::to_string(J) + " joints");
  }
  Tensor out = frames;
  for (std::size_t f = 0; f < F; ++f) {
    const double* c = frames.raw() + (f * J + torso) * C;
    for (std::size_t j = 0; j < J; ++j) {
      double* v = out.raw() + (f * J + j) * C;
      for (std::size_t a = 0; a < C; ++a) v[a] -= c[a];
    }
  }
  return out;
}

Tensor normalize_unit_range(const Tensor& frames) {
  if (frames.rank() != 3) throw std::invalid_argument("normalize_unit_range: expects (F, J, C)");
  const std::size_t C = frames.dim(2), points = frames.size() / C;
  std::vector<double> peak(C, 0.0);
  for (std::size_t p = 0; p < points; ++p) {
    for (std::size_t a = 0; a < C; ++a) peak[a] = std::max(peak[a], std::abs(frames[p * C + a]));
  }
  Tensor out = frames;
  for (std::size_t p = 0; p < points; ++p) {
    for (std::size_t a = 0; a < C; ++a) {
      if (peak[a] > 0.0) out[p * C + a] /= peak[a];
    }
  }
  return out;
}

SkeletonSequence normalize_sequence(const SkeletonSequence& seq, std::size_t torso) {
  SkeletonSequence out;
  out.label = seq.label;
  for (const Tensor& s : seq.subjects) {
    out.subjects.push_back(normalize_unit_range(center_on_torso(s, torso)));
  }
  return out;
}

std::size_t block_count(std::size_t frames, std::size_t T, std::size_t S) {
  if (T < 1 || S < 1 || S > T) {
    throw std::invalid_argument("block length T and stride S need 1 <= S <= T");
  }
  return frames < T ? 1 : (frames - T) / S + 1;
}

BlockedSequence split_blocks(const Tensor& frames, std::size_t T, std::size_t S) {
  if (frames.rank() != 3) throw std::invalid_argument("split_blocks: expects (F, J, C)");
  const std::size_t F = frames.dim(0), J = frames.dim(1), C = frames.dim(2);
  BlockedSequence out;
  out.tau = block_count(F, T, S);
  out.joints = J;
  out.T = T;
  out.S = S;
  out.blocks = Tensor({out.tau * J, C * T});
  for (std::size_t t = 0; t < out.tau; ++t) {
    for (std::size_t j = 0; j < J; ++j) {
      double* row = out.blocks.raw() + (t * J + j) * C * T;
      for (std::size_t k = 0; k < T; ++k) {
        const std::size_t f = (t * S + k) % F;
        std::copy_n(frames.raw() + (f * J + j) * C, C, row + k * C);
      }
    }
  }
  return out;
}

namespace {

Tensor frames_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("joints must be a non-empty array");
  const std::size_t F = j.size();
  if (!j[0].is_array() || j[0].empty()) throw std::invalid_argument("frame 1 has no joints");
  const std::size_t J = j[0].size();
  if (!j[0][0].is_array()) throw std::invalid_argument("joint coordinates must be arrays");
  const std::size_t C = j[0][0].size();
  Tensor out({F, J, C});
  for (std::size_t f = 0; f < F; ++f) {
    if (!j[f].is_array() || j[f].size() != J) {
      throw std::invalid_argument("frame " + std::to_string(f + 1) + " has " +
                                  std::to_string(j[f].is_array() ? j[f].size() : 0) +
                                  " joints, expected " + std::to_string(J));
    }
    for (std::size_t v = 0; v < J; ++v) {
      const json& p = j[f][v];
      if (!p.is_array() || p.size() != C) {
        throw std::invalid_argument("frame " + std::to_string(f + 1) + " joint " +
                                    std::to_string(v + 1) + " has inconsistent coordinate count");
      }
      for (std::size_t a = 0; a < C; ++a) {
        if (!p[a].is_number()) throw std::invalid_argument("coordinates must be numbers");
        out[(f * J + v) * C + a] = p[a].get<double>();
      }
    }
  }
  return out;
}

json frames_to_json(const Tensor& t) {
  const std::size_t F = t.dim(0), J = t.dim(1), C = t.dim(2);
  json frames = json::array();
  for (std::size_t f = 0; f < F; ++f) {
    json frame = json::array();
    for (std::size_t v = 0; v < J; ++v) {
      json p = json::array();
      for (std::size_t a = 0; a < C; ++a) p.push_back(t[(f * J + v) * C + a]);
      frame.push_back(std::move(p));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace

Dataset read_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      if (!rec.is_object() || !rec.contains("label") || !rec.contains("joints")) {
        throw std::invalid_argument("record needs \"label\" and \"joints\"");
      }
      if (!rec["label"].is_number_integer() || rec["label"].get<long long>() < 0) {
        throw std::invalid_argument("label must be a non-negative integer");
      }
      SkeletonSequence seq;
      seq.label = rec["label"].get<std::size_t>();
      seq.subjects.push_back(frames_from_json(rec["joints"]));
      if (rec.contains("subjects") && !rec["subjects"].is_null()) {
        seq.subjects.push_back(frames_from_json(rec["subjects"]));
      }
      validate(seq);
      data.push_back(std::move(seq));
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return data;
}

void write_jsonl(std::ostream& out, const Dataset& data) {
  for (const SkeletonSequence& seq : data) {
    validate(seq);
    json rec;
    rec["label"] = seq.label;
    rec["joints"] = frames_to_json(seq.subjects[0]);
    if (seq.subjects.size() > 1) rec["subjects"] = frames_to_json(seq.subjects[1]);
    // nlohmann writes doubles with 17 significant digits, which round-trips exactly.
    out << rec.dump() << '\n';
  }
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return read_jsonl(in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void save_jsonl(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_jsonl(out, data);
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::vector<std::size_t>> synth_coupled_triples(std::size_t num_classes) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < num_classes) ++bits;
  std::vector<std::vector<std::size_t>> triples;
  for (std::size_t k = 0; k < bits; ++k) triples.push_back({1 + 3 * k, 2 + 3 * k, 3 + 3 * k});
  return triples;
}

Dataset synth_dataset(const SynthConfig& cfg) {
  const std::size_t K = cfg.num_classes, J = cfg.joints, F = cfg.frames;
  const auto triples = synth_coupled_triples(K);
  if (K < 2 || J < 6 || J - 1 < 3 * triples.size() || F < 1) {
    throw std::invalid_argument("synth_dataset: need classes >= 2, joints >= 6, frames >= 1 and "
                                "joints - 1 >= 3 ceil(log2 classes)");
  }
  std::vector<std::size_t> assignment = cfg.assignment;
  if (assignment.empty()) {
    for (std::size_t c = 0; c < K; ++c) assignment.push_back(c);
  }
  {
    std::vector<std::size_t> sorted = assignment;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t c = 0; c < K; ++c) {
      if (sorted.size() != K || sorted[c] != c) {
        throw std::invalid_argument("synth_dataset: assignment must be a permutation of classes");
      }
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Fixed skeleton: rest pose, motion direction and wobble per joint.
  std::vector<double> rest(J * 3), dir(J * 3), wobble_dir(J * 3), wobble_freq(J);
  for (std::size_t j = 0; j < J; ++j) {
    double norm = 0.0, wnorm = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      rest[j * 3 + a] = j == 0 ? 0.0 : uni(rng);
      dir[j * 3 + a] = gauss(rng);
      wobble_dir[j * 3 + a] = gauss(rng);
      norm += dir[j * 3 + a] * dir[j * 3 + a];
      wnorm += wobble_dir[j * 3 + a] * wobble_dir[j * 3 + a];
    }
    for (std::size_t a = 0; a < 3; ++a) {
      dir[j * 3 + a] /= std::sqrt(norm);
      wobble_dir[j * 3 + a] /= std::sqrt(wnorm);
    }
    wobble_freq[j] = 2.0 + static_cast<double>(rng() % 4);
  }

  const double pi = std::numbers::pi;
  const double slow = pi / (2.0 * static_cast<double>(F));
  Dataset data;
  data.reserve(K * cfg.per_class);
  std::vector<std::size_t> in_triple(J, 0);
  for (const auto& tri : triples) {
    for (std::size_t v : tri) in_triple[v] = 1;
  }
  for (std::size_t c = 0; c < K; ++c) {
    const std::size_t pattern = assignment[c];
    // signs[n][j] for every sequence n of this class.
    std::vector<std::vector<double>> signs(cfg.per_class, std::vector<double>(J, 1.0));
    for (std::size_t k = 0; k < triples.size(); ++k) {
      const double parity = ((pattern >> k) & 1U) != 0 ? -1.0 : 1.0;
      std::vector<std::size_t> combos(cfg.per_class);
      for (std::size_t n = 0; n < cfg.per_class; ++n) combos[n] = n % 4;
      std::shuffle(combos.begin(), combos.end(), rng);
      for (std::size_t n = 0; n < cfg.per_class; ++n) {
        const double sa = (combos[n] & 1U) != 0 ? -1.0 : 1.0;
        const double sb = (combos[n] & 2U) != 0 ? -1.0 : 1.0;
        signs[n][triples[k][0]] = sa;
        signs[n][triples[k][1]] = sb;
        signs[n][triples[k][2]] = parity * sa * sb;
      }
    }
    for (std::size_t j = 1; j < J; ++j) {
      if (in_triple[j] != 0) continue;
      std::vector<double> half(cfg.per_class);
      for (std::size_t n = 0; n < cfg.per_class; ++n) half[n] = n % 2 == 0 ? 1.0 : -1.0;
      std::shuffle(half.begin(), half.end(), rng);
      for (std::size_t n = 0; n < cfg.per_class; ++n) signs[n][j] = half[n];
    }

    for (std::size_t n = 0; n < cfg.per_class; ++n) {
      const double amp = 0.4 + 0.2 * (uni(rng) + 1.0) / 2.0;
      const double shift = pi / 16.0 * (uni(rng) + 1.0) / 2.0;
      Tensor frames({F, J, 3});
      std::vector<double> wobble_phase(J);
      for (double& p : wobble_phase) p = pi * (uni(rng) + 1.0);
      for (std::size_t f = 0; f < F; ++f) {
        const double ramp = std::sin(slow * static_cast<double>(f) + shift);
        for (std::size_t j = 0; j < J; ++j) {
          double* p = frames.raw() + (f * J + j) * 3;
          if (j == 0) {
            for (std::size_t a = 0; a < 3; ++a) p[a] = rest[a];
            continue;
          }
          const double w = 0.05 * std::sin(2.0 * pi * wobble_freq[j] * static_cast<double>(f) /
                                               static_cast<double>(F) +
                                           wobble_phase[j]);
          for (std::size_t a = 0; a < 3; ++a) {
            p[a] = rest[j * 3 + a] + signs[n][j] * amp * ramp * dir[j * 3 + a] +
                   w * wobble_dir[j * 3 + a] + cfg.noise * gauss(rng);
          }
        }
      }
      SkeletonSequence seq;
      seq.label = c;
      seq.subjects.push_back(std::move(frames));
      data.push_back(std::move(seq));
    }
  }
  return data;
}

void split_per_class(const Dataset& data, std::size_t train_per_class, Dataset& train,
                     Dataset& test) {
  train.clear();
  test.clear();
  std::vector<std::size_t> seen;
  for (const SkeletonSequence& seq : data) {
    if (seq.label >= seen.size()) seen.resize(seq.label + 1, 0);
    (seen[seq.label]++ < train_per_class ? train : test).push_back(seq);
  }
}

}  // namespace mmf
