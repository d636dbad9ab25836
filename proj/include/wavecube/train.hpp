#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wavecube/arch.hpp"
#include "wavecube/checkpoint.hpp"
#include "wavecube/data/cubes.hpp"
#include "wavecube/error.hpp"
#include "wavecube/nn/ops.hpp"
#include "wavecube/nn/tape.hpp"
#include "wavecube/pipeline.hpp"

namespace wavecube {

struct TrainConfig {
  std::size_t epochs = 30;
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::vector<double> class_weights{1.0, 5.0};
  double poly_power = 0.9;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw Error(Errc::invalid_argument, "epochs and batch size must be >= 1");
    if (!(base_lr > 0.0)) throw Error(Errc::invalid_argument, "base_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::invalid_argument, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(Errc::invalid_argument, "weight_decay must be >= 0");
    if (!(poly_power > 0.0)) throw Error(Errc::invalid_argument, "poly_power must be positive");
    if (class_weights.size() != 2 || !(class_weights[0] > 0.0) || !(class_weights[1] > 0.0))
      throw Error(Errc::invalid_argument, "need two positive class weights");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw Error(Errc::invalid_argument, "val_fraction must lie in [0, 1)");
  }

  std::string serialize() const {
    std::ostringstream os;
    os << std::setprecision(17) << "epochs=" << epochs << '\n'
       << "base_lr=" << base_lr << '\n'
       << "momentum=" << momentum << '\n'
       << "weight_decay=" << weight_decay << '\n'
       << "batch_size=" << batch_size << '\n'
       << "class_weights=" << class_weights[0] << ',' << class_weights[1] << '\n'
       << "poly_power=" << poly_power << '\n'
       << "val_fraction=" << val_fraction << '\n'
       << "seed=" << seed << '\n';
    return os.str();
  }
};

template <class T>
struct TrainState {
  std::size_t iteration = 0;
  std::vector<std::vector<T>> velocity;  // one buffer per parameter, lazily sized
  std::mt19937_64 rng;
  double best_val_miou = -1.0;
};

/// base_lr * (1 - iter / max_iter)^poly_power.
inline double poly_lr(std::size_t iter, std::size_t max_iter, const TrainConfig& cfg) {
  if (max_iter == 0) throw Error(Errc::invalid_argument, "max_iter must be positive");
  if (iter > max_iter)
    throw Error(Errc::invalid_argument, "iteration " + std::to_string(iter) + " beyond " + std::to_string(max_iter));
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), cfg.poly_power);
}

/// Momentum SGD with L2 weight decay on every trainable parameter:
///   v <- momentum v + grad + weight_decay p,   p <- p - lr v.
/// All gradients are checked before any parameter moves.
template <class T>
void sgd_step(std::vector<nn::Parameter<T>>& params, TrainState<T>& st, double lr, const TrainConfig& cfg) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (p.grad.size() != p.value.size())
      throw Error(Errc::shape_mismatch, p.name + ": gradient has " + std::to_string(p.grad.size()) + " entries");
    if (!p.grad.all_finite())
      throw Error(Errc::non_finite_gradient, "layer " + p.name + " has a non-finite gradient");
  }
  st.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    auto& v = st.velocity[i];
    if (v.size() != p.value.size()) v.assign(p.value.size(), T(0));
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double w = p.value[k];
      const double nv = cfg.momentum * v[k] + p.grad[k] + cfg.weight_decay * w;
      v[k] = static_cast<T>(nv);
      p.value[k] = static_cast<T>(w - lr * nv);
    }
  }
}

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t iteration = 0;  // iterations completed so far
  double lr = 0.0;            // rate used by the epoch's last step
  double loss = 0.0;          // mean training loss over the epoch
  IoU val;
};

struct FitOptions {
  std::filesystem::path out_dir;                        // empty: no checkpoints or log
  const std::vector<data::CubeRecord>* validation = nullptr;  // else a seeded split of the data
  std::ostream* progress = nullptr;
};

template <class T>
struct FitResult {
  Network<T> net;
  TrainState<T> state;
  std::vector<double> losses;  // one per iteration
  std::vector<EpochMetrics> epochs;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Pooled IoU of `net` over `cubes` (or the subset `which`).
template <class T>
IoU evaluate(Network<T>& net, const std::vector<data::CubeRecord>& cubes, const std::vector<std::size_t>& which) {
  IoUAccumulator acc;
  for (const std::size_t i : which) {
    const auto logits = net.infer(nn::from_volume<T>(cubes[i].image));
    acc.add(argmax_labels(logits), cubes[i].label);
  }
  return acc.result();
}

namespace detail {

template <class T>
void load_batch(const std::vector<data::CubeRecord>& cubes, const std::size_t* idx, std::size_t count,
                nn::Tensor<T>& x, std::vector<std::uint8_t>& labels) {
  const Extent3 e = cubes[idx[0]].image.extent();
  x = nn::Tensor<T>(nn::Shape5{count, 1, e.d, e.m, e.n});
  labels.resize(count * e.size());
  for (std::size_t b = 0; b < count; ++b) {
    const auto& c = cubes[idx[b]];
    if (c.image.extent() != e || c.label.extent() != e)
      throw Error(Errc::shape_mismatch, "cube " + std::to_string(idx[b]) + " is " + c.image.extent().str() +
                                            ", batch expects " + e.str());
    T* dst = x.slice(b, 0);
    for (std::size_t i = 0; i < e.size(); ++i) dst[i] = static_cast<T>(c.image.storage()[i]);
    std::copy(c.label.storage().begin(), c.label.storage().end(), labels.begin() + b * e.size());
  }
}

}  // namespace detail

/// Trains a fresh network on `data`. Deterministic for a given seed: the same
/// seed initialises weights, draws the validation split and shuffles every epoch.
template <class T = float>
FitResult<T> fit(const NetworkSpec& spec, const std::vector<data::CubeRecord>& data, const TrainConfig& cfg,
                 const FitOptions& opt = {}) {
  cfg.validate();
  if (data.empty()) throw Error(Errc::invalid_argument, "training set is empty");
  FitResult<T> r{Network<T>(spec, cfg.seed), {}, {}, {}, {}, {}};
  r.state.rng.seed(cfg.seed);

  const std::vector<data::CubeRecord>& val_data = opt.validation ? *opt.validation : data;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (opt.validation) {
    r.train_indices = order;
    r.val_indices.resize(opt.validation->size());
    std::iota(r.val_indices.begin(), r.val_indices.end(), 0);
  } else {
    std::shuffle(order.begin(), order.end(), r.state.rng);
    const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * double(data.size())));
    const std::size_t keep = std::min(n_val, data.size() - 1);
    r.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    r.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(keep), order.end());
    std::sort(r.train_indices.begin(), r.train_indices.end());
    std::sort(r.val_indices.begin(), r.val_indices.end());
  }
  // With no held-out cubes the epoch metrics fall back to the training cubes.
  const std::vector<std::size_t>& eval_idx = r.val_indices.empty() ? r.train_indices : r.val_indices;
  const std::vector<data::CubeRecord>& eval_data = r.val_indices.empty() ? data : val_data;

  const std::size_t n_train = r.train_indices.size();
  const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t max_iter = per_epoch * cfg.epochs;

  std::ofstream log;
  if (!opt.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw Error(Errc::io, "cannot create " + opt.out_dir.string() + ": " + ec.message());
    const auto path = opt.out_dir / "metrics.tsv";
    log.open(path, std::ios::trunc);
    if (!log) throw Error(Errc::io, "cannot write " + path.string());
    log << "# wavecube training log\n";
    for (const std::string& block : {spec.serialize(), cfg.serialize()}) {
      std::istringstream in(block);
      for (std::string line; std::getline(in, line);) log << "# " << line << '\n';
    }
    log << "# loss=class-weighted cross-entropy divided by the sum of applied weights\n"
        << "# lr_schedule=poly\n"
        << "# iou=pooled over validation cubes, a class absent from prediction and truth scores 1\n"
        << "# train_cubes=" << n_train << " val_cubes=" << eval_idx.size()
        << (r.val_indices.empty() ? " (training cubes reused)" : "") << '\n'
        << "epoch\titeration\tlr\tloss\tbg_iou\tfg_iou\tmean_iou\n";
  }

  nn::Tensor<T> x;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> epoch_order = r.train_indices;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(epoch_order.begin(), epoch_order.end(), r.state.rng);
    double loss_sum = 0.0, lr = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n_train - start);
      detail::load_batch(data, epoch_order.data() + start, count, x, labels);
      lr = poly_lr(r.state.iteration, max_iter, cfg);
      r.net.zero_grad();
      nn::Tape<T> tape;
      const nn::Var in = tape.input(x);
      const nn::Var logits = r.net.forward(tape, in, nn::Mode::train);
      const nn::Var loss = nn::weighted_cross_entropy(tape, logits, labels, cfg.class_weights);
      const double value = tape.value(loss)[0];
      tape.backward(loss);
      sgd_step(r.net.parameters(), r.state, lr, cfg);
      r.losses.push_back(value);
      loss_sum += value;
      ++r.state.iteration;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.iteration = r.state.iteration;
    m.lr = lr;
    m.loss = loss_sum / static_cast<double>(per_epoch);
    m.val = evaluate(r.net, eval_data, eval_idx);
    r.epochs.push_back(m);
    if (opt.progress)
      *opt.progress << "epoch " << epoch << "/" << cfg.epochs << " loss " << m.loss << " fg_iou "
                    << m.val.foreground << " mean_iou " << m.val.mean << '\n';
    if (!opt.out_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".wckpt";
      save_checkpoint(opt.out_dir / name.str(), r.net, "epoch " + std::to_string(epoch));
      if (m.val.mean > r.state.best_val_miou)
        save_checkpoint(opt.out_dir / "best.wckpt", r.net, "epoch " + std::to_string(epoch));
      log << std::setprecision(9) << m.epoch << '\t' << m.iteration << '\t' << m.lr << '\t' << m.loss << '\t'
          << m.val.background << '\t' << m.val.foreground << '\t' << m.val.mean << '\n';
      log.flush();
      if (!log) throw Error(Errc::io, "write failed for " + (opt.out_dir / "metrics.tsv").string());
    }
    r.state.best_val_miou = std::max(r.state.best_val_miou, m.val.mean);
  }
  return r;
}

}  // namespace wavecube
