#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>

#include "exgnas/metrics.hpp"
#include "exgnas/model.hpp"
#include "exgnas/optim.hpp"

namespace exgnas {

struct TrainConfig {
  AdamConfig adam{};  // lr 0.01, weight decay 0.001
  int max_epochs = 500;
  int patience = 10;
  ModelOptions model{};
};

struct EvalResult {
  double val_auc = 0.0;
  double test_auc = 0.0;
  double train_seconds = 0.0;
  int epochs_run = 0;
  double final_epoch_loss = 0.0;
  bool diverged = false;
  std::string diagnostic;

  /// Equality of everything except the wall-clock time.
  bool same_metrics(const EvalResult& o) const {
    return val_auc == o.val_auc && test_auc == o.test_auc && epochs_run == o.epochs_run &&
           final_epoch_loss == o.final_epoch_loss && diverged == o.diverged && diagnostic == o.diagnostic;
  }
};

struct TrainedModel {
  GnnModel model;
  EvalResult result;
};

/// Full-batch training with early stopping on validation AUC.
///
/// Each epoch evaluates the current parameters (training loss on the train
/// mask, AUC on the validation mask) and then takes one Adam step. Training
/// stops after `patience` consecutive epochs without a strictly better
/// validation AUC, or at `max_epochs`. The best-epoch parameters are restored
/// before the test AUC is computed. A non-finite loss aborts the run with
/// val_auc = 0 and `diverged` set.
inline TrainedModel train_model(const ArchitectureParams& arch, const Graph& g, const Split& split,
                                std::uint64_t seed, const TrainConfig& cfg = {}) {
  const auto start = std::chrono::steady_clock::now();
  const Propagation prop = make_propagation(g, cfg.model.self_loops);
  GnnModel model(arch, g.num_features(), g.num_labels(), seed, cfg.model);
  auto params = model.parameters();
  Adam adam(cfg.adam);

  EvalResult r;
  double best_auc = -1.0;
  std::vector<Matrix> best_params = model.snapshot();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Tape tape;
    Var logits = model.forward(tape, g, prop);
    Var loss = ops::softmax_cross_entropy(logits, g.labels(), split.train);
    const double loss_value = tape.value(loss)[0];
    r.epochs_run = epoch;
    r.final_epoch_loss = loss_value;
    if (!std::isfinite(loss_value)) {
      r.diverged = true;
      r.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch);
      break;
    }
    const double val = auc_score(softmax_rows(tape.value(logits)), g.labels(), split.val);
    if (val > best_auc) {
      best_auc = val;
      best_params = model.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
    adam.step(params);
  }

  if (r.diverged) {
    r.val_auc = 0.0;
    r.test_auc = 0.0;
  } else {
    model.restore(best_params);
    Tape tape;
    Var logits = model.forward(tape, g, prop);
    r.val_auc = best_auc;
    r.test_auc = auc_score(softmax_rows(tape.value(logits)), g.labels(), split.test);
  }
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), r};
}

}  // namespace exgnas
