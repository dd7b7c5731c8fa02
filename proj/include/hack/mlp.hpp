#pragma once

#include "hack/common.hpp"
#include "hack/optim.hpp"

#include <functional>
#include <random>
#include <vector>

namespace hack {

/// Fully connected network with ReLU on hidden layers and a linear output.
/// Inputs are normalized as (x - in_shift) / in_scale and outputs mapped
/// back as out_shift + out_scale * y.
struct Mlp {
  std::vector<MatrixXd> weights;  // layer l: out x in
  std::vector<VectorXd> biases;
  VectorXd in_shift, in_scale, out_shift, out_scale;

  /// widths = {input, hidden..., output}; He-uniform weights, zero biases.
  static Mlp create(const std::vector<int>& widths, std::mt19937_64& rng);
  /// Same architecture with every weight, bias and shift zero.
  static Mlp zeros(const std::vector<int>& widths);

  int input_size() const { return static_cast<int>(weights.front().cols()); }
  int output_size() const { return static_cast<int>(weights.back().rows()); }
  std::vector<int> widths() const;

  VectorXd operator()(const VectorXd& x) const;
  /// Columns are samples.
  MatrixXd forward_batch(const MatrixXd& X) const;
  /// d output / d input at x.
  MatrixXd input_jacobian(const VectorXd& x) const;
  /// Product of layer spectral norms times the normalization scales.
  double lipschitz_bound() const;

  /// Sets the input/output normalization from data statistics.
  void fit_normalization(const MatrixXd& X, const MatrixXd& Y);
};

struct MlpTrainConfig {
  double lr = 1e-4;
  double lr_final = 0.0;  // <= 0: constant rate
  int max_epochs = 10000;
  int patience = 500;     // epochs without improvement before stopping
  double weight_decay = 0.0;
  AdamConfig adam;
};

struct TrainReport {
  std::vector<double> losses;  // mean squared error per epoch, output units
  int epochs = 0;
  int best_epoch = 0;
  double best_loss = 0.0;
  bool early_stopped = false;
};

/// Full-batch Adam on the mean over samples of ||net(x) - y||^2. Restores the
/// best weights seen. Throws Error when the loss becomes non-finite.
TrainReport train_mlp(Mlp& net, const MatrixXd& X, const MatrixXd& Y, const MlpTrainConfig& cfg,
                      const std::function<void(int, double)>& on_epoch = {});

/// Mean squared error and parameter gradients (same layout as the net).
double mlp_loss_gradient(const Mlp& net, const MatrixXd& X, const MatrixXd& Y, std::vector<MatrixXd>* dW,
                         std::vector<VectorXd>* db);

}  // namespace hack
