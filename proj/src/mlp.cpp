#include "hack/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace hack {

Mlp Mlp::create(const std::vector<int>& widths, std::mt19937_64& rng) {
  require_dims(widths.size() >= 2, "mlp: need at least input and output widths");
  Mlp net = zeros(widths);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = std::sqrt(6.0 / widths[l]);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) net.weights[l](i, j) = u(rng);
  }
  net.in_scale.setOnes();
  net.out_scale.setOnes();
  return net;
}

Mlp Mlp::zeros(const std::vector<int>& widths) {
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    net.weights.push_back(MatrixXd::Zero(widths[l + 1], widths[l]));
    net.biases.push_back(VectorXd::Zero(widths[l + 1]));
  }
  net.in_shift = VectorXd::Zero(widths.front());
  net.in_scale = VectorXd::Ones(widths.front());
  net.out_shift = VectorXd::Zero(widths.back());
  net.out_scale = VectorXd::Ones(widths.back());
  return net;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w{input_size()};
  for (const auto& W : weights) w.push_back(static_cast<int>(W.rows()));
  return w;
}

VectorXd Mlp::operator()(const VectorXd& x) const { return forward_batch(x); }

MatrixXd Mlp::forward_batch(const MatrixXd& X) const {
  require_dims(X.rows() == input_size(), "mlp: input width " + std::to_string(X.rows()) + " != " +
                                             std::to_string(input_size()));
  MatrixXd h = (X.colwise() - in_shift).array().colwise() / in_scale.array();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    MatrixXd z = (weights[l] * h).colwise() + biases[l];
    if (l + 1 < weights.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return (h.array().colwise() * out_scale.array()).colwise() + out_shift.array();
}

MatrixXd Mlp::input_jacobian(const VectorXd& x) const {
  VectorXd h = (x - in_shift).cwiseQuotient(in_scale);
  MatrixXd J = in_scale.cwiseInverse().asDiagonal();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    VectorXd z = weights[l] * h + biases[l];
    J = weights[l] * J;
    if (l + 1 < weights.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (!(z[i] > 0.0)) {
          z[i] = 0.0;
          J.row(i).setZero();
        }
    }
    h = std::move(z);
  }
  return out_scale.asDiagonal() * J;
}

double Mlp::lipschitz_bound() const {
  double L = out_scale.cwiseAbs().maxCoeff() / in_scale.cwiseAbs().minCoeff();
  for (const auto& W : weights) L *= Eigen::JacobiSVD<MatrixXd>(W).singularValues()(0);
  return L;
}

void Mlp::fit_normalization(const MatrixXd& X, const MatrixXd& Y) {
  auto stats = [](const MatrixXd& A, VectorXd& shift, VectorXd& scale) {
    shift = A.rowwise().mean();
    scale.resize(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double var = (A.row(i).array() - shift[i]).square().mean();
      scale[i] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  };
  stats(X, in_shift, in_scale);
  stats(Y, out_shift, out_scale);
}

double mlp_loss_gradient(const Mlp& net, const MatrixXd& X, const MatrixXd& Y, std::vector<MatrixXd>* dW,
                         std::vector<VectorXd>* db) {
  const auto L = net.weights.size();
  const double n = static_cast<double>(X.cols());
  std::vector<MatrixXd> acts;  // post-activation inputs to each layer
  acts.reserve(L + 1);
  acts.push_back((X.colwise() - net.in_shift).array().colwise() / net.in_scale.array());
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd z = (net.weights[l] * acts.back()).colwise() + net.biases[l];
    if (l + 1 < L) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const MatrixXd pred = (acts.back().array().colwise() * net.out_scale.array()).colwise() + net.out_shift.array();
  const MatrixXd r = pred - Y;
  const double loss = r.squaredNorm() / n;
  if (dW == nullptr) return loss;
  dW->resize(L);
  db->resize(L);
  MatrixXd delta = (2.0 / n) * (r.array().colwise() * net.out_scale.array()).matrix();
  for (std::size_t l = L; l-- > 0;) {
    (*dW)[l] = delta * acts[l].transpose();
    (*db)[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = net.weights[l].transpose() * delta;
      delta.array() *= (acts[l].array() > 0.0).cast<double>();
    }
  }
  return loss;
}

TrainReport train_mlp(Mlp& net, const MatrixXd& X, const MatrixXd& Y, const MlpTrainConfig& cfg,
                      const std::function<void(int, double)>& on_epoch) {
  require_dims(X.cols() == Y.cols(), "train_mlp: sample counts differ");
  require_dims(Y.rows() == net.output_size(), "train_mlp: target width != network output");
  const auto L = net.weights.size();
  std::vector<AdamBlock> mw(L), mb(L);
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
  TrainReport rep;
  Mlp best = net;
  rep.best_loss = mlp_loss_gradient(net, X, Y, nullptr, nullptr);
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double loss = mlp_loss_gradient(net, X, Y, &dW, &db);
    if (!std::isfinite(loss))
      throw Error("train_mlp: loss became non-finite at epoch " + std::to_string(epoch) + " (last finite " +
                  std::to_string(rep.losses.empty() ? rep.best_loss : rep.losses.back()) + ")");
    rep.losses.push_back(loss);
    rep.epochs = epoch;
    if (on_epoch) on_epoch(epoch, loss);
    if (loss < rep.best_loss) {
      if (loss < rep.best_loss * (1.0 - 1e-9)) since_best = 0;
      rep.best_loss = loss;
      rep.best_epoch = epoch;
      best = net;
    }
    if (++since_best > cfg.patience) {
      rep.early_stopped = true;
      break;
    }
    const double lr = cfg.lr_final > 0.0 ? decayed_rate(cfg.lr, cfg.lr_final, epoch - 1, cfg.max_epochs) : cfg.lr;
    for (std::size_t l = 0; l < L; ++l) {
      if (cfg.weight_decay > 0.0) dW[l] += cfg.weight_decay * net.weights[l];
      mw[l].step(net.weights[l], dW[l], lr, epoch, cfg.adam);
      mb[l].step(net.biases[l], db[l], lr, epoch, cfg.adam);
    }
  }
  const double final_loss = mlp_loss_gradient(net, X, Y, nullptr, nullptr);
  if (final_loss < rep.best_loss) {
    rep.best_loss = final_loss;
  } else {
    net = best;
  }
  return rep;
}

}  // namespace hack
