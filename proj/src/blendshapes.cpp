#include "hack/blendshapes.hpp"

namespace hack {

BlendshapeSet BlendshapeSet::unflatten(const VectorXd& v, int count, BlendshapeKind kind) {
  require_dims(count > 0 && v.size() % count == 0, "blendshape set: flat length not divisible by count");
  BlendshapeSet s;
  s.kind = kind;
  s.deltas = Eigen::Map<const MatrixXd>(v.data(), v.size() / count, count);
  return s;
}

VectorXd expression_offset(const BlendshapeSet& set, const VectorXd& psi) {
  require_dims(psi.size() == set.count(), "expression_offset: |psi| " + std::to_string(psi.size()) +
                                              " != blendshape count " + std::to_string(set.count()));
  return set.deltas * psi;
}

VectorXd pose_features(const PoseParams& pose) {
  const Eigen::Index K = pose.theta.cols();
  VectorXd f(9 * std::max<Eigen::Index>(K - 1, 0));
  for (Eigen::Index k = 1; k < K; ++k) {
    const Eigen::Matrix3d R = rodrigues<double>(pose.theta.col(k));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f[9 * (k - 1) + 3 * r + c] = R(r, c) - (r == c ? 1.0 : 0.0);
  }
  return f;
}

MatrixXd pose_features_jacobian(const PoseParams& pose) {
  const Eigen::Index K = pose.theta.cols();
  MatrixXd J = MatrixXd::Zero(9 * std::max<Eigen::Index>(K - 1, 0), 3 * K);
  for (Eigen::Index k = 1; k < K; ++k) {
    const auto dR = rodrigues_derivatives<double>(pose.theta.col(k));
    for (int a = 0; a < 3; ++a)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) J(9 * (k - 1) + 3 * r + c, 3 * k + a) = dR[a](r, c);
  }
  return J;
}

VectorXd pose_offset(const BlendshapeSet& set, const PoseParams& pose) {
  const VectorXd f = pose_features(pose);
  require_dims(f.size() == set.count(), "pose_offset: blendshape count " + std::to_string(set.count()) + " != " +
                                            std::to_string(f.size()) + " pose features");
  return set.deltas * f;
}

MappingNetwork MappingNetwork::create(int num_betas, int components, std::mt19937_64& rng, int hidden) {
  return {Mlp::create({num_betas, hidden, hidden, components}, rng), false};
}

BlendshapeSet personalize(const MappingNetwork& net, const PcaSpace& space, const VectorXd& beta, int count,
                          BlendshapeKind kind) {
  if (!net.trained) throw Error("personalize: mapping network is untrained");
  require_dims(net.net.output_size() == space.components(), "personalize: network output width " +
                                                                std::to_string(net.net.output_size()) + " != " +
                                                                std::to_string(space.components()) + " components");
  const VectorXd w = net.net(beta);
  return BlendshapeSet::unflatten(reconstruct(space, w), count, kind);
}

BlendshapeSet personalize_expressions(const MappingNetwork& net, const PcaSpace& space, const VectorXd& beta,
                                      int count) {
  return personalize(net, space, beta, count, BlendshapeKind::expression);
}

MappingTrainResult train_mapping_network(const std::vector<VectorXd>& betas, const std::vector<BlendshapeSet>& sets,
                                         const PcaSpace& space, const MlpTrainConfig& cfg, std::mt19937_64& rng,
                                         int hidden) {
  if (betas.empty()) throw Error("train_mapping_network: no training identities");
  require_dims(betas.size() == sets.size(), "train_mapping_network: betas and sets differ in count");
  const auto n = static_cast<Eigen::Index>(betas.size());
  MatrixXd X(betas.front().size(), n), Y(space.components(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.col(i) = betas[i];
    Y.col(i) = project(space, sets[i].flatten());
  }
  MappingTrainResult out;
  out.network = MappingNetwork::create(static_cast<int>(X.rows()), space.components(), rng, hidden);
  out.network.net.fit_normalization(X, Y);
  out.report = train_mlp(out.network.net, X, Y, cfg);
  out.network.trained = true;
  return out;
}

}  // namespace hack
