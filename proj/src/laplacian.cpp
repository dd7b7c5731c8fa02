#include "hack/laplacian.hpp"

#include <set>
#include <utility>
#include <vector>

namespace hack {

LaplacianOperator::LaplacianOperator(const Mesh& mesh) : LaplacianOperator(mesh.faces(), mesh.num_vertices()) {}

LaplacianOperator::LaplacianOperator(const Faces& faces, int n) {
  std::vector<std::set<int>> nbr(static_cast<std::size_t>(n));
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    for (int a = 0; a < 3; ++a) {
      const int i = faces(a, f), j = faces((a + 1) % 3, f);
      nbr[i].insert(j);
      nbr[j].insert(i);
    }
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, nbr[i].empty() ? 0.0 : 1.0);
    const double w = nbr[i].empty() ? 0.0 : 1.0 / static_cast<double>(nbr[i].size());
    for (int j : nbr[i]) trip.emplace_back(i, j, -w);
  }
  L_.resize(n, n);
  L_.setFromTriplets(trip.begin(), trip.end());
  LtL_ = Eigen::SparseMatrix<double>(L_.transpose()) * L_;
}

double laplacian_energy(const LaplacianOperator& op, const Vertices& field) {
  require_dims(field.cols() == op.size(), "laplacian_energy: field length != operator size");
  const MatrixXd lf = op.matrix() * field.transpose();
  return lf.squaredNorm();
}

Vertices laplacian_energy_gradient(const LaplacianOperator& op, const Vertices& field) {
  require_dims(field.cols() == op.size(), "laplacian_energy_gradient: field length != operator size");
  return 2.0 * (op.LtL_ * field.transpose()).transpose();
}

}  // namespace hack

namespace hack {

double laplacian_energy_columns(const LaplacianOperator& op, const MatrixXd& deltas) {
  require_dims(deltas.rows() == 3 * op.size(), "laplacian_energy_columns: rows != 3N");
  double e = 0.0;
  for (Eigen::Index b = 0; b < deltas.cols(); ++b)
    e += laplacian_energy(op, Eigen::Map<const Vertices>(deltas.col(b).data(), 3, op.size()));
  return e;
}

MatrixXd laplacian_energy_columns_gradient(const LaplacianOperator& op, const MatrixXd& deltas) {
  require_dims(deltas.rows() == 3 * op.size(), "laplacian_energy_columns_gradient: rows != 3N");
  MatrixXd g(deltas.rows(), deltas.cols());
  for (Eigen::Index b = 0; b < deltas.cols(); ++b) {
    const Vertices gb = laplacian_energy_gradient(op, Eigen::Map<const Vertices>(deltas.col(b).data(), 3, op.size()));
    g.col(b) = flat(gb);
  }
  return g;
}

}  // namespace hack
