#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "deepopg/weaksup.hpp"

namespace deepopg {

ToyPolicy::ToyPolicy(std::size_t classes, std::size_t features) : params_(classes, features + 1) {}

ToyPolicy::ToyPolicy(Matrix params) : params_(std::move(params)) {
  if (params_.rows() == 0 || params_.cols() == 0) throw DimensionError("policy needs at least one class and a bias column");
}

ToyPolicy ToyPolicy::identity_prefix(std::size_t classes, std::size_t features) {
  ToyPolicy p(classes, features);
  for (std::size_t c = 0; c < classes && c < features; ++c) p.params_(c, c) = 1.0;
  return p;
}

Matrix ToyPolicy::probabilities(const Matrix& features) const {
  if (features.cols() != this->features()) {
    throw DimensionError("policy expects " + std::to_string(this->features()) + " features, got " +
                         std::to_string(features.cols()));
  }
  const std::size_t n_cls = classes();
  const std::size_t n_feat = this->features();
  Matrix out(features.rows(), n_cls);
  for (std::size_t n = 0; n < features.rows(); ++n) {
    const auto x = features.row(n);
    auto logits = out.row(n);
    double top = -INFINITY;
    for (std::size_t c = 0; c < n_cls; ++c) {
      double z = params_(c, n_feat);
      for (std::size_t f = 0; f < n_feat; ++f) z += params_(c, f) * x[f];
      logits[c] = z;
      top = std::max(top, z);
    }
    double sum = 0.0;
    for (auto& z : logits) {
      z = std::exp(z - top);
      sum += z;
    }
    for (auto& z : logits) z /= sum;
  }
  return out;
}

void ToyPolicy::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << params_.rows() << ' ' << params_.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < params_.rows(); ++r) {
    for (std::size_t c = 0; c < params_.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", params_(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

ToyPolicy ToyPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file " + path.string());
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows == 0 || cols == 0) {
    throw std::runtime_error(path.string() + ": bad dimension header");
  }
  Matrix params(rows, cols);
  for (auto& v : params.data()) {
    if (!(in >> v)) throw std::runtime_error(path.string() + ": fewer values than the header declares");
  }
  std::string extra;
  if (in >> extra) throw std::runtime_error(path.string() + ": trailing data after parameters");
  return ToyPolicy(std::move(params));
}

}  // namespace deepopg
