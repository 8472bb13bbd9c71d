#include <cmath>
#include <random>

#include "bpnp/errors.h"
#include "bpnp/rng.h"
#include "bpnp/tasks.h"

namespace bpnp {
namespace {

double Sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

ParamProvider ParamProvider::Direct(Eigen::VectorXd theta) {
  if (theta.size() == 0) throw InvalidInput("provider output must be non-empty");
  ParamProvider p;
  p.kind_ = ProviderKind::kDirect;
  p.output_dim_ = static_cast<int>(theta.size());
  p.theta_ = std::move(theta);
  return p;
}

ParamProvider ParamProvider::ScaledSigmoid(Eigen::VectorXd theta,
                                           double scale) {
  if (theta.size() == 0) throw InvalidInput("provider output must be non-empty");
  if (!(scale > 0.0)) throw InvalidInput("sigmoid scale must be positive");
  ParamProvider p;
  p.kind_ = ProviderKind::kScaledSigmoid;
  p.output_dim_ = static_cast<int>(theta.size());
  p.theta_ = std::move(theta);
  p.scale_ = scale;
  return p;
}

ParamProvider ParamProvider::Mlp(Eigen::VectorXd offset, const MlpSpec& spec,
                                 uint64_t seed) {
  if (offset.size() == 0) throw InvalidInput("provider output must be non-empty");
  for (const int w : spec.hidden) {
    if (w < 1) throw InvalidInput("MLP hidden widths must be >= 1");
  }
  if (!(spec.output_scale > 0.0)) {
    throw InvalidInput("MLP output_scale must be positive");
  }
  ParamProvider p;
  p.kind_ = ProviderKind::kMlp;
  p.output_dim_ = static_cast<int>(offset.size());
  p.offset_ = std::move(offset);
  p.scale_ = spec.output_scale;

  std::vector<int> widths = {1};
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(p.output_dim_);
  Eigen::Index total = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    p.layers_.push_back({widths[l], widths[l + 1], total});
    total += static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
  }

  std::mt19937_64 rng = MakeRng(seed, "init");
  std::normal_distribution<double> normal(0.0, 1.0);
  p.theta_.setZero(total);
  for (size_t l = 0; l < p.layers_.size(); ++l) {
    const Layer& layer = p.layers_[l];
    const bool last = l + 1 == p.layers_.size();
    double stddev = std::sqrt(2.0 / (layer.in + layer.out));
    if (last) stddev *= spec.last_layer_gain;
    // Hidden biases are random too: with a constant input they are the only
    // thing that differentiates the first-layer units.
    const Eigen::Index count =
        static_cast<Eigen::Index>(layer.out) * (layer.in + 1);
    for (Eigen::Index k = 0; k < count; ++k) {
      const bool is_bias = k >= static_cast<Eigen::Index>(layer.out) * layer.in;
      if (last && is_bias) continue;
      p.theta_[layer.offset + k] = stddev * normal(rng);
    }
  }
  return p;
}

void ParamProvider::set_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != theta_.size()) {
    throw InvalidInput("theta has the wrong dimension");
  }
  theta_ = theta;
}

Eigen::VectorXd ParamProvider::Forward() const {
  switch (kind_) {
    case ProviderKind::kDirect:
      return theta_;
    case ProviderKind::kScaledSigmoid:
      return theta_.unaryExpr([this](double t) { return scale_ * Sigmoid(t); });
    case ProviderKind::kMlp:
      break;
  }
  Eigen::VectorXd a = Eigen::VectorXd::Ones(1);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>
        W(theta_.data() + layer.offset, layer.out, layer.in);
    const Eigen::Map<const Eigen::VectorXd> b(
        theta_.data() + layer.offset + layer.out * layer.in, layer.out);
    Eigen::VectorXd z = W * a + b;
    if (l + 1 == layers_.size()) return offset_ + scale_ * z;
    a = z.array().tanh();
  }
  return offset_;
}

Eigen::VectorXd ParamProvider::Backward(const Eigen::VectorXd& grad_out) const {
  if (grad_out.size() != output_dim_) {
    throw InvalidInput("gradient has the wrong dimension");
  }
  switch (kind_) {
    case ProviderKind::kDirect:
      return grad_out;
    case ProviderKind::kScaledSigmoid: {
      Eigen::VectorXd g(theta_.size());
      for (Eigen::Index k = 0; k < g.size(); ++k) {
        const double s = Sigmoid(theta_[k]);
        g[k] = grad_out[k] * scale_ * s * (1.0 - s);
      }
      return g;
    }
    case ProviderKind::kMlp:
      break;
  }
  using RowMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  // Forward again, keeping activations.
  std::vector<Eigen::VectorXd> acts = {Eigen::VectorXd::Ones(1)};
  for (size_t l = 0; l + 1 < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Eigen::Map<const RowMatrix> W(theta_.data() + layer.offset,
                                        layer.out, layer.in);
    const Eigen::Map<const Eigen::VectorXd> b(
        theta_.data() + layer.offset + layer.out * layer.in, layer.out);
    acts.push_back((W * acts.back() + b).array().tanh());
  }
  Eigen::VectorXd grad(theta_.size());
  Eigen::VectorXd delta = scale_ * grad_out;  // d loss / d z of this layer
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const Layer& layer = layers_[l];
    const Eigen::VectorXd& in = acts[l];
    Eigen::Map<RowMatrix> gW(grad.data() + layer.offset, layer.out, layer.in);
    Eigen::Map<Eigen::VectorXd> gb(
        grad.data() + layer.offset + layer.out * layer.in, layer.out);
    gW = delta * in.transpose();
    gb = delta;
    if (l > 0) {
      const Eigen::Map<const RowMatrix> W(theta_.data() + layer.offset,
                                          layer.out, layer.in);
      delta = (W.transpose() * delta).cwiseProduct(
          (1.0 - in.array().square()).matrix());
    }
  }
  return grad;
}

}  // namespace bpnp
