#pragma once

#include <cstdint>
#include <vector>

#include "refrm3d/tensor.hpp"

namespace refrm3d {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction, applied in parameter registration order so
// repeated runs update in one deterministic sequence.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});
  void zero_grad();
  void step();

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum = 0.0);
  void zero_grad();
  void step();

 private:
  std::vector<Tensor> params_;
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace refrm3d
