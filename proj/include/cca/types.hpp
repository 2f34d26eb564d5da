#pragma once

#include <Eigen/Dense>

namespace cca {

// All arithmetic runs in double precision; packs store float32.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace cca
