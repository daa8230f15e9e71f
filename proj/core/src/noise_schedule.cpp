#include "difftad/noise_schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace difftad {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBetaClip = 0.999;

double cosine_f(int t, int total, double s) {
  double x = (static_cast<double>(t) / total + s) / (1.0 + s) * kPi / 2.0;
  double c = std::cos(x);
  return c * c;
}
}  // namespace

double NoiseSchedule::alpha_bar(int t) const {
  if (t == -1) return 1.0;
  if (t < 0 || t > total_steps_) {
    throw std::out_of_range("NoiseSchedule: t=" + std::to_string(t) + " outside [-1, " +
                            std::to_string(total_steps_) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const {
  return std::sqrt(1.0 - alpha_bar(t));
}

NoiseSchedule build_cosine_schedule(int total_steps, double offset) {
  if (total_steps < 1) throw std::invalid_argument("build_cosine_schedule: T must be >= 1");
  if (!(offset > 0.0 && offset < 1.0)) {
    throw std::invalid_argument("build_cosine_schedule: offset must be in (0, 1)");
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(total_steps) + 1);
  alpha_bar[0] = 1.0;
  double f0 = cosine_f(0, total_steps, offset);
  double prev_f = f0;
  double cum = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    double ft = cosine_f(t, total_steps, offset);
    double beta = 1.0 - ft / prev_f;
    if (beta > kBetaClip) beta = kBetaClip;
    cum *= 1.0 - beta;
    alpha_bar[static_cast<std::size_t>(t)] = cum;
    prev_f = ft;
  }
  return NoiseSchedule(total_steps, offset, std::move(alpha_bar));
}

Eigen::MatrixXd corrupt(const Eigen::MatrixXd& z0, int t, const Eigen::MatrixXd& eps,
                        const NoiseSchedule& sched) {
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) {
    throw std::invalid_argument("corrupt: z0/eps shape mismatch");
  }
  double a = sched.sqrt_alpha_bar(t);
  double b = sched.sqrt_one_minus_alpha_bar(t);
  return a * z0 + b * eps;
}

Eigen::MatrixXd invert_corrupt(const Eigen::MatrixXd& zt, int t, const Eigen::MatrixXd& eps,
                               const NoiseSchedule& sched) {
  if (zt.rows() != eps.rows() || zt.cols() != eps.cols()) {
    throw std::invalid_argument("invert_corrupt: zt/eps shape mismatch");
  }
  if (t == 0) return zt;
  double a = sched.sqrt_alpha_bar(t);
  double b = sched.sqrt_one_minus_alpha_bar(t);
  return (zt - b * eps) / a;
}

}  // namespace difftad
