#pragma once

#include <Eigen/Core>
#include <vector>

namespace difftad {

// Precomputed cumulative noise schedule. alpha_bar has T+1 entries,
// alpha_bar[0] == 1 exactly and the sequence is strictly decreasing in (0, 1].
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(int total_steps, double offset, std::vector<double> alpha_bar)
      : total_steps_(total_steps), offset_(offset), alpha_bar_(std::move(alpha_bar)) {}

  int total_steps() const { return total_steps_; }
  double offset() const { return offset_; }

  // t = -1 is the terminal boundary of a DDIM trajectory and maps to 1.
  double alpha_bar(int t) const;
  double sqrt_alpha_bar(int t) const;
  double sqrt_one_minus_alpha_bar(int t) const;

  const std::vector<double>& alpha_bar_all() const { return alpha_bar_; }

 private:
  int total_steps_ = 0;
  double offset_ = 0.0;
  std::vector<double> alpha_bar_;
};

// Cosine schedule: f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2),
// beta_t = 1 - f(t)/f(t-1) clipped at 0.999, alpha_bar recumulated from the
// clipped betas so that alpha_bar[0] is exactly 1.
NoiseSchedule build_cosine_schedule(int total_steps, double offset);

// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps, elementwise
// over arbitrary shapes.
Eigen::MatrixXd corrupt(const Eigen::MatrixXd& z0, int t, const Eigen::MatrixXd& eps,
                        const NoiseSchedule& sched);

// Algebraic inverse of corrupt for a known eps.
Eigen::MatrixXd invert_corrupt(const Eigen::MatrixXd& zt, int t, const Eigen::MatrixXd& eps,
                               const NoiseSchedule& sched);

}  // namespace difftad
