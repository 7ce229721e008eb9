#pragma once

#include "tail/matrix.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace tail {

struct ProfileError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bounds for a fourth-order point-to-point move.
struct MotionProfileParams {
  double displacement = 0.0;  // m
  double v_max = 0.0;         // m/s
  double a_max = 0.0;         // m/s^2
  double j_max = 0.0;         // m/s^3
  double s_max = 0.0;         // m/s^4

  void validate() const;
};

// Sampled motion profile with derivatives, all arrays of length n_d + 1.
struct Trajectory {
  double Ts = 0.0;
  Vec r;     // position
  Vec vel;
  Vec acc;
  Vec jerk;
  Vec snap;
  MotionProfileParams params;

  std::size_t n_samples() const { return r.size(); }
  std::size_t horizon() const { return r.size() - 1; }  // n_d
};

struct TrajectoryClass {
  std::vector<Trajectory> members;
  // shared descriptor: profile order is fixed (4), grid recorded per axis
  std::array<std::vector<double>, 5> grid;  // displacement, v_max, a_max, j_max, s_max
  double Ts = 0.0;

  std::size_t size() const { return members.size(); }
};

// Symmetric snap-switching planner: analytic phase durations, rounded up to
// whole samples, snap rescaled so the discrete integral lands exactly on the
// displacement. Derivative arrays are exact forward-Euler cumulative sums of
// the snap sequence.
Trajectory generate_fourth_order(const MotionProfileParams& params, double Ts);

// One member per grid tuple, lexicographic over (d, v, a, j, s) indices,
// padded with terminal dwell to a common length.
TrajectoryClass build_class(const std::array<std::vector<double>, 5>& grid, double Ts);

// Partition by member index. test_idx must be a nonempty strict subset.
std::pair<TrajectoryClass, TrajectoryClass> split_class(
    const TrajectoryClass& cls, const std::vector<std::size_t>& test_idx);

// CSV with columns t, r, v, a, j, s.
void save_trajectory_csv(const Trajectory& t, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

} // namespace tail
