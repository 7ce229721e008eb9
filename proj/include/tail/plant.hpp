#pragma once

#include "tail/lti.hpp"
#include "tail/matrix.hpp"
#include "tail/setpoint.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tail {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParasiticMode {
  double freq_hz = 0.0;
  double damping = 0.0;   // in (0,1)
  double gain = 0.0;      // numerator of g/(s^2 + 2 zeta w s + w^2)
};

// Surrogate per-axis precision stage: rigid body 1/(m s^2) plus parasitic
// resonances, ZOH-discretized.
struct PlantConfig {
  double mass = 1.0;  // kg
  std::vector<ParasiticMode> modes;
  double Ts = 1e-3;
  std::optional<double> crossover_hz;  // default: first mode / 10, or 20 Hz

  void validate() const;
};

// Closed-loop bundle for one axis at a fixed horizon N.
//
// Lifted-domain conventions: the ILC recursion e = S_N r - J_N f uses error
// and reference samples 1..N and force samples 0..N-1 of the underlying
// signals. S_N is the plain N-point lift of S; J_N is the one-sample shifted
// lift of J (Markov parameters h(1)..h(N)), which is invertible for the
// strictly proper closed loop here. With r(0) = 0 the recursion is exact.
struct LoopSet {
  DiscreteStateSpace P, K, S, J;
  Mat S_N;  // N x N, standard lift of S
  Mat J_N;  // N x N, shifted lift of J (diagonal = first nonzero Markov parameter)
  std::size_t horizon = 0;
};

DiscreteStateSpace build_plant(const PlantConfig& cfg);
DiscreteStateSpace build_controller(const PlantConfig& cfg);

// Classical rigid-body feedforward f(k) = m * acc(k).
Vec mass_feedforward(const Trajectory& traj, double m);

// Lower-triangular Toeplitz of the first N Markov parameters h(shift) ...
// h(shift+N-1). shift = 0 is the plain lift.
Mat lift(const DiscreteStateSpace& sys, std::size_t N, std::size_t shift = 0);

// Builds P, K, closed loops and the ILC lifted pair for horizon N.
LoopSet build_loopset(const PlantConfig& cfg, std::size_t N);

// Windowed ILC signals for a trajectory of n_d + 1 samples (N = n_d):
// reference window r(1..N); a force vector f indexes samples 0..N-1.
Vec ilc_reference_window(const Trajectory& traj);
Vec ilc_force_window(const Vec& full_signal, std::size_t N);

std::string to_json(const PlantConfig& cfg);
PlantConfig plant_config_from_json(const std::string& text);

} // namespace tail
