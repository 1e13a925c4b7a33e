#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "span_rl/rng.hpp"

namespace span_rl {

struct ActionSpace {
  bool discrete = true;
  int n = 0;                 // discrete: number of actions
  std::vector<double> low;   // continuous: per-coordinate bounds
  std::vector<double> high;

  // Length of an action vector (1 for discrete).
  std::size_t dim() const { return discrete ? 1 : low.size(); }
};

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  ActionSpace action;
  int horizon = 1;
  // Expert / solved return defining the 100% threshold.
  double target_return = 0.0;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminated = false;
  bool truncated = false;

  bool done() const { return terminated || truncated; }
};

// Episodic environment with counter-based seeding: the initial state of
// reset number r after reset(seed) depends only on (seed, r).
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;

  // Reseeds and starts reset index 0.
  std::vector<double> reset(std::uint64_t seed);
  // Next reset index of the current seed.
  std::vector<double> reset();

  // Discrete actions are passed as a single integral value.
  Transition step(std::span<const double> action);
  Transition step(int discrete_action);

  bool episode_done() const { return done_; }
  int episode_steps() const { return episode_steps_; }
  // Total step() calls over the lifetime of this instance.
  std::uint64_t interactions() const { return interactions_; }
  std::vector<double> observation() const { return observe(); }

 protected:
  virtual void sample_initial_state(Philox& rng) = 0;
  virtual std::vector<double> observe() const = 0;
  struct Outcome {
    double reward;
    bool terminated;
  };
  virtual Outcome advance(std::span<const double> action) = 0;

 private:
  void check_action(std::span<const double> action) const;

  std::uint64_t seed_ = 0;
  std::uint64_t reset_index_ = 0;
  bool started_ = false;
  bool done_ = true;
  int episode_steps_ = 0;
  std::uint64_t interactions_ = 0;
};

class CartPole final : public Env {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kLength = 0.5;  // half the pole length
  static constexpr double kPoleMassLength = kMassPole * kLength;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXThreshold = 2.4;

  CartPole();
  const EnvSpec& spec() const override { return spec_; }
  // Overwrites the physical state (x, x_dot, theta, theta_dot); for tests.
  void set_state(std::span<const double> s);

 protected:
  void sample_initial_state(Philox& rng) override;
  std::vector<double> observe() const override;
  Outcome advance(std::span<const double> action) override;

 private:
  EnvSpec spec_;
  double x_ = 0, x_dot_ = 0, theta_ = 0, theta_dot_ = 0;
};

class Acrobot final : public Env {
 public:
  static constexpr double kDt = 0.2;
  static constexpr double kLinkLength1 = 1.0;
  static constexpr double kLinkMass1 = 1.0;
  static constexpr double kLinkMass2 = 1.0;
  static constexpr double kLinkCom1 = 0.5;
  static constexpr double kLinkCom2 = 0.5;
  static constexpr double kLinkMoi = 1.0;
  static constexpr double kMaxVel1 = 4.0 * 3.14159265358979323846;
  static constexpr double kMaxVel2 = 9.0 * 3.14159265358979323846;

  Acrobot();
  const EnvSpec& spec() const override { return spec_; }
  // (theta1, theta2, dtheta1, dtheta2)
  void set_state(std::span<const double> s);
  std::vector<double> physical_state() const { return {s_[0], s_[1], s_[2], s_[3]}; }

 protected:
  void sample_initial_state(Philox& rng) override;
  std::vector<double> observe() const override;
  Outcome advance(std::span<const double> action) override;

 private:
  EnvSpec spec_;
  double s_[4] = {0, 0, 0, 0};
};

class Pendulum final : public Env {
 public:
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kG = 10.0;
  static constexpr double kM = 1.0;
  static constexpr double kL = 1.0;

  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  // (theta, theta_dot); theta = 0 is upright.
  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  // Conserved quantity of the torque-free dynamics: 0.5 thdot^2 + (3g/2l) cos(theta).
  double energy() const;

 protected:
  void sample_initial_state(Philox& rng) override;
  std::vector<double> observe() const override;
  Outcome advance(std::span<const double> action) override;

 private:
  EnvSpec spec_;
  double theta_ = 0, theta_dot_ = 0;
};

// Accepts "CartPole", "CartPole-v1", "Acrobot", "Acrobot-v1", "Pendulum", "Pendulum-v1".
std::unique_ptr<Env> make_env(const std::string& name);
// Canonical short name, or throws UsageError.
std::string canonical_env_name(const std::string& name);

using Policy = std::function<std::vector<double>(std::span<const double> state)>;

struct Episode {
  std::vector<Transition> transitions;
  double total_return = 0.0;
};

// Resets with `seed` and runs `policy` until termination, truncation or
// max_steps, whichever comes first.
Episode rollout_episode(Env& env, const Policy& policy, std::uint64_t seed, int max_steps);

}  // namespace span_rl
