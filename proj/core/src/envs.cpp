#include "span_rl/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

constexpr double kPi = std::numbers::pi;

// Each reset owns a disjoint block range of the reset stream.
constexpr std::uint64_t kBlocksPerReset = std::uint64_t{1} << 20;

double wrap(double x, double lo, double hi) {
  const double diff = hi - lo;
  while (x > hi) x -= diff;
  while (x < lo) x += diff;
  return x;
}

}  // namespace

std::vector<double> Env::reset(std::uint64_t seed) {
  seed_ = seed;
  reset_index_ = 0;
  started_ = true;
  return reset();
}

std::vector<double> Env::reset() {
  if (!started_) {
    started_ = true;
    reset_index_ = 0;
  }
  Philox rng(seed_, Stream::kEnvReset, reset_index_ * kBlocksPerReset);
  ++reset_index_;
  sample_initial_state(rng);
  done_ = false;
  episode_steps_ = 0;
  return observe();
}

void Env::check_action(std::span<const double> action) const {
  const auto& space = spec().action;
  if (action.size() != space.dim()) {
    throw ActionError(spec().name + ": action has length " + std::to_string(action.size()) + ", expected " +
                      std::to_string(space.dim()));
  }
  if (space.discrete) {
    const double a = action[0];
    if (!(a >= 0.0 && a < space.n) || a != std::floor(a)) {
      throw ActionError(spec().name + ": invalid discrete action " + std::to_string(a));
    }
  } else {
    for (double a : action) {
      if (!std::isfinite(a)) throw ActionError(spec().name + ": non-finite continuous action");
    }
  }
}

Transition Env::step(std::span<const double> action) {
  if (done_) throw ProtocolError(spec().name + ": step() called on a finished episode; call reset() first");
  check_action(action);
  Transition t;
  t.state = observe();
  t.action.assign(action.begin(), action.end());
  const Outcome out = advance(action);
  ++episode_steps_;
  ++interactions_;
  t.reward = out.reward;
  t.terminated = out.terminated;
  t.truncated = !out.terminated && episode_steps_ >= spec().horizon;
  t.next_state = observe();
  done_ = t.done();
  return t;
}

Transition Env::step(int discrete_action) {
  const double a = discrete_action;
  return step(std::span<const double>(&a, 1));
}

// CartPole-v1 -----------------------------------------------------------

CartPole::CartPole() {
  spec_.name = "CartPole";
  spec_.state_dim = 4;
  spec_.action.discrete = true;
  spec_.action.n = 2;
  spec_.horizon = 500;
  spec_.target_return = 500.0;
}

void CartPole::set_state(std::span<const double> s) {
  if (s.size() != 4) throw DimensionError("CartPole state has 4 coordinates");
  x_ = s[0];
  x_dot_ = s[1];
  theta_ = s[2];
  theta_dot_ = s[3];
}

void CartPole::sample_initial_state(Philox& rng) {
  x_ = rng.uniform(-0.05, 0.05);
  x_dot_ = rng.uniform(-0.05, 0.05);
  theta_ = rng.uniform(-0.05, 0.05);
  theta_dot_ = rng.uniform(-0.05, 0.05);
}

std::vector<double> CartPole::observe() const { return {x_, x_dot_, theta_, theta_dot_}; }

Env::Outcome CartPole::advance(std::span<const double> action) {
  const double force = action[0] == 1.0 ? kForceMag : -kForceMag;
  const double costheta = std::cos(theta_);
  const double sintheta = std::sin(theta_);
  const double temp = (force + kPoleMassLength * theta_dot_ * theta_dot_ * sintheta) / kTotalMass;
  const double thetaacc =
      (kGravity * sintheta - costheta * temp) / (kLength * (4.0 / 3.0 - kMassPole * costheta * costheta / kTotalMass));
  const double xacc = temp - kPoleMassLength * thetaacc * costheta / kTotalMass;
  // Explicit Euler.
  x_ = x_ + kTau * x_dot_;
  x_dot_ = x_dot_ + kTau * xacc;
  theta_ = theta_ + kTau * theta_dot_;
  theta_dot_ = theta_dot_ + kTau * thetaacc;

  const bool terminated = x_ < -kXThreshold || x_ > kXThreshold || theta_ < -kThetaThreshold || theta_ > kThetaThreshold;
  return {1.0, terminated};
}

// Acrobot-v1 ("book" dynamics, single RK4 step of length dt) ----------------

Acrobot::Acrobot() {
  spec_.name = "Acrobot";
  spec_.state_dim = 6;
  spec_.action.discrete = true;
  spec_.action.n = 3;
  spec_.horizon = 500;
  spec_.target_return = -100.0;
}

void Acrobot::set_state(std::span<const double> s) {
  if (s.size() != 4) throw DimensionError("Acrobot state has 4 coordinates");
  std::copy(s.begin(), s.end(), s_);
}

void Acrobot::sample_initial_state(Philox& rng) {
  for (double& v : s_) v = rng.uniform(-0.1, 0.1);
}

std::vector<double> Acrobot::observe() const {
  return {std::cos(s_[0]), std::sin(s_[0]), std::cos(s_[1]), std::sin(s_[1]), s_[2], s_[3]};
}

namespace {

std::array<double, 4> acrobot_dsdt(const std::array<double, 4>& s, double torque) {
  constexpr double m1 = Acrobot::kLinkMass1, m2 = Acrobot::kLinkMass2;
  constexpr double l1 = Acrobot::kLinkLength1;
  constexpr double lc1 = Acrobot::kLinkCom1, lc2 = Acrobot::kLinkCom2;
  constexpr double I1 = Acrobot::kLinkMoi, I2 = Acrobot::kLinkMoi;
  constexpr double g = 9.8;
  const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * std::cos(theta2)) + I1 + I2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + I2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - kPi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - kPi / 2.0) + phi2;
  const double ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
                          (m2 * lc2 * lc2 + I2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

}  // namespace

Env::Outcome Acrobot::advance(std::span<const double> action) {
  static constexpr double kTorques[3] = {-1.0, 0.0, 1.0};
  const double torque = kTorques[static_cast<int>(action[0])];
  const std::array<double, 4> y0 = {s_[0], s_[1], s_[2], s_[3]};
  auto axpy = [](const std::array<double, 4>& y, const std::array<double, 4>& k, double h) {
    return std::array<double, 4>{y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]};
  };
  const double dt = kDt;
  const auto k1 = acrobot_dsdt(y0, torque);
  const auto k2 = acrobot_dsdt(axpy(y0, k1, dt / 2.0), torque);
  const auto k3 = acrobot_dsdt(axpy(y0, k2, dt / 2.0), torque);
  const auto k4 = acrobot_dsdt(axpy(y0, k3, dt), torque);
  for (int i = 0; i < 4; ++i) s_[i] = y0[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);

  s_[0] = wrap(s_[0], -kPi, kPi);
  s_[1] = wrap(s_[1], -kPi, kPi);
  s_[2] = std::clamp(s_[2], -kMaxVel1, kMaxVel1);
  s_[3] = std::clamp(s_[3], -kMaxVel2, kMaxVel2);

  const bool terminated = -std::cos(s_[0]) - std::cos(s_[1] + s_[0]) > 1.0;
  return {terminated ? 0.0 : -1.0, terminated};
}

// Pendulum-v1 -------------------------------------------------------------

Pendulum::Pendulum() {
  spec_.name = "Pendulum";
  spec_.state_dim = 3;
  spec_.action.discrete = false;
  spec_.action.low = {-kMaxTorque};
  spec_.action.high = {kMaxTorque};
  spec_.horizon = 200;
  spec_.target_return = -200.0;
}

void Pendulum::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

double Pendulum::energy() const { return 0.5 * theta_dot_ * theta_dot_ + 1.5 * kG / kL * std::cos(theta_); }

void Pendulum::sample_initial_state(Philox& rng) {
  theta_ = rng.uniform(-kPi, kPi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
}

std::vector<double> Pendulum::observe() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

Env::Outcome Pendulum::advance(std::span<const double> action) {
  const double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  const double th_norm = std::fmod(theta_ + kPi, 2.0 * kPi);
  const double angle = (th_norm < 0 ? th_norm + 2.0 * kPi : th_norm) - kPi;
  const double cost = angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  double new_theta_dot = theta_dot_ + (3.0 * kG / (2.0 * kL) * std::sin(theta_) + 3.0 / (kM * kL * kL) * u) * kDt;
  new_theta_dot = std::clamp(new_theta_dot, -kMaxSpeed, kMaxSpeed);
  theta_ = theta_ + new_theta_dot * kDt;
  theta_dot_ = new_theta_dot;
  return {-cost, false};
}

// -------------------------------------------------------------------------

std::string canonical_env_name(const std::string& name) {
  if (name == "CartPole" || name == "CartPole-v1") return "CartPole";
  if (name == "Acrobot" || name == "Acrobot-v1") return "Acrobot";
  if (name == "Pendulum" || name == "Pendulum-v1") return "Pendulum";
  throw UsageError("unknown environment '" + name + "'");
}

std::unique_ptr<Env> make_env(const std::string& name) {
  const std::string canon = canonical_env_name(name);
  if (canon == "CartPole") return std::make_unique<CartPole>();
  if (canon == "Acrobot") return std::make_unique<Acrobot>();
  return std::make_unique<Pendulum>();
}

Episode rollout_episode(Env& env, const Policy& policy, std::uint64_t seed, int max_steps) {
  Episode ep;
  std::vector<double> state = env.reset(seed);
  for (int t = 0; t < max_steps; ++t) {
    const std::vector<double> action = policy(state);
    Transition tr = env.step(action);
    ep.total_return += tr.reward;
    state = tr.next_state;
    const bool done = tr.done();
    ep.transitions.push_back(std::move(tr));
    if (done) break;
  }
  return ep;
}

}  // namespace span_rl
