#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "darqn/rng.hpp"
#include "darqn/tensor.hpp"

namespace darqn {

// Grayscale frame, values clamped to [0,1], shape [H,W].
struct StepResult {
  Tensor frame;
  double reward = 0.0;
  bool terminal = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual int action_count() const = 0;
  virtual int frame_height() const = 0;
  virtual int frame_width() const = 0;
  virtual std::string name() const = 0;

  // Starts the next episode, drawing layout from the internal rng chain.
  virtual Tensor reset() = 0;
  // Reseeds the internal rng, then resets.
  Tensor reset(uint64_t seed);

  // Throws std::logic_error when stepping a terminal episode and
  // std::out_of_range for an action outside [0, action_count).
  virtual StepResult step(int action) = 0;
  virtual bool terminal() const = 0;

 protected:
  virtual void reseed(uint64_t seed) = 0;
};

// Ball falls one row per step from the top; a 3-pixel paddle on the bottom
// row moves left/stay/right. Terminal when the ball reaches the bottom row:
// +1 if caught, -1 otherwise. Episodes last exactly height-1 steps.
class CatchEnv : public Env {
 public:
  CatchEnv(int height, int width, uint64_t seed);
  int action_count() const override { return 3; }
  int frame_height() const override { return h_; }
  int frame_width() const override { return w_; }
  std::string name() const override { return "catch"; }
  using Env::reset;
  Tensor reset() override;
  StepResult step(int action) override;
  bool terminal() const override { return terminal_; }

 protected:
  void reseed(uint64_t seed) override { rng_ = Rng(seed); }

 private:
  Tensor render() const;
  int h_, w_;
  int ball_r_ = 0, ball_c_ = 0, paddle_c_ = 1;
  bool terminal_ = true;
  Rng rng_;
};

// 12x12 cell grid drawn at frame resolution. One goal (+1, terminal), one
// hazard (-1, terminal), otherwise reward 0; the episode is cut off after
// 100 steps. Four actions: up/down/left/right, clamped at the borders.
class SeekAvoidEnv : public Env {
 public:
  SeekAvoidEnv(int frame_size, uint64_t seed);
  int action_count() const override { return 4; }
  int frame_height() const override { return frame_; }
  int frame_width() const override { return frame_; }
  std::string name() const override { return "seek_avoid"; }
  using Env::reset;
  Tensor reset() override;
  StepResult step(int action) override;
  bool terminal() const override { return terminal_; }

  static constexpr int kGrid = 12;
  static constexpr int kStepCap = 100;

 protected:
  void reseed(uint64_t seed) override { rng_ = Rng(seed); }

 private:
  Tensor render() const;
  int frame_, cell_;
  int agent_ = 0, goal_ = 0, hazard_ = 0;  // cell indices, row-major
  int steps_ = 0;
  bool terminal_ = true;
  Rng rng_;
};

std::unique_ptr<Env> make_env(const std::string& name, int frame_size, uint64_t seed);

// Area-averaging resize; grayscale in, grayscale out, values stay in [0,1].
// Target dims must not exceed the source unless they are an exact integer
// multiple of it.
Tensor preprocess(const Tensor& frame, int target_h, int target_w);

// Binary PGM (P5, maxval 255).
void write_pgm(const Tensor& frame, const std::string& path);

}  // namespace darqn
