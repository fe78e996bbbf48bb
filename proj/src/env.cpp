#include "darqn/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace darqn {

Tensor Env::reset(uint64_t seed) {
  reseed(seed);
  return reset();
}

// ---------------------------------------------------------------------------
// Catch

CatchEnv::CatchEnv(int height, int width, uint64_t seed) : h_(height), w_(width), rng_(seed) {
  if (h_ < 3 || w_ < 3) throw std::invalid_argument("catch: board must be at least 3x3");
}

Tensor CatchEnv::render() const {
  Tensor f({h_, w_});
  f[static_cast<int64_t>(ball_r_) * w_ + ball_c_] = 1.0;
  for (int dc = -1; dc <= 1; ++dc)
    f[static_cast<int64_t>(h_ - 1) * w_ + paddle_c_ + dc] = 1.0;
  return f;
}

Tensor CatchEnv::reset() {
  ball_r_ = 0;
  ball_c_ = rng_.uniform_int(w_);
  paddle_c_ = 1 + rng_.uniform_int(w_ - 2);
  terminal_ = false;
  return render();
}

StepResult CatchEnv::step(int action) {
  if (terminal_) throw std::logic_error("catch: step on terminal episode, reset first");
  if (action < 0 || action >= action_count()) throw std::out_of_range("catch: action out of range");
  paddle_c_ = std::clamp(paddle_c_ + (action - 1), 1, w_ - 2);
  ball_r_ += 1;
  StepResult r;
  if (ball_r_ == h_ - 1) {
    terminal_ = true;
    r.reward = std::abs(ball_c_ - paddle_c_) <= 1 ? 1.0 : -1.0;
  }
  r.terminal = terminal_;
  r.frame = render();
  return r;
}

// ---------------------------------------------------------------------------
// SeekAvoid

SeekAvoidEnv::SeekAvoidEnv(int frame_size, uint64_t seed) : frame_(frame_size), rng_(seed) {
  if (frame_ % kGrid != 0)
    throw std::invalid_argument("seek_avoid: frame size must be a multiple of " + std::to_string(kGrid));
  cell_ = frame_ / kGrid;
}

Tensor SeekAvoidEnv::render() const {
  Tensor f({frame_, frame_});
  auto paint = [&](int cell, double v) {
    const int cy = cell / kGrid, cx = cell % kGrid;
    for (int y = 0; y < cell_; ++y)
      for (int x = 0; x < cell_; ++x)
        f[static_cast<int64_t>(cy * cell_ + y) * frame_ + cx * cell_ + x] = v;
  };
  paint(goal_, 0.6);
  paint(hazard_, 0.3);
  paint(agent_, 1.0);
  return f;
}

Tensor SeekAvoidEnv::reset() {
  const int cells = kGrid * kGrid;
  agent_ = rng_.uniform_int(cells);
  do goal_ = rng_.uniform_int(cells); while (goal_ == agent_);
  do hazard_ = rng_.uniform_int(cells); while (hazard_ == agent_ || hazard_ == goal_);
  steps_ = 0;
  terminal_ = false;
  return render();
}

StepResult SeekAvoidEnv::step(int action) {
  if (terminal_) throw std::logic_error("seek_avoid: step on terminal episode, reset first");
  if (action < 0 || action >= action_count()) throw std::out_of_range("seek_avoid: action out of range");
  int y = agent_ / kGrid, x = agent_ % kGrid;
  switch (action) {
    case 0: y = std::max(0, y - 1); break;
    case 1: y = std::min(kGrid - 1, y + 1); break;
    case 2: x = std::max(0, x - 1); break;
    case 3: x = std::min(kGrid - 1, x + 1); break;
  }
  agent_ = y * kGrid + x;
  steps_ += 1;
  StepResult r;
  if (agent_ == goal_) {
    r.reward = 1.0;
    terminal_ = true;
  } else if (agent_ == hazard_) {
    r.reward = -1.0;
    terminal_ = true;
  } else if (steps_ >= kStepCap) {
    terminal_ = true;
  }
  r.terminal = terminal_;
  r.frame = render();
  return r;
}

std::unique_ptr<Env> make_env(const std::string& name, int frame_size, uint64_t seed) {
  if (name == "catch") return std::make_unique<CatchEnv>(frame_size, frame_size, seed);
  if (name == "seek_avoid") return std::make_unique<SeekAvoidEnv>(frame_size, seed);
  throw std::invalid_argument("unknown environment '" + name + "' (expected catch|seek_avoid)");
}

// ---------------------------------------------------------------------------
// preprocessing and export

Tensor preprocess(const Tensor& frame, int target_h, int target_w) {
  if (frame.rank() != 2) throw std::invalid_argument("preprocess: frame must be [H,W]");
  if (target_h <= 0 || target_w <= 0) throw std::invalid_argument("preprocess: zero-size target");
  const int sh = frame.dim(0), sw = frame.dim(1);
  auto check_axis = [](int target, int source) {
    if (target > source && target % source != 0)
      throw std::invalid_argument("preprocess: upscale must be an integer multiple");
  };
  check_axis(target_h, sh);
  check_axis(target_w, sw);
  if (target_h == sh && target_w == sw) return frame;

  // Box filter with exact fractional overlap; each output pixel is the
  // average of the source region it covers, so values stay in [0,1].
  Tensor out({target_h, target_w});
  const double ry = static_cast<double>(sh) / target_h;
  const double rx = static_cast<double>(sw) / target_w;
  for (int ty = 0; ty < target_h; ++ty) {
    const double y0 = ty * ry, y1 = (ty + 1) * ry;
    const int iy0 = static_cast<int>(std::floor(y0));
    const int iy1 = std::min(sh - 1, static_cast<int>(std::ceil(y1)) - 1);
    for (int tx = 0; tx < target_w; ++tx) {
      const double x0 = tx * rx, x1 = (tx + 1) * rx;
      const int ix0 = static_cast<int>(std::floor(x0));
      const int ix1 = std::min(sw - 1, static_cast<int>(std::ceil(x1)) - 1);
      double acc = 0.0, area = 0.0;
      for (int sy = iy0; sy <= iy1; ++sy) {
        const double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
        for (int sx = ix0; sx <= ix1; ++sx) {
          const double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
          acc += wy * wx * frame[static_cast<int64_t>(sy) * sw + sx];
          area += wy * wx;
        }
      }
      out[static_cast<int64_t>(ty) * target_w + tx] = acc / area;
    }
  }
  return out;
}

void write_pgm(const Tensor& frame, const std::string& path) {
  if (frame.rank() != 2) throw std::invalid_argument("write_pgm: frame must be [H,W]");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open '" + path + "'");
  const int h = frame.dim(0), w = frame.dim(1);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::string bytes(static_cast<size_t>(h) * static_cast<size_t>(w), '\0');
  for (int64_t i = 0; i < frame.size(); ++i) {
    const double v = std::clamp(frame[i], 0.0, 1.0);
    bytes[static_cast<size_t>(i)] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_pgm: write failed for '" + path + "'");
}

}  // namespace darqn
