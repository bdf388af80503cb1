#include "dynbp/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dynbp/rng.hpp"

namespace dynbp {

FrameSequence synth_random_patch_video(int rows, int cols, int frames, int patch,
                                       std::uint64_t seed) {
  if (patch < 1 || patch + 2 > std::min(rows, cols))
    throw std::invalid_argument("patch must fit strictly inside the border");
  if (frames < 1) throw std::invalid_argument("at least one frame required");

  FrameSequence fs;
  fs.rows = rows;
  fs.cols = cols;

  Rng rng(seed);
  std::vector<double> background(static_cast<size_t>(rows * cols));
  for (auto& x : background) x = rng.uniform();

  // admissible patch origins keep a one-pixel margin on every side
  const int r_span = rows - patch - 1;
  const int c_span = cols - patch - 1;
  int orig_r = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(r_span)));
  int orig_c = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(c_span)));

  for (int t = 0; t < frames; ++t) {
    if (t > 0) {
      static constexpr int kStep[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      const auto dir = rng.uniform_below(4);
      int nr = orig_r + kStep[dir][0];
      int nc = orig_c + kStep[dir][1];
      if (nr < 1 || nr > r_span) nr = orig_r - kStep[dir][0];
      if (nc < 1 || nc > c_span) nc = orig_c - kStep[dir][1];
      orig_r = nr;
      orig_c = nc;
    }
    std::vector<double> frame = background;
    std::vector<std::uint8_t> mask(static_cast<size_t>(rows * cols), 0);
    for (int r = orig_r; r < orig_r + patch; ++r)
      for (int c = orig_c; c < orig_c + patch; ++c) {
        frame[static_cast<size_t>(r * cols + c)] = rng.uniform();
        mask[static_cast<size_t>(r * cols + c)] = 1;
      }
    fs.frames.push_back(std::move(frame));
    fs.truth.push_back(std::move(mask));
  }
  return fs;
}

ValidationReport validate_motion_params(const MotionModelParams& p) {
  ValidationReport rep;
  if (p.state_count < 2) rep.add("params", "at least two states required");
  if (p.sweeps_per_frame < 1) rep.add("params", "at least one sweep per frame required");
  if (!(p.theta_s > 0.0 && p.theta_s < 1.0))
    rep.add("params", "spatial weight must lie strictly between 0 and 1");
  if (!(p.theta_t > 0.0 && p.theta_t < 1.0))
    rep.add("params", "temporal weight must lie strictly between 0 and 1");
  if (!(p.diff_threshold > 0.0 && p.diff_threshold < 1.0))
    rep.add("params", "difference threshold must lie strictly between 0 and 1");
  if (p.state_count >= 2) {
    const double eps_s = (1.0 - p.theta_s) / (p.state_count - 1);
    const double eps_t = (1.0 - p.theta_t) / (p.state_count - 1);
    if (!(p.theta_s > eps_s))
      rep.add("params", "spatial weight must dominate its spread-out remainder");
    if (!(p.theta_t > eps_t))
      rep.add("params", "temporal weight must dominate its spread-out remainder");
  }
  return rep;
}

std::vector<std::uint8_t> frame_difference(const FrameSequence& fs, int frame,
                                           double diff_threshold) {
  if (frame < 1 || frame >= fs.frame_count())
    throw std::out_of_range("frame index needs a predecessor");
  auto quantize = [](double x) {
    return std::min(7, std::max(0, static_cast<int>(x * 8.0)));
  };
  const auto& prev = fs.frames[static_cast<size_t>(frame - 1)];
  const auto& cur = fs.frames[static_cast<size_t>(frame)];
  std::vector<std::uint8_t> d(cur.size(), 0);
  for (size_t i = 0; i < cur.size(); ++i) {
    const int db = std::abs(quantize(cur[i]) - quantize(prev[i]));
    d[i] = (db / 8.0) > diff_threshold ? 1 : 0;
  }
  return d;
}

namespace {

void fill_site_table(std::vector<double>& values, const MotionModelParams& p,
                     bool observed_change) {
  const int c = p.state_count;
  const double eps_t = (1.0 - p.theta_t) / (c - 1);
  values.assign(static_cast<size_t>(c * c), 0.0);
  for (int past = 0; past < c; ++past)
    for (int future = 0; future < c; ++future) {
      double v;
      if (observed_change) {
        v = future == c - 1 ? 1.0 : 0.0;
      } else {
        const int decayed = std::max(0, past - 1);
        v = future == decayed ? p.theta_t : eps_t;
      }
      values[static_cast<size_t>(past * c + future)] = v;
    }
}

int pair_factor_count(int rows, int cols) {
  return rows * (cols - 1) + (rows - 1) * cols;
}

}  // namespace

TemporalModel make_motion_model(int rows, int cols, const MotionModelParams& p) {
  auto rep = validate_motion_params(p);
  if (!rep.ok()) throw std::invalid_argument(rep.to_string());
  if (rows < 1 || cols < 1 || rows * cols < 2)
    throw std::invalid_argument("grid needs at least two pixels");

  const int c = p.state_count;
  std::vector<Variable> vars(static_cast<size_t>(rows * cols));
  for (int i = 0; i < rows * cols; ++i) vars[static_cast<size_t>(i)] = {i, c};

  const double eps_s = (1.0 - p.theta_s) / (c - 1);
  std::vector<double> pair_table(static_cast<size_t>(c * c));
  for (int a = 0; a < c; ++a)
    for (int b = 0; b < c; ++b)
      pair_table[static_cast<size_t>(a * c + b)] = a == b ? p.theta_s : eps_s;

  std::vector<TemporalFactor> factors;
  int id = 0;
  for (int r = 0; r < rows; ++r)
    for (int cc = 0; cc < cols; ++cc) {
      const int s = r * cols + cc;
      if (cc + 1 < cols) {
        TemporalFactor f;
        f.id = id++;
        f.future_scope = {s, s + 1};
        f.values = pair_table;
        factors.push_back(std::move(f));
      }
      if (r + 1 < rows) {
        TemporalFactor f;
        f.id = id++;
        f.future_scope = {s, s + cols};
        f.values = pair_table;
        factors.push_back(std::move(f));
      }
    }
  for (int i = 0; i < rows * cols; ++i) {
    TemporalFactor f;
    f.id = id++;
    f.past_scope = {i};
    f.future_scope = {i};
    fill_site_table(f.values, p, false);
    factors.push_back(std::move(f));
  }
  return make_temporal_model(std::move(vars), std::move(factors));
}

void set_motion_observation(TemporalModel& tm, int rows, int cols,
                            const MotionModelParams& p,
                            const std::vector<std::uint8_t>& diff) {
  if (diff.size() != static_cast<size_t>(rows * cols))
    throw std::invalid_argument("one observation per pixel required");
  const int base = pair_factor_count(rows, cols);
  if (tm.factors.size() != static_cast<size_t>(base + rows * cols))
    throw std::invalid_argument("model does not match the grid");
  for (int i = 0; i < rows * cols; ++i)
    fill_site_table(tm.factors[static_cast<size_t>(base + i)].values, p, diff[static_cast<size_t>(i)] != 0);
}

std::vector<std::uint8_t> dilate3x3(const std::vector<std::uint8_t>& mask, int rows,
                                    int cols) {
  if (mask.size() != static_cast<size_t>(rows * cols))
    throw std::invalid_argument("mask does not match the grid");
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      std::uint8_t v = 0;
      for (int dr = -1; dr <= 1 && !v; ++dr)
        for (int dc = -1; dc <= 1 && !v; ++dc) {
          const int nr = r + dr, nc = c + dc;
          if (nr >= 0 && nr < rows && nc >= 0 && nc < cols)
            v = mask[static_cast<size_t>(nr * cols + nc)];
        }
      out[static_cast<size_t>(r * cols + c)] = v;
    }
  return out;
}

double intersection_over_union(const std::vector<std::uint8_t>& a,
                               const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask sizes differ");
  std::int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// per-pixel belief averaged over the advanced priors of the pair regions
// covering the pixel; the pairs hold the factor tables, so their beliefs stay
// informative in the short-sweep regime the detector runs in
std::vector<std::vector<double>> pixel_beliefs(const TemporalModel& tm,
                                               const PathBeliefStore& st, int pixels,
                                               int states) {
  std::vector<std::vector<double>> out(static_cast<size_t>(pixels),
                                       std::vector<double>(static_cast<size_t>(states), 0.0));
  std::vector<int> cover(static_cast<size_t>(pixels), 0);
  const auto& rg = tm.regions;
  for (size_t r = 0; r < rg.regions.size(); ++r) {
    const auto& vars = rg.regions[r].variables;
    if (vars.size() != 2) continue;
    const auto& prior = st.prior[r];
    auto& pa = out[static_cast<size_t>(vars[0])];
    auto& pb = out[static_cast<size_t>(vars[1])];
    for (int sa = 0; sa < states; ++sa)
      for (int sb = 0; sb < states; ++sb) {
        const double v = prior[static_cast<size_t>(sa * states + sb)];
        pa[static_cast<size_t>(sa)] += v;
        pb[static_cast<size_t>(sb)] += v;
      }
    ++cover[static_cast<size_t>(vars[0])];
    ++cover[static_cast<size_t>(vars[1])];
  }
  for (int i = 0; i < pixels; ++i)
    if (cover[static_cast<size_t>(i)] > 0)
      for (auto& x : out[static_cast<size_t>(i)]) x /= cover[static_cast<size_t>(i)];
  return out;
}

}  // namespace

DetectionResult detect_motion(const FrameSequence& fs, const MotionModelParams& p,
                              const SolverOptions& opts) {
  if (fs.frame_count() < 2) throw std::invalid_argument("at least two frames required");
  auto rep = validate_motion_params(p);
  if (!rep.ok()) throw std::invalid_argument(rep.to_string());

  // open grid corners always pair a counting number of 1 against -1
  SolverOptions local = opts;
  local.degenerate_policy = DegeneratePolicy::fixed_exponent;
  local.max_iterations = p.sweeps_per_frame;

  TemporalModel tm = make_motion_model(fs.rows, fs.cols, p);
  PathSolver solver(tm, local, PriorCoupling::per_state);

  DetectionResult out;
  const bool has_truth = fs.truth.size() == fs.frames.size();
  for (int t = 1; t < fs.frame_count(); ++t) {
    const auto diff = frame_difference(fs, t, p.diff_threshold);
    set_motion_observation(tm, fs.rows, fs.cols, p, diff);
    solver.refresh_factor_tables();
    const StepDiagnostics diag = solver.step();
    out.step_converged.push_back(diag.converged);
    out.all_converged = out.all_converged && diag.converged;

    const auto beliefs = pixel_beliefs(tm, solver.store(), fs.pixel_count(), p.state_count);
    std::vector<int> states(static_cast<size_t>(fs.pixel_count()), 0);
    std::vector<std::uint8_t> mask(static_cast<size_t>(fs.pixel_count()), 0);
    for (int i = 0; i < fs.pixel_count(); ++i) {
      const auto& b = beliefs[static_cast<size_t>(i)];
      int best = 0;
      for (int s = 1; s < p.state_count; ++s)
        if (b[static_cast<size_t>(s)] > b[static_cast<size_t>(best)]) best = s;
      states[static_cast<size_t>(i)] = best;
      mask[static_cast<size_t>(i)] = best == p.state_count - 1 ? 1 : 0;
    }
    auto base = dilate3x3(diff, fs.rows, fs.cols);
    if (has_truth) {
      out.iou_masks.push_back(intersection_over_union(mask, fs.truth[static_cast<size_t>(t)]));
      out.iou_baseline.push_back(
          intersection_over_union(base, fs.truth[static_cast<size_t>(t)]));
    }
    out.states.push_back(std::move(states));
    out.masks.push_back(std::move(mask));
    out.baseline.push_back(std::move(base));
  }
  return out;
}

void write_pgm(const std::string& path, int rows, int cols,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<size_t>(rows * cols))
    throw std::invalid_argument("pixel buffer does not match the grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << cols << " " << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()),
            static_cast<std::streamsize>(gray.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_frames(const std::string& path, const FrameSequence& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("DBV1", 4);
  put_u32(out, static_cast<std::uint32_t>(fs.frame_count()));
  put_u32(out, static_cast<std::uint32_t>(fs.rows));
  put_u32(out, static_cast<std::uint32_t>(fs.cols));
  for (const auto& frame : fs.frames)
    for (double x : frame) {
      const float f = static_cast<float>(x);
      static_assert(sizeof(float) == 4);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  if (!out) throw std::runtime_error("write failed for " + path);
}

FrameSequence load_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DBV1", 4) != 0)
    throw std::runtime_error(path + " is not a frame container");
  FrameSequence fs;
  const auto frames = get_u32(in);
  fs.rows = static_cast<int>(get_u32(in));
  fs.cols = static_cast<int>(get_u32(in));
  if (!in || fs.rows <= 0 || fs.cols <= 0 || frames == 0)
    throw std::runtime_error(path + " has a corrupt header");
  fs.frames.resize(frames);
  for (auto& frame : fs.frames) {
    frame.resize(static_cast<size_t>(fs.rows * fs.cols));
    for (auto& x : frame) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      x = f;
    }
  }
  if (!in) throw std::runtime_error(path + " is truncated");
  return fs;
}

}  // namespace dynbp
