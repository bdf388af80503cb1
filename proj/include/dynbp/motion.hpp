#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dynbp/solver_options.hpp"
#include "dynbp/temporal.hpp"
#include "dynbp/validation.hpp"

namespace dynbp {

struct FrameSequence {
  int rows = 0, cols = 0;
  std::vector<std::vector<double>> frames;        // intensity in [0,1), row-major
  std::vector<std::vector<std::uint8_t>> truth;   // per-frame patch mask (may be empty)

  int frame_count() const { return static_cast<int>(frames.size()); }
  int pixel_count() const { return rows * cols; }
};

// static uniform-noise background with a noise patch walking one pixel per
// frame (cardinal step, reflecting), always strictly inside the border; the
// patch is redrawn every frame so only its motion distinguishes it
FrameSequence synth_random_patch_video(int rows, int cols, int frames, int patch,
                                       std::uint64_t seed);

struct MotionModelParams {
  double theta_s = 0.99;         // spatial agreement weight
  double theta_t = 0.6;          // temporal agreement weight
  int state_count = 2;           // C
  double diff_threshold = 0.125; // one 8-bin quantization step
  // message sweeps per frame transition; at the strong spatial weights this
  // demo runs at, long message iteration destabilizes (neighboring pixel
  // beliefs lock into an alternating pattern), so the detector stays in the
  // short-sweep regime where beliefs remain anchored to the factor tables
  int sweeps_per_frame = 1;
};

ValidationReport validate_motion_params(const MotionModelParams& p);

// frames are quantized to 8 intensity bins first; a pixel is marked when the
// quantized change exceeds the threshold
std::vector<std::uint8_t> frame_difference(const FrameSequence& fs, int frame,
                                           double diff_threshold);

// spatial agreement factors between 4-neighbor pixels on the new frame plus a
// per-pixel temporal factor; call set_motion_observation before each frame
TemporalModel make_motion_model(int rows, int cols, const MotionModelParams& p);

// rewrites the per-pixel temporal tables: an observed change pins the top
// state, otherwise the state relaxes by one level per frame
void set_motion_observation(TemporalModel& tm, int rows, int cols,
                            const MotionModelParams& p,
                            const std::vector<std::uint8_t>& diff);

struct DetectionResult {
  std::vector<std::vector<int>> states;            // per frame >= 1, MAP state grid
  std::vector<std::vector<std::uint8_t>> masks;    // state == C-1
  std::vector<std::vector<std::uint8_t>> baseline; // dilated frame-difference mask
  std::vector<double> iou_masks;                   // vs truth, when truth present
  std::vector<double> iou_baseline;
  std::vector<bool> step_converged;
  bool all_converged = true;
};

// runs one inference step per frame transition, capped at params.sweeps_per_frame
// message sweeps; the degenerate-exponent policy is forced to a fixed exponent
// because open grid corners always trigger it. Per-pixel beliefs are read from
// the pair regions (averaged over the pairs covering the pixel) since those
// regions carry the factor tables.
DetectionResult detect_motion(const FrameSequence& fs, const MotionModelParams& p,
                              const SolverOptions& opts);

std::vector<std::uint8_t> dilate3x3(const std::vector<std::uint8_t>& mask, int rows,
                                    int cols);

// |A and B| / |A or B|; two empty masks agree perfectly
double intersection_over_union(const std::vector<std::uint8_t>& a,
                               const std::vector<std::uint8_t>& b);

// 8-bit binary PGM ("P5")
void write_pgm(const std::string& path, int rows, int cols,
               const std::vector<std::uint8_t>& gray);

// 16-byte header (magic "DBV1", frame count, rows, cols as little-endian
// u32) followed by float32 pixels, frame-major row-major
void save_frames(const std::string& path, const FrameSequence& fs);
FrameSequence load_frames(const std::string& path);

}  // namespace dynbp
