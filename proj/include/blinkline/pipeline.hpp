#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "blinkline/blink.hpp"
#include "blinkline/detector.hpp"
#include "blinkline/ert.hpp"

namespace blinkline {

enum class ExecMode { sequential, pipelined };

struct PipelineConfig {
  ExecMode mode = ExecMode::sequential;
  std::size_t batch_size = 16;  // frames per batch in pipelined mode
  int detect_workers = 1;
  int landmark_workers = 1;
  std::size_t queue_capacity = 4;  // batches per inter-stage queue
};

// Validated frame directory: frame_%06d.pgm numbered consecutively from 0,
// all with equal dimensions (checked against every file's header).
struct FrameSequence {
  std::string dir;
  std::vector<std::string> paths;  // index order
  int width = 0;
  int height = 0;
};

FrameSequence ingest(const std::string& frames_dir);

struct StageTimings {
  double decode_ms = 0.0;
  double detect_ms = 0.0;
  double landmark_ms = 0.0;
};

struct FrameResult {
  std::size_t frame_index = 0;
  std::vector<Detection> detections;       // post-NMS
  std::optional<Detection> face;           // highest-scoring detection
  std::optional<Shape> landmarks;          // image pixels, present iff face
  StageTimings timings;
};

struct RunOutput {
  std::vector<FrameResult> results;  // frame order
  BlinkTrace trace;
};

// Runs decode -> detect -> landmark over the sequence. Sequential mode
// processes frames one at a time; pipelined mode runs the stages as
// concurrent workers over bounded batch queues. Results are in frame order
// and numerically identical between modes. The BLINKLINE_THREADS environment
// variable caps the total worker count.
RunOutput run(const std::string& frames_dir, const DetectorModel& hog, const ErtModel& ert,
              double fps, const PipelineConfig& config);

struct BenchReport {
  std::size_t frames = 0;
  PipelineConfig config;
  double decode_ms = 0.0;  // per-stage mean ms/image over the measured run
  double detect_ms = 0.0;
  double landmark_ms = 0.0;
  double end_to_end_ms = 0.0;
  double fps = 0.0;           // 1000 / end_to_end_ms
  double speedup = 1.0;       // vs the sequential reference run
};

// Runs the sequential reference once as the speedup denominator, then each
// pipelined grid entry; sequential grid entries reuse the reference run.
// Every measured run is preceded by a discarded warm-up pass over one batch.
std::vector<BenchReport> bench(const std::string& frames_dir, const DetectorModel& hog,
                               const ErtModel& ert, const std::vector<PipelineConfig>& grid);

}  // namespace blinkline
