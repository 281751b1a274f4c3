#include "blinkline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "blinkline/errors.hpp"

namespace blinkline {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", index);
  return buf;
}

// Reads just the PGM header to validate dimensions without decoding pixels.
std::pair<int, int> pgm_dims(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path + ": cannot open file");
  char head[512];
  in.read(head, sizeof(head));
  const std::string data(head, std::size_t(in.gcount()));
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '2'))
    throw io_error(path + ": malformed header, expected P5 or P2 magic at byte 0");
  std::size_t pos = 2;
  auto read_uint = [&](const char* what) {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= data.size() || !std::isdigit(static_cast<unsigned char>(data[pos])))
      throw io_error(path + ": malformed header, expected " + std::string(what) + " at byte " +
                     std::to_string(pos));
    long v = 0;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos])))
      v = v * 10 + (data[pos++] - '0');
    return v;
  };
  const long w = read_uint("width");
  const long h = read_uint("height");
  return {int(w), int(h)};
}

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    cv_not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    cv_not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;  // closed and drained
    T item = std::move(items_.front());
    items_.pop_front();
    cv_not_full_.notify_one();
    return item;
  }

  // Ends the stream: pending items stay poppable, pushes start failing.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_not_empty_.notify_all();
    cv_not_full_.notify_all();
  }

  // Close and drop everything queued; used on error to unblock all sides.
  void abort() {
    std::lock_guard lock(mu_);
    closed_ = true;
    items_.clear();
    cv_not_empty_.notify_all();
    cv_not_full_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_not_full_;
  std::condition_variable cv_not_empty_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct DecodedFrame {
  std::size_t frame_index = 0;
  GrayImage image;
  double decode_ms = 0.0;
};

struct DecodedBatch {
  std::size_t batch_index = 0;
  std::vector<DecodedFrame> frames;
};

struct DetectedFrame {
  std::size_t frame_index = 0;
  GrayImage image;  // carried through for the landmark stage
  std::vector<Detection> detections;
  std::optional<Detection> face;
  double decode_ms = 0.0;
  double detect_ms = 0.0;
};

struct DetectedBatch {
  std::size_t batch_index = 0;
  std::vector<DetectedFrame> frames;
};

struct RunStats {
  std::vector<FrameResult> results;
  std::vector<FrameEar> ears;
  std::size_t frames = 0;
  double total_ms = 0.0;  // run start to last result
};

DecodedFrame decode_frame(const FrameSequence& seq, std::size_t index) {
  DecodedFrame f;
  f.frame_index = index;
  const auto t0 = Clock::now();
  f.image = load_pgm(seq.paths[index]);
  f.decode_ms = ms_between(t0, Clock::now());
  return f;
}

DetectedFrame detect_frame(DecodedFrame decoded, const DetectorModel& hog) {
  DetectedFrame d;
  d.frame_index = decoded.frame_index;
  d.decode_ms = decoded.decode_ms;
  const auto t0 = Clock::now();
  d.detections = detect_faces(decoded.image, hog);
  d.detect_ms = ms_between(t0, Clock::now());
  if (!d.detections.empty()) d.face = d.detections.front();  // NMS order: best first
  d.image = std::move(decoded.image);
  return d;
}

void landmark_frame(DetectedFrame det, const ErtModel& ert, const EyeIndices& eyes,
                    FrameResult& result, FrameEar& ear) {
  result.frame_index = det.frame_index;
  result.detections = std::move(det.detections);
  result.face = det.face;
  result.timings.decode_ms = det.decode_ms;
  result.timings.detect_ms = det.detect_ms;

  ear.frame_index = det.frame_index;
  ear.face_found = det.face.has_value();

  const auto t0 = Clock::now();
  if (det.face) {
    const Shape landmarks = predict_landmarks(det.image, det.face->box, ert);
    ear.ear_left = shape_ear(landmarks, eyes.left);
    ear.ear_right = shape_ear(landmarks, eyes.right);
    result.landmarks = landmarks;
  }
  result.timings.landmark_ms = ms_between(t0, Clock::now());
}

PipelineConfig apply_thread_cap(PipelineConfig config) {
  const char* env = std::getenv("BLINKLINE_THREADS");
  if (!env || !*env) return config;
  char* end = nullptr;
  const long cap = std::strtol(env, &end, 10);
  if (end == env || cap < 1) return config;
  config.detect_workers = std::max(1, config.detect_workers);
  config.landmark_workers = std::max(1, config.landmark_workers);
  // Total workers = 1 decode + detect + landmark; shed landmark first.
  auto total = [&] { return 1 + config.detect_workers + config.landmark_workers; };
  while (total() > cap) {
    if (config.landmark_workers > 1)
      --config.landmark_workers;
    else if (config.detect_workers > 1)
      --config.detect_workers;
    else
      break;
  }
  return config;
}

RunStats run_sequential(const FrameSequence& seq, const DetectorModel& hog, const ErtModel& ert,
                        const EyeIndices& eyes) {
  RunStats stats;
  const std::size_t n = seq.paths.size();
  stats.frames = n;
  stats.results.resize(n);
  stats.ears.resize(n);

  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    DetectedFrame det = detect_frame(decode_frame(seq, i), hog);
    landmark_frame(std::move(det), ert, eyes, stats.results[i], stats.ears[i]);
  }
  stats.total_ms = ms_between(t0, Clock::now());
  return stats;
}

RunStats run_pipelined(const FrameSequence& seq, const DetectorModel& hog, const ErtModel& ert,
                       const EyeIndices& eyes, const PipelineConfig& config) {
  RunStats stats;
  const std::size_t n = seq.paths.size();
  const std::size_t bs = std::max<std::size_t>(1, config.batch_size);
  const std::size_t n_batches = (n + bs - 1) / bs;
  stats.frames = n;
  stats.results.resize(n);
  stats.ears.resize(n);

  BoundedQueue<DecodedBatch> decoded_q(config.queue_capacity);
  BoundedQueue<DetectedBatch> detected_q(config.queue_capacity);

  std::mutex error_mu;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto record_error = [&]() {
    {
      std::lock_guard lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
    failed.store(true);
    decoded_q.abort();
    detected_q.abort();
  };

  std::atomic<std::size_t> detect_done{0};
  std::atomic<std::size_t> landmark_batches_done{0};

  const auto t0 = Clock::now();

  std::thread decoder([&] {
    try {
      for (std::size_t b = 0; b < n_batches && !failed.load(); ++b) {
        DecodedBatch batch;
        batch.batch_index = b;
        const std::size_t lo = b * bs;
        const std::size_t hi = std::min(n, lo + bs);
        batch.frames.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) batch.frames.push_back(decode_frame(seq, i));
        if (!decoded_q.push(std::move(batch))) return;
      }
      decoded_q.close();
    } catch (...) {
      record_error();
    }
  });

  std::vector<std::thread> detectors;
  for (int w = 0; w < std::max(1, config.detect_workers); ++w) {
    detectors.emplace_back([&] {
      try {
        while (auto batch = decoded_q.pop()) {
          DetectedBatch out;
          out.batch_index = batch->batch_index;
          out.frames.reserve(batch->frames.size());
          for (DecodedFrame& f : batch->frames) out.frames.push_back(detect_frame(std::move(f), hog));
          if (!detected_q.push(std::move(out))) return;
          if (++detect_done == n_batches) detected_q.close();
        }
      } catch (...) {
        record_error();
      }
    });
  }

  std::vector<std::thread> landmarkers;
  for (int w = 0; w < std::max(1, config.landmark_workers); ++w) {
    landmarkers.emplace_back([&] {
      try {
        while (auto batch = detected_q.pop()) {
          for (DetectedFrame& f : batch->frames) {
            const std::size_t i = f.frame_index;  // one writer per slot
            landmark_frame(std::move(f), ert, eyes, stats.results[i], stats.ears[i]);
          }
          ++landmark_batches_done;
        }
      } catch (...) {
        record_error();
      }
    });
  }

  decoder.join();
  for (std::thread& t : detectors) t.join();
  detected_q.close();  // safety net if a detect worker bailed early
  for (std::thread& t : landmarkers) t.join();

  if (first_error) std::rethrow_exception(first_error);
  if (landmark_batches_done.load() != n_batches)
    throw std::runtime_error("pipeline terminated without completing all batches");

  stats.total_ms = ms_between(t0, Clock::now());
  return stats;
}

RunStats run_stats(const FrameSequence& seq, const DetectorModel& hog, const ErtModel& ert,
                   const PipelineConfig& raw_config) {
  const EyeIndices eyes = eye_indices(ert.landmark_count());
  const PipelineConfig config = apply_thread_cap(raw_config);
  if (seq.paths.empty()) throw io_error(seq.dir + ": frame directory is empty");
  if (config.mode == ExecMode::sequential) return run_sequential(seq, hog, ert, eyes);
  return run_pipelined(seq, hog, ert, eyes, config);
}

struct StageMeans {
  double decode_ms = 0.0;
  double detect_ms = 0.0;
  double landmark_ms = 0.0;
  double end_to_end_ms = 0.0;
};

StageMeans summarize(const RunStats& stats) {
  StageMeans m;
  for (std::size_t i = 0; i < stats.frames; ++i) {
    m.decode_ms += stats.results[i].timings.decode_ms;
    m.detect_ms += stats.results[i].timings.detect_ms;
    m.landmark_ms += stats.results[i].timings.landmark_ms;
  }
  m.decode_ms /= double(stats.frames);
  m.detect_ms /= double(stats.frames);
  m.landmark_ms /= double(stats.frames);
  m.end_to_end_ms = stats.total_ms / double(stats.frames);
  return m;
}

}  // namespace

FrameSequence ingest(const std::string& frames_dir) {
  if (!fs::is_directory(frames_dir)) throw io_error(frames_dir + ": not a directory");

  std::size_t max_index = 0;
  bool any = false;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::size_t idx = 0;
    if (std::sscanf(name.c_str(), "frame_%zu.pgm", &idx) == 1 && name == frame_name(idx)) {
      any = true;
      max_index = std::max(max_index, idx);
    }
  }
  if (!any) throw io_error(frames_dir + ": no frame_%06d.pgm files found");

  FrameSequence seq;
  seq.dir = frames_dir;
  for (std::size_t i = 0; i <= max_index; ++i) {
    const fs::path p = fs::path(frames_dir) / frame_name(i);
    if (!fs::exists(p))
      throw io_error(frames_dir + ": gap in frame numbering, missing " + frame_name(i));
    seq.paths.push_back(p.string());
  }

  const auto [w0, h0] = pgm_dims(seq.paths[0]);
  seq.width = w0;
  seq.height = h0;
  for (std::size_t i = 1; i < seq.paths.size(); ++i) {
    const auto [w, h] = pgm_dims(seq.paths[i]);
    if (w != w0 || h != h0)
      throw io_error(seq.paths[i] + ": dimension change mid-sequence (" + std::to_string(w) +
                     "x" + std::to_string(h) + " vs " + std::to_string(w0) + "x" +
                     std::to_string(h0) + ")");
  }
  return seq;
}

RunOutput run(const std::string& frames_dir, const DetectorModel& hog, const ErtModel& ert,
              double fps, const PipelineConfig& config) {
  const FrameSequence seq = ingest(frames_dir);
  RunStats stats = run_stats(seq, hog, ert, config);
  RunOutput out;
  out.trace = build_trace(stats.ears, fps);
  out.results = std::move(stats.results);
  return out;
}

std::vector<BenchReport> bench(const std::string& frames_dir, const DetectorModel& hog,
                               const ErtModel& ert, const std::vector<PipelineConfig>& grid) {
  const FrameSequence seq = ingest(frames_dir);

  // Warm-up: push the first batch through once and discard it, so one-time
  // costs (thread spin-up, allocator, page cache) stay out of the means.
  auto warmed_run = [&](const PipelineConfig& config) {
    const std::size_t warm_frames =
        std::min(seq.paths.size(),
                 config.mode == ExecMode::sequential ? std::size_t(1) : config.batch_size);
    FrameSequence warm = seq;
    warm.paths.resize(warm_frames);
    run_stats(warm, hog, ert, config);
    return run_stats(seq, hog, ert, config);
  };

  PipelineConfig seq_config;
  seq_config.mode = ExecMode::sequential;
  const RunStats ref = warmed_run(seq_config);
  const StageMeans ref_means = summarize(ref);

  std::vector<BenchReport> reports;
  for (const PipelineConfig& config : grid) {
    BenchReport r;
    r.config = config;
    if (config.mode == ExecMode::sequential) {
      // The sequential reference is the denominator; reuse it so a
      // sequential entry reports speedup exactly 1.
      r.frames = ref.frames;
      r.decode_ms = ref_means.decode_ms;
      r.detect_ms = ref_means.detect_ms;
      r.landmark_ms = ref_means.landmark_ms;
      r.end_to_end_ms = ref_means.end_to_end_ms;
      r.speedup = 1.0;
    } else {
      const RunStats st = warmed_run(config);
      const StageMeans means = summarize(st);
      r.frames = st.frames;
      r.decode_ms = means.decode_ms;
      r.detect_ms = means.detect_ms;
      r.landmark_ms = means.landmark_ms;
      r.end_to_end_ms = means.end_to_end_ms;
      r.speedup = ref_means.end_to_end_ms / means.end_to_end_ms;
    }
    r.fps = 1000.0 / r.end_to_end_ms;
    reports.push_back(r);
  }
  return reports;
}

}  // namespace blinkline
