#include "blinkline/blink.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blinkline/errors.hpp"

namespace blinkline {

namespace {

double dist(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Linear-interpolation quantile over the order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - double(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

double closure_of(double ear, double baseline) {
  if (baseline <= 0.0) return 1.0;  // never-open trace: every frame counts as closed
  return std::clamp(1.0 - ear / baseline, 0.0, 1.0);
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

double eye_aspect_ratio(const std::array<Point2, 6>& p) {
  const double horiz = dist(p[0], p[3]);
  if (horiz <= 1e-9)
    throw std::invalid_argument("eye_aspect_ratio: degenerate eye, corner span ~ 0");
  return (dist(p[1], p[5]) + dist(p[2], p[4])) / (2.0 * horiz);
}

double shape_ear(const Shape& landmarks, const std::array<int, 6>& eye) {
  std::array<Point2, 6> pts;
  for (std::size_t i = 0; i < 6; ++i) {
    const int idx = eye[i];
    if (idx < 0 || idx >= int(landmarks.points.size()))
      throw std::invalid_argument("shape_ear: eye index out of range");
    pts[i] = landmarks.points[idx];
  }
  return eye_aspect_ratio(pts);
}

BlinkTrace build_trace(const std::vector<FrameEar>& frames, double fps,
                       double baseline_quantile) {
  if (fps <= 0.0) throw std::invalid_argument("build_trace: fps must be positive");

  std::vector<FrameEar> ordered = frames;
  std::sort(ordered.begin(), ordered.end(),
            [](const FrameEar& a, const FrameEar& b) { return a.frame_index < b.frame_index; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i].frame_index == ordered[i - 1].frame_index)
      throw std::invalid_argument("build_trace: duplicate frame index " +
                                  std::to_string(ordered[i].frame_index));
  }

  std::vector<double> lefts, rights;
  for (const FrameEar& f : ordered) {
    if (f.face_found) {
      lefts.push_back(f.ear_left);
      rights.push_back(f.ear_right);
    }
  }
  if (lefts.empty())
    throw std::invalid_argument("build_trace: no frames with a detected face, cannot "
                                "establish an EAR baseline");

  BlinkTrace trace;
  trace.fps = fps;
  trace.baseline_left = quantile(lefts, baseline_quantile);
  trace.baseline_right = quantile(rights, baseline_quantile);
  trace.samples.reserve(ordered.size());
  for (const FrameEar& f : ordered) {
    BlinkSample s;
    s.frame_index = f.frame_index;
    s.t = double(f.frame_index) / fps;
    s.face_found = f.face_found;
    if (f.face_found) {
      s.ear_left = f.ear_left;
      s.ear_right = f.ear_right;
      s.closure_left = closure_of(f.ear_left, trace.baseline_left);
      s.closure_right = closure_of(f.ear_right, trace.baseline_right);
    }
    trace.samples.push_back(s);
  }
  return trace;
}

std::vector<BlinkEvent> detect_blinks(const BlinkTrace& trace, double closure_threshold,
                                      std::size_t min_frames) {
  std::vector<BlinkEvent> events;
  std::size_t run_start = 0;
  std::size_t run_len = 0;
  double peak = 0.0;

  auto flush = [&](std::size_t end_sample) {
    if (run_len >= min_frames && min_frames > 0) {
      BlinkEvent e;
      e.onset_frame = trace.samples[run_start].frame_index;
      e.offset_frame = trace.samples[end_sample].frame_index;
      e.peak_closure = peak;
      events.push_back(e);
    }
    run_len = 0;
    peak = 0.0;
  };

  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const BlinkSample& s = trace.samples[i];
    const bool closed = s.closure_left.has_value() && *s.closure_left >= closure_threshold;
    if (closed) {
      if (run_len == 0) run_start = i;
      ++run_len;
      peak = std::max(peak, *s.closure_left);
    } else if (run_len > 0) {
      flush(i - 1);
    }
  }
  if (run_len > 0) flush(trace.samples.size() - 1);
  return events;
}

void write_csv(const BlinkTrace& trace, std::ostream& out) {
  out << "frame,t,ear_left,ear_right,closure_left,closure_right,face_found\n";
  for (const BlinkSample& s : trace.samples) {
    out << s.frame_index << ',' << fmt9(s.t) << ',';
    if (s.ear_left) out << fmt9(*s.ear_left);
    out << ',';
    if (s.ear_right) out << fmt9(*s.ear_right);
    out << ',';
    if (s.closure_left) out << fmt9(*s.closure_left);
    out << ',';
    if (s.closure_right) out << fmt9(*s.closure_right);
    out << ',' << (s.face_found ? 1 : 0) << '\n';
  }
}

void write_csv(const BlinkTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open file for writing");
  write_csv(trace, out);
  if (!out) throw io_error(path + ": write failed");
}

BlinkTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) ||
      line != "frame,t,ear_left,ear_right,closure_left,closure_right,face_found")
    throw io_error(path + ": missing or unexpected trace CSV header");

  BlinkTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 7)
      throw io_error(path + ": line " + std::to_string(lineno) + " has " +
                     std::to_string(fields.size()) + " fields, expected 7");

    auto opt = [&](const std::string& f) -> std::optional<double> {
      if (f.empty()) return std::nullopt;
      return std::stod(f);
    };
    BlinkSample s;
    s.frame_index = std::size_t(std::stoull(fields[0]));
    s.t = std::stod(fields[1]);
    s.ear_left = opt(fields[2]);
    s.ear_right = opt(fields[3]);
    s.closure_left = opt(fields[4]);
    s.closure_right = opt(fields[5]);
    s.face_found = fields[6] == "1";
    trace.samples.push_back(s);
    if (trace.fps == 0.0 && s.frame_index > 0 && s.t > 0.0)
      trace.fps = double(s.frame_index) / s.t;
  }
  return trace;
}

}  // namespace blinkline
