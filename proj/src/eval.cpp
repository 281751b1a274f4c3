#include "blinkline/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "blinkline/errors.hpp"

namespace blinkline {

DetMatchResult match_detections(std::vector<Detection> dets, const std::vector<Box>& truths,
                                double iou_min) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.box.y, a.box.x, a.scale_index, a.rotation_index) <
           std::tie(b.box.y, b.box.x, b.scale_index, b.rotation_index);
  });

  std::vector<char> claimed(truths.size(), 0);
  DetMatchResult r;
  for (const Detection& d : dets) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (claimed[t]) continue;
      const double v = iou(d.box, truths[t]);
      if (v >= iou_min && v > best_iou) {  // equal IoU keeps the earlier truth
        best_iou = v;
        best = int(t);
      }
    }
    if (best >= 0) {
      claimed[best] = 1;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<long long>(truths.size()) - r.tp;
  return r;
}

double recall_pct(long long tp, long long fn) {
  if (tp + fn <= 0) throw std::invalid_argument("recall undefined: tp + fn is zero");
  return 100.0 * double(tp) / double(tp + fn);
}

double precision_pct(long long tp, long long fp) {
  if (tp + fp <= 0) throw std::invalid_argument("precision undefined: tp + fp is zero");
  return 100.0 * double(tp) / double(tp + fp);
}

double round_pct(double pct) { return std::round(pct * 10.0) / 10.0; }

double landmark_error_pct(const Shape& pred, const Point2& truth_left,
                          const Point2& truth_right) {
  const EyeIndices eyes = eye_indices(int(pred.points.size()));
  auto center = [&](const std::array<int, 6>& eye) {
    Point2 c{0, 0};
    for (const int i : eye) {
      c.x += pred.points[i].x;
      c.y += pred.points[i].y;
    }
    c.x /= 6.0;
    c.y /= 6.0;
    return c;
  };
  const double interocular = std::hypot(truth_left.x - truth_right.x,
                                        truth_left.y - truth_right.y);
  if (interocular <= 0.0)
    throw std::invalid_argument("landmark_error: truth eye centers coincide");
  const Point2 cl = center(eyes.left);
  const Point2 cr = center(eyes.right);
  const double el = std::hypot(cl.x - truth_left.x, cl.y - truth_left.y) / interocular;
  const double er = std::hypot(cr.x - truth_right.x, cr.y - truth_right.y) / interocular;
  return 100.0 * 0.5 * (el + er);
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path,
                                                    std::size_t n_fields) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("id,", 0) == 0) continue;  // header row
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
    if (fields.size() != n_fields)
      throw io_error(path + ": line " + std::to_string(lineno) + " has " +
                     std::to_string(fields.size()) + " fields, expected " +
                     std::to_string(n_fields));
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<AnnotatedBox> load_box_annotations(const std::string& path) {
  std::vector<AnnotatedBox> out;
  for (const auto& f : read_csv_rows(path, 5)) {
    AnnotatedBox a;
    a.id = f[0];
    a.box = {std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4])};
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<EyeAnnotation> load_eye_annotations(const std::string& path) {
  std::vector<EyeAnnotation> out;
  for (const auto& f : read_csv_rows(path, 5)) {
    EyeAnnotation a;
    a.id = f[0];
    a.left = {std::stod(f[1]), std::stod(f[2])};
    a.right = {std::stod(f[3]), std::stod(f[4])};
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace blinkline
