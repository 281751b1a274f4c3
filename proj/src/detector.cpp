#include "blinkline/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <tuple>

#include <json.hpp>

#include "blinkline/errors.hpp"

namespace blinkline {

double iou(const Box& a, const Box& b) {
  const long long ix0 = std::max(a.x, b.x);
  const long long iy0 = std::max(a.y, b.y);
  const long long ix1 = std::min<long long>(a.x + a.w, b.x + b.w);
  const long long iy1 = std::min<long long>(a.y + a.h, b.y + b.h);
  const long long iw = ix1 - ix0;
  const long long ih = iy1 - iy0;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = double(iw) * double(ih);
  const double uni = double(a.w) * a.h + double(b.w) * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

namespace {

constexpr int kRowWeights = kWindowCells * kCellFeatures;  // 310 per window row

void check_scorable(const FeatureImage& feat, const LinearFilter& filter) {
  if (int(filter.weights.size()) != kFilterWeights)
    throw std::invalid_argument("filter must carry exactly 3100 weights");
  if (feat.cells_w < kWindowCells || feat.cells_h < kWindowCells)
    throw std::invalid_argument("feature image smaller than the 10x10 detection window");
}

int round_half_up(double v) { return int(std::floor(v + 0.5)); }

}  // namespace

SaliencyMap score_dense(const FeatureImage& feat, const LinearFilter& filter) {
  check_scorable(feat, filter);
  SaliencyMap sal;
  sal.width = feat.cells_w - (kWindowCells - 1);
  sal.height = feat.cells_h - (kWindowCells - 1);
  sal.scores.assign(std::size_t(sal.width) * sal.height, 0.0);

  for (int cy = 0; cy < sal.height; ++cy) {
    for (int cx = 0; cx < sal.width; ++cx) {
      double acc = 0.0;
      for (int j = 0; j < kWindowCells; ++j) {
        const double* strip = feat.cell(cx, cy + j);  // 10 cells x 31 features, contiguous
        const double* w = &filter.weights[std::size_t(j) * kRowWeights];
        for (int k = 0; k < kRowWeights; ++k) acc += strip[k] * w[k];
      }
      sal.scores[std::size_t(cy) * sal.width + cx] = acc + filter.bias;
    }
  }
  return sal;
}

SaliencyMap score_separable(const FeatureImage& feat, const LinearFilter& filter) {
  check_scorable(feat, filter);
  SaliencyMap sal;
  sal.width = feat.cells_w - (kWindowCells - 1);
  sal.height = feat.cells_h - (kWindowCells - 1);
  sal.scores.assign(std::size_t(sal.width) * sal.height, 0.0);

  // Row pass: scratch(x, y, j) = feature strip at (x..x+9, y) dotted with
  // filter row slice j.
  const int aw = sal.width;
  std::vector<double> scratch(std::size_t(aw) * feat.cells_h * kWindowCells);
  for (int y = 0; y < feat.cells_h; ++y) {
    for (int x = 0; x < aw; ++x) {
      const double* strip = feat.cell(x, y);
      double* out = &scratch[(std::size_t(y) * aw + x) * kWindowCells];
      for (int j = 0; j < kWindowCells; ++j) {
        const double* w = &filter.weights[std::size_t(j) * kRowWeights];
        double acc = 0.0;
        for (int k = 0; k < kRowWeights; ++k) acc += strip[k] * w[k];
        out[j] = acc;
      }
    }
  }

  // Column pass: sum one scratch slice per window row.
  for (int cy = 0; cy < sal.height; ++cy) {
    for (int cx = 0; cx < aw; ++cx) {
      double acc = 0.0;
      for (int j = 0; j < kWindowCells; ++j)
        acc += scratch[(std::size_t(cy + j) * aw + cx) * kWindowCells + j];
      sal.scores[std::size_t(cy) * aw + cx] = acc + filter.bias;
    }
  }
  return sal;
}

std::vector<Detection> threshold_detections(const SaliencyMap& sal, const DetectorModel& model,
                                            int scale_index, int rotation_index) {
  const double c = std::pow(double(model.scale_num) / model.scale_den, double(scale_index));
  const int side = round_half_up(model.window_px() / c);
  std::vector<Detection> dets;
  for (int cy = 0; cy < sal.height; ++cy) {
    for (int cx = 0; cx < sal.width; ++cx) {
      const double s = sal.at(cx, cy);
      if (s > model.detection_threshold) {
        Detection d;
        d.box = {round_half_up(cx * model.cell_px / c), round_half_up(cy * model.cell_px / c),
                 side, side};
        d.score = s;
        d.scale_index = scale_index;
        d.rotation_index = rotation_index;
        dets.push_back(d);
      }
    }
  }
  return dets;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.box.y, a.box.x, a.scale_index, a.rotation_index) <
           std::tie(b.box.y, b.box.x, b.scale_index, b.rotation_index);
  });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<int> eligible_scales(int img_w, int img_h, const DetectorModel& model, int n_levels) {
  const double min_face = model.min_face_ratio * std::min(img_w, img_h);
  std::vector<int> out;
  for (int k = 0; k < n_levels; ++k) {
    const double detectable =
        model.window_px() / std::pow(double(model.scale_num) / model.scale_den, double(k));
    // The 20%-of-480 case lands exactly on the bound; tolerate fp dust in
    // the ratio product.
    if (detectable >= min_face * (1.0 - 1e-9)) out.push_back(k);
  }
  return out;
}

std::vector<Detection> detect_faces(const GrayImage& img, const DetectorModel& model) {
  const Pyramid pyr = build_pyramid(img, model.window_px());
  const std::vector<int> levels =
      eligible_scales(img.width, img.height, model, int(pyr.levels.size()));

  std::vector<Detection> pooled;
  for (int k : levels) {
    const GrayImage& lvl = pyr.levels[k];
    if (lvl.width / model.cell_px < model.window_cells ||
        lvl.height / model.cell_px < model.window_cells)
      continue;  // no room for a single window at this level
    const FeatureImage feat = extract_features(lvl);
    for (int r = 0; r < int(model.filters.size()); ++r) {
      const SaliencyMap sal = score_separable(feat, model.filters[r]);
      std::vector<Detection> dets = threshold_detections(sal, model, k, r);
      pooled.insert(pooled.end(), dets.begin(), dets.end());
    }
  }
  return nms(std::move(pooled));
}

std::vector<double> extract_feature_window(const FeatureImage& feat, int cx0, int cy0) {
  if (cx0 < 0 || cy0 < 0 || cx0 + kWindowCells > feat.cells_w ||
      cy0 + kWindowCells > feat.cells_h)
    throw std::invalid_argument("feature window out of grid bounds");
  std::vector<double> window;
  window.reserve(kFilterWeights);
  for (int j = 0; j < kWindowCells; ++j) {
    const double* strip = feat.cell(cx0, cy0 + j);
    window.insert(window.end(), strip, strip + kRowWeights);
  }
  return window;
}

namespace {

double dot3100(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (int k = 0; k < kFilterWeights; ++k) s += a[k] * b[k];
  return s;
}

double f1_at_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                       double thr) {
  long long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > thr;
    if (pred && labels[i] > 0) ++tp;
    if (pred && labels[i] < 0) ++fp;
    if (!pred && labels[i] > 0) ++fn;
  }
  if (tp == 0) return 0.0;
  const double p = double(tp) / double(tp + fp);
  const double r = double(tp) / double(tp + fn);
  return 2.0 * p * r / (p + r);
}

}  // namespace

LinearFilter train_filter(const std::vector<std::vector<double>>& positives,
                          const std::vector<std::vector<double>>& negatives, int epochs,
                          double learning_rate, std::uint64_t seed) {
  if (positives.empty() || negatives.empty())
    throw std::invalid_argument("train_filter: both classes need at least one example");
  if (epochs < 1) throw std::invalid_argument("train_filter: epochs must be >= 1");

  std::vector<const std::vector<double>*> xs;
  std::vector<int> ys;
  for (const auto& p : positives) {
    if (int(p.size()) != kFilterWeights)
      throw std::invalid_argument("train_filter: examples must carry 3100 features");
    xs.push_back(&p);
    ys.push_back(+1);
  }
  for (const auto& n : negatives) {
    if (int(n.size()) != kFilterWeights)
      throw std::invalid_argument("train_filter: examples must carry 3100 features");
    xs.push_back(&n);
    ys.push_back(-1);
  }

  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);

  std::vector<double> w(kFilterWeights, 0.0);
  std::vector<double> wsum(kFilterWeights, 0.0);
  for (int e = 0; e < epochs; ++e) {
    // Fisher-Yates with raw engine draws; keeps model files stable across
    // standard libraries.
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng() % (i + 1);
      std::swap(order[i], order[j]);
    }
    for (const std::size_t idx : order) {
      const std::vector<double>& x = *xs[idx];
      const int y = ys[idx];
      double s = 0.0;
      for (int k = 0; k < kFilterWeights; ++k) s += w[k] * x[k];
      if (y * s <= 0.0) {
        const double step = learning_rate * y;
        for (int k = 0; k < kFilterWeights; ++k) w[k] += step * x[k];
      }
      for (int k = 0; k < kFilterWeights; ++k) wsum[k] += w[k];
    }
  }

  LinearFilter filter;
  const double steps = double(epochs) * double(n);
  for (int k = 0; k < kFilterWeights; ++k) filter.weights[k] = wsum[k] / steps;

  // Bias from an F1 sweep over the training scores: classify positive iff
  // score > threshold, take the best threshold (largest on ties).
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = dot3100(filter.weights, *xs[i]);
  std::vector<double> candidates = scores;
  candidates.push_back(*std::min_element(scores.begin(), scores.end()) - 1.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  double best_thr = candidates.front();
  double best_f1 = -1.0;
  for (const double thr : candidates) {
    const double f1 = f1_at_threshold(scores, ys, thr);
    if (f1 >= best_f1) {  // >= so ties land on the larger threshold
      best_f1 = f1;
      best_thr = thr;
    }
  }
  filter.bias = -best_thr;
  return filter;
}

void save_model(const DetectorModel& model, const std::string& path) {
  nlohmann::json j;
  j["version"] = "hog-v1";
  j["window_cells"] = model.window_cells;
  j["cell_px"] = model.cell_px;
  j["scale_factor_num"] = model.scale_num;
  j["scale_factor_den"] = model.scale_den;
  j["min_face_ratio"] = model.min_face_ratio;
  j["threshold"] = model.detection_threshold;
  nlohmann::json filters = nlohmann::json::array();
  for (const LinearFilter& f : model.filters) {
    filters.push_back({{"weights", f.weights}, {"bias", f.bias}});
  }
  j["filters"] = std::move(filters);

  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open file for writing");
  out << j.dump();
  if (!out) throw io_error(path + ": write failed");
}

DetectorModel load_detector_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw model_error(path + ": invalid JSON (" + e.what() + ")");
  }

  if (!j.contains("version") || !j["version"].is_string() || j["version"] != "hog-v1")
    throw model_error(path + ": unsupported model version, expected \"hog-v1\"");

  DetectorModel model;
  try {
    model.window_cells = j.at("window_cells").get<int>();
    model.cell_px = j.at("cell_px").get<int>();
    model.scale_num = j.at("scale_factor_num").get<int>();
    model.scale_den = j.at("scale_factor_den").get<int>();
    model.min_face_ratio = j.at("min_face_ratio").get<double>();
    model.detection_threshold = j.at("threshold").get<double>();
    const auto& filters = j.at("filters");
    if (!filters.is_array() || filters.size() != model.filters.size())
      throw model_error(path + ": expected exactly 5 filters");
    const std::size_t expected =
        std::size_t(model.window_cells) * model.window_cells * kCellFeatures;
    for (std::size_t i = 0; i < model.filters.size(); ++i) {
      auto weights = filters[i].at("weights").get<std::vector<double>>();
      if (weights.size() != expected)
        throw model_error(path + ": filter " + std::to_string(i) + " carries " +
                          std::to_string(weights.size()) + " weights, expected " +
                          std::to_string(expected));
      model.filters[i].weights = std::move(weights);
      model.filters[i].bias = filters[i].at("bias").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw model_error(path + ": malformed model file (" + e.what() + ")");
  }
  return model;
}

}  // namespace blinkline
