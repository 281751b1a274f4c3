#include "blinkline/ert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "blinkline/errors.hpp"

namespace blinkline {

Point2 SimilarityTransform::apply(const Point2& p) const {
  const Point2 q = apply_linear(p);
  return {q.x + tx, q.y + ty};
}

Point2 SimilarityTransform::apply_linear(const Point2& p) const {
  const double a = scale * std::cos(rotation);
  const double b = scale * std::sin(rotation);
  return {a * p.x - b * p.y, b * p.x + a * p.y};
}

SimilarityTransform similarity_transform(const Shape& from, const Shape& to) {
  const std::size_t n = from.points.size();
  if (n < 2 || to.points.size() != n)
    throw std::invalid_argument("similarity_transform: shapes must share L >= 2 points");
  if (from.frame != to.frame)
    throw std::invalid_argument("similarity_transform: shapes must share a frame");

  Point2 mf{0, 0}, mt{0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    mf.x += from.points[i].x;
    mf.y += from.points[i].y;
    mt.x += to.points[i].x;
    mt.y += to.points[i].y;
  }
  mf.x /= double(n);
  mf.y /= double(n);
  mt.x /= double(n);
  mt.y /= double(n);

  // Complex least squares: (a + ib) = sum(conj(f') t') / sum(|f'|^2).
  double sff = 0.0, sre = 0.0, sim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fx = from.points[i].x - mf.x;
    const double fy = from.points[i].y - mf.y;
    const double txp = to.points[i].x - mt.x;
    const double typ = to.points[i].y - mt.y;
    sff += fx * fx + fy * fy;
    sre += fx * txp + fy * typ;
    sim += fx * typ - fy * txp;
  }
  if (sff <= 0.0)
    throw std::invalid_argument("similarity_transform: source shape has no spread");

  const double a = sre / sff;
  const double b = sim / sff;
  SimilarityTransform t;
  t.scale = std::hypot(a, b);
  if (t.scale <= 0.0)
    throw std::invalid_argument("similarity_transform: target shape has no spread");
  t.rotation = std::atan2(b, a);
  t.tx = mt.x - (a * mf.x - b * mf.y);
  t.ty = mt.y - (b * mf.x + a * mf.y);
  return t;
}

double sample_intensity(const GrayImage& img, const Box& box, const Shape& shape,
                        const SimilarityTransform& tform, int anchor, Point2 offset) {
  if (shape.frame != ShapeFrame::normalized)
    throw std::invalid_argument("sample_intensity: shape must be in the normalized frame");
  const Point2 off = tform.apply_linear(offset);  // translation never applies to offsets
  const double nx = shape.points[anchor].x + off.x;
  const double ny = shape.points[anchor].y + off.y;
  const double px = box.x + nx * box.w;
  const double py = box.y + ny * box.h;
  int ix = int(std::llround(px));
  int iy = int(std::llround(py));
  ix = std::clamp(ix, 0, img.width - 1);
  iy = std::clamp(iy, 0, img.height - 1);
  return img.at(ix, iy);
}

const std::vector<Point2>& traverse_tree(const RegressionTree& tree,
                                         const IntensityPairFn& intensity_of) {
  std::size_t node = 0;
  const std::size_t n_splits = tree.splits.size();
  while (node < n_splits) {
    const SplitNode& s = tree.splits[node];
    const auto [ia, ib] = intensity_of(s);
    node = (ia - ib > s.threshold) ? 2 * node + 1 : 2 * node + 2;
  }
  return tree.leaves[node - n_splits];
}

Shape predict_landmarks(const GrayImage& img, const Box& box, const ErtModel& model,
                        PredictStats* stats) {
  if (box.w <= 0 || box.h <= 0)
    throw std::invalid_argument("predict_landmarks: face box must have positive area");
  const int L = model.landmark_count();
  if (L < 2) throw std::invalid_argument("predict_landmarks: model has no mean shape");

  Shape current = model.mean_shape;
  std::uint64_t evals = 0;
  for (const std::vector<RegressionTree>& level : model.cascade) {
    const SimilarityTransform tform = similarity_transform(current, model.mean_shape);
    std::vector<Point2> delta_sum(L, Point2{0, 0});
    for (const RegressionTree& tree : level) {
      const std::vector<Point2>& leaf =
          traverse_tree(tree, [&](const SplitNode& s) -> std::pair<double, double> {
            ++evals;
            return {sample_intensity(img, box, current, tform, s.anchor_a, s.offset_a),
                    sample_intensity(img, box, current, tform, s.anchor_b, s.offset_b)};
          });
      for (int i = 0; i < L; ++i) {
        delta_sum[i].x += leaf[i].x;
        delta_sum[i].y += leaf[i].y;
      }
    }
    for (int i = 0; i < L; ++i) {
      current.points[i].x += model.shrinkage * delta_sum[i].x;
      current.points[i].y += model.shrinkage * delta_sum[i].y;
    }
  }

  Shape out;
  out.frame = ShapeFrame::image;
  out.points.reserve(L);
  for (const Point2& p : current.points)
    out.points.push_back({box.x + p.x * box.w, box.y + p.y * box.h});
  if (stats) stats->intensity_diffs = evals;
  return out;
}

namespace {

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  const double u = double(rng() >> 11) * 0x1.0p-53;  // [0, 1)
  return lo + (hi - lo) * u;
}

SplitNode random_split(std::mt19937_64& rng, int L) {
  // Offsets live in the normalized mean-shape frame; thresholds span the
  // whole [-255, 255] intensity-difference range.
  SplitNode s;
  s.anchor_a = int(rng() % std::uint64_t(L));
  s.anchor_b = int(rng() % std::uint64_t(L));
  s.offset_a = {uniform_real(rng, -0.15, 0.15), uniform_real(rng, -0.15, 0.15)};
  s.offset_b = {uniform_real(rng, -0.15, 0.15), uniform_real(rng, -0.15, 0.15)};
  s.threshold = uniform_real(rng, -255.0, 255.0);
  return s;
}

struct NodeStats {
  std::vector<Point2> mean;
  double weighted_norm2(std::size_t count) const {
    double s = 0.0;
    for (const Point2& p : mean) s += p.x * p.x + p.y * p.y;
    return s * double(count);
  }
};

std::vector<Point2> mean_residual(const std::vector<std::vector<Point2>>& residuals,
                                  const std::vector<int>& idx, int L) {
  std::vector<Point2> m(L, Point2{0, 0});
  if (idx.empty()) return m;
  for (const int s : idx) {
    for (int i = 0; i < L; ++i) {
      m[i].x += residuals[s][i].x;
      m[i].y += residuals[s][i].y;
    }
  }
  for (int i = 0; i < L; ++i) {
    m[i].x /= double(idx.size());
    m[i].y /= double(idx.size());
  }
  return m;
}

double mean_norm2(const std::vector<Point2>& v) {
  double s = 0.0;
  for (const Point2& p : v) s += p.x * p.x + p.y * p.y;
  return s;
}

}  // namespace

ErtModel train_ert(const std::vector<ErtTrainSample>& samples, const ErtTrainConfig& config,
                   ErtTrainReport* report) {
  if (samples.size() < 2) throw std::invalid_argument("train_ert: need at least 2 samples");
  if (config.levels < 1 || config.trees_per_level < 1 || config.depth < 1 ||
      config.candidate_splits < 1)
    throw std::invalid_argument("train_ert: T, K, F and candidate_splits must be >= 1");
  if (!(config.shrinkage > 0.0 && config.shrinkage <= 1.0))
    throw std::invalid_argument("train_ert: shrinkage must lie in (0, 1]");

  const int L = int(samples[0].target.points.size());
  if (L < 2) throw std::invalid_argument("train_ert: targets need at least 2 landmarks");
  for (const ErtTrainSample& s : samples) {
    if (int(s.target.points.size()) != L)
      throw std::invalid_argument("train_ert: all targets must share the landmark count");
    if (s.target.frame != ShapeFrame::normalized)
      throw std::invalid_argument("train_ert: targets must be in the normalized frame");
    if (s.box.w <= 0 || s.box.h <= 0)
      throw std::invalid_argument("train_ert: sample boxes must have positive area");
  }

  const int n = int(samples.size());
  ErtModel model;
  model.shrinkage = config.shrinkage;
  model.mean_shape.frame = ShapeFrame::normalized;
  model.mean_shape.points.assign(L, Point2{0, 0});
  for (const ErtTrainSample& s : samples) {
    for (int i = 0; i < L; ++i) {
      model.mean_shape.points[i].x += s.target.points[i].x;
      model.mean_shape.points[i].y += s.target.points[i].y;
    }
  }
  for (int i = 0; i < L; ++i) {
    model.mean_shape.points[i].x /= double(n);
    model.mean_shape.points[i].y /= double(n);
  }

  std::vector<std::vector<Point2>> current(n, model.mean_shape.points);
  auto rmse = [&]() {
    double sse = 0.0;
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < L; ++i) {
        const double dx = current[s][i].x - samples[s].target.points[i].x;
        const double dy = current[s][i].y - samples[s].target.points[i].y;
        sse += dx * dx + dy * dy;
      }
    }
    return std::sqrt(sse / (double(n) * L));
  };
  if (report) {
    report->baseline_rmse = rmse();
    report->level_rmse.clear();
  }

  std::mt19937_64 rng(config.seed);
  const int n_splits = (1 << config.depth) - 1;
  const int n_leaves = 1 << config.depth;

  for (int t = 0; t < config.levels; ++t) {
    // The feature basis for the whole level: each sample's pose at level
    // start, matching inference where the K trees of a level all read the
    // same estimate.
    std::vector<Shape> level_shapes(n);
    std::vector<SimilarityTransform> tforms(n);
    for (int s = 0; s < n; ++s) {
      level_shapes[s].frame = ShapeFrame::normalized;
      level_shapes[s].points = current[s];
      tforms[s] = similarity_transform(level_shapes[s], model.mean_shape);
    }
    auto intensity = [&](int s, int anchor, const Point2& off) {
      return sample_intensity(samples[s].image, samples[s].box, level_shapes[s], tforms[s],
                              anchor, off);
    };

    std::vector<RegressionTree> level_trees;
    level_trees.reserve(config.trees_per_level);
    std::vector<std::vector<Point2>> residuals(n, std::vector<Point2>(L));

    for (int k = 0; k < config.trees_per_level; ++k) {
      for (int s = 0; s < n; ++s) {
        for (int i = 0; i < L; ++i) {
          residuals[s][i].x = samples[s].target.points[i].x - current[s][i].x;
          residuals[s][i].y = samples[s].target.points[i].y - current[s][i].y;
        }
      }

      RegressionTree tree;
      tree.depth = config.depth;
      tree.splits.resize(n_splits);
      tree.leaves.assign(n_leaves, std::vector<Point2>(L, Point2{0, 0}));

      // node_members[node] = sample indices reaching that node.
      std::vector<std::vector<int>> node_members(n_splits + n_leaves);
      node_members[0].resize(n);
      std::iota(node_members[0].begin(), node_members[0].end(), 0);

      for (int node = 0; node < n_splits; ++node) {
        const std::vector<int>& members = node_members[node];
        SplitNode best;
        double best_gain = -1.0;
        std::vector<char> best_goes_left(members.size(), 0);
        std::vector<char> goes_left(members.size(), 0);

        for (int c = 0; c < config.candidate_splits; ++c) {
          const SplitNode cand = random_split(rng, L);
          std::vector<int> left_idx, right_idx;
          for (std::size_t m = 0; m < members.size(); ++m) {
            const int s = members[m];
            const double ia = intensity(s, cand.anchor_a, cand.offset_a);
            const double ib = intensity(s, cand.anchor_b, cand.offset_b);
            const bool lt = ia - ib > cand.threshold;
            goes_left[m] = lt ? 1 : 0;
            (lt ? left_idx : right_idx).push_back(s);
          }
          const std::vector<Point2> ml = mean_residual(residuals, left_idx, L);
          const std::vector<Point2> mr = mean_residual(residuals, right_idx, L);
          const double gain =
              mean_norm2(ml) * double(left_idx.size()) + mean_norm2(mr) * double(right_idx.size());
          if (gain > best_gain) {
            best_gain = gain;
            best = cand;
            best_goes_left = goes_left;
          }
        }

        tree.splits[node] = best;
        for (std::size_t m = 0; m < members.size(); ++m)
          node_members[best_goes_left[m] ? 2 * node + 1 : 2 * node + 2].push_back(members[m]);
      }

      for (int leaf = 0; leaf < n_leaves; ++leaf) {
        const std::vector<int>& members = node_members[n_splits + leaf];
        if (members.empty()) continue;
        tree.leaves[leaf] = mean_residual(residuals, members, L);
        // Advance the estimates tree by tree.
        for (const int s : members) {
          for (int i = 0; i < L; ++i) {
            current[s][i].x += config.shrinkage * tree.leaves[leaf][i].x;
            current[s][i].y += config.shrinkage * tree.leaves[leaf][i].y;
          }
        }
      }
      level_trees.push_back(std::move(tree));
    }
    model.cascade.push_back(std::move(level_trees));
    if (report) report->level_rmse.push_back(rmse());
  }
  return model;
}

EyeIndices eye_indices(int landmark_count) {
  if (landmark_count != 68)
    throw std::invalid_argument(
        "eye_indices: no eye mapping for L=" + std::to_string(landmark_count) +
        "; only the 68-landmark convention is built in");
  return EyeIndices{{36, 37, 38, 39, 40, 41}, {42, 43, 44, 45, 46, 47}};
}

EyeIndices eye_indices(int landmark_count, const EyeIndices& custom) {
  for (const auto& eye : {custom.left, custom.right}) {
    for (const int i : eye) {
      if (i < 0 || i >= landmark_count)
        throw std::invalid_argument("eye_indices: custom index out of range");
    }
  }
  return custom;
}

void save_model(const ErtModel& model, const std::string& path) {
  nlohmann::json j;
  j["version"] = "ert-v1";
  j["L"] = model.landmark_count();
  j["T"] = model.levels();
  j["K"] = model.trees_per_level();
  j["F"] = model.cascade.empty() || model.cascade[0].empty() ? 0 : model.cascade[0][0].depth;
  j["shrinkage"] = model.shrinkage;
  nlohmann::json mean = nlohmann::json::array();
  for (const Point2& p : model.mean_shape.points) mean.push_back({p.x, p.y});
  j["mean_shape"] = std::move(mean);

  nlohmann::json cascade = nlohmann::json::array();
  for (const auto& level : model.cascade) {
    nlohmann::json level_json = nlohmann::json::array();
    for (const RegressionTree& tree : level) {
      nlohmann::json splits = nlohmann::json::array();
      for (const SplitNode& s : tree.splits) {
        splits.push_back({{"a", s.anchor_a},
                          {"b", s.anchor_b},
                          {"ox_a", s.offset_a.x},
                          {"oy_a", s.offset_a.y},
                          {"ox_b", s.offset_b.x},
                          {"oy_b", s.offset_b.y},
                          {"thr", s.threshold}});
      }
      nlohmann::json leaves = nlohmann::json::array();
      for (const auto& leaf : tree.leaves) {
        nlohmann::json pts = nlohmann::json::array();
        for (const Point2& p : leaf) pts.push_back({p.x, p.y});
        leaves.push_back(std::move(pts));
      }
      level_json.push_back({{"splits", std::move(splits)}, {"leaves", std::move(leaves)}});
    }
    cascade.push_back(std::move(level_json));
  }
  j["cascade"] = std::move(cascade);

  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open file for writing");
  out << j.dump();
  if (!out) throw io_error(path + ": write failed");
}

ErtModel load_ert_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw model_error(path + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.contains("version") || !j["version"].is_string() || j["version"] != "ert-v1")
    throw model_error(path + ": unsupported model version, expected \"ert-v1\"");

  ErtModel model;
  try {
    const int L = j.at("L").get<int>();
    const int T = j.at("T").get<int>();
    const int K = j.at("K").get<int>();
    const int F = j.at("F").get<int>();
    model.shrinkage = j.at("shrinkage").get<double>();

    const auto& mean = j.at("mean_shape");
    if (int(mean.size()) != L) throw model_error(path + ": mean_shape must carry L points");
    model.mean_shape.frame = ShapeFrame::normalized;
    for (const auto& p : mean)
      model.mean_shape.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});

    const auto& cascade = j.at("cascade");
    if (int(cascade.size()) != T) throw model_error(path + ": cascade must carry T levels");
    const std::size_t want_splits = (std::size_t(1) << F) - 1;
    const std::size_t want_leaves = std::size_t(1) << F;
    for (const auto& level : cascade) {
      if (int(level.size()) != K)
        throw model_error(path + ": every cascade level must carry K trees");
      std::vector<RegressionTree> trees;
      for (const auto& tj : level) {
        RegressionTree tree;
        tree.depth = F;
        const auto& splits = tj.at("splits");
        const auto& leaves = tj.at("leaves");
        if (splits.size() != want_splits || leaves.size() != want_leaves)
          throw model_error(path + ": tree split/leaf counts do not match depth F");
        for (const auto& sj : splits) {
          SplitNode s;
          s.anchor_a = sj.at("a").get<int>();
          s.anchor_b = sj.at("b").get<int>();
          if (s.anchor_a < 0 || s.anchor_a >= L || s.anchor_b < 0 || s.anchor_b >= L)
            throw model_error(path + ": split anchor out of range");
          s.offset_a = {sj.at("ox_a").get<double>(), sj.at("oy_a").get<double>()};
          s.offset_b = {sj.at("ox_b").get<double>(), sj.at("oy_b").get<double>()};
          s.threshold = sj.at("thr").get<double>();
          tree.splits.push_back(s);
        }
        for (const auto& lj : leaves) {
          if (int(lj.size()) != L)
            throw model_error(path + ": leaf delta must carry L points");
          std::vector<Point2> delta;
          for (const auto& p : lj) delta.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
          tree.leaves.push_back(std::move(delta));
        }
        trees.push_back(std::move(tree));
      }
      model.cascade.push_back(std::move(trees));
    }
  } catch (const nlohmann::json::exception& e) {
    throw model_error(path + ": malformed model file (" + e.what() + ")");
  }
  return model;
}

}  // namespace blinkline
