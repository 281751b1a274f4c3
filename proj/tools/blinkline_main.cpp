#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blinkline/blink.hpp"
#include "blinkline/errors.hpp"
#include "blinkline/eval.hpp"
#include "blinkline/pipeline.hpp"

using namespace blinkline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Inputs that parse but make no sense; exit code 2.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
    return;
  }
  std::ofstream f(out);
  if (!f) throw io_error(out + ": cannot open file for writing");
  f << content;
  if (!f) throw io_error(out + ": write failed");
}

json detection_json(const Detection& d) {
  return json{{"box", {d.box.x, d.box.y, d.box.w, d.box.h}},
              {"score", d.score},
              {"scale_index", d.scale_index},
              {"rotation_index", d.rotation_index}};
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw io_error(path + ": invalid JSON (" + e.what() + ")");
  }
  return j;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  const std::string mode = j.value("mode", std::string("pipelined"));
  if (mode == "sequential")
    c.mode = ExecMode::sequential;
  else if (mode == "pipelined")
    c.mode = ExecMode::pipelined;
  else
    throw usage_error("grid entry mode must be \"sequential\" or \"pipelined\"");
  c.batch_size = j.value("batch_size", 16u);
  c.detect_workers = j.value("detect_workers", 1);
  c.landmark_workers = j.value("landmark_workers", 1);
  c.queue_capacity = j.value("queue_capacity", 4u);
  if (c.batch_size < 1 || c.detect_workers < 1 || c.landmark_workers < 1 ||
      c.queue_capacity < 1)
    throw usage_error("grid entry counts must all be >= 1");
  return c;
}

json config_json(const PipelineConfig& c) {
  return json{{"mode", c.mode == ExecMode::sequential ? "sequential" : "pipelined"},
              {"batch_size", c.batch_size},
              {"detect_workers", c.detect_workers},
              {"landmark_workers", c.landmark_workers},
              {"queue_capacity", c.queue_capacity}};
}

std::vector<std::string> pgm_files_sorted(const std::string& dir) {
  if (!fs::is_directory(dir)) throw io_error(dir + ": not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::vector<double>> windows_from_dir(const std::string& dir) {
  std::vector<std::vector<double>> windows;
  for (const std::string& path : pgm_files_sorted(dir)) {
    const GrayImage img = load_pgm(path);
    const FeatureImage feat = extract_features(img);
    if (feat.cells_w < kWindowCells || feat.cells_h < kWindowCells)
      throw std::invalid_argument(path +
                                  ": training image must span at least 10x10 cells (80x80 px)");
    windows.push_back(extract_feature_window(feat, (feat.cells_w - kWindowCells) / 2,
                                             (feat.cells_h - kWindowCells) / 2));
  }
  return windows;
}

int run_app(int argc, char** argv) {
  CLI::App app{"blinkline: HOG face detection, ERT landmarks and eyeblink traces"};
  app.require_subcommand(1);

  // ---- detect ----
  auto* detect_cmd = app.add_subcommand("detect", "Detect faces in one PGM image");
  std::string det_image, det_model, det_out;
  detect_cmd->add_option("--image", det_image, "input PGM image")->required();
  detect_cmd->add_option("--hog-model", det_model, "detector model JSON")->required();
  detect_cmd->add_option("--out", det_out, "output JSON path (default stdout)");
  detect_cmd->callback([&] {
    const DetectorModel model = load_detector_model(det_model);
    const GrayImage img = load_pgm(det_image);
    json out;
    out["image"] = det_image;
    out["detections"] = json::array();
    for (const Detection& d : detect_faces(img, model))
      out["detections"].push_back(detection_json(d));
    write_text(det_out, out.dump(2) + "\n");
  });

  // ---- landmarks ----
  auto* lm_cmd = app.add_subcommand("landmarks", "Detect faces and their landmarks");
  std::string lm_image, lm_hog, lm_ert, lm_out;
  lm_cmd->add_option("--image", lm_image, "input PGM image")->required();
  lm_cmd->add_option("--hog-model", lm_hog, "detector model JSON")->required();
  lm_cmd->add_option("--ert-model", lm_ert, "landmark model JSON")->required();
  lm_cmd->add_option("--out", lm_out, "output JSON path (default stdout)");
  lm_cmd->callback([&] {
    const DetectorModel hog = load_detector_model(lm_hog);
    const ErtModel ert = load_ert_model(lm_ert);
    const GrayImage img = load_pgm(lm_image);
    json out;
    out["image"] = lm_image;
    out["faces"] = json::array();
    for (const Detection& d : detect_faces(img, hog)) {
      const Shape shape = predict_landmarks(img, d.box, ert);
      json pts = json::array();
      for (const Point2& p : shape.points) pts.push_back({p.x, p.y});
      json face = detection_json(d);
      face["landmarks"] = std::move(pts);
      out["faces"].push_back(std::move(face));
    }
    write_text(lm_out, out.dump(2) + "\n");
  });

  // ---- trace ----
  auto* trace_cmd = app.add_subcommand("trace", "Eyelid-closure trace over a frame directory");
  std::string tr_dir, tr_hog, tr_ert, tr_out, tr_blinks_out, tr_mode = "sequential";
  double tr_fps = 0.0;
  std::size_t tr_batch = 16, tr_queue = 4;
  int tr_dw = 2, tr_lw = 1;
  double tr_blink_thr = 0.7;
  std::size_t tr_blink_min = 3;
  trace_cmd->add_option("--frames-dir", tr_dir, "directory of frame_%06d.pgm files")->required();
  trace_cmd->add_option("--hog-model", tr_hog, "detector model JSON")->required();
  trace_cmd->add_option("--ert-model", tr_ert, "landmark model JSON")->required();
  trace_cmd->add_option("--fps", tr_fps, "recording frame rate")
      ->required()
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--mode", tr_mode, "sequential | pipelined")
      ->check(CLI::IsMember({"sequential", "pipelined"}));
  trace_cmd->add_option("--batch", tr_batch, "frames per batch (pipelined)")
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--detect-workers", tr_dw, "detect stage workers")
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--landmark-workers", tr_lw, "landmark stage workers")
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--queue-capacity", tr_queue, "batches per stage queue")
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--out", tr_out, "trace CSV path (default stdout)");
  trace_cmd->add_option("--blinks-out", tr_blinks_out, "blink events JSON path");
  trace_cmd->add_option("--blink-threshold", tr_blink_thr, "closure threshold for events");
  trace_cmd->add_option("--blink-min-frames", tr_blink_min, "minimum frames per event");
  trace_cmd->callback([&] {
    const DetectorModel hog = load_detector_model(tr_hog);
    const ErtModel ert = load_ert_model(tr_ert);
    PipelineConfig cfg;
    cfg.mode = tr_mode == "pipelined" ? ExecMode::pipelined : ExecMode::sequential;
    cfg.batch_size = tr_batch;
    cfg.detect_workers = tr_dw;
    cfg.landmark_workers = tr_lw;
    cfg.queue_capacity = tr_queue;
    const RunOutput out = run(tr_dir, hog, ert, tr_fps, cfg);
    std::ostringstream csv;
    write_csv(out.trace, csv);
    write_text(tr_out, csv.str());
    if (!tr_blinks_out.empty()) {
      json events = json::array();
      for (const BlinkEvent& e : detect_blinks(out.trace, tr_blink_thr, tr_blink_min)) {
        events.push_back({{"onset_frame", e.onset_frame},
                          {"offset_frame", e.offset_frame},
                          {"peak_closure", e.peak_closure}});
      }
      const json blinks{{"closure_threshold", tr_blink_thr},
                        {"min_frames", tr_blink_min},
                        {"events", std::move(events)}};
      write_text(tr_blinks_out, blinks.dump(2) + "\n");
    }
  });

  // ---- bench ----
  auto* bench_cmd = app.add_subcommand("bench", "Throughput benchmark over a frame directory");
  std::string be_dir, be_hog, be_ert, be_grid, be_out;
  bench_cmd->add_option("--frames-dir", be_dir, "directory of frame_%06d.pgm files")->required();
  bench_cmd->add_option("--hog-model", be_hog, "detector model JSON")->required();
  bench_cmd->add_option("--ert-model", be_ert, "landmark model JSON")->required();
  bench_cmd->add_option("--grid", be_grid, "JSON file with pipeline configs")->required();
  bench_cmd->add_option("--out", be_out, "report JSON path (default stdout)");
  bench_cmd->callback([&] {
    const DetectorModel hog = load_detector_model(be_hog);
    const ErtModel ert = load_ert_model(be_ert);
    json grid_json = load_json(be_grid);
    if (grid_json.is_object() && grid_json.contains("configs")) grid_json = grid_json["configs"];
    if (!grid_json.is_array() || grid_json.empty())
      throw usage_error(be_grid + ": grid must be a non-empty JSON array of configs");
    std::vector<PipelineConfig> grid;
    for (const json& j : grid_json) grid.push_back(config_from_json(j));

    json out = json::array();
    for (const BenchReport& r : bench(be_dir, hog, ert, grid)) {
      out.push_back(
          {{"frames", r.frames},
           {"config", config_json(r.config)},
           {"stage_ms",
            {{"decode", r.decode_ms}, {"detect", r.detect_ms}, {"landmark", r.landmark_ms}}},
           {"end_to_end_ms", r.end_to_end_ms},
           {"fps", r.fps},
           {"speedup", r.speedup}});
    }
    write_text(be_out, out.dump(2) + "\n");
  });

  // ---- eval-detect ----
  auto* evd_cmd =
      app.add_subcommand("eval-detect", "Recall/precision of detections vs annotations");
  std::string evd_dets, evd_ann, evd_out;
  double evd_iou = 0.5;
  evd_cmd->add_option("--detections", evd_dets, "detections JSON")->required();
  evd_cmd->add_option("--annotations", evd_ann, "annotation CSV id,x,y,w,h")->required();
  evd_cmd->add_option("--iou", evd_iou, "IoU matching threshold");
  evd_cmd->add_option("--out", evd_out, "metric JSON path (default stdout)");
  evd_cmd->callback([&] {
    json dets_json = load_json(evd_dets);
    if (dets_json.is_object()) {
      // The single-image form emitted by `detect`.
      json wrapped = json::array();
      json entry;
      entry["id"] = dets_json.value("image", std::string(""));
      entry["detections"] = dets_json.at("detections");
      wrapped.push_back(std::move(entry));
      dets_json = std::move(wrapped);
    }
    std::map<std::string, std::vector<Detection>> dets_by_id;
    for (const json& entry : dets_json) {
      const std::string id = entry.at("id").get<std::string>();
      for (const json& dj : entry.at("detections")) {
        Detection d;
        d.box = {dj.at("box").at(0).get<int>(), dj.at("box").at(1).get<int>(),
                 dj.at("box").at(2).get<int>(), dj.at("box").at(3).get<int>()};
        d.score = dj.value("score", 0.0);
        d.scale_index = dj.value("scale_index", 0);
        d.rotation_index = dj.value("rotation_index", 0);
        dets_by_id[id].push_back(d);
      }
    }
    std::map<std::string, std::vector<Box>> truths_by_id;
    for (const AnnotatedBox& a : load_box_annotations(evd_ann))
      truths_by_id[a.id].push_back(a.box);

    DetMatchResult total;
    std::set<std::string> ids;
    for (const auto& [id, v] : dets_by_id) ids.insert(id);
    for (const auto& [id, v] : truths_by_id) ids.insert(id);
    for (const std::string& id : ids) {
      const auto dit = dets_by_id.find(id);
      const auto tit = truths_by_id.find(id);
      const DetMatchResult r =
          match_detections(dit == dets_by_id.end() ? std::vector<Detection>{} : dit->second,
                           tit == truths_by_id.end() ? std::vector<Box>{} : tit->second,
                           evd_iou);
      total.tp += r.tp;
      total.fp += r.fp;
      total.fn += r.fn;
    }
    const json out{{"tp", total.tp},
                   {"fp", total.fp},
                   {"fn", total.fn},
                   {"recall", round_pct(recall_pct(total.tp, total.fn))},
                   {"precision", round_pct(precision_pct(total.tp, total.fp))}};
    write_text(evd_out, out.dump(2) + "\n");
  });

  // ---- eval-landmarks ----
  auto* evl_cmd = app.add_subcommand("eval-landmarks", "Inter-ocular-normalized landmark error");
  std::string evl_pred, evl_truth, evl_out;
  evl_cmd->add_option("--pred", evl_pred, "predictions JSON [{id, points:[[x,y]...]}]")
      ->required();
  evl_cmd->add_option("--truth", evl_truth, "eye-center CSV id,lx,ly,rx,ry")->required();
  evl_cmd->add_option("--out", evl_out, "metric JSON path (default stdout)");
  evl_cmd->callback([&] {
    const json preds = load_json(evl_pred);
    if (!preds.is_array()) throw usage_error(evl_pred + ": predictions must be a JSON array");
    std::map<std::string, EyeAnnotation> truth;
    for (const EyeAnnotation& a : load_eye_annotations(evl_truth)) truth[a.id] = a;
    if (truth.empty()) throw std::invalid_argument(evl_truth + ": no eye annotations");

    json per_image = json::array();
    double total = 0;
    std::size_t count = 0;
    for (const json& entry : preds) {
      const std::string id = entry.at("id").get<std::string>();
      const auto it = truth.find(id);
      if (it == truth.end())
        throw std::invalid_argument("no eye annotation for id \"" + id + "\"");
      Shape pred;
      pred.frame = ShapeFrame::image;
      for (const json& p : entry.at("points"))
        pred.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      const double err = landmark_error_pct(pred, it->second.left, it->second.right);
      per_image.push_back({{"id", id}, {"error_pct", err}});
      total += err;
      ++count;
    }
    if (count == 0) throw std::invalid_argument(evl_pred + ": no predictions");
    const json out{{"mean_error_pct", total / double(count)}, {"per_image", per_image}};
    write_text(evl_out, out.dump(2) + "\n");
  });

  // ---- train-hog ----
  auto* th_cmd = app.add_subcommand("train-hog", "Train a detector filter on PGM windows");
  std::string th_pos, th_neg, th_out;
  int th_epochs = 10;
  double th_lr = 1.0, th_threshold = 0.0, th_ratio = 0.2;
  std::uint64_t th_seed = 0;
  th_cmd->add_option("--positives-dir", th_pos, "directory of positive PGMs")->required();
  th_cmd->add_option("--negatives-dir", th_neg, "directory of negative PGMs")->required();
  th_cmd->add_option("--epochs", th_epochs)->check(CLI::PositiveNumber);
  th_cmd->add_option("--lr", th_lr, "perceptron learning rate")->check(CLI::PositiveNumber);
  th_cmd->add_option("--seed", th_seed);
  th_cmd->add_option("--threshold", th_threshold, "detection threshold stored in the model");
  th_cmd->add_option("--min-face-ratio", th_ratio, "minimum face fraction stored in the model");
  th_cmd->add_option("--out", th_out, "model JSON path")->required();
  th_cmd->callback([&] {
    const auto pos = windows_from_dir(th_pos);
    const auto neg = windows_from_dir(th_neg);
    if (pos.empty()) throw std::invalid_argument(th_pos + ": no positive PGM files");
    if (neg.empty()) throw std::invalid_argument(th_neg + ": no negative PGM files");
    const LinearFilter filter = train_filter(pos, neg, th_epochs, th_lr, th_seed);
    DetectorModel model;
    model.filters.fill(filter);
    model.detection_threshold = th_threshold;
    model.min_face_ratio = th_ratio;
    save_model(model, th_out);
    std::cerr << "trained on " << pos.size() << " positives / " << neg.size()
              << " negatives; filter replicated across the 5 rotation slots\n";
  });

  // ---- train-ert ----
  auto* te_cmd = app.add_subcommand("train-ert", "Train the landmark cascade");
  std::string te_samples, te_config, te_out;
  std::uint64_t te_seed = 0;
  te_cmd->add_option("--samples", te_samples, "manifest JSON [{image, box, target}]")
      ->required();
  te_cmd->add_option("--config", te_config, "config JSON {T,K,F,shrinkage,candidate_splits}")
      ->required();
  auto* te_seed_opt = te_cmd->add_option("--seed", te_seed);
  te_cmd->add_option("--out", te_out, "model JSON path")->required();
  te_cmd->callback([&] {
    const json cfg_json = load_json(te_config);
    ErtTrainConfig config;
    config.levels = cfg_json.value("T", 3);
    config.trees_per_level = cfg_json.value("K", 50);
    config.depth = cfg_json.value("F", 3);
    config.shrinkage = cfg_json.value("shrinkage", 0.1);
    config.candidate_splits = cfg_json.value("candidate_splits", 20);
    config.seed = cfg_json.value("seed", std::uint64_t(0));
    if (te_seed_opt->count() > 0) config.seed = te_seed;
    if (config.levels < 1 || config.trees_per_level < 1 || config.depth < 1 ||
        config.candidate_splits < 1)
      throw usage_error(te_config + ": T, K, F and candidate_splits must all be >= 1");
    if (!(config.shrinkage > 0.0 && config.shrinkage <= 1.0))
      throw usage_error(te_config + ": shrinkage must lie in (0, 1]");

    const json manifest = load_json(te_samples);
    if (!manifest.is_array() || manifest.empty())
      throw std::invalid_argument(te_samples + ": manifest must be a non-empty JSON array");
    std::vector<ErtTrainSample> samples;
    for (const json& entry : manifest) {
      ErtTrainSample s;
      s.image = load_pgm(entry.at("image").get<std::string>());
      s.box = {entry.at("box").at(0).get<int>(), entry.at("box").at(1).get<int>(),
               entry.at("box").at(2).get<int>(), entry.at("box").at(3).get<int>()};
      s.target.frame = ShapeFrame::normalized;
      for (const json& p : entry.at("target"))
        s.target.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      samples.push_back(std::move(s));
    }
    ErtTrainReport report;
    const ErtModel model = train_ert(samples, config, &report);
    save_model(model, te_out);
    std::cerr << "trained " << config.levels << "x" << config.trees_per_level
              << " trees; training rmse " << report.baseline_rmse << " -> "
              << (report.level_rmse.empty() ? report.baseline_rmse : report.level_rmse.back())
              << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_app(argc, argv); }
