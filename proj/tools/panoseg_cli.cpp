// Command line front end: projection, synthetic data generation, training,
// segment translation, panoramic inference and evaluation.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "panoseg/pipeline.hpp"

using namespace panoseg;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct LidarFlags {
  int beams = 64;
  int azimuth_steps = 2048;
  double fov_up_deg = 3.0;
  double fov_down_deg = 25.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--beams", beams, "vertical beam count");
    cmd->add_option("--azimuth-steps", azimuth_steps, "full-circle azimuth bins");
    cmd->add_option("--fov-up", fov_up_deg, "degrees above the horizon");
    cmd->add_option("--fov-down", fov_down_deg, "degrees below the horizon (magnitude)");
  }

  ProjectionConfig projection() const {
    LidarModel model;
    model.beams = beams;
    model.azimuth_steps = azimuth_steps;
    model.fov_up_deg = fov_up_deg;
    model.fov_down_deg = fov_down_deg;
    return model.projection();
  }
};

// PointCloud with shared-id labels read from KITTI-format files.
PointCloud read_labeled_scan(const std::string& scan_path, std::string labels_path) {
  PointCloud bare = read_kitti_scan(scan_path);
  if (labels_path.empty()) {
    // KITTI convention: velodyne/x.bin pairs with labels/x.label; fall back to
    // a sibling file with the .label extension.
    labels_path = scan_path;
    const auto dot = labels_path.rfind('.');
    if (dot != std::string::npos) labels_path = labels_path.substr(0, dot);
    labels_path += ".label";
    if (!std::ifstream(labels_path)) return bare;
  }
  auto raw = read_kitti_labels(labels_path, bare.size());
  std::vector<uint16_t> shared(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) shared[i] = map_semantickitti(raw[i]);
  return PointCloud(bare.points(), std::move(shared));
}

void write_segment_outputs(const std::string& base, const SegmentMap& map) {
  write_ppm(base + ".ppm", colorize(map));
  ImageGray ids(map.width(), map.height());
  std::copy(map.ids().begin(), map.ids().end(), ids.pixels.begin());
  write_pgm(base + "_ids.pgm", ids);
}

void write_range_outputs(const std::string& base, const RangeImage& image) {
  // Range channel normalized over valid pixels.
  double max_range = 1.0;
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      if (image.valid(r, c)) max_range = std::max(max_range, image.at(4, r, c));
    }
  }
  ImageGray gray(image.width(), image.height());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      gray.at(r, c) = image.valid(r, c)
                          ? static_cast<uint8_t>(255.0 * image.at(4, r, c) / max_range)
                          : 0;
    }
  }
  write_pgm(base + "_range.pgm", gray);
}

SegmentMap label_grid_to_map(const std::vector<uint16_t>& grid, int w, int h) {
  return SegmentMap(w, h, std::vector<uint8_t>(grid.begin(), grid.end()));
}

int run_project(const std::string& scan, const std::string& labels, const std::string& out,
                const LidarFlags& lidar) {
  auto cloud = read_labeled_scan(scan, labels);
  auto projected = project_cloud(cloud, lidar.projection());
  write_range_outputs(out, projected.image);
  if (projected.label_grid) {
    auto map = label_grid_to_map(*projected.label_grid, projected.image.width(),
                                 projected.image.height());
    write_segment_outputs(out + "_labels", map);
  }
  std::printf("projected %zu points to %dx%d (%s_range.pgm)\n", cloud.size(),
              projected.image.width(), projected.image.height(), out.c_str());
  return 0;
}

int run_synth(const std::string& config_path, int count, const std::string& out,
              uint64_t seed_override, bool has_seed) {
  auto kv = config_path.empty() ? KeyValues{} : read_key_values(config_path);
  auto cfg = scene_config_from(kv);
  if (auto env = env_seed_override()) cfg.seed = *env;
  if (has_seed) cfg.seed = seed_override;
  auto dataset = synth_dataset(cfg, cfg.seed, count);
  save_dataset(out, dataset);
  std::printf("wrote %d samples under %s (base seed %llu)\n", count, out.c_str(),
              static_cast<unsigned long long>(cfg.seed));
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt) {
  auto kv = config_path.empty() ? KeyValues{} : read_key_values(config_path);
  auto dataset = load_dataset(data_dir);
  auto cfg = trainer_config_from(kv, dataset.config);
  if (auto env = env_seed_override()) cfg.train.seed = *env;
  Trainer trainer(cfg, dataset);
  std::ofstream log(out_ckpt + ".loss.csv");
  log << "step,d_loss,g_adv,lovasz,gp\n";
  trainer.attach_loss_log(&log);
  for (int s = 0; s < cfg.train.max_steps; ++s) {
    auto report = trainer.step();
    if ((s + 1) % 50 == 0 || s + 1 == cfg.train.max_steps) {
      std::printf("step %d/%d  d=%.4f adv=%.4f lovasz=%.4f gp=%.4f\n", s + 1,
                  cfg.train.max_steps, static_cast<double>(report.d_loss),
                  static_cast<double>(report.g_adv_loss),
                  static_cast<double>(report.lovasz_loss), static_cast<double>(report.gp_term));
    }
  }
  save_models(out_ckpt, trainer.models());
  std::printf("checkpoint written to %s (loss log %s.loss.csv)\n", out_ckpt.c_str(),
              out_ckpt.c_str());
  return 0;
}

int run_translate(const std::string& ckpt, const std::string& scan, const std::string& labels,
                  const std::string& out, const LidarFlags& lidar, double center_deg,
                  bool panorama) {
  auto models = load_models<float>(ckpt);
  auto cloud = read_labeled_scan(scan, labels);
  if (!cloud.has_labels()) {
    throw Error("unmapped label", "translation needs a .label file for the condition input");
  }
  const auto proj = lidar.projection();
  auto projected = project_cloud(cloud, proj);
  auto& g = models.generator;

  SegmentMap result;
  if (panorama) {
    auto seg = label_grid_to_map(*projected.label_grid, proj.width, proj.height);
    result = render_panorama(g, projected.image, seg);
  } else {
    const double hfov = 2.0 * kPi * g.config().in_width / proj.width;
    const auto span = crop_columns(proj.width, center_deg * kPi / 180.0, hfov);
    auto crop = crop_to_camera_fov(projected.image, center_deg * kPi / 180.0, hfov);
    auto labels_crop = crop_label_grid(*projected.label_grid, proj.height, proj.width, span);
    result = translate(g, crop, label_grid_to_map(labels_crop, span.width, proj.height));
  }
  write_segment_outputs(out, result);
  std::printf("%s written to %s.ppm (%dx%d)\n", panorama ? "panorama" : "translation",
              out.c_str(), result.width(), result.height());
  return 0;
}

int run_evaluate(const std::string& ckpt, const std::string& data_dir,
                 const std::string& report_path) {
  auto models = load_models<float>(ckpt);
  auto dataset = load_dataset(data_dir);
  auto report = evaluate(dataset.samples, models.generator);
  write_report_csv(report_path, report);
  std::cout << format_report_table(report);
  std::printf("report written to %s\n", report_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR range-view to camera segment-map translation"};
  app.require_subcommand(1);

  // project
  auto* project_cmd = app.add_subcommand("project", "project a scan onto the range view");
  std::string scan_path, labels_path, out_path;
  LidarFlags project_lidar;
  project_cmd->add_option("scan", scan_path, "KITTI-format .bin scan")->required();
  project_cmd->add_option("--labels", labels_path, "matching .label file");
  project_cmd->add_option("--out", out_path, "output image base path")->required();
  project_lidar.attach(project_cmd);

  // synth-data
  auto* synth_cmd = app.add_subcommand("synth-data", "generate paired synthetic samples");
  std::string synth_config, synth_out;
  int synth_count = 10;
  uint64_t synth_seed = 0;
  synth_cmd->add_option("--config", synth_config, "scene config (key = value)");
  synth_cmd->add_option("--count", synth_count, "number of samples")->required();
  synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();
  auto* seed_opt = synth_cmd->add_option("--seed", synth_seed, "base seed override");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the translator on a dataset");
  std::string train_config, train_data, train_ckpt;
  train_cmd->add_option("--config", train_config, "training config (key = value)");
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_ckpt, "checkpoint output path")->required();

  // translate
  auto* translate_cmd = app.add_subcommand("translate", "translate one crop to a segment map");
  std::string tr_ckpt, tr_scan, tr_labels, tr_out;
  double tr_center = 0.0;
  LidarFlags tr_lidar;
  translate_cmd->add_option("--ckpt", tr_ckpt, "checkpoint path")->required();
  translate_cmd->add_option("--scan", tr_scan, "KITTI-format .bin scan")->required();
  translate_cmd->add_option("--labels", tr_labels, "matching .label file");
  translate_cmd->add_option("--out", tr_out, "output image base path")->required();
  translate_cmd->add_option("--center-deg", tr_center, "crop center azimuth in degrees");
  tr_lidar.attach(translate_cmd);

  // panorama
  auto* pano_cmd = app.add_subcommand("panorama", "render a full-circle segment panorama");
  std::string pn_ckpt, pn_scan, pn_labels, pn_out;
  LidarFlags pn_lidar;
  pano_cmd->add_option("--ckpt", pn_ckpt, "checkpoint path")->required();
  pano_cmd->add_option("--scan", pn_scan, "KITTI-format .bin scan")->required();
  pano_cmd->add_option("--labels", pn_labels, "matching .label file");
  pano_cmd->add_option("--out", pn_out, "output image base path")->required();
  pn_lidar.attach(pano_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "run the metric suite on a dataset");
  std::string ev_ckpt, ev_data, ev_report;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
  eval_cmd->add_option("--report", ev_report, "CSV report output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (project_cmd->parsed()) return run_project(scan_path, labels_path, out_path, project_lidar);
    if (synth_cmd->parsed()) {
      return run_synth(synth_config, synth_count, synth_out, synth_seed, seed_opt->count() > 0);
    }
    if (train_cmd->parsed()) return run_train(train_config, train_data, train_ckpt);
    if (translate_cmd->parsed()) {
      return run_translate(tr_ckpt, tr_scan, tr_labels, tr_out, tr_lidar, tr_center, false);
    }
    if (pano_cmd->parsed()) {
      return run_translate(pn_ckpt, pn_scan, pn_labels, pn_out, pn_lidar, 0.0, true);
    }
    if (eval_cmd->parsed()) return run_evaluate(ev_ckpt, ev_data, ev_report);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
