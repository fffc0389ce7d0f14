#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "holoslide/image_io.hpp"
#include "holoslide/metrics.hpp"
#include "holoslide/model.hpp"
#include "holoslide/stitcher.hpp"
#include "holoslide/synth.hpp"

namespace fs = std::filesystem;
using namespace holoslide;

namespace {

constexpr const char* kVersion = "0.1.0";

std::pair<std::uint64_t, std::uint64_t> parse_dims(const std::string& s, char sep = 'x') {
  const auto pos = s.find(sep);
  if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
    throw CLI::ValidationError("expected <width>" + std::string(1, sep) + "<height>: " + s);
  return {std::stoull(s.substr(0, pos)), std::stoull(s.substr(pos + 1))};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) fail(Errc::IoError, "write failed on " + path.string());
}

struct ModelFlags {
  std::uint32_t f = 16, d_z = 256, codebook = 1024, d_model = 256, heads = 4;
  std::uint32_t blocks1 = 2, blocks2 = 2, classes = 1, max_grid = 512;
  std::vector<std::uint32_t> scales{1, 2, 4};
  std::string attention = "relu", tokenizer = "vq";

  void attach(CLI::App* cmd) {
    cmd->add_option("--f", f, "Patchify factor (pixels per token side)");
    cmd->add_option("--d-z", d_z, "Code dimension");
    cmd->add_option("--codebook", codebook, "Codebook entry count");
    cmd->add_option("--d-model", d_model, "Backbone width");
    cmd->add_option("--heads", heads, "Attention heads");
    cmd->add_option("--scales", scales, "Attention aggregation scales");
    cmd->add_option("--blocks1", blocks1, "Stage-1 block count");
    cmd->add_option("--blocks2", blocks2, "Stage-2 block count");
    cmd->add_option("--classes", classes, "Independent binary output heads");
    cmd->add_option("--max-grid", max_grid, "Positional embedding capacity per axis");
    cmd->add_option("--attention", attention, "Attention kind: relu|mhsa")
        ->check(CLI::IsMember({"relu", "mhsa"}));
    cmd->add_option("--tokenizer", tokenizer, "Tokenizer: vq|linear")
        ->check(CLI::IsMember({"vq", "linear"}));
  }

  ModelConfig to_config(std::uint64_t seed) const {
    ModelConfig c;
    c.f = f;
    c.d_z = d_z;
    c.codebook_size = codebook;
    c.d_model = d_model;
    c.heads = heads;
    c.scales = scales;
    c.blocks_stage1 = blocks1;
    c.blocks_stage2 = blocks2;
    c.classes = classes;
    c.max_grid = max_grid;
    c.attention = attention == "relu" ? attn::AttentionKind::kRelu : attn::AttentionKind::kMhsa;
    c.tokenizer = tokenizer == "vq" ? TokenizerKind::kVq : TokenizerKind::kLinear;
    c.seed = seed;
    return c;
  }
};

std::vector<std::pair<std::string, fs::path>> list_masks(const fs::path& p) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      const std::string ext = e.path().extension().string();
      if (ext == ".hhsm" || ext == ".hhfg" || ext == ".mask" || ext == ".fg")
        out.emplace_back(e.path().stem().string(), e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) fail(Errc::InvalidInput, "no mask files in " + p.string());
  } else {
    out.emplace_back(p.stem().string(), p);
  }
  return out;
}

TileModel model_adapter(const std::shared_ptr<SegModel<float>>& model) {
  return [model](const RgbRaster& tile) { return model->forward_probs(tile); };
}

int run_cli(int argc, char** argv) {
  CLI::App app{"holoslide: gigapixel whole-slide segmentation at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // import
  auto* c_import = app.add_subcommand("import", "Build an HHPY pyramid from a PPM or PNG image");
  std::string in_path, out_path;
  std::uint32_t tile_size = 512;
  c_import->add_option("--input", in_path, "Source image (.ppm P6 or .png)")->required();
  c_import->add_option("--output", out_path, "Output pyramid (.hhpy)")->required();
  c_import->add_option("--tile-size", tile_size, "Tile size, power of two in [64,4096]");

  // mask
  auto* c_mask = app.add_subcommand("mask", "Compute the foreground mask of a pyramid level");
  std::string m_input, m_output;
  std::uint32_t m_level = 1;
  c_mask->add_option("--input", m_input, "Pyramid (.hhpy)")->required();
  c_mask->add_option("--level", m_level, "Pyramid level to threshold");
  c_mask->add_option("--output", m_output, "Output mask (.fg, HHFG run-length)")->required();

  // sample
  auto* c_sample = app.add_subcommand("sample", "Draw random foreground ROIs from a mask");
  std::string s_mask, s_out, s_roi = "3840x2160";
  std::uint64_t s_count = 1, s_seed = 0;
  double s_min_fg = 0.5;
  c_sample->add_option("--mask", s_mask, "Foreground mask (.fg)")->required();
  c_sample->add_option("--count", s_count, "Number of ROIs to draw");
  c_sample->add_option("--roi", s_roi, "ROI size WxH");
  c_sample->add_option("--seed", s_seed, "Sampler seed");
  c_sample->add_option("--min-fg", s_min_fg, "Minimum foreground fraction in (0,1]");
  c_sample->add_option("--out", s_out, "Output JSON array of tile refs")->required();

  // synth
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic slide with exact ground truth");
  std::string sy_out, sy_gt, sy_size = "4096x4096", sy_radius = "48:128";
  std::uint32_t sy_disks = 24, sy_tile = 512, sy_blobs = 2;
  std::uint64_t sy_seed = 0;
  std::uint32_t sy_bg = 245, sy_tissue = 140, sy_target = 90;
  c_synth->add_option("--out", sy_out, "Output pyramid (.hhpy)")->required();
  c_synth->add_option("--gt", sy_gt, "Output ground-truth mask (.hhsm)")->required();
  c_synth->add_option("--size", sy_size, "Slide size WxH");
  c_synth->add_option("--disks", sy_disks, "Target disk count");
  c_synth->add_option("--radius", sy_radius, "Disk radius range min:max");
  c_synth->add_option("--blobs", sy_blobs, "Tissue blob count");
  c_synth->add_option("--background", sy_bg, "Background luminance");
  c_synth->add_option("--tissue", sy_tissue, "Tissue luminance");
  c_synth->add_option("--target", sy_target, "Target disk luminance");
  c_synth->add_option("--seed", sy_seed, "Generator seed");
  c_synth->add_option("--tile-size", sy_tile, "Pyramid tile size");

  // train
  auto* c_train = app.add_subcommand("train", "Train the segmentation model on slide/gt pairs");
  std::string t_data, t_out, t_roi = "3840x2160", t_sampler = "rand";
  std::uint64_t t_steps = 1000, t_seed = 0;
  std::uint32_t t_level = 0, t_batch = 1;
  double t_lr = 3e-4, t_min_fg = 0.5, t_loss_mix = 0.5, t_tile_min_fg = 0.01;
  bool t_freeze = false;
  ModelFlags t_model;
  c_train->add_option("--data", t_data, "Directory of <name>.hhpy with <name>.gt.hhsm masks")
      ->required();
  c_train->add_option("--roi", t_roi, "Training ROI size WxH");
  c_train->add_option("--steps", t_steps, "Optimizer steps");
  c_train->add_option("--seed", t_seed, "Training seed");
  c_train->add_option("--out", t_out, "Output checkpoint (.hhck)")->required();
  c_train->add_option("--level", t_level, "Pyramid level ROIs are read from");
  c_train->add_option("--lr", t_lr, "Adam learning rate");
  c_train->add_option("--batch", t_batch, "ROIs per optimizer step");
  c_train->add_option("--min-fg", t_min_fg, "Minimum ROI foreground fraction (rand sampler)");
  c_train->add_option("--loss-mix", t_loss_mix, "Dice weight lambda in the Dice+BCE loss");
  c_train->add_flag("--freeze-tokenizer", t_freeze, "Do not update encoder/codebook");
  c_train->add_option("--sampler", t_sampler, "ROI source: rand|tile")
      ->check(CLI::IsMember({"rand", "tile"}));
  c_train->add_option("--tile-min-fg", t_tile_min_fg,
                      "Foreground fraction keeping a tile in the fixed grid");
  t_model.attach(c_train);

  // infer
  auto* c_infer = app.add_subcommand("infer", "Segment a whole slide and write the mask");
  std::string i_input, i_model, i_out, i_tile = "3840x2160";
  std::uint32_t i_level = 0, i_workers = std::max(1u, std::thread::hardware_concurrency());
  std::int64_t i_fg_level = -1;
  std::uint64_t i_overlap = 0;
  double i_threshold = 0.5, i_min_fg = 0.01;
  c_infer->add_option("--input", i_input, "Pyramid (.hhpy)")->required();
  c_infer->add_option("--level", i_level, "Inference level");
  c_infer->add_option("--model", i_model, "Checkpoint (.hhck)")->required();
  c_infer->add_option("--tile", i_tile, "Tile size WxH");
  c_infer->add_option("--overlap", i_overlap, "Tile overlap in pixels");
  c_infer->add_option("--out", i_out, "Output mask (.mask, HHSM run-length)")->required();
  c_infer->add_option("--threshold", i_threshold, "Binarization threshold");
  c_infer->add_option("--min-fg", i_min_fg, "Skip tiles below this foreground fraction");
  c_infer->add_option("--fg-level", i_fg_level, "Foreground mask level (-1: inference level)");
  c_infer->add_option("--workers", i_workers, "Concurrent tile workers");

  // eval
  auto* c_eval = app.add_subcommand("eval", "Dice report over mask pairs");
  std::string e_pred, e_gt, e_mode = "patch", e_out, e_vs;
  c_eval->add_option("--pred", e_pred, "Predicted mask file or directory")->required();
  c_eval->add_option("--gt", e_gt, "Ground-truth mask file or directory")->required();
  c_eval->add_option("--mode", e_mode, "patch|wsi")->check(CLI::IsMember({"patch", "wsi"}));
  c_eval->add_option("--out", e_out, "Output JSON report")->required();
  c_eval->add_option("--vs", e_vs, "Other report for the Wilcoxon signed-rank comparison");

  // export-overlay
  auto* c_ov = app.add_subcommand("export-overlay", "Render a mask over the slide as PPM");
  std::string o_mask, o_input, o_out;
  std::uint32_t o_level = 3;
  c_ov->add_option("--mask", o_mask, "Mask (.mask/.hhsm/.fg)")->required();
  c_ov->add_option("--input", o_input, "Pyramid (.hhpy)")->required();
  c_ov->add_option("--level", o_level, "Output level");
  c_ov->add_option("--out", o_out, "Output PPM")->required();

  // version
  auto* c_version = app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  if (c_version->parsed()) {
    std::cout << kVersion << "\n";
    return 0;
  }

  if (c_import->parsed()) {
    RgbRaster src = load_image(in_path);
    PyramidImage::import_image(src, tile_size, out_path);
    std::cerr << "imported " << src.width << "x" << src.height << " -> " << out_path << "\n";
    return 0;
  }

  if (c_mask->parsed()) {
    PyramidImage img = PyramidImage::open(m_input);
    ForegroundMask fg = compute_foreground(img, m_level);
    if (fg.degenerate)
      std::cerr << "warning: degenerate histogram, mask is all background\n";
    write_mask(m_output, "HHFG", RleMask::from_grid(fg.level, fg.bits));
    std::cerr << "mask level " << m_level << " threshold " << int(fg.threshold_used)
              << " foreground " << fg.bits.count() << "/" << fg.width() * fg.height() << "\n";
    return 0;
  }

  if (c_sample->parsed()) {
    RleMask rle = read_mask(s_mask);
    ForegroundMask fg;
    fg.level = rle.level;
    fg.bits = rle.to_grid();
    const auto [rw, rh] = parse_dims(s_roi);
    SamplerConfig cfg{rw, rh, s_min_fg, s_seed};
    RoiSampler sampler(fg, cfg);
    nlohmann::json arr = nlohmann::json::array();
    for (std::uint64_t i = 0; i < s_count; ++i) {
      const TileRef t = sampler.sample(i);
      arr.push_back({{"level", t.level},
                     {"x", t.x},
                     {"y", t.y},
                     {"width", t.width},
                     {"height", t.height}});
    }
    write_json(s_out, arr);
    return 0;
  }

  if (c_synth->parsed()) {
    SynthSlideSpec spec;
    std::tie(spec.width, spec.height) = parse_dims(sy_size);
    spec.disk_count = sy_disks;
    const auto [rmin, rmax] = parse_dims(sy_radius, ':');
    spec.disk_radius_min = std::uint32_t(rmin);
    spec.disk_radius_max = std::uint32_t(rmax);
    spec.background_luminance = std::uint8_t(sy_bg);
    spec.tissue_luminance = std::uint8_t(sy_tissue);
    spec.target_luminance = std::uint8_t(sy_target);
    spec.tissue_blobs = sy_blobs;
    spec.seed = sy_seed;
    SynthSlide slide = generate_synth(spec);
    PyramidImage::import_image(slide.pixels, sy_tile, sy_out);
    write_mask(sy_gt, "HHSM", RleMask::from_grid(0, slide.gt));
    std::cerr << "synth " << spec.width << "x" << spec.height << ": " << slide.disk_pixels
              << " target px in " << slide.tissue_pixels << " tissue px\n";
    return 0;
  }

  if (c_train->parsed()) {
    std::vector<TrainSlide> slides;
    std::vector<fs::path> pyramids;
    for (const auto& e : fs::directory_iterator(t_data))
      if (e.path().extension() == ".hhpy") pyramids.push_back(e.path());
    std::sort(pyramids.begin(), pyramids.end());
    if (pyramids.empty()) fail(Errc::InvalidInput, "no .hhpy slides in " + t_data);
    for (const fs::path& p : pyramids) {
      TrainSlide s;
      s.image = PyramidImage::open(p);
      for (std::uint32_t c = 0; c < t_model.classes; ++c) {
        fs::path gt = p;
        gt.replace_extension(t_model.classes == 1 ? ".gt.hhsm"
                                                  : (".gt" + std::to_string(c) + ".hhsm"));
        if (!fs::exists(gt)) fail(Errc::InvalidInput, "missing gt mask " + gt.string());
        s.gt.push_back(read_mask(gt).to_grid());
      }
      slides.push_back(std::move(s));
    }
    SegModel<float> model(t_model.to_config(t_seed));
    TrainConfig tc;
    tc.lr = t_lr;
    tc.steps = t_steps;
    tc.batch = t_batch;
    tc.seed = t_seed;
    tc.loss_mix = t_loss_mix;
    tc.freeze_tokenizer = t_freeze;
    tc.sampler = t_sampler == "rand" ? TrainConfig::Sampler::kRand : TrainConfig::Sampler::kTile;
    tc.tile_min_fg = t_tile_min_fg;
    tc.level = t_level;
    const auto [rw, rh] = parse_dims(t_roi);
    SamplerConfig sc{rw, rh, t_min_fg, t_seed};
    TrainResult res = train(model, slides, tc, sc);
    save_checkpoint(t_out, model);
    if (res.diverged)
      fail(Errc::TrainingDiverged, "loss diverged at step " + std::to_string(res.steps_completed) +
                                       "; last-good checkpoint written to " + t_out);
    if (!res.loss_log.empty())
      std::cerr << "trained " << res.steps_completed << " steps, final loss "
                << res.loss_log.back() << "\n";
    return 0;
  }

  if (c_infer->parsed()) {
    PyramidImage img = PyramidImage::open(i_input);
    auto model = std::make_shared<SegModel<float>>(load_checkpoint(i_model));
    InferConfig cfg;
    std::tie(cfg.tile_w, cfg.tile_h) = parse_dims(i_tile);
    cfg.overlap = i_overlap;
    cfg.min_fg_fraction = i_min_fg;
    cfg.threshold = i_threshold;
    cfg.fg_level = i_fg_level < 0 ? std::uint32_t(-1) : std::uint32_t(i_fg_level);
    cfg.workers = i_workers;
    cfg.classes = model->config().classes;
    std::vector<WsiMask> masks = infer_wsi(img, i_level, model_adapter(model), cfg);
    for (std::uint32_t c = 0; c < cfg.classes; ++c) {
      fs::path out = i_out;
      if (c > 0) out = out.string() + ".c" + std::to_string(c);
      write_mask(out, "HHSM", RleMask::from_grid(masks[c].level, masks[c].bits));
    }
    std::cerr << "inferred level " << i_level << " -> " << i_out << "\n";
    return 0;
  }

  if (c_eval->parsed()) {
    const auto preds = list_masks(e_pred);
    const auto gts = list_masks(e_gt);
    std::vector<DiceReport::Item> items;
    for (const auto& [id, path] : preds) {
      const fs::path* gt_path = nullptr;
      for (const auto& [gid, gpath] : gts)
        if (gid == id || gts.size() == 1) {
          gt_path = &gpath;
          break;
        }
      if (!gt_path) fail(Errc::InvalidInput, "no gt mask for id " + id);
      RleMask p = read_mask(path), g = read_mask(*gt_path);
      if (e_mode == "patch") g.level = p.level;  // patches stand alone
      items.push_back({id, wsi_dice(p, g)});
    }
    DiceReport rep = make_report(
        e_mode == "patch" ? DiceReport::Mode::kPatch : DiceReport::Mode::kWsi, std::move(items));
    nlohmann::json j{{"mode", e_mode}, {"mean", rep.mean}};
    for (const auto& it : rep.per_item)
      j["items"].push_back({{"id", it.id}, {"dice", it.dice}});
    if (!e_vs.empty()) {
      std::ifstream in(e_vs);
      if (!in) fail(Errc::IoError, "cannot open " + e_vs);
      nlohmann::json other = nlohmann::json::parse(in, nullptr, true);
      std::map<std::string, double> other_dice;
      for (const auto& it : other.at("items"))
        other_dice[it.at("id")] = it.at("dice");
      std::vector<std::pair<double, double>> pairs;
      for (const auto& it : rep.per_item) {
        auto f = other_dice.find(it.id);
        if (f != other_dice.end()) pairs.emplace_back(it.dice, f->second);
      }
      if (pairs.empty()) fail(Errc::InvalidInput, "no paired ids with " + e_vs);
      WilcoxonResult w = wilcoxon_signed_rank(pairs);
      j["wilcoxon"] = {{"vs", e_vs},
                       {"p", w.p_value},
                       {"w", w.w_statistic},
                       {"n_effective", w.n_effective},
                       {"method", w.method == WilcoxonResult::Method::kExact ? "exact"
                                                                             : "normal-approx"},
                       {"degenerate", w.degenerate}};
    }
    write_json(e_out, j);
    std::cerr << "mean dice " << rep.mean << " over " << rep.per_item.size() << " items\n";
    return 0;
  }

  if (c_ov->parsed()) {
    PyramidImage img = PyramidImage::open(o_input);
    RleMask rle = read_mask(o_mask);
    WsiMask mask{rle.level, rle.to_grid()};
    RgbRaster overlay = export_overlay(img, mask, o_level);
    write_ppm(o_out, overlay);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
