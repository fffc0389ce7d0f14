#include "holoslide/model.hpp"

#include <bit>
#include <fstream>

#include "json.hpp"

namespace holoslide {

void ModelConfig::validate() const {
  if (f < 2 || (f & (f - 1)) != 0) fail(Errc::ConfigError, "patchify factor must be a power of two >= 2");
  if (d_z == 0 || d_model == 0 || classes == 0) fail(Errc::ConfigError, "zero-sized model dims");
  if (d_model % heads != 0 || (2 * d_model) % heads != 0)
    fail(Errc::ConfigError, "d_model must be divisible by heads");
  if (codebook_size < 2) fail(Errc::InvalidCodebook, "codebook needs at least 2 entries");
  if (scales.empty()) fail(Errc::ConfigError, "scales must be nonempty");
  if (tokenizer == TokenizerKind::kLinear && d_z != d_model)
    fail(Errc::ConfigError, "linear tokenizer requires d_z == d_model");
}

template <typename T>
void SegModel<T>::init_params() {
  cfg_.validate();
  const std::uint64_t seed = cfg_.seed;

  vq::PatchEncoder<T> enc = vq::make_encoder<T>(cfg_.f, cfg_.d_z, seed);
  params_.add("enc.w", std::move(enc.weight));
  params_.add("enc.b", std::move(enc.bias));
  vq::PatchDecoder<T> dec = vq::make_decoder<T>(cfg_.f, cfg_.d_z, seed);
  params_.add("dec.w", std::move(dec.weight));
  params_.add("dec.b", std::move(dec.bias));
  vq::Codebook<T> cb = vq::make_codebook<T>(cfg_.codebook_size, cfg_.d_z, seed);
  params_.add("codebook", std::move(cb.entries));

  auto normal_init = [&](const std::string& name, std::vector<std::size_t> shape, T sd) {
    Tensor<T> t(std::move(shape));
    const CounterRng rng(seed, stream_of(name.c_str()));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.normal(i)) * sd;
    params_.add(name, std::move(t));
  };

  normal_init("embed", {cfg_.codebook_size, cfg_.d_model}, T(0.02));
  normal_init("pos.row", {cfg_.max_grid, cfg_.d_model}, T(0.02));
  normal_init("pos.col", {cfg_.max_grid, cfg_.d_model}, T(0.02));

  for (int stage = 1; stage <= 2; ++stage) {
    const attn::AttentionConfig acfg = cfg_.stage_cfg(stage);
    const std::uint32_t blocks = stage == 1 ? cfg_.blocks_stage1 : cfg_.blocks_stage2;
    for (std::uint32_t b = 0; b < blocks; ++b) {
      const std::string prefix =
          "stage" + std::to_string(stage) + ".block" + std::to_string(b);
      attn::AttentionBlockParams<T> p =
          attn::make_block<T>(acfg, acfg.d_model, seed, prefix);
      params_.add(prefix + ".wq", std::move(p.wq));
      params_.add(prefix + ".wk", std::move(p.wk));
      params_.add(prefix + ".wv", std::move(p.wv));
      params_.add(prefix + ".wo", std::move(p.wo));
      params_.add(prefix + ".scale_w", std::move(p.scale_w));
      params_.add(prefix + ".ln1_g", std::move(p.ln1_g));
      params_.add(prefix + ".ln1_b", std::move(p.ln1_b));
      params_.add(prefix + ".ln2_g", std::move(p.ln2_g));
      params_.add(prefix + ".ln2_b", std::move(p.ln2_b));
      params_.add(prefix + ".ffn_w1", std::move(p.ffn_w1));
      params_.add(prefix + ".ffn_b1", std::move(p.ffn_b1));
      params_.add(prefix + ".ffn_w2", std::move(p.ffn_w2));
      params_.add(prefix + ".ffn_b2", std::move(p.ffn_b2));
    }
  }

  normal_init("down.w", {4 * std::size_t(cfg_.d_model), 2 * std::size_t(cfg_.d_model)},
              std::sqrt(T(2) / T(4 * cfg_.d_model)));
  params_.add("down.b", Tensor<T>({2 * std::size_t(cfg_.d_model)}));
  const std::size_t head_out = std::size_t(cfg_.classes) * (2 * cfg_.f) * (2 * cfg_.f);
  normal_init("head.w", {2 * std::size_t(cfg_.d_model), head_out},
              std::sqrt(T(2) / T(2 * cfg_.d_model)));
  params_.add("head.b", Tensor<T>({head_out}));
}

template class SegModel<float>;
template class SegModel<double>;

namespace {

bool is_tokenizer_param(const std::string& name) {
  return name == "enc.w" || name == "enc.b" || name == "dec.w" || name == "dec.b" ||
         name == "codebook";
}

void adam_step(ParamStore<float>& params,
               const std::map<std::string, Tensor<float>>& grads, double lr,
               std::uint64_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, double(t));
  const double c2 = 1.0 - std::pow(b2, double(t));
  for (auto& e : params.entries) {
    if (!e.trainable) continue;
    auto it = grads.find(e.name);
    if (it == grads.end()) continue;
    const Tensor<float>& g = it->second;
    if (!e.m.defined()) {
      e.m = Tensor<float>(e.value.shape());
      e.v = Tensor<float>(e.value.shape());
    }
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      e.m[i] = float(b1 * e.m[i] + (1.0 - b1) * g[i]);
      e.v[i] = float(b2 * e.v[i] + (1.0 - b2) * double(g[i]) * g[i]);
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      e.value[i] -= float(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace

TrainResult train(SegModel<float>& model, const std::vector<TrainSlide>& slides,
                  const TrainConfig& tcfg, const SamplerConfig& scfg) {
  if (slides.empty()) fail(Errc::InvalidInput, "no training slides");
  const std::uint32_t classes = model.config().classes;
  for (const TrainSlide& s : slides) {
    if (s.gt.size() != classes) fail(Errc::InvalidInput, "slide gt class count mismatch");
    const auto [w0, h0] = s.image.level_dims(0);
    for (const BitGrid& g : s.gt)
      if (g.width() != w0 || g.height() != h0)
        fail(Errc::InvalidInput, "gt mask dims must match level 0");
  }
  if (tcfg.level >= slides[0].image.level_count())
    fail(Errc::BoundsError, "training level out of range");

  for (auto& e : model.params().entries)
    e.trainable = !(tcfg.freeze_tokenizer && is_tokenizer_param(e.name));

  // per-slide machinery at the training level: foreground mask (for the rand
  // sampler), nearest-neighbor downsampled gt, and the fixed tile grid
  struct SlideState {
    ForegroundMask fg;
    std::vector<BitGrid> gt;  // at tcfg.level
    std::unique_ptr<RoiSampler> sampler;
    SamplerConfig cfg;
  };
  std::vector<SlideState> st(slides.size());
  std::vector<std::pair<std::size_t, TileRef>> tile_grid;  // (slide, tile)
  for (std::size_t i = 0; i < slides.size(); ++i) {
    const auto [lw, lh] = slides[i].image.level_dims(tcfg.level);
    if (tcfg.level == 0) {
      st[i].gt = slides[i].gt;
    } else {
      for (const BitGrid& g0 : slides[i].gt) {
        BitGrid g(lw, lh);
        for (std::uint64_t y = 0; y < lh; ++y)
          for (std::uint64_t x = 0; x < lw; ++x)
            if (g0.get(x << tcfg.level, y << tcfg.level)) g.set(x, y, true);
        st[i].gt.push_back(std::move(g));
      }
    }
    st[i].fg = compute_foreground(slides[i].image, tcfg.level);
    st[i].cfg = scfg;
    st[i].cfg.seed = splitmix64(scfg.seed ^ (0x51ed2700b1b1e187ull + i));
    if (tcfg.sampler == TrainConfig::Sampler::kRand) {
      st[i].sampler = std::make_unique<RoiSampler>(st[i].fg, st[i].cfg);
    } else {
      auto plan = tile_plan(tcfg.level, lw, lh, scfg.roi_width, scfg.roi_height, 0);
      auto kept = foreground_tiles(plan, st[i].fg, tcfg.tile_min_fg);
      for (const TileRef& t : kept) tile_grid.emplace_back(i, t);
    }
  }
  if (tcfg.sampler == TrainConfig::Sampler::kTile && tile_grid.empty())
    fail(Errc::NoForeground, "tile sampler found no foreground tiles");

  const CounterRng slide_rng(tcfg.seed, stream_of("train.slide"));
  TrainResult res;

  for (std::uint64_t step = 0; step < tcfg.steps; ++step) {
    std::map<std::string, Tensor<float>> grads;
    float loss_acc = 0.0f;
    bool bad = false;
    for (std::uint32_t bi = 0; bi < tcfg.batch && !bad; ++bi) {
      const std::uint64_t draw = step * tcfg.batch + bi;
      std::size_t si;
      TileRef roi;
      if (tcfg.sampler == TrainConfig::Sampler::kRand) {
        si = std::size_t(slide_rng.below(draw, slides.size()));
        roi = st[si].sampler->sample(draw);
      } else {
        const auto& [s, t] = tile_grid[std::size_t(draw % tile_grid.size())];
        si = s;
        roi = t;
      }
      RgbRaster patch = slides[si].image.read_region(
          {tcfg.level, roi.x, roi.y, roi.width, roi.height});
      std::vector<const BitGrid*> gtp;
      for (const BitGrid& g : st[si].gt) gtp.push_back(&g);
      Tensor<float> gt = gt_tensor<float>(gtp, roi.x, roi.y, roi.width, roi.height);

      Tape<float> tape;
      TapeCtx<float> ctx;
      ctx.tape = &tape;
      ctx.params = &model.params();
      ctx.train_tokenizer = !tcfg.freeze_tokenizer;
      auto fwd = model.compose(ctx, patch);
      const int gt_ref = ctx.constant(std::move(gt));
      const int loss = ctx.dice_bce(fwd.probs, gt_ref, float(tcfg.loss_mix));
      const float loss_val = tape.val(loss)[0];
      if (!std::isfinite(loss_val)) {
        bad = true;
        break;
      }
      loss_acc += loss_val;
      tape.backward(loss);
      for (auto& [name, leaf] : ctx.param_leaves) {
        Tensor<float> g = ctx.param_grad(name);
        auto it = grads.find(name);
        if (it == grads.end())
          grads.emplace(name, std::move(g));
        else
          num::axpy(1.0f, g.data(), it->second.data(), g.size());
      }
    }
    if (bad) {
      res.diverged = true;
      res.steps_completed = step;
      return res;  // params are the last good state; no update applied
    }
    if (tcfg.batch > 1)
      for (auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] /= float(tcfg.batch);

    std::vector<Tensor<float>> backup;
    backup.reserve(model.params().entries.size());
    for (auto& e : model.params().entries) backup.push_back(e.value);
    adam_step(model.params(), grads, tcfg.lr, step + 1);
    if (!model.params().all_finite()) {
      for (std::size_t i = 0; i < backup.size(); ++i)
        model.params().entries[i].value = std::move(backup[i]);
      res.diverged = true;
      res.steps_completed = step;
      return res;
    }
    ++model.step_count;
    res.loss_log.push_back(loss_acc / float(tcfg.batch));
  }
  res.steps_completed = tcfg.steps;
  return res;
}

// --- checkpoint I/O ---

namespace {
constexpr char kCkptMagic[4] = {'H', 'H', 'C', 'K'};

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"f", c.f},
      {"d_z", c.d_z},
      {"codebook_size", c.codebook_size},
      {"d_model", c.d_model},
      {"heads", c.heads},
      {"scales", c.scales},
      {"blocks_stage1", c.blocks_stage1},
      {"blocks_stage2", c.blocks_stage2},
      {"classes", c.classes},
      {"max_grid", c.max_grid},
      {"epsilon", c.epsilon},
      {"beta_commit", c.beta_commit},
      {"attention", c.attention == attn::AttentionKind::kRelu ? "relu" : "mhsa"},
      {"tokenizer", c.tokenizer == TokenizerKind::kVq ? "vq" : "linear"},
      {"seed", c.seed},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.f = j.at("f");
  c.d_z = j.at("d_z");
  c.codebook_size = j.at("codebook_size");
  c.d_model = j.at("d_model");
  c.heads = j.at("heads");
  c.scales = j.at("scales").get<std::vector<std::uint32_t>>();
  c.blocks_stage1 = j.at("blocks_stage1");
  c.blocks_stage2 = j.at("blocks_stage2");
  c.classes = j.at("classes");
  c.max_grid = j.at("max_grid");
  c.epsilon = j.at("epsilon");
  c.beta_commit = j.at("beta_commit");
  c.attention = j.at("attention") == "relu" ? attn::AttentionKind::kRelu
                                            : attn::AttentionKind::kMhsa;
  c.tokenizer = j.at("tokenizer") == "vq" ? TokenizerKind::kVq : TokenizerKind::kLinear;
  c.seed = j.at("seed");
  return c;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SegModel<float>& model) {
  std::string buf;
  buf.append(kCkptMagic, 4);
  put_u16le(buf, 1);
  const std::string cfg = config_to_json(model.config()).dump();
  put_u32le(buf, std::uint32_t(cfg.size()));
  buf.append(cfg);
  put_u64le(buf, model.step_count);
  put_u32le(buf, std::uint32_t(model.params().entries.size()));
  for (const auto& e : model.params().entries) {
    put_u16le(buf, std::uint16_t(e.name.size()));
    buf.append(e.name);
    buf.push_back(char(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_u64le(buf, d);
    const std::size_t bytes = e.value.size() * sizeof(float);
    static_assert(std::endian::native == std::endian::little);
    buf.append(reinterpret_cast<const char*>(e.value.data()), bytes);
  }
  // atomic: temp file then rename
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + tmp.string());
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) fail(Errc::IoError, "write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::IoError, "rename failed for " + path.string());
}

SegModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  ByteReader r(data.data(), data.size());
  if (std::memcmp(r.take(4), kCkptMagic, 4) != 0)
    fail(Errc::FormatError, "bad checkpoint magic in " + path.string());
  if (r.u16le() != 1) fail(Errc::FormatError, "unsupported checkpoint version");
  const std::uint32_t cfg_len = r.u32le();
  const std::uint8_t* cfg_bytes = r.take(cfg_len);
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(cfg_bytes, cfg_bytes + cfg_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::FormatError, std::string("bad checkpoint config: ") + e.what());
  }
  SegModel<float> model(cfg);
  model.step_count = r.u64le();
  const std::uint32_t count = r.u32le();
  if (count != model.params().entries.size())
    fail(Errc::FormatError, "checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16le();
    const std::string name(reinterpret_cast<const char*>(r.take(name_len)), name_len);
    const std::uint8_t rank = r.u8();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = std::size_t(r.u64le());
    Tensor<float>& dst = model.params().value(name);
    if (dst.shape() != shape) fail(Errc::FormatError, "checkpoint shape mismatch for " + name);
    const std::uint8_t* payload = r.take(dst.size() * sizeof(float));
    std::memcpy(dst.data(), payload, dst.size() * sizeof(float));
  }
  return model;
}

// --- tokenizer reconstruction training ---

namespace vq {

template <typename T>
std::vector<T> train_reconstruction(PatchEncoder<T>& enc, Codebook<T>& cb, PatchDecoder<T>& dec,
                                    const std::vector<RgbRaster>& images, std::size_t epochs,
                                    T lr) {
  std::vector<T> log;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    T mse_sum = T(0);
    for (const RgbRaster& img : images) {
      std::size_t gh, gw;
      Tensor<T> cols = im2col<T>(img, enc.f, &gh, &gw);
      const std::size_t n = cols.dim(0), pix = cols.dim(1), d = enc.bias.size();
      LatentGrid<T> z;
      z.h = gh;
      z.w = gw;
      z.values = Tensor<T>({n, d});
      num::gemm_nn(cols.data(), enc.weight.data(), z.values.data(), n, pix, d);
      for (std::size_t i = 0; i < n; ++i)
        num::axpy(T(1), enc.bias.data(), z.values.data() + i * d, d);
      TokenGrid<T> tg = quantize(z, cb);
      Tensor<T> blocks({n, pix});
      num::gemm_nn(tg.quantized.data(), dec.weight.data(), blocks.data(), n, d, pix);
      for (std::size_t i = 0; i < n; ++i)
        num::axpy(T(1), dec.bias.data(), blocks.data() + i * pix, pix);

      mse_sum += nn::mse_loss(blocks, cols);

      // d mse / d blocks
      Tensor<T> dblocks({n, pix});
      nn::mse_loss_bwd(blocks, cols, T(1), &dblocks);
      Tensor<T> ddec_w({d, pix}), ddec_b({pix});
      num::gemm_tn(tg.quantized.data(), dblocks.data(), ddec_w.data(), d, n, pix);
      for (std::size_t i = 0; i < n; ++i) num::axpy(T(1), dblocks.data() + i * pix, ddec_b.data(), pix);
      Tensor<T> dzq({n, d});
      num::gemm_nt(dblocks.data(), dec.weight.data(), dzq.data(), n, pix, d);

      StraightThroughGrads<T> st = straight_through_grad(z, tg, cb, dzq);
      Tensor<T> denc_w({pix, d}), denc_b({d});
      num::gemm_tn(cols.data(), st.latent_grad.data(), denc_w.data(), pix, n, d);
      for (std::size_t i = 0; i < n; ++i)
        num::axpy(T(1), st.latent_grad.data() + i * d, denc_b.data(), d);

      num::axpy(-lr, denc_w.data(), enc.weight.data(), enc.weight.size());
      num::axpy(-lr, denc_b.data(), enc.bias.data(), enc.bias.size());
      num::axpy(-lr, ddec_w.data(), dec.weight.data(), dec.weight.size());
      num::axpy(-lr, ddec_b.data(), dec.bias.data(), dec.bias.size());
      num::axpy(-lr, st.codebook_grad.data(), cb.entries.data(), cb.entries.size());
    }
    log.push_back(mse_sum / T(images.size()));
  }
  return log;
}

template std::vector<float> train_reconstruction<float>(PatchEncoder<float>&, Codebook<float>&,
                                                        PatchDecoder<float>&,
                                                        const std::vector<RgbRaster>&,
                                                        std::size_t, float);
template std::vector<double> train_reconstruction<double>(PatchEncoder<double>&,
                                                          Codebook<double>&,
                                                          PatchDecoder<double>&,
                                                          const std::vector<RgbRaster>&,
                                                          std::size_t, double);

}  // namespace vq

}  // namespace holoslide
