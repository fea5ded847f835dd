#include "hsi/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "hsi/image_io.hpp"

namespace hsi {

namespace fs = std::filesystem;

std::vector<std::string> list_png_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("'" + dir + "' is not a readable directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path().string());
  }
  if (ec) throw IoError("cannot list '" + dir + "': " + ec.message());
  if (out.empty()) throw ArgumentError("no PNG images in '" + dir + "'");
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Tensor> load_square_images(const std::vector<std::string>& paths, std::size_t side) {
  std::vector<Tensor> out;
  for (const auto& p : paths) out.push_back(resize_crop_square(read_png(p), side));
  return out;
}

std::string format_loss_row(const LossRow& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.iter << ',' << r.total << ',' << r.style << ',' << r.content << ',' << r.adv;
  return os.str();
}

namespace {

// HSI blocks and decoder under their weight-file names.
struct GeneratorParams {
  Model* m;
  template <class F>
  void for_each_param(F&& f) {
    for (std::size_t b = 0; b < m->hsi.size(); ++b) m->hsi[b].for_each_param("hsi.block" + std::to_string(b + 1), f);
    m->decoder.for_each_param(f);
  }
};

struct Cached {
  Var feature;       // relu4_1
  Taps<float> taps;  // all taps of the image
  Taps<float> gray;  // taps of its grayscale version
};

Cached cache(const Tensor& img, const Encoder& enc) {
  const Var x(img);
  return {encode_last(x, enc), encode(x, enc), encode(grayscale(x), enc)};
}

Taps<float> batch_taps(const std::vector<Cached>& items, const std::vector<std::size_t>& idx,
                       Taps<float> Cached::*which) {
  Taps<float> out;
  for (std::size_t t = 0; t < kNumTaps; ++t) {
    std::vector<Tensor> parts;
    for (std::size_t i : idx) parts.push_back((items[i].*which)[t].value());
    out[t] = Var(concat_batch<float>(parts));
  }
  return out;
}

Var batch_of(const std::vector<Tensor>& items, const std::vector<std::size_t>& idx) {
  std::vector<Tensor> parts;
  for (std::size_t i : idx) parts.push_back(items[i]);
  return Var(concat_batch<float>(parts));
}

// Replaces every parameter with a tape leaf and remembers it by name.
template <class W>
std::map<std::string, Var, std::less<>> track(W& w, Tape& tape) {
  std::map<std::string, Var, std::less<>> leaves;
  w.for_each_param([&](std::string_view name, Var& p) {
    p = tape.leaf(p);
    leaves.emplace(std::string(name), p);
  });
  return leaves;
}

template <class W>
void step(W& w, const std::map<std::string, Var, std::less<>>& leaves, const GradientMap<float>& grads,
          AdamState& state, const AdamConfig& cfg) {
  adam_update(
      w, [&](std::string_view name, const Var&) { return grads.of(leaves.find(name)->second); }, state, cfg);
}

}  // namespace

TrainResult train_toy(const std::vector<Tensor>& content, const std::vector<Tensor>& style, const TrainConfig& cfg,
                      const std::function<void(const LossRow&)>& on_row) {
  if (content.empty() || style.empty()) throw ArgumentError("train: need at least one content and one style image");
  if (cfg.batch == 0) throw ArgumentError("train: batch size must be at least 1");
  cfg.hsi.validate();

  TrainResult res;
  res.model = make_model<float>(cfg.arch, cfg.hsi.blocks, cfg.seed);
  Rng disc_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Discriminator disc = make_discriminator<float>(disc_rng);

  std::vector<Cached> c_cache, s_cache;
  for (const auto& t : content) c_cache.push_back(cache(t, res.model.encoder));
  for (const auto& t : style) s_cache.push_back(cache(t, res.model.encoder));

  AdamState gen_state, disc_state;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    std::vector<std::size_t> ci, si;
    for (std::size_t j = 0; j < cfg.batch; ++j) {
      ci.push_back((it * cfg.batch + j) % content.size());
      si.push_back((it * cfg.batch + j) % style.size());
    }
    std::vector<Tensor> fc_parts, fs_parts;
    for (std::size_t i : ci) fc_parts.push_back(c_cache[i].feature.value());
    for (std::size_t i : si) fs_parts.push_back(s_cache[i].feature.value());
    const Var f_c(concat_batch<float>(fc_parts)), f_s(concat_batch<float>(fs_parts));

    Tape tape;
    Model live = res.model;
    GeneratorParams gen{&live};
    const auto gen_leaves = track(gen, tape);
    Discriminator live_disc = disc;
    std::map<std::string, Var, std::less<>> disc_leaves;
    if (cfg.adversarial) disc_leaves = track(live_disc, tape);

    const Var out = decode(hsi_chain<float>(f_c, f_s, live.hsi, cfg.hsi), live.decoder);
    const auto out_taps = encode(out, live.encoder);
    BasicLossParts<float> parts;
    parts.style = style_loss_from_features(out_taps, batch_taps(s_cache, si, &Cached::taps));
    parts.content = feature_distance(out_taps, batch_taps(c_cache, ci, &Cached::taps)) +
                    feature_distance(encode(grayscale(out), live.encoder), batch_taps(c_cache, ci, &Cached::gray));
    BasicAdvLosses<float> adv;
    if (cfg.adversarial) {
      adv = adversarial_loss(out, batch_of(style, si), live_disc);
      parts.adv = adv.generator;
    } else {
      parts.adv = Var(Tensor(Shape{1, 1, 1, 1}));
    }
    const Var total = total_loss(parts, cfg.weights);

    LossRow row;
    row.iter = it;
    row.style = parts.style.value()[0];
    row.content = parts.content.value()[0];
    row.adv = parts.adv.value()[0];
    row.total = total_loss(row.style, row.content, row.adv, cfg.weights);
    if (!std::isfinite(row.total)) throw std::runtime_error("train: loss became non-finite at iteration " + std::to_string(it));
    res.log.push_back(row);
    if (on_row) on_row(row);

    const auto gen_grads = tape.backward(total);
    GeneratorParams target{&res.model};
    step(target, gen_leaves, gen_grads, gen_state, cfg.adam);
    if (cfg.adversarial) {
      const auto disc_grads = tape.backward(adv.discriminator);
      step(disc, disc_leaves, disc_grads, disc_state, cfg.adam);
    }
  }
  return res;
}

}  // namespace hsi
