#include "autoprog/data.hpp"

#include <cmath>
#include <numbers>

#include "autoprog/errors.hpp"

namespace autoprog {

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "classification-blobs") return DatasetKind::ClassificationBlobs;
  if (text == "diffusion-textures") return DatasetKind::DiffusionTextures;
  throw ConfigError("unknown dataset generator '" + text + "'");
}

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::ClassificationBlobs ? "classification-blobs" : "diffusion-textures";
}

namespace {

// Two passes of a wrapped 3x3 box blur, then zero mean and unit deviation.
std::vector<double> smooth_field(std::size_t side, Rng& rng) {
  std::vector<double> f(side * side);
  for (auto& v : f) v = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> g(f.size(), 0.0);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        double s = 0.0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const std::size_t rr = (r + side + static_cast<std::size_t>(dr + 1) - 1) % side;
            const std::size_t cc = (c + side + static_cast<std::size_t>(dc + 1) - 1) % side;
            s += f[rr * side + cc];
          }
        g[r * side + c] = s / 9.0;
      }
    f = std::move(g);
  }
  double mean = 0.0, var = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (auto& v : f) v = (v - mean) / sd;
  return f;
}

void fill_blob(const DatasetSpec& s, std::size_t label, Rng& rng, double* out) {
  const double centre = (static_cast<double>(s.side) - 1.0) / 2.0;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(s.classes);
  const double angle = step * (static_cast<double>(label) + 0.5 * s.shift);
  const double py = centre + s.radius * std::sin(angle) + s.position_std * rng.normal();
  const double px = centre + s.radius * std::cos(angle) + s.position_std * rng.normal();
  const double inv = 1.0 / (2.0 * s.blob_width * s.blob_width);
  for (std::size_t ch = 0; ch < s.channels; ++ch)
    for (std::size_t r = 0; r < s.side; ++r)
      for (std::size_t c = 0; c < s.side; ++c) {
        const double dy = static_cast<double>(r) - py, dx = static_cast<double>(c) - px;
        out[(ch * s.side + r) * s.side + c] = std::exp(-(dy * dy + dx * dx) * inv) + s.pixel_noise * rng.normal();
      }
}

void fill_texture(const DatasetSpec& s, const std::vector<std::vector<double>>& patterns, std::size_t label, Rng& rng,
                  double* out) {
  const std::size_t plane = s.side * s.side;
  for (std::size_t ch = 0; ch < s.channels; ++ch) {
    const auto noise = smooth_field(s.side, rng);
    const auto& pat = patterns[label * s.channels + ch];
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = pat[i] + s.pixel_noise * noise[i];
  }
}

}  // namespace

Dataset make_dataset(const DatasetSpec& s, std::uint64_t seed) {
  if (s.classes == 0 || s.side == 0 || s.channels == 0 || s.train_size == 0 || s.eval_size == 0) {
    throw ConfigError("dataset sizes must be positive");
  }
  Rng root(seed, "data");
  std::vector<std::vector<double>> patterns;
  if (s.kind == DatasetKind::DiffusionTextures) {
    for (std::size_t i = 0; i < s.classes * s.channels; ++i) {
      Rng a = root.derive("texture").derive(i);
      Rng b = root.derive("texture-alt").derive(i);
      auto base = smooth_field(s.side, a);
      if (s.shift != 0.0) {
        const auto alt = smooth_field(s.side, b);
        const double w = std::cos(0.5 * std::numbers::pi * s.shift), u = std::sin(0.5 * std::numbers::pi * s.shift);
        for (std::size_t j = 0; j < base.size(); ++j) base[j] = w * base[j] + u * alt[j];
      }
      patterns.push_back(std::move(base));
    }
  }
  Dataset d;
  d.classes = s.classes;
  const std::size_t per = s.channels * s.side * s.side;
  auto fill = [&](std::size_t count, const char* split, Tensor& x, std::vector<std::size_t>& y) {
    x = Tensor({count, s.channels, s.side, s.side});
    y.resize(count);
    Rng base = root.derive(split);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = base.derive(i);
      y[i] = i % s.classes;
      double* out = x.data().data() + i * per;
      if (s.kind == DatasetKind::ClassificationBlobs) {
        fill_blob(s, y[i], rng, out);
      } else {
        fill_texture(s, patterns, y[i], rng, out);
      }
    }
  };
  fill(s.train_size, "train", d.train_x, d.train_y);
  fill(s.eval_size, "eval", d.eval_x, d.eval_y);
  return d;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() == 0 || rows.empty()) throw ShapeError("gather_rows needs a batched tensor and rows");
  Shape s = x.shape();
  const std::size_t per = x.numel() / s[0];
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw ShapeError("gather_rows index out of range");
    std::copy_n(x.data().data() + rows[i] * per, per, out.data().data() + i * per);
  }
  return out;
}

std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& y, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y.at(r));
  return out;
}

std::vector<std::size_t> sample_batch(std::size_t population, std::size_t batch, Rng rng) {
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = rng.index(population);
  return out;
}

}  // namespace autoprog
