#include "avu/exports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "avu/errors.hpp"
#include "avu/vocab.hpp"

namespace avu {

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string indexed(const char* stem, std::size_t t, const char* ext) {
  std::ostringstream s;
  s << stem << '_' << std::setw(2) << std::setfill('0') << t << ext;
  return s.str();
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
               std::size_t height, std::size_t width) {
  if (pixels.size() != height * width) {
    throw ShapeError("write_pgm: " + std::to_string(pixels.size()) + " pixels for " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const unsigned maxval = std::max<unsigned>(1, pixels.empty() ? 1 : *std::max_element(pixels.begin(), pixels.end()));
  auto out = open_out(path, true);
  out << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_matrix(const std::filesystem::path& path, std::span<const double> values,
                  std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) {
    throw ShapeError("write_matrix: " + std::to_string(values.size()) + " values for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  auto out = open_out(path, false);
  out << std::setprecision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? " " : "") << values[r * cols + c];
    out << '\n';
  }
}

void export_prediction(const Prediction& pred, const FeatureBundle& bundle,
                       const TokenVocab& vocab, const std::filesystem::path& dir, bool weights) {
  std::filesystem::create_directories(dir);
  open_out(dir / "program.txt", false) << program_to_text(pred.program, vocab) << '\n';
  const std::size_t t = bundle.segments, m = bundle.patches;
  const std::size_t h = bundle.height, w = bundle.width;
  if (pred.task == Task::kAVS) {
    for (std::size_t s = 0; s < t; ++s)
      write_pgm(dir / indexed("mask", s, ".pgm"),
                std::span<const std::uint8_t>(pred.masks.data() + s * h * w, h * w), h, w);
  }
  if (pred.task == Task::kSSL) {
    write_matrix(dir / "heatmap.txt", pred.heatmap, t, m);
    const std::size_t g = bundle.grid();
    for (std::size_t s = 0; s < t; ++s) {
      const double* row = pred.heatmap.data() + s * m;
      const double top = *std::max_element(row, row + m);
      std::vector<std::uint8_t> img(h * w);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = row[(y * g / h) * g + x * g / w];
          img[y * w + x] = static_cast<std::uint8_t>(std::lround(top > 0 ? 255.0 * v / top : 0.0));
        }
      write_pgm(dir / indexed("heatmap", s, ".pgm"), img, h, w);
    }
  }
  if (weights) {
    write_matrix(dir / "w_tpm.txt", pred.prompt_temporal, 2, t);
    write_matrix(dir / "w_spm.txt", pred.prompt_spatial, t, m + 1);
    write_matrix(dir / "spm_guide.txt", pred.guide_weights, t, m);
  }
}

}  // namespace avu
