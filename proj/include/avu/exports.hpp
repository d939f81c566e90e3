#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "avu/bundle.hpp"
#include "avu/model.hpp"

namespace avu {

// Binary PGM (P5) of per-pixel class ids; maxval is the largest id (at least 1).
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
               std::size_t height, std::size_t width);

// Whitespace-separated text matrix, one row per line, round-trip precision.
void write_matrix(const std::filesystem::path& path, std::span<const double> values,
                  std::size_t rows, std::size_t cols);

// Files written for one prediction into `dir` (created if missing):
//   program.txt                 token program, one token name per field
//   mask_<t>.pgm                AVS, per segment
//   heatmap.txt, heatmap_<t>.pgm  SSL, [T, M] weights; 8-bit block-upsampled image
// and with `weights`:
//   w_tpm.txt [2, T] (audio row, visual row), w_spm.txt [T, M+1], spm_guide.txt [T, M]
void export_prediction(const Prediction& pred, const FeatureBundle& bundle,
                       const TokenVocab& vocab, const std::filesystem::path& dir, bool weights);

}  // namespace avu
