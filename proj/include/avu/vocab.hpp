#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avu/bundle.hpp"
#include "avu/task.hpp"

namespace avu {

enum class Modality : std::uint8_t { kA = 0, kV = 1, kAV = 2 };

enum class TokenKind : std::uint8_t {
  kPad, kBos, kEos, kSep, kTask, kClass, kModality, kBin, kAnswer, kMask,
};

// Dense id layout: PAD BOS EOS SEP | TASK_* (5) | CLS_0..CLS_K | MOD_A MOD_V
// MOD_AV | BIN_0..BIN_{M-1} | ANS_0..ANS_{K_ans-1} | MASK. CLS_0 is the
// background / null class, CLS_1..CLS_K are event classes.
class TokenVocab {
 public:
  TokenVocab(std::size_t num_classes, std::size_t bins, std::size_t answers);

  int pad() const { return 0; }
  int bos() const { return 1; }
  int eos() const { return 2; }
  int sep() const { return 3; }
  int task(Task t) const { return 4 + static_cast<int>(t); }
  int cls(std::size_t k) const { return cls_base_ + static_cast<int>(k); }
  int mod(Modality m) const { return mod_base_ + static_cast<int>(m); }
  int bin(std::size_t m) const { return bin_base_ + static_cast<int>(m); }
  int ans(std::size_t k) const { return ans_base_ + static_cast<int>(k); }
  int mask() const { return mask_id_; }

  std::size_t size() const { return static_cast<std::size_t>(mask_id_) + 1; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t bins() const { return bins_; }
  std::size_t answers() const { return answers_; }
  int bin_base() const { return bin_base_; }

  TokenKind kind(int id) const;
  // Index within its kind (class k, bin m, answer k, modality, task).
  std::size_t offset(int id) const;
  std::string name(int id) const;
  std::optional<int> parse(std::string_view name) const;

 private:
  std::size_t num_classes_;
  std::size_t bins_;
  std::size_t answers_;
  int cls_base_;
  int mod_base_;
  int bin_base_;
  int ans_base_;
  int mask_id_;
};

struct TokenProgram {
  Task task = Task::kAVE;
  std::vector<int> tokens;
};

std::string program_to_text(const TokenProgram& program, const TokenVocab& vocab);
TokenProgram program_from_text(std::string_view text, const TokenVocab& vocab);

// Label block -> canonical program. AVVP pairs are ordered by modality
// (A < V < AV), then class ascending.
TokenProgram encode_labels(const LabelBlock& labels, Task task, const TokenVocab& vocab,
                           std::size_t segments);

// Strict parser; the exact inverse of encode_labels on canonical programs.
// AVS programs decode to an AvsLabels payload with no mask pixels.
LabelBlock decode_tokens(const TokenProgram& program, const TokenVocab& vocab,
                         std::size_t segments);

// Incremental form of the grammar, used to mask decoder logits.
class GrammarCursor {
 public:
  GrammarCursor(const TokenVocab& vocab, Task task, std::size_t segments);

  bool allows(int token) const;
  std::vector<int> allowed() const;
  // Throws ParseError when `token` is not allowed.
  void advance(int token);
  bool finished() const { return phase_ == Phase::kDone; }

  // Segment the next token belongs to; `segments` when it belongs to none.
  std::size_t segment() const;
  std::size_t position() const { return position_; }
  Task task() const { return task_; }

  // Longest program the grammar admits.
  static std::size_t max_length(Task task, std::size_t segments, std::size_t num_classes);

 private:
  enum class Phase { kBos, kTask, kBody, kPairClass, kEos, kDone };

  bool pair_available(Modality m) const;

  const TokenVocab* vocab_;
  Task task_;
  std::size_t segments_;
  Phase phase_ = Phase::kBos;
  std::size_t position_ = 0;
  std::size_t segment_ = 0;
  // AVVP: last emitted (modality, class) key in this segment, classes used.
  int last_mod_ = -1;
  int last_cls_ = -1;
  int pending_mod_ = -1;
  std::vector<bool> used_;
};

}  // namespace avu
