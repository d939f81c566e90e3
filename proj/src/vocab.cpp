#include "avu/vocab.hpp"

#include <sstream>

#include "avu/errors.hpp"

namespace avu {

namespace {

constexpr const char* kModNames[] = {"MOD_A", "MOD_V", "MOD_AV"};

}  // namespace

TokenVocab::TokenVocab(std::size_t num_classes, std::size_t bins, std::size_t answers)
    : num_classes_(num_classes), bins_(bins), answers_(answers) {
  if (num_classes == 0 || bins == 0 || answers == 0) {
    throw ConfigError("vocab: class, bin and answer counts must be positive");
  }
  cls_base_ = 4 + static_cast<int>(kNumTasks);
  mod_base_ = cls_base_ + static_cast<int>(num_classes) + 1;
  bin_base_ = mod_base_ + 3;
  ans_base_ = bin_base_ + static_cast<int>(bins);
  mask_id_ = ans_base_ + static_cast<int>(answers);
}

TokenKind TokenVocab::kind(int id) const {
  if (id < 0 || id > mask_id_) throw ContractError("vocab: token id out of range");
  if (id == 0) return TokenKind::kPad;
  if (id == 1) return TokenKind::kBos;
  if (id == 2) return TokenKind::kEos;
  if (id == 3) return TokenKind::kSep;
  if (id < cls_base_) return TokenKind::kTask;
  if (id < mod_base_) return TokenKind::kClass;
  if (id < bin_base_) return TokenKind::kModality;
  if (id < ans_base_) return TokenKind::kBin;
  if (id < mask_id_) return TokenKind::kAnswer;
  return TokenKind::kMask;
}

std::size_t TokenVocab::offset(int id) const {
  switch (kind(id)) {
    case TokenKind::kTask: return static_cast<std::size_t>(id - 4);
    case TokenKind::kClass: return static_cast<std::size_t>(id - cls_base_);
    case TokenKind::kModality: return static_cast<std::size_t>(id - mod_base_);
    case TokenKind::kBin: return static_cast<std::size_t>(id - bin_base_);
    case TokenKind::kAnswer: return static_cast<std::size_t>(id - ans_base_);
    default: return 0;
  }
}

std::string TokenVocab::name(int id) const {
  switch (kind(id)) {
    case TokenKind::kPad: return "PAD";
    case TokenKind::kBos: return "BOS";
    case TokenKind::kEos: return "EOS";
    case TokenKind::kSep: return "SEP";
    case TokenKind::kTask:
      return "TASK_" + std::string(task_name(static_cast<Task>(offset(id))));
    case TokenKind::kClass: return "CLS_" + std::to_string(offset(id));
    case TokenKind::kModality: return kModNames[offset(id)];
    case TokenKind::kBin: return "BIN_" + std::to_string(offset(id));
    case TokenKind::kAnswer: return "ANS_" + std::to_string(offset(id));
    case TokenKind::kMask: return "MASK";
  }
  return "?";
}

std::optional<int> TokenVocab::parse(std::string_view n) const {
  for (int id = 0; id <= mask_id_; ++id)
    if (name(id) == n) return id;
  return std::nullopt;
}

std::string program_to_text(const TokenProgram& program, const TokenVocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < program.tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.name(program.tokens[i]);
  }
  return out;
}

TokenProgram program_from_text(std::string_view text, const TokenVocab& vocab) {
  TokenProgram p;
  std::istringstream in{std::string(text)};
  std::string field;
  bool have_task = false;
  while (in >> field) {
    auto id = vocab.parse(field);
    if (!id) throw ParseError("unknown token name '" + field + "'");
    if (!have_task && vocab.kind(*id) == TokenKind::kTask) {
      p.task = static_cast<Task>(vocab.offset(*id));
      have_task = true;
    }
    p.tokens.push_back(*id);
  }
  return p;
}

TokenProgram encode_labels(const LabelBlock& labels, Task task, const TokenVocab& vocab,
                           std::size_t segments) {
  if (!labels.labeled) throw ValidationError("encode_labels: bundle is unlabeled");
  TokenProgram p;
  p.task = task;
  p.tokens = {vocab.bos(), vocab.task(task)};
  auto bad = [](const std::string& why) { throw ValidationError("encode_labels: " + why); };
  switch (task) {
    case Task::kAVE: {
      const auto* l = std::get_if<AveLabels>(&labels.payload);
      if (!l || l->classes.size() != segments) bad("AVE labels need one class per segment");
      for (auto c : l->classes) {
        if (c > vocab.num_classes()) bad("class id " + std::to_string(c) + " out of range");
        p.tokens.push_back(vocab.cls(c));
      }
      break;
    }
    case Task::kAVVP: {
      const auto* l = std::get_if<AvvpLabels>(&labels.payload);
      if (!l || l->audio.size() != segments * l->num_classes ||
          l->visual.size() != segments * l->num_classes) {
        bad("AVVP labels need T * K multi-hot entries");
      }
      if (l->num_classes > vocab.num_classes()) bad("AVVP class count exceeds vocabulary");
      for (std::size_t t = 0; t < segments; ++t) {
        for (int m = 0; m < 3; ++m) {
          for (std::size_t k = 1; k <= l->num_classes; ++k) {
            const bool a = l->audible(t, k);
            const bool v = l->visible(t, k);
            const int mod = a && v ? 2 : a ? 0 : v ? 1 : -1;
            if (mod != m) continue;
            p.tokens.push_back(vocab.mod(static_cast<Modality>(m)));
            p.tokens.push_back(vocab.cls(k));
          }
        }
        p.tokens.push_back(vocab.sep());
      }
      break;
    }
    case Task::kSSL: {
      const auto* l = std::get_if<SslLabels>(&labels.payload);
      if (!l || l->bins.size() != segments) bad("SSL labels need one bin per segment");
      for (auto b : l->bins) {
        if (b == SslLabels::kSilent) {
          p.tokens.push_back(vocab.cls(0));
        } else {
          if (b < 0 || static_cast<std::size_t>(b) >= vocab.bins()) bad("bin out of range");
          p.tokens.push_back(vocab.bin(static_cast<std::size_t>(b)));
        }
      }
      break;
    }
    case Task::kAVS:
      if (!std::holds_alternative<AvsLabels>(labels.payload)) bad("AVS labels expected");
      p.tokens.push_back(vocab.mask());
      break;
    case Task::kAVQA: {
      const auto* l = std::get_if<AvqaLabels>(&labels.payload);
      if (!l || l->answer >= vocab.answers()) bad("AVQA answer out of range");
      p.tokens.push_back(vocab.ans(l->answer));
      break;
    }
  }
  p.tokens.push_back(vocab.eos());
  return p;
}

namespace {

class Parser {
 public:
  Parser(const TokenProgram& p, const TokenVocab& v) : toks_(p.tokens), vocab_(v) {}

  [[noreturn]] void fail(const std::string& expected) const {
    std::string got = pos_ < toks_.size() ? vocab_.name(toks_[pos_]) : "end of program";
    throw ParseError("position " + std::to_string(pos_) + ": expected " + expected +
                     ", got " + got);
  }
  bool at_end() const { return pos_ >= toks_.size(); }
  TokenKind peek_kind() const { return vocab_.kind(toks_[pos_]); }
  int peek() const { return toks_[pos_]; }
  int take(TokenKind k, const std::string& expected) {
    if (at_end() || peek_kind() != k) fail(expected);
    return toks_[pos_++];
  }
  void take_exact(int id) {
    if (at_end() || peek() != id) fail(vocab_.name(id));
    ++pos_;
  }
  void finish() {
    take_exact(vocab_.eos());
    if (!at_end()) fail("end of program after EOS");
  }

 private:
  const std::vector<int>& toks_;
  const TokenVocab& vocab_;
  std::size_t pos_ = 0;
};

}  // namespace

LabelBlock decode_tokens(const TokenProgram& program, const TokenVocab& vocab,
                         std::size_t segments) {
  for (int id : program.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ParseError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  Parser ps(program, vocab);
  ps.take_exact(vocab.bos());
  const int task_tok = ps.take(TokenKind::kTask, "task token");
  const Task task = static_cast<Task>(vocab.offset(task_tok));
  if (task != program.task) {
    throw ParseError("position 1: task token " + vocab.name(task_tok) +
                     " does not match program task " + std::string(task_name(program.task)));
  }
  LabelBlock out;
  const std::string seg_expect = "T=" + std::to_string(segments) + " segments";
  switch (task) {
    case Task::kAVE: {
      AveLabels l;
      l.num_classes = static_cast<std::uint16_t>(vocab.num_classes());
      for (std::size_t t = 0; t < segments; ++t) {
        const int c = ps.take(TokenKind::kClass, "class token for segment " +
                                                     std::to_string(t) + " of " + seg_expect);
        l.classes.push_back(static_cast<std::uint8_t>(vocab.offset(c)));
      }
      out.payload = std::move(l);
      break;
    }
    case Task::kAVVP: {
      AvvpLabels l;
      const std::size_t k = vocab.num_classes();
      l.num_classes = static_cast<std::uint16_t>(k);
      l.audio.assign(segments * k, 0);
      l.visual.assign(segments * k, 0);
      for (std::size_t t = 0; t < segments; ++t) {
        int last_mod = -1;
        int last_cls = -1;
        std::vector<bool> used(k + 1, false);
        while (!ps.at_end() && ps.peek_kind() == TokenKind::kModality) {
          const int mod = static_cast<int>(vocab.offset(ps.take(TokenKind::kModality, "")));
          const int cls = static_cast<int>(vocab.offset(
              ps.take(TokenKind::kClass, "class token after modality in segment " +
                                             std::to_string(t))));
          if (cls == 0) throw ParseError("segment " + std::to_string(t) + ": CLS_0 cannot be paired");
          if (used[static_cast<std::size_t>(cls)] ||
              !(mod > last_mod || (mod == last_mod && cls > last_cls))) {
            throw ParseError("segment " + std::to_string(t) +
                             ": pairs must be unique per class and sorted by (modality, class)");
          }
          used[static_cast<std::size_t>(cls)] = true;
          last_mod = mod;
          last_cls = cls;
          const std::size_t idx = t * k + static_cast<std::size_t>(cls) - 1;
          if (mod == 0 || mod == 2) l.audio[idx] = 1;
          if (mod == 1 || mod == 2) l.visual[idx] = 1;
        }
        ps.take(TokenKind::kSep, "modality token or SEP closing segment " +
                                     std::to_string(t) + " of " + seg_expect);
      }
      out.payload = std::move(l);
      break;
    }
    case Task::kSSL: {
      SslLabels l;
      for (std::size_t t = 0; t < segments; ++t) {
        if (!ps.at_end() && ps.peek_kind() == TokenKind::kBin) {
          l.bins.push_back(static_cast<std::int32_t>(vocab.offset(ps.take(TokenKind::kBin, ""))));
        } else if (!ps.at_end() && ps.peek() == vocab.cls(0)) {
          ps.take(TokenKind::kClass, "");
          l.bins.push_back(SslLabels::kSilent);
        } else {
          ps.fail("bin token or CLS_0 for segment " + std::to_string(t) + " of " + seg_expect);
        }
      }
      out.payload = std::move(l);
      break;
    }
    case Task::kAVS:
      ps.take(TokenKind::kMask, "MASK");
      out.payload = AvsLabels{1, {}};
      break;
    case Task::kAVQA: {
      AvqaLabels l;
      l.num_answers = static_cast<std::uint16_t>(vocab.answers());
      l.answer = static_cast<std::uint16_t>(vocab.offset(ps.take(TokenKind::kAnswer, "answer token")));
      out.payload = l;
      break;
    }
  }
  ps.finish();
  return out;
}

GrammarCursor::GrammarCursor(const TokenVocab& vocab, Task task, std::size_t segments)
    : vocab_(&vocab), task_(task), segments_(segments), used_(vocab.num_classes() + 1, false) {
  if (segments == 0) throw ConfigError("grammar: segment count must be positive");
}

std::size_t GrammarCursor::max_length(Task task, std::size_t segments, std::size_t num_classes) {
  switch (task) {
    case Task::kAVE:
    case Task::kSSL: return segments + 3;
    case Task::kAVVP: return 3 + segments * (2 * num_classes + 1);
    case Task::kAVS:
    case Task::kAVQA: return 4;
  }
  return 0;
}

std::size_t GrammarCursor::segment() const {
  if (task_ == Task::kAVS || task_ == Task::kAVQA) return segments_;
  if (phase_ == Phase::kBody || phase_ == Phase::kPairClass) return segment_;
  return segments_;
}

bool GrammarCursor::pair_available(Modality m) const {
  const int mi = static_cast<int>(m);
  if (mi < last_mod_) return false;
  const std::size_t k = vocab_->num_classes();
  for (std::size_t c = 1; c <= k; ++c) {
    if (used_[c]) continue;
    if (mi > last_mod_ || static_cast<int>(c) > last_cls_) return true;
  }
  return false;
}

bool GrammarCursor::allows(int tok) const {
  if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_->size()) return false;
  const TokenKind kind = vocab_->kind(tok);
  switch (phase_) {
    case Phase::kBos: return tok == vocab_->bos();
    case Phase::kTask: return tok == vocab_->task(task_);
    case Phase::kEos: return tok == vocab_->eos();
    case Phase::kDone: return false;
    case Phase::kPairClass: {
      if (kind != TokenKind::kClass) return false;
      const auto c = vocab_->offset(tok);
      if (c == 0 || used_[c]) return false;
      return pending_mod_ > last_mod_ || static_cast<int>(c) > last_cls_;
    }
    case Phase::kBody:
      switch (task_) {
        case Task::kAVE: return kind == TokenKind::kClass;
        case Task::kSSL: return kind == TokenKind::kBin || tok == vocab_->cls(0);
        case Task::kAVQA: return kind == TokenKind::kAnswer;
        case Task::kAVS: return kind == TokenKind::kMask;
        case Task::kAVVP:
          if (tok == vocab_->sep()) return true;
          if (kind == TokenKind::kModality)
            return pair_available(static_cast<Modality>(vocab_->offset(tok)));
          return false;
      }
  }
  return false;
}

std::vector<int> GrammarCursor::allowed() const {
  std::vector<int> out;
  for (std::size_t id = 0; id < vocab_->size(); ++id)
    if (allows(static_cast<int>(id))) out.push_back(static_cast<int>(id));
  return out;
}

void GrammarCursor::advance(int tok) {
  if (!allows(tok)) {
    std::string got = tok >= 0 && static_cast<std::size_t>(tok) < vocab_->size()
                          ? vocab_->name(tok)
                          : std::to_string(tok);
    throw ParseError("position " + std::to_string(position_) + ": token " + got +
                     " not allowed by the " + std::string(task_name(task_)) + " grammar");
  }
  ++position_;
  switch (phase_) {
    case Phase::kBos: phase_ = Phase::kTask; return;
    case Phase::kTask: phase_ = Phase::kBody; return;
    case Phase::kEos: phase_ = Phase::kDone; return;
    case Phase::kDone: return;
    case Phase::kPairClass: {
      const auto c = vocab_->offset(tok);
      used_[c] = true;
      last_mod_ = pending_mod_;
      last_cls_ = static_cast<int>(c);
      phase_ = Phase::kBody;
      return;
    }
    case Phase::kBody:
      switch (task_) {
        case Task::kAVE:
        case Task::kSSL:
          if (++segment_ == segments_) phase_ = Phase::kEos;
          return;
        case Task::kAVQA:
        case Task::kAVS: phase_ = Phase::kEos; return;
        case Task::kAVVP:
          if (tok == vocab_->sep()) {
            last_mod_ = -1;
            last_cls_ = -1;
            std::fill(used_.begin(), used_.end(), false);
            if (++segment_ == segments_) phase_ = Phase::kEos;
          } else {
            pending_mod_ = static_cast<int>(vocab_->offset(tok));
            phase_ = Phase::kPairClass;
          }
          return;
      }
  }
}

}  // namespace avu
