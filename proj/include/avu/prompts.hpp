#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avu/task.hpp"

namespace avu {

enum class QuestionType : std::uint8_t { kNone = 0, kExist = 1, kCount = 2, kLocation = 3 };

// Template ids: 0 AVE, 1 AVVP, 2 SSL, 3 AVS, then the AVQA questions
// 4 .. 3+K "is class k audible" (k = 1..K), 4+K "how many", 5+K "where".
struct PromptTemplate {
  std::uint16_t id = 0;
  Task task = Task::kAVE;
  QuestionType question = QuestionType::kNone;
  std::size_t cls = 0;  // asked class for kExist
  std::string text;
};

std::vector<PromptTemplate> prompt_catalog(std::size_t num_classes);
std::size_t prompt_count(std::size_t num_classes);
// Throws ConfigError for an unknown id.
PromptTemplate prompt_template(std::uint16_t id, std::size_t num_classes);
// Same, and also throws ConfigError when the template belongs to another task.
PromptTemplate prompt_template_checked(std::uint16_t id, std::size_t num_classes, Task task);
std::uint16_t task_prompt_id(Task task);  // non-AVQA tasks
std::uint16_t exist_prompt_id(std::size_t cls);
std::uint16_t count_prompt_id(std::size_t num_classes);
std::uint16_t location_prompt_id(std::size_t num_classes);
// Row of the template inside its task's embedding table.
std::size_t prompt_row(std::uint16_t id, std::size_t num_classes);
std::size_t task_prompt_rows(Task task, std::size_t num_classes);

// AVQA answer vocabulary.
namespace answer {
inline constexpr std::uint16_t kNo = 0;
inline constexpr std::uint16_t kYes = 1;
inline constexpr std::uint16_t kOne = 2;
inline constexpr std::uint16_t kTwo = 3;
inline constexpr std::uint16_t kTopLeft = 4;
inline constexpr std::uint16_t kTopRight = 5;
inline constexpr std::uint16_t kBottomLeft = 6;
inline constexpr std::uint16_t kBottomRight = 7;
inline constexpr std::uint16_t kCount = 8;
}  // namespace answer

std::uint16_t quadrant_answer(std::size_t patch, std::size_t grid);
std::string answer_text(std::uint16_t answer);

}  // namespace avu
