#include "avu/prompts.hpp"

#include "avu/errors.hpp"

namespace avu {

std::size_t prompt_count(std::size_t num_classes) { return 6 + num_classes; }

std::uint16_t task_prompt_id(Task task) {
  if (task == Task::kAVQA) throw ConfigError("AVQA prompts are per question");
  return static_cast<std::uint16_t>(task);
}
std::uint16_t exist_prompt_id(std::size_t cls) { return static_cast<std::uint16_t>(3 + cls); }
std::uint16_t count_prompt_id(std::size_t k) { return static_cast<std::uint16_t>(4 + k); }
std::uint16_t location_prompt_id(std::size_t k) { return static_cast<std::uint16_t>(5 + k); }

PromptTemplate prompt_template(std::uint16_t id, std::size_t num_classes) {
  PromptTemplate p;
  p.id = id;
  switch (id) {
    case 0:
      p.task = Task::kAVE;
      p.text = "localize audio-visual events over time";
      return p;
    case 1:
      p.task = Task::kAVVP;
      p.text = "parse audible and visible events in every segment";
      return p;
    case 2:
      p.task = Task::kSSL;
      p.text = "find the region that makes the sound";
      return p;
    case 3:
      p.task = Task::kAVS;
      p.text = "segment the sounding object";
      return p;
    default: break;
  }
  p.task = Task::kAVQA;
  if (id < 4 + num_classes) {
    p.question = QuestionType::kExist;
    p.cls = id - 3u;
    p.text = "is class " + std::to_string(p.cls) + " audible";
  } else if (id == count_prompt_id(num_classes)) {
    p.question = QuestionType::kCount;
    p.text = "how many distinct classes sound";
  } else if (id == location_prompt_id(num_classes)) {
    p.question = QuestionType::kLocation;
    p.text = "where is the sounding object";
  } else {
    throw ConfigError("prompt template " + std::to_string(id) + " outside catalog of " +
                      std::to_string(prompt_count(num_classes)));
  }
  return p;
}

PromptTemplate prompt_template_checked(std::uint16_t id, std::size_t num_classes, Task task) {
  PromptTemplate p = prompt_template(id, num_classes);
  if (p.task != task) {
    throw ConfigError("prompt template " + std::to_string(id) + " belongs to " +
                      std::string(task_name(p.task)) + ", not " + std::string(task_name(task)));
  }
  return p;
}

std::vector<PromptTemplate> prompt_catalog(std::size_t num_classes) {
  std::vector<PromptTemplate> out;
  for (std::size_t i = 0; i < prompt_count(num_classes); ++i)
    out.push_back(prompt_template(static_cast<std::uint16_t>(i), num_classes));
  return out;
}

std::size_t prompt_row(std::uint16_t id, std::size_t num_classes) {
  const PromptTemplate p = prompt_template(id, num_classes);
  return p.task == Task::kAVQA ? id - 4u : 0;
}

std::size_t task_prompt_rows(Task task, std::size_t num_classes) {
  return task == Task::kAVQA ? num_classes + 2 : 1;
}

std::uint16_t quadrant_answer(std::size_t patch, std::size_t grid) {
  const bool top = 2 * (patch / grid) < grid;
  const bool left = 2 * (patch % grid) < grid;
  if (top) return left ? answer::kTopLeft : answer::kTopRight;
  return left ? answer::kBottomLeft : answer::kBottomRight;
}

std::string answer_text(std::uint16_t a) {
  static const char* names[] = {"no",  "yes",       "one",      "two",
                                "top-left", "top-right", "bottom-left", "bottom-right"};
  return a < answer::kCount ? names[a] : "answer " + std::to_string(a);
}

}  // namespace avu
