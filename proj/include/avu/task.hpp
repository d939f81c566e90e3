#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace avu {

enum class Task : std::uint8_t { kAVE = 0, kAVVP = 1, kSSL = 2, kAVS = 3, kAVQA = 4 };

inline constexpr std::size_t kNumTasks = 5;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {
    Task::kAVE, Task::kAVVP, Task::kSSL, Task::kAVS, Task::kAVQA};

// Set of tasks whose loss can reach a parameter.
using TaskSet = std::bitset<kNumTasks>;

inline TaskSet all_tasks() { return TaskSet().set(); }
inline TaskSet only(Task t) { return TaskSet().set(static_cast<std::size_t>(t)); }
inline std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }

std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view name);

}  // namespace avu
