#pragma once

#include <cstddef>
#include <vector>

namespace moca {

struct Example {
    std::vector<double> input;
    std::size_t label = 0;
    std::size_t task = 0;
    // Position in the stream's training (or test) list; unique per split.
    std::size_t id = 0;
};

struct Task {
    std::vector<std::size_t> classes;
    std::vector<Example> train;
    std::vector<Example> test;
};

// Tasks in presentation order; class sets are disjoint and cover
// [0, num_classes).
struct TaskStream {
    std::vector<Task> tasks;
    std::size_t num_classes = 0;
    std::size_t input_dim = 0;

    std::size_t num_tasks() const noexcept { return tasks.size(); }
};

}  // namespace moca
