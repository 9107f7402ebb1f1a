#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace sparseview {

struct SelectionPlan {
    std::vector<int> input_indices;
    std::vector<int> target_indices;
    int candidate_window = 0;

    /// Throws InvariantViolation unless both sets are disjoint and inside [0, frame_count).
    void validate(int frame_count) const;
};

/// Farthest point sampling. Seeds with the point farthest from the centroid,
/// then repeatedly takes the point farthest from the selected set; ties go to
/// the lowest index. Returns indices in selection order.
std::vector<int> fps(const std::vector<Eigen::Vector3d> &positions, int count);

/// Test protocol: restrict to the first `span` frames, choose `inputs` views by
/// FPS and `targets` views equally spaced over the span, each snapped to the
/// nearest free frame (collisions move to the next free index).
SelectionPlan evaluation_split(const std::vector<Eigen::Vector3d> &positions, int span, int inputs = 5,
                               int targets = 56);

struct CurriculumSchedule {
    int base = 30;
    int increment = 30;
    long long period = 10000;
    int max_window = 300;
};

/// Size of the candidate-frame window at a training step.
int curriculum(long long step, const CurriculumSchedule &schedule = {});

/// Training-time plan: a random window of `curriculum(step)` consecutive frames,
/// FPS inputs inside it and uniformly drawn targets from the rest of it.
SelectionPlan training_plan(const std::vector<Eigen::Vector3d> &positions, long long step, int inputs,
                            int targets, std::uint64_t seed, const CurriculumSchedule &schedule = {});

std::string plan_to_json(const SelectionPlan &plan);
SelectionPlan plan_from_json(const std::string &text);

}  // namespace sparseview
