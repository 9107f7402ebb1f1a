#include "sparseview/viewselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "sparseview/error.hpp"

namespace sparseview {

void SelectionPlan::validate(int frame_count) const {
    std::vector<char> used(std::max(frame_count, 0), 0);
    auto check = [&](const std::vector<int> &indices, const char *what) {
        for (int i : indices) {
            require(i >= 0 && i < frame_count, ErrorCode::InvariantViolation,
                    std::string(what) + " index out of range: " + std::to_string(i));
            require(!used[i], ErrorCode::InvariantViolation,
                    std::string(what) + " index repeated or shared: " + std::to_string(i));
            used[i] = 1;
        }
    };
    check(input_indices, "input");
    check(target_indices, "target");
}

std::vector<int> fps(const std::vector<Eigen::Vector3d> &positions, int count) {
    const int n = static_cast<int>(positions.size());
    require(count >= 0, ErrorCode::InvalidArgument, "sample count must be non-negative");
    require(count <= n, ErrorCode::InvalidArgument, "cannot sample more points than available");
    for (const auto &p : positions) require(p.allFinite(), ErrorCode::InvalidArgument, "positions must be finite");
    std::vector<int> selected;
    if (count == 0) return selected;

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto &p : positions) centroid += p;
    centroid /= n;

    auto argmax = [n](const std::vector<double> &d) {
        int best = -1;
        for (int i = 0; i < n; ++i)
            if (best < 0 || d[i] > d[best]) best = i;
        return best;
    };

    std::vector<double> dist(n);
    for (int i = 0; i < n; ++i) dist[i] = (positions[i] - centroid).squaredNorm();
    int next = argmax(dist);
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    while (true) {
        selected.push_back(next);
        if (static_cast<int>(selected.size()) == count) break;
        for (int i = 0; i < n; ++i) dist[i] = std::min(dist[i], (positions[i] - positions[next]).squaredNorm());
        for (int s : selected) dist[s] = -1.0;
        next = argmax(dist);
    }
    return selected;
}

SelectionPlan evaluation_split(const std::vector<Eigen::Vector3d> &positions, int span, int inputs, int targets) {
    const int n = static_cast<int>(positions.size());
    require(inputs >= 1 && targets >= 0, ErrorCode::InvalidArgument, "invalid input/target counts");
    require(span >= 1 && span <= n, ErrorCode::InvalidArgument, "span must lie within the frame count");
    require(span >= inputs + targets, ErrorCode::InvalidArgument,
            "insufficient frames: need " + std::to_string(inputs + targets) + ", span has " + std::to_string(span));

    const std::vector<Eigen::Vector3d> head(positions.begin(), positions.begin() + span);
    SelectionPlan plan;
    plan.candidate_window = span;
    plan.input_indices = fps(head, inputs);

    std::vector<char> taken(span, 0);
    for (int i : plan.input_indices) taken[i] = 1;
    std::vector<int> free_frames;
    for (int i = 0; i < span; ++i)
        if (!taken[i]) free_frames.push_back(i);

    for (int k = 0; k < targets; ++k) {
        const double ideal = targets == 1 ? 0.5 * (span - 1) : k * static_cast<double>(span - 1) / (targets - 1);
        // Nearest non-input frame, lower index on ties.
        int best = free_frames.front();
        for (int f : free_frames)
            if (std::abs(f - ideal) < std::abs(best - ideal)) best = f;
        int pick = -1;
        for (int f = best; f < span && pick < 0; ++f)
            if (!taken[f]) pick = f;
        for (int f = best - 1; f >= 0 && pick < 0; --f)
            if (!taken[f]) pick = f;
        taken[pick] = 1;
        plan.target_indices.push_back(pick);
    }
    std::sort(plan.target_indices.begin(), plan.target_indices.end());
    return plan;
}

int curriculum(long long step, const CurriculumSchedule &schedule) {
    require(step >= 0, ErrorCode::InvalidArgument, "training step must be non-negative");
    require(schedule.period > 0, ErrorCode::InvalidArgument, "curriculum period must be positive");
    const long long grown = schedule.base + schedule.increment * (step / schedule.period);
    return static_cast<int>(std::min<long long>(schedule.max_window, grown));
}

SelectionPlan training_plan(const std::vector<Eigen::Vector3d> &positions, long long step, int inputs, int targets,
                            std::uint64_t seed, const CurriculumSchedule &schedule) {
    const int n = static_cast<int>(positions.size());
    const int window = std::min(n, curriculum(step, schedule));
    require(window >= inputs + targets, ErrorCode::InvalidArgument, "candidate window too small for the plan");
    std::mt19937_64 rng(seed);
    const int start = std::uniform_int_distribution<int>(0, n - window)(rng);

    const std::vector<Eigen::Vector3d> candidates(positions.begin() + start, positions.begin() + start + window);
    SelectionPlan plan;
    plan.candidate_window = window;
    for (int i : fps(candidates, inputs)) plan.input_indices.push_back(start + i);

    std::vector<int> rest;
    for (int i = start; i < start + window; ++i)
        if (std::find(plan.input_indices.begin(), plan.input_indices.end(), i) == plan.input_indices.end())
            rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    plan.target_indices.assign(rest.begin(), rest.begin() + targets);
    std::sort(plan.target_indices.begin(), plan.target_indices.end());
    return plan;
}

std::string plan_to_json(const SelectionPlan &plan) {
    nlohmann::json j;
    j["input_indices"] = plan.input_indices;
    j["target_indices"] = plan.target_indices;
    j["candidate_window"] = plan.candidate_window;
    return j.dump(2);
}

SelectionPlan plan_from_json(const std::string &text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SelectionPlan plan;
        plan.input_indices = j.at("input_indices").get<std::vector<int>>();
        plan.target_indices = j.at("target_indices").get<std::vector<int>>();
        plan.candidate_window = j.value("candidate_window", 0);
        return plan;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::MalformedJson, std::string("selection plan: ") + e.what());
    }
}

}  // namespace sparseview
