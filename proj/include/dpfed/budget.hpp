#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dpfed {

// Raised when an allocation is requested but the budget is already spent.
struct BudgetExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-run allocation state: progress observations pi_1..pi_t and the
// epsilon_t handed out so far. Invariants: every allocation > 0, and the
// allocations of a full-length run sum to epsilon_total.
struct BudgetSchedule {
    double epsilon_total = 1.0;
    double spent = 0.0;
    std::vector<double> progress_trace;
    std::vector<double> allocations;
    int rounds_total = 1;
    double progress_floor = 1e-6;

    void validate() const {
        if (!(epsilon_total > 0.0))
            throw std::invalid_argument("BudgetSchedule: epsilon must be > 0");
        if (rounds_total < 1)
            throw std::invalid_argument("BudgetSchedule: rounds must be >= 1");
        if (!(progress_floor > 0.0))
            throw std::invalid_argument("BudgetSchedule: floor must be > 0");
    }

    double remaining() const { return epsilon_total - spent; }

    void note_allocation(double eps) {
        allocations.push_back(eps);
        spent += eps;
    }

    void note_progress(double pi) { progress_trace.push_back(pi); }
};

// Relative improvement of the loss between consecutive rounds.
inline double learning_progress(double loss_prev, double loss_curr) {
    if (!(loss_prev > 0.0))
        throw std::invalid_argument("learning_progress: loss_prev must be > 0");
    return (loss_prev - loss_curr) / loss_prev;
}

// Offline allocation over a complete progress trace: floor each entry,
// then split the budget proportionally. This is the reference semantics
// for post-hoc reporting.
inline std::vector<double> normalize_allocations(
    const std::vector<double>& progress_trace, double epsilon_total,
    double floor) {
    if (progress_trace.empty())
        throw std::invalid_argument("normalize_allocations: empty trace");
    if (!(epsilon_total > 0.0))
        throw std::invalid_argument("normalize_allocations: epsilon <= 0");
    if (!(floor > 0.0))
        throw std::invalid_argument("normalize_allocations: floor <= 0");
    std::vector<double> floored(progress_trace.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < progress_trace.size(); ++i) {
        floored[i] = std::max(progress_trace[i], floor);
        sum += floored[i];
    }
    for (double& v : floored) v = epsilon_total * v / sum;
    return floored;
}

// Online per-round allocation. Round 1 gets the uniform prior epsilon/T;
// the final round absorbs the entire remaining budget; rounds in between
// weigh the latest floored progress against the floored mean of the
// progress observed so far, scaled by the number of rounds still to come.
inline double next_round_epsilon(const BudgetSchedule& schedule,
                                 int round_index) {
    schedule.validate();
    if (round_index < 1 || round_index > schedule.rounds_total)
        throw std::invalid_argument("next_round_epsilon: round out of range");
    const double remaining = schedule.remaining();
    if (!(remaining > 0.0))
        throw BudgetExhausted("next_round_epsilon: budget exhausted");
    if (round_index == schedule.rounds_total) return remaining;
    if (round_index == 1)
        return schedule.epsilon_total /
               static_cast<double>(schedule.rounds_total);

    if (schedule.progress_trace.size() <
        static_cast<std::size_t>(round_index - 1))
        throw std::invalid_argument(
            "next_round_epsilon: missing progress observations");
    const double latest = std::max(
        schedule.progress_trace[static_cast<std::size_t>(round_index - 2)],
        schedule.progress_floor);
    double mean = 0.0;
    for (int i = 0; i < round_index - 1; ++i)
        mean += std::max(schedule.progress_trace[static_cast<std::size_t>(i)],
                         schedule.progress_floor);
    mean /= static_cast<double>(round_index - 1);

    const double future =
        static_cast<double>(schedule.rounds_total - round_index) * mean;
    return remaining * latest / (latest + future);
}

}  // namespace dpfed
