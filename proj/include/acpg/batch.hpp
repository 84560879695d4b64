#pragma once

#include <vector>

#include "acpg/linalg.hpp"

namespace acpg {

// One step of experience, carried from collection into updates.
struct Transition {
    Vec obs;
    int action = 0;
    double reward = 0.0;
    double ret = 0.0;        // discounted return G_t
    double advantage = 0.0;  // GAE advantage (PPO); standardized return (REINFORCE)
    double value = 0.0;      // V(s) predicted at collect time (PPO)
    double value_target = 0.0;
    double old_log_prob = 0.0;
    Vec old_probs;           // full policy distribution at collect time (PPO)
    int class_label = -1;    // optimal action of the state, when an oracle exists
};

struct TransitionBatch {
    std::vector<Transition> items;

    int size() const { return static_cast<int>(items.size()); }
};

}  // namespace acpg
