#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/flow.hpp"
#include "lvg/model.hpp"
#include "lvg/optim.hpp"
#include "lvg/text.hpp"

namespace lvg {

struct DistillConfig {
    int steps = 4;               // student schedule length T
    int object_count = 0;        // cap per scene; 0 means use the full queue
    double lr_student = 2e-6;
    double lr_critic = 5e-7;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    int ratio = 5;               // critic updates per student update
    double cfg_weight = 3.0;     // teacher score guidance
    uint64_t seed = 0;
    bool use_step_loss = true;
    bool use_holistic_loss = true;

    void validate() const;
    // t_j = 1 - j/T, descending from 1.0; T=4 gives {1.0, 0.75, 0.5, 0.25}.
    std::vector<double> schedule() const;
};

// Frozen holistic teacher (text-only), frozen step-wise teacher, and the
// trainable critic (holistic-teacher architecture, text-only conditioning).
struct TeacherBundle {
    Model<float> holistic;
    Model<float> stepwise;
    Model<float> critic;
};

struct DistillCounters {
    size_t student_grad_calls = 0;
    size_t student_detached_calls = 0;
    size_t stepwise_teacher_scores = 0;
    size_t holistic_teacher_scores = 0;
    size_t critic_scores = 0;  // score-difference evaluations inside dmd_grad
};

// Gradient-bearing record for one object's sampled step.
struct StepRecord {
    int object_index = 0;
    std::unique_ptr<Tape<float>> tape;
    Tape<float>::Var x0{};       // prediction on the tape
    LatentGrid value;            // detached prediction (this object's output)
    LatentGrid context;          // detached S_ctx the object was denoised against
};

using StepVisitor = std::function<void(StepRecord&)>;

// Self-rollout over the object list: per object, run the full T-step loop
// from seeded noise; only step j==sampled_step builds a tape. Re-noising
// between steps uses flow_forward at the next schedule time with the
// predicted noise, so a T-step rollout retraces the Euler sampler. The
// context for object i+1 is the detached step-s prediction of object i.
void student_rollout_visit(Model<float>& student, const LatentGrid& s0,
                           const std::vector<LatentGrid>& objects, const ConditionEmbedding& c,
                           const DistillConfig& config, int sampled_step, Rng& rng,
                           DistillCounters* counters, const StepVisitor& visit);

std::vector<StepRecord> student_rollout(Model<float>& student, const LatentGrid& s0,
                                        const std::vector<LatentGrid>& objects,
                                        const ConditionEmbedding& c, const DistillConfig& config,
                                        int sampled_step, Rng& rng,
                                        DistillCounters* counters = nullptr);

struct DmdResult {
    LatentGrid coeff;   // (x0_critic - x0_teacher) * weight, stop-gradient
    double weight = 0;  // 1 / mean|x0_pred - x0_teacher|, clamped at 1e-8
    double loss = 0;    // sum(x0_pred * coeff), the scalar the tape minimizes
};

// Score-difference gradient for one prediction. Noises x0_pred to a uniform
// t, asks teacher (with CFG) and critic (raw) for clean-sample estimates,
// and returns the normalized difference to inject through the prediction.
DmdResult dmd_grad(const LatentGrid& x0_pred, Model<float>& teacher, Model<float>& critic,
                   const LatentGrid& teacher_s, const LatentGrid& teacher_o,
                   const ConditionEmbedding& teacher_c, const ConditionEmbedding& critic_c,
                   double cfg_weight, Rng& rng, DistillCounters* counters = nullptr);

struct SceneBatch {
    std::string scene_id;
    LatentGrid s0;
    std::vector<LatentGrid> objects;
    ConditionEmbedding c;
};

struct DistillStepLog {
    double loss_step = 0;
    double loss_holistic = 0;
    double critic_loss = 0;
    double grad_norm = 0;
    double wall_ms = 0;
    std::vector<LatentGrid> outputs;  // detached student predictions
};

// One student update: self-rollout with s ~ U{1..T}, step-wise DMD term per
// object, holistic DMD term on the last prediction, unit weights, AdamW.
DistillStepLog dual_guidance_step(Model<float>& student, TeacherBundle& teachers,
                                  const SceneBatch& scene, const DistillConfig& config,
                                  AdamW& opt, Rng& rng, DistillCounters* counters = nullptr);

// Denoising update for the critic on detached student outputs.
double critic_step(Model<float>& critic, const std::vector<LatentGrid>& outputs,
                   const ConditionEmbedding& c, AdamW& opt, Rng& rng);

// Full loop: cycle scenes, one dual-guidance update then `ratio` critic
// updates per step; CSV rows {step, loss_step, loss_holistic, critic_loss,
// grad_norm, wall_ms} go to `log` when non-null.
void run_distillation(Model<float>& student, TeacherBundle& teachers,
                      const std::vector<SceneBatch>& scenes, const DistillConfig& config,
                      int steps, std::ostream* log, DistillCounters* counters = nullptr);

}  // namespace lvg
