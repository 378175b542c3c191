#include "lvg/distill.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "lvg/common.hpp"

namespace lvg {

void DistillConfig::validate() const {
    if (steps < 1) throw ConfigError("distill: steps must be >= 1");
    if (ratio < 1) throw ConfigError("distill: ratio must be >= 1");
    if (!(lr_student > 0) || !(lr_critic > 0))
        throw ConfigError("distill: learning rates must be positive");
    if (!(cfg_weight >= 0) || !std::isfinite(cfg_weight))
        throw ConfigError("distill: bad cfg weight");
    if (!use_step_loss && !use_holistic_loss)
        throw ConfigError("distill: both loss terms disabled");
}

std::vector<double> DistillConfig::schedule() const {
    std::vector<double> t(static_cast<size_t>(steps));
    for (int j = 0; j < steps; ++j) t[static_cast<size_t>(j)] = 1.0 - double(j) / steps;
    return t;
}

namespace {

Tensor<float> rows_of(const LatentGrid& g) {
    Tensor<float> t(static_cast<int>(g.cell_count()), g.d);
    for (size_t i = 0; i < g.values.size(); ++i) t.data[i] = g.values[i];
    return t;
}

LatentGrid latent_of(const Tensor<float>& t, const LatentGrid& like) {
    LatentGrid g(like.H, like.W, like.L, like.d);
    for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = t.data[i];
    return g;
}

}  // namespace

void student_rollout_visit(Model<float>& student, const LatentGrid& s0,
                           const std::vector<LatentGrid>& objects, const ConditionEmbedding& c,
                           const DistillConfig& config, int sampled_step, Rng& rng,
                           DistillCounters* counters, const StepVisitor& visit) {
    config.validate();
    if (objects.empty()) throw DataError("student_rollout: empty object list");
    if (sampled_step < 1 || sampled_step > config.steps)
        throw ConfigError("student_rollout: sampled step outside 1..T");
    const std::vector<double> sched = config.schedule();
    size_t count = objects.size();
    if (config.object_count > 0)
        count = std::min(count, static_cast<size_t>(config.object_count));

    LatentGrid ctx = s0;
    for (size_t i = 0; i < count; ++i) {
        const LatentGrid& obj = objects[i];
        if (!obj.same_shape(s0)) throw DataError("student_rollout: object latent shape mismatch");

        StepRecord rec;
        rec.object_index = static_cast<int>(i);
        rec.context = ctx;

        LatentGrid x = noise_like(s0, rng);
        for (int j = 1; j <= config.steps; ++j) {
            const double t = sched[static_cast<size_t>(j - 1)];
            LatentGrid v;
            if (j == sampled_step) {
                rec.tape = std::make_unique<Tape<float>>(true);
                auto v_var = model_forward(*rec.tape, student, x, ctx, obj, c, t);
                auto x_var = rec.tape->constant(rows_of(x));
                rec.x0 = rec.tape->sub(x_var, rec.tape->scale(v_var, float(t)));
                rec.value = latent_of(rec.tape->value(rec.x0), x);
                v = latent_of(rec.tape->value(v_var), x);
                if (counters) ++counters->student_grad_calls;
            } else {
                v = forward(student, x, ctx, obj, c, t);
                if (counters) ++counters->student_detached_calls;
            }
            const LatentGrid x0 = x0_from_velocity(x, v, t);
            if (!all_finite(x0.values))
                throw NumericalError("student_rollout: non-finite prediction at object " +
                                     std::to_string(i) + " step " + std::to_string(j));
            if (j < config.steps) {
                // Predicted noise keeps the detached chain on the Euler path.
                const LatentGrid eps_hat = lat_add(x, lat_scale(v, float(1.0 - t)));
                x = flow_forward(x0, eps_hat, sched[static_cast<size_t>(j)]);
            }
        }
        ctx = rec.value;  // detached step-s prediction becomes the next context
        visit(rec);
    }
}

std::vector<StepRecord> student_rollout(Model<float>& student, const LatentGrid& s0,
                                        const std::vector<LatentGrid>& objects,
                                        const ConditionEmbedding& c, const DistillConfig& config,
                                        int sampled_step, Rng& rng, DistillCounters* counters) {
    std::vector<StepRecord> records;
    student_rollout_visit(student, s0, objects, c, config, sampled_step, rng, counters,
                          [&](StepRecord& rec) { records.push_back(std::move(rec)); });
    return records;
}

DmdResult dmd_grad(const LatentGrid& x0_pred, Model<float>& teacher, Model<float>& critic,
                   const LatentGrid& teacher_s, const LatentGrid& teacher_o,
                   const ConditionEmbedding& teacher_c, const ConditionEmbedding& critic_c,
                   double cfg_weight, Rng& rng, DistillCounters* counters) {
    const double t = rng.uniform();
    const LatentGrid eps = noise_like(x0_pred, rng);
    const LatentGrid xt = flow_forward(x0_pred, eps, t);

    LatentGrid v_teacher;
    if (cfg_weight == 1.0) {
        v_teacher = forward(teacher, xt, teacher_s, teacher_o, teacher_c, t);
    } else {
        const LatentGrid vc = forward(teacher, xt, teacher_s, teacher_o, teacher_c, t);
        const LatentGrid vu =
            forward(teacher, xt, teacher_s, teacher_o, ConditionEmbedding::null_condition(), t);
        v_teacher = lat_add(vu, lat_scale(lat_sub(vc, vu), float(cfg_weight)));
    }
    const LatentGrid x0_teacher = x0_from_velocity(xt, v_teacher, t);

    const LatentGrid zeros = zeros_like(x0_pred);
    const LatentGrid v_critic = forward(critic, xt, zeros, zeros, critic_c, t);
    const LatentGrid x0_critic = x0_from_velocity(xt, v_critic, t);
    if (counters) ++counters->critic_scores;

    double denom = lat_mean_abs(lat_sub(x0_pred, x0_teacher));
    if (denom < 1e-8) {
        std::fprintf(stderr, "warning: dmd normalizer %.3g clamped to 1e-8\n", denom);
        denom = 1e-8;
    }
    DmdResult out;
    out.weight = 1.0 / denom;
    out.coeff = lat_scale(lat_sub(x0_critic, x0_teacher), float(out.weight));
    out.loss = 0.0;
    for (size_t i = 0; i < x0_pred.values.size(); ++i)
        out.loss += double(x0_pred.values[i]) * double(out.coeff.values[i]);
    if (!std::isfinite(out.loss)) throw NumericalError("dmd_grad: non-finite contribution");
    return out;
}

DistillStepLog dual_guidance_step(Model<float>& student, TeacherBundle& teachers,
                                  const SceneBatch& scene, const DistillConfig& config,
                                  AdamW& opt, Rng& rng, DistillCounters* counters) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const int sampled = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(config.steps)));

    size_t count = scene.objects.size();
    if (config.object_count > 0)
        count = std::min(count, static_cast<size_t>(config.object_count));
    const LatentGrid zeros = zeros_like(scene.s0);

    DistillStepLog log;
    student_rollout_visit(
        student, scene.s0, scene.objects, scene.c, config, sampled, rng, counters,
        [&](StepRecord& rec) {
            Tape<float>::Var total{};
            bool have = false;
            if (config.use_step_loss) {
                const DmdResult d = dmd_grad(rec.value, teachers.stepwise, teachers.critic,
                                             rec.context, scene.objects[rec.object_index],
                                             scene.c, scene.c, config.cfg_weight, rng, counters);
                if (counters) ++counters->stepwise_teacher_scores;
                log.loss_step += d.loss;
                total = rec.tape->inner_const(rec.x0, rows_of(d.coeff));
                have = true;
            }
            if (config.use_holistic_loss &&
                rec.object_index + 1 == static_cast<int>(count)) {
                const DmdResult d = dmd_grad(rec.value, teachers.holistic, teachers.critic,
                                             zeros, zeros, scene.c, scene.c, config.cfg_weight,
                                             rng, counters);
                if (counters) ++counters->holistic_teacher_scores;
                log.loss_holistic += d.loss;
                const auto term = rec.tape->inner_const(rec.x0, rows_of(d.coeff));
                total = have ? rec.tape->add(total, term) : term;
                have = true;
            }
            if (have) rec.tape->backward(total);
            log.outputs.push_back(rec.value);
            rec.tape.reset();  // free the graph before the next object
        });

    double sq = 0.0;
    for (const auto& e : student.params.entries())
        for (float g : e.grad.data) sq += double(g) * double(g);
    log.grad_norm = std::sqrt(sq);
    if (!std::isfinite(log.grad_norm))
        throw NumericalError("dual_guidance_step: non-finite gradient");

    opt.step(student.params);
    student.params.zero_grad();
    student.params.check_finite("student update");

    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t_start)
                      .count();
    return log;
}

double critic_step(Model<float>& critic, const std::vector<LatentGrid>& outputs,
                   const ConditionEmbedding& c, AdamW& opt, Rng& rng) {
    if (outputs.empty()) throw DataError("critic_step: no student outputs");
    // One sampled output per update keeps the 1:ratio cadence affordable;
    // across updates the critic still sees every object slot.
    const LatentGrid& pick = outputs[rng.below(outputs.size())];
    std::vector<std::pair<const LatentGrid*, const ConditionEmbedding*>> batch{{&pick, &c}};
    const double loss = fm_loss_uncond(critic, batch, rng);
    opt.step(critic.params);
    critic.params.zero_grad();
    critic.params.check_finite("critic update");
    return loss;
}

void run_distillation(Model<float>& student, TeacherBundle& teachers,
                      const std::vector<SceneBatch>& scenes, const DistillConfig& config,
                      int steps, std::ostream* log, DistillCounters* counters) {
    config.validate();
    if (scenes.empty()) throw DataError("run_distillation: no scenes");
    Rng rng(config.seed);
    AdamW opt_student({config.lr_student, config.beta1, config.beta2, 1e-8, config.weight_decay});
    AdamW opt_critic({config.lr_critic, config.beta1, config.beta2, 1e-8, config.weight_decay});
    const uint64_t sum_h = param_checksum(teachers.holistic.params);
    const uint64_t sum_s = param_checksum(teachers.stepwise.params);

    if (log) *log << "step,loss_step,loss_holistic,critic_loss,grad_norm,wall_ms\n";
    for (int step = 0; step < steps; ++step) {
        const SceneBatch& scene = scenes[static_cast<size_t>(step) % scenes.size()];
        DistillStepLog row = dual_guidance_step(student, teachers, scene, config, opt_student,
                                                rng, counters);
        double critic_loss = 0.0;
        for (int r = 0; r < config.ratio; ++r)
            critic_loss += critic_step(teachers.critic, row.outputs, scene.c, opt_critic, rng);
        critic_loss /= config.ratio;
        if (!std::isfinite(row.loss_step) || !std::isfinite(row.loss_holistic) ||
            !std::isfinite(critic_loss))
            throw NumericalError("run_distillation: non-finite loss at step " +
                                 std::to_string(step));
        if (log)
            *log << step << ',' << row.loss_step << ',' << row.loss_holistic << ','
                 << critic_loss << ',' << row.grad_norm << ',' << row.wall_ms << '\n';
    }
    if (param_checksum(teachers.holistic.params) != sum_h ||
        param_checksum(teachers.stepwise.params) != sum_s)
        throw Error("run_distillation: teacher parameters changed");
}

}  // namespace lvg
