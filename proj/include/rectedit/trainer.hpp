#pragma once

#include "rectedit/config_file.hpp"
#include "rectedit/denoiser.hpp"
#include "rectedit/noise_schedule.hpp"
#include "rectedit/objectives.hpp"
#include "rectedit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rectedit {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-4;
    double weight_decay = 1e-2;
    std::int64_t warmup_steps = 100;
    std::int64_t total_steps = 10000;
    double dropout_p = 0.05;
    /// Probability of dropping both conditions together, drawn before the independent draws.
    double dropout_joint_p = 0.0;
    TripletConfig triplet;
    std::uint64_t seed = 0;
    bool use_rectified = true;
    bool use_contrastive = true;
    /// 0 writes only the final checkpoint.
    std::int64_t checkpoint_every = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct ScheduleConfig {
    int num_timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

/// Everything a train config file can set.
struct TrainSetup {
    TrainConfig train;
    DenoiserConfig model;
    ScheduleConfig schedule;
};

/// Keys mirror the field names; nested fields use a prefix (triplet.margin, model.depth,
/// schedule.num_timesteps). Unknown or invalid keys are reported together.
TrainSetup parse_train_setup(const KeyValues &values);
KeyValues render_train_setup(const TrainSetup &setup);

/// Learning rate with a linear ramp over warmup_steps, constant afterwards.
double learning_rate_at(const TrainConfig &config, std::int64_t step);

struct TrainingExample {
    std::string id;
    Tensor original;
    Tensor edited;
    std::string instruction;
    std::vector<std::string> negatives;
};

struct StepMetrics {
    std::int64_t step = 0;
    double l_train = 0.0;
    double l_triplet = 0.0;
    double l_total = 0.0;
    double d_pos = 0.0;
    double d_neg = 0.0;
    double grad_norm = 0.0;
    double lr = 0.0;
    int skipped_triplets = 0;
    /// Model evaluations this step (forward passes).
    std::uint64_t evaluations = 0;
};

std::string metrics_to_json(const StepMetrics &metrics);
StepMetrics metrics_from_json(const std::string &line);

/// The random draws of one step for one sample.
struct SampleDraw {
    int t = 0;
    Tensor epsilon;
    DropoutMask dropout;
    int negative = -1;
};

std::vector<SampleDraw> draw_step(std::span<const TrainingExample> batch, const NoiseSchedule &schedule,
                                  const TrainConfig &config, std::int64_t step);

/// Seen once per denoiser evaluation inside a step.
struct BranchProbe {
    std::size_t sample = 0;
    bool negative = false;
    int t = 0;
    const Tensor *x_t = nullptr;
    const Tensor *epsilon = nullptr;
    DropoutMask dropout;
    const TextEmbedding *text = nullptr;
};
using BranchObserver = std::function<void(const BranchProbe &)>;

struct LossAndGrad {
    StepMetrics metrics;
    std::vector<double> grad;
};

/// L_total and its parameter gradient for fixed draws. No parameters change.
LossAndGrad loss_and_grad(std::span<const TrainingExample> batch, std::span<const SampleDraw> draws,
                          const Denoiser &model, const NoiseSchedule &schedule, const TrainConfig &config,
                          std::int64_t step, const BranchObserver &observer = {});

class AdamW {
public:
    AdamW() = default;
    AdamW(std::size_t size, double beta1, double beta2, double eps);

    void step(std::span<double> params, std::span<const double> grad, double lr, double weight_decay);

    std::int64_t steps() const noexcept { return t_; }
    const std::vector<double> &first_moment() const noexcept { return m_; }
    const std::vector<double> &second_moment() const noexcept { return v_; }
    void restore(std::int64_t t, std::vector<double> m, std::vector<double> v);

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// One optimizer step on L_total. Throws missing_negatives when contrastive training
/// meets a sample without negatives.
StepMetrics train_step(std::span<const TrainingExample> batch, Denoiser &model, const NoiseSchedule &schedule,
                       const TrainConfig &config, std::int64_t step, AdamW &optimizer,
                       const BranchObserver &observer = {});

struct Checkpoint {
    DenoiserConfig model;
    std::vector<double> betas;
    std::int64_t step = 0;
    std::vector<double> params;
    std::int64_t optimizer_steps = 0;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    KeyValues setup;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint &checkpoint, const std::string &path);
/// Throws unreadable_source, format_version or decode.
Checkpoint load_checkpoint(const std::string &path);
Denoiser model_from_checkpoint(const Checkpoint &checkpoint);

struct FitOptions {
    std::string out_dir;
    bool resume = false;
    std::function<void(const StepMetrics &)> on_step;
};

struct FitResult {
    std::int64_t first_step = 0;
    std::int64_t final_step = 0;
    std::string checkpoint_path;
    std::vector<StepMetrics> metrics;
};

/// Writes <out>/model.ckpt (every checkpoint_every steps and at the end) and
/// <out>/metrics.jsonl. Batches depend only on (seed, step), so a resumed run
/// continues exactly where the interrupted one stopped.
FitResult fit(const TrainSetup &setup, std::span<const TrainingExample> dataset, Denoiser &model,
              const NoiseSchedule &schedule, const FitOptions &options);

std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch_size, std::uint64_t seed,
                                       std::int64_t step);

}  // namespace rectedit
