#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tek/masking.hpp"
#include "tek/model.hpp"
#include "tek/packer.hpp"

namespace tek {

struct TrainConfig {
    double peak_lr = 1e-3;
    int warmup_steps = 0;  // 0 derives 5% of total_steps
    int total_steps = 0;
    int batch_size = 8;
    int epochs = 0;  // when set, total_steps = epochs * ceil(n / batch_size)
    uint64_t seed = 0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-6;
    int checkpoint_every = 0;       // 0 = no periodic checkpoints
    std::string checkpoint_dir;

    void validate() const;
    int effective_warmup() const;
};

// Linear 0 -> peak over [0, warmup], then linear peak -> 0 over
// [warmup, total]; 0 beyond total.
double triangular_lr(int step, const TrainConfig& cfg);

struct LossPoint {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<LossPoint> curve;
};

// Aborts after 100 consecutive steps with loss above 10x the first observed
// loss.
class DivergenceMonitor {
  public:
    void observe(int step, double loss);

  private:
    bool has_initial_ = false;
    double initial_ = 0.0;
    int consecutive_ = 0;
};

// Adam with decoupled weight decay. Biases and layer-norm parameters are
// excluded from decay.
class AdamW {
  public:
    AdamW(ModelState& state, const TrainConfig& cfg);
    void step(ModelState& grads, double lr);

  private:
    ModelState* state_;
    TrainConfig cfg_;
    std::vector<Vec> m_;
    std::vector<Vec> v_;
    int t_ = 0;
};

TrainResult pretrain(ModelState& state, const std::vector<MaskedExample>& data,
                     const TrainConfig& cfg);

TrainResult finetune_qa(ModelState& state, const std::vector<QAExample>& data,
                        const TrainConfig& cfg);

// passage positions plus the CLS no-answer position
std::vector<int> qa_candidates(const PackedInput& packed);

void write_loss_csv(const TrainResult& result, const std::string& path);

}  // namespace tek
