#include "tek/trainer.hpp"

#include <cmath>
#include <fstream>

#include "tek/common.hpp"

namespace tek {

void TrainConfig::validate() const {
    require(peak_lr > 0.0, "peak_lr must be positive");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(total_steps >= 0, "total_steps must be >= 0");
    if (total_steps > 0) {
        require(effective_warmup() < total_steps, "warmup_steps must be < total_steps");
    }
}

int TrainConfig::effective_warmup() const {
    if (warmup_steps > 0) {
        return warmup_steps;
    }
    return std::max(1, total_steps / 20);  // 5% of the schedule
}

double triangular_lr(int step, const TrainConfig& cfg) {
    const int total = cfg.total_steps;
    if (step <= 0 || total <= 0 || step > total) {
        return 0.0;
    }
    const int warmup = cfg.effective_warmup();
    if (step <= warmup) {
        return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return cfg.peak_lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

void DivergenceMonitor::observe(int step, double loss) {
    if (!has_initial_) {
        has_initial_ = true;
        initial_ = loss;
        return;
    }
    if (loss > 10.0 * initial_) {
        ++consecutive_;
        if (consecutive_ >= 100) {
            fail("training diverged: loss " + std::to_string(loss) + " > 10x initial " +
                 std::to_string(initial_) + " for 100 consecutive steps (step " +
                 std::to_string(step) + ")");
        }
    } else {
        consecutive_ = 0;
    }
}

AdamW::AdamW(ModelState& state, const TrainConfig& cfg) : state_(&state), cfg_(cfg) {
    for (auto& ref : state.param_refs()) {
        m_.emplace_back(ref.n, 0.0);
        v_.emplace_back(ref.n, 0.0);
    }
}

void AdamW::step(ModelState& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    auto params = state_->param_refs();
    auto gref = grads.param_refs();
    for (size_t r = 0; r < params.size(); ++r) {
        double* p = params[r].data;
        const double* g = gref[r].data;
        Vec& m = m_[r];
        Vec& v = v_[r];
        const double wd = params[r].decay ? cfg_.weight_decay : 0.0;
        for (size_t i = 0; i < params[r].n; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
            p[i] -= lr * (update + wd * p[i]);
        }
    }
}

namespace {

struct BatchScratch {
    std::vector<ModelState> per_example;
    std::vector<double> losses;
};

// Per-example gradients are computed in parallel but reduced in example
// order, so results do not depend on the thread count.
template <typename LossFn>
TrainResult run_training(ModelState& state, size_t n_examples, const TrainConfig& cfg,
                         LossFn&& example_grad) {
    cfg.validate();
    require(n_examples > 0 || cfg.total_steps == 0, "no training examples");
    TrainResult result;
    if (cfg.total_steps == 0) {
        return result;
    }
    AdamW opt(state, cfg);
    DivergenceMonitor monitor;
    const int b = cfg.batch_size;
    BatchScratch scratch;
    scratch.per_example.assign(static_cast<size_t>(b), ModelState::zeros_like(state));
    scratch.losses.assign(static_cast<size_t>(b), 0.0);
    ModelState grads = ModelState::zeros_like(state);
    for (int step = 1; step <= cfg.total_steps; ++step) {
        const size_t base = static_cast<size_t>(step - 1) * static_cast<size_t>(b);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < b; ++j) {
            ModelState& g = scratch.per_example[static_cast<size_t>(j)];
            g.zero();
            const size_t idx = (base + static_cast<size_t>(j)) % n_examples;
            scratch.losses[static_cast<size_t>(j)] =
                example_grad(idx, g, 1.0 / static_cast<double>(b), step, j);
        }
        grads.zero();
        double loss = 0.0;
        for (int j = 0; j < b; ++j) {
            loss += scratch.losses[static_cast<size_t>(j)];
            auto dst = grads.param_refs();
            auto src = scratch.per_example[static_cast<size_t>(j)].param_refs();
            for (size_t r = 0; r < dst.size(); ++r) {
                for (size_t i = 0; i < dst[r].n; ++i) {
                    dst[r].data[i] += src[r].data[i];
                }
            }
        }
        loss /= b;
        require(std::isfinite(loss), "non-finite training loss at step " + std::to_string(step));
        monitor.observe(step, loss);
        const double lr = triangular_lr(step, cfg);
        opt.step(grads, lr);
        result.curve.push_back(LossPoint{step, lr, loss});
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            step % cfg.checkpoint_every == 0) {
            save_checkpoint(state, cfg.checkpoint_dir + "/step_" + std::to_string(step) +
                                       ".ckpt");
        }
    }
    return result;
}

}  // namespace

TrainResult pretrain(ModelState& state, const std::vector<MaskedExample>& data,
                     const TrainConfig& cfg) {
    const bool use_dropout = state.cfg.dropout > 0.0;
    return run_training(
        state, data.size(), cfg,
        [&](size_t idx, ModelState& grads, double scale, int step, int slot) {
            const MaskedExample& ex = data[idx];
            const auto mask = attention_mask_for(ex.input_ids);
            Rng rng = Rng::for_stream(cfg.seed + static_cast<uint64_t>(step) * 7919ull,
                                      static_cast<uint64_t>(slot));
            return mlm_value_and_grad(state, ex.input_ids, mask, ex.target_ids, &grads, scale,
                                      use_dropout ? &rng : nullptr);
        });
}

TrainResult finetune_qa(ModelState& state, const std::vector<QAExample>& data,
                        const TrainConfig& cfg) {
    TrainConfig effective = cfg;
    if (cfg.epochs > 0) {
        const size_t per_epoch =
            (data.size() + static_cast<size_t>(cfg.batch_size) - 1) /
            static_cast<size_t>(cfg.batch_size);
        effective.total_steps = cfg.epochs * static_cast<int>(per_epoch);
    }
    std::vector<std::vector<int>> candidates(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        candidates[i] = qa_candidates(data[i].packed);
    }
    const bool use_dropout = state.cfg.dropout > 0.0;
    return run_training(
        state, data.size(), effective,
        [&](size_t idx, ModelState& grads, double scale, int step, int slot) {
            const QAExample& ex = data[idx];
            const auto mask = attention_mask_for(ex.packed.ids);
            Rng rng = Rng::for_stream(cfg.seed + static_cast<uint64_t>(step) * 7919ull,
                                      static_cast<uint64_t>(slot));
            return qa_value_and_grad(state, ex.packed.ids, mask, candidates[idx],
                                     ex.answer_start, ex.answer_end, &grads, scale,
                                     use_dropout ? &rng : nullptr);
        });
}

std::vector<int> qa_candidates(const PackedInput& packed) {
    std::vector<int> out;
    out.push_back(packed.regions.cls_pos);
    for (int i = packed.regions.passage.first; i < packed.regions.passage.second; ++i) {
        out.push_back(i);
    }
    return out;
}

void write_loss_csv(const TrainResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write training log: " + path);
    out << "step,lr,loss\n";
    for (const auto& p : result.curve) {
        out << p.step << ',' << p.lr << ',' << p.loss << '\n';
    }
}

}  // namespace tek
