#include "beliefkit/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace beliefkit {

std::string to_string(Objective o) { return o == Objective::kSft ? "sft" : "loco"; }
std::string to_string(OptimizerKind o) { return o == OptimizerKind::kSgd ? "sgd" : "adamw"; }

Objective parse_objective(const std::string& name) {
  if (name == "sft") return Objective::kSft;
  if (name == "loco") return Objective::kLoco;
  throw std::invalid_argument("unknown objective '" + name + "' (expected sft or loco)");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adamw" || name == "adam") return OptimizerKind::kAdamW;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adamw)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(clamp_epsilon > 0 && clamp_epsilon < 0.5)) {
    throw std::invalid_argument("clamp epsilon must lie in (0, 0.5)");
  }
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("moment coefficients must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw std::invalid_argument("adam epsilon must be positive");
  if (!(sft_weight >= 0)) throw std::invalid_argument("sft weight must be non-negative");
}

// ---------------------------------------------------------------------------
// Losses

CompiledConstraint compile_constraint(const GroundedConstraint& g, const Vocabulary& vocab) {
  CompiledConstraint c;
  c.variables.reserve(static_cast<std::size_t>(g.variables.size()));
  for (const auto& property : g.variables.names()) {
    c.variables.push_back(vocab.index(g.subject, property));
  }
  c.models = SatisfyingSet::compile(g.full_formula(), g.variables.size());
  return c;
}

std::vector<CompiledConstraint> compile_constraints(std::span<const GroundedConstraint> grounded,
                                                    const Vocabulary& vocab) {
  std::vector<CompiledConstraint> out;
  out.reserve(grounded.size());
  for (const auto& g : grounded) out.push_back(compile_constraint(g, vocab));
  return out;
}

namespace {

double clamp(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

Eigen::VectorXd read_beliefs(const BeliefModel& model, std::span<const FactIndex> vars) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(vars.size()));
  for (std::size_t j = 0; j < vars.size(); ++j) p[static_cast<Eigen::Index>(j)] = model.belief(vars[j]);
  return p;
}

}  // namespace

double sft_loss(const BeliefModel& model, std::span<const Fact> batch, double eps) {
  if (batch.empty()) return 0.0;
  double total = 0;
  for (const auto& f : batch) {
    if (!f.label) {
      throw std::invalid_argument("sft needs labelled facts; (" + f.subject + ", " + f.property +
                                  ") has no label");
    }
    const double p = clamp(model.belief(f), eps);
    total += *f.label ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(batch.size());
}

double loco_loss(const BeliefModel& model, std::span<const CompiledConstraint> batch, double eps) {
  if (batch.empty()) return 0.0;
  double total = 0;
  for (const auto& c : batch) {
    if (c.models.empty()) throw UnsatisfiableConstraint("constraint has no satisfying assignment");
    total += -log_constraint_probability(c.models, read_beliefs(model, c.variables), eps);
  }
  return total / static_cast<double>(batch.size());
}

double loco_loss(const BeliefModel& model, std::span<const GroundedConstraint> batch, double eps) {
  const auto compiled = compile_constraints(batch, model.vocabulary());
  return loco_loss(model, std::span<const CompiledConstraint>(compiled), eps);
}

double accumulate_sft(const BeliefModel& model, std::span<const FactIndex> facts,
                      std::span<const std::uint8_t> labels, double eps, double scale,
                      GradientBuffer& grad) {
  if (facts.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(facts.size());
  double total = 0;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const double p = clamp(model.belief(facts[i]), eps);
    const bool y = labels[i] != 0;
    total += y ? -std::log(p) : -std::log(1.0 - p);
    const double dloss_dp = y ? -1.0 / p : 1.0 / (1.0 - p);
    model.add_gradient(facts[i], scale * inv_n * dloss_dp, grad);
  }
  return total * inv_n;
}

double accumulate_loco(const BeliefModel& model, std::span<const CompiledConstraint> batch,
                       double eps, double scale, GradientBuffer& grad) {
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  for (const auto& c : batch) {
    const auto result = semantic_loss(c.models, read_beliefs(model, c.variables), eps);
    total += result.loss;
    for (std::size_t j = 0; j < c.variables.size(); ++j) {
      const double g = result.gradient[static_cast<Eigen::Index>(j)];
      if (g != 0.0) model.add_gradient(c.variables[j], scale * inv_n * g, grad);
    }
  }
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(const TrainConfig& config, Eigen::Index size)
    : config_(config),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)),
      active_(static_cast<std::size_t>(size), 0) {}

void Optimizer::step(Eigen::VectorXd& params, const GradientBuffer& grad) {
  ++t_;
  const double lr = config_.learning_rate;
  const double decay = 1.0 - lr * config_.weight_decay;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (grad.touched[k]) active_[k] = 1;
    if (!active_[k]) continue;
    const double g = grad.values[i];
    params[i] *= decay;
    if (config_.optimizer == OptimizerKind::kSgd) {
      params[i] -= lr * g;
      continue;
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.adam_epsilon);
  }
}

// ---------------------------------------------------------------------------
// Loop

TrainHistory train(const TrainConfig& config, const TrainingData& data, BeliefModel& model) {
  config.validate();
  if (!model.trainable()) throw std::invalid_argument(model.kind() + " model is not trainable");

  const Vocabulary& vocab = model.vocabulary();
  std::vector<FactIndex> fact_index;
  std::vector<std::uint8_t> fact_label;
  const bool need_facts = config.objective == Objective::kSft || config.sft_weight > 0;
  if (need_facts) {
    if (data.facts == nullptr || data.facts->empty()) {
      throw std::invalid_argument("training needs labelled facts");
    }
    for (const auto& f : *data.facts) {
      if (!f.label) {
        throw std::invalid_argument("sft needs labelled facts; (" + f.subject + ", " + f.property +
                                    ") has no label");
      }
      fact_index.push_back(vocab.index(f.subject, f.property));
      fact_label.push_back(*f.label ? 1 : 0);
    }
  }
  std::vector<CompiledConstraint> compiled;
  if (config.objective == Objective::kLoco) {
    if (data.constraints == nullptr || data.constraints->empty()) {
      throw std::invalid_argument("loco training needs grounded constraints");
    }
    compiled = compile_constraints(*data.constraints, vocab);
  }

  std::mt19937_64 rng(config.seed);
  Optimizer opt(config, model.parameters().size());
  GradientBuffer grad(model.parameters().size());
  TrainHistory history;

  const std::size_t n_items =
      config.objective == Objective::kLoco ? compiled.size() : fact_index.size();
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> fact_order(fact_index.size());
  std::iota(fact_order.begin(), fact_order.end(), std::size_t{0});
  std::size_t fact_cursor = fact_order.size();  // forces a reshuffle on first use

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<CompiledConstraint> cbatch;
  std::vector<FactIndex> fbatch;
  std::vector<std::uint8_t> lbatch;

  // Cycles through the fact list for the auxiliary cross-entropy term.
  const auto next_fact_batch = [&]() {
    fbatch.clear();
    lbatch.clear();
    for (std::size_t k = 0; k < std::min(batch_size, fact_order.size()); ++k) {
      if (fact_cursor >= fact_order.size()) {
        std::shuffle(fact_order.begin(), fact_order.end(), rng);
        fact_cursor = 0;
      }
      const std::size_t i = fact_order[fact_cursor++];
      fbatch.push_back(fact_index[i]);
      lbatch.push_back(fact_label[i]);
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < n_items; b += batch_size) {
      const std::size_t e = std::min(n_items, b + batch_size);
      grad.reset();
      double batch_loss = 0;
      if (config.objective == Objective::kLoco) {
        cbatch.clear();
        for (std::size_t k = b; k < e; ++k) cbatch.push_back(compiled[order[k]]);
        batch_loss = accumulate_loco(model, cbatch, config.clamp_epsilon, 1.0, grad);
        if (config.sft_weight > 0) {
          next_fact_batch();
          batch_loss += config.sft_weight * accumulate_sft(model, fbatch, lbatch,
                                                           config.clamp_epsilon,
                                                           config.sft_weight, grad);
        }
      } else {
        fbatch.clear();
        lbatch.clear();
        for (std::size_t k = b; k < e; ++k) {
          fbatch.push_back(fact_index[order[k]]);
          lbatch.push_back(fact_label[order[k]]);
        }
        batch_loss = accumulate_sft(model, fbatch, lbatch, config.clamp_epsilon, 1.0, grad);
      }
      loss_sum += batch_loss * static_cast<double>(e - b);
      opt.step(model.parameters(), grad);
    }
    EpochRecord rec;
    rec.mean_loss = loss_sum / static_cast<double>(n_items);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (!std::isfinite(rec.mean_loss) || !model.parameters().allFinite()) {
      throw TrainingDiverged("epoch " + std::to_string(epoch + 1) +
                             " produced a non-finite mean loss (" +
                             std::to_string(rec.mean_loss) + ")");
    }
  }
  return history;
}

}  // namespace beliefkit
