#ifndef DROPTUNE_NN_HPP
#define DROPTUNE_NN_HPP

// Dense feed-forward network: ReLU hidden layers of equal width, inverted
// dropout after every hidden activation, Xavier-uniform weights, Adam.
// All arithmetic is double precision.

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "droptune/data.hpp"
#include "droptune/rng.hpp"

namespace droptune::nn {

enum class HiddenActivation { relu };
enum class OutputActivation { sigmoid, identity };
enum class Loss { binary_cross_entropy, mean_squared_error };

std::string_view to_string(HiddenActivation a);
std::string_view to_string(OutputActivation a);
HiddenActivation hidden_activation_from_string(std::string_view s);
OutputActivation output_activation_from_string(std::string_view s);

struct MlpConfig {
  std::size_t input_dim = 1;
  // Zero hidden layers is accepted and yields a plain logistic/linear model.
  std::size_t hidden_layers = 6;
  std::size_t hidden_units = 16;
  double dropout_rate = 0.0;
  HiddenActivation hidden_activation = HiddenActivation::relu;
  OutputActivation output_activation = OutputActivation::sigmoid;
  std::uint64_t init_seed = 0;

  // Throws DomainError on a violated invariant.
  void validate() const;
};

// weights is fan_in x fan_out; the layer computes x * weights + bias^T.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Parameters of every layer in input-to-output order. Gradients and Adam
// moment accumulators share this shape.
using ParamSet = std::vector<DenseLayer>;

ParamSet zeros_like(const ParamSet& params);

class MlpModel {
 public:
  // Xavier-initialized weights drawn from config.init_seed, zero biases.
  explicit MlpModel(const MlpConfig& config);
  // Adopts explicit parameters; throws ShapeError if they do not chain.
  MlpModel(const MlpConfig& config, ParamSet params);

  const MlpConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& mutable_params() { return params_; }

  std::size_t hidden_layer_count() const { return config_.hidden_layers; }
  std::size_t parameter_count() const;

 private:
  MlpConfig config_;
  ParamSet params_;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 128;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t dropout_seed = 0;

  void validate() const;
};

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamSet& params);
};

struct Metrics {
  double cost = 0.0;      // validation binary cross-entropy
  double accuracy = 0.0;  // percent
};

// Uniform on [-L, L], L = sqrt(6 / (fan_in + fan_out)).
Eigen::MatrixXd xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// One matrix per hidden layer, entries 0 or 1/(1-p). Empty means eval mode.
using DropoutMasks = std::vector<Eigen::MatrixXd>;

DropoutMasks sample_dropout_masks(const MlpModel& model, Eigen::Index rows,
                                  Rng& rng);

// Intermediate values kept for backpropagation.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre_activations;  // per hidden layer
  std::vector<Eigen::MatrixXd> activations;      // per hidden layer, post-mask
  DropoutMasks masks;
  Eigen::VectorXd output;
};

ForwardCache forward_cached(const MlpModel& model, const Eigen::MatrixXd& batch,
                            const DropoutMasks& masks = {});

// Eval mode: dropout is the identity.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& batch);
// Train mode: fresh inverted-dropout masks drawn from rng.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& batch,
                        Rng& rng);

// Batch-averaged gradient of `loss` w.r.t. every weight and bias, using the
// masks recorded in `cache`.
ParamSet backward(const MlpModel& model, const ForwardCache& cache,
                  const Eigen::VectorXd& targets, Loss loss);

// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
double bce_cost(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& labels);

// 100 * fraction correct; a prediction >= 0.5 is class 1.
double binary_accuracy(const Eigen::VectorXd& predictions,
                       const Eigen::VectorXd& labels);

double mean_squared_error(const Eigen::VectorXd& predictions,
                          const Eigen::VectorXd& targets);

double loss_value(Loss loss, const Eigen::VectorXd& predictions,
                  const Eigen::VectorXd& targets);

// Bias-corrected Adam update. Throws NumericError naming the first layer with
// a non-finite gradient; params and state are untouched in that case.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamConfig& cfg);

// Runs tcfg.epochs passes of shuffled mini-batches (final partial batch
// included) over (inputs, targets). Returns the mean training loss of the
// last epoch. Throws DivergedError (1-based epoch) if a batch loss or
// gradient goes non-finite.
double train_network(MlpModel& model, const TrainConfig& tcfg,
                     const Eigen::MatrixXd& inputs,
                     const Eigen::VectorXd& targets, Loss loss);

struct TrainResult {
  MlpModel model;
  Metrics metrics;
};

// Binary classifier training with BCE; metrics are measured on val_set in
// eval mode after the final epoch.
TrainResult train(const MlpConfig& mcfg, const TrainConfig& tcfg,
                  const data::Dataset& train_set, const data::Dataset& val_set);

// Flat row-major parameter arrays in layer order plus the architecture.
nlohmann::ordered_json to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::ordered_json& j);

}  // namespace droptune::nn

#endif  // DROPTUNE_NN_HPP
