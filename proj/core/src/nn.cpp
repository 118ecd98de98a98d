#include "droptune/nn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "droptune/errors.hpp"

namespace droptune::nn {

namespace {

constexpr double kProbClamp = 1e-7;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t layer_input_dim(const MlpConfig& cfg, std::size_t layer) {
  return layer == 0 ? cfg.input_dim : cfg.hidden_units;
}

std::size_t layer_output_dim(const MlpConfig& cfg, std::size_t layer) {
  return layer == cfg.hidden_layers ? 1 : cfg.hidden_units;
}

void check_same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("prediction and label lengths differ");
  if (a.size() == 0) throw DomainError("empty prediction vector");
}

}  // namespace

std::string_view to_string(HiddenActivation a) {
  switch (a) {
    case HiddenActivation::relu: return "relu";
  }
  return "?";
}

std::string_view to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::sigmoid: return "sigmoid";
    case OutputActivation::identity: return "identity";
  }
  return "?";
}

HiddenActivation hidden_activation_from_string(std::string_view s) {
  if (s == "relu") return HiddenActivation::relu;
  throw DomainError("unknown hidden activation '" + std::string(s) + "'");
}

OutputActivation output_activation_from_string(std::string_view s) {
  if (s == "sigmoid") return OutputActivation::sigmoid;
  if (s == "identity") return OutputActivation::identity;
  throw DomainError("unknown output activation '" + std::string(s) + "'");
}

void MlpConfig::validate() const {
  if (input_dim < 1) throw DomainError("input_dim must be >= 1");
  if (hidden_units < 1) throw DomainError("hidden_units must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw DomainError("dropout_rate must lie in [0, 1)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0))
    throw DomainError("Adam betas must lie in (0, 1)");
  if (!(adam.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (!(adam.epsilon > 0.0)) throw DomainError("Adam epsilon must be positive");
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const auto& layer : params) {
    out.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                   Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return out;
}

Eigen::MatrixXd xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Eigen::MatrixXd w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  // Row-major fill order keeps the draw sequence independent of storage order.
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w(r, c) = -limit + 2.0 * limit * rng.uniform();
  return w;
}

MlpModel::MlpModel(const MlpConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  params_.reserve(config_.hidden_layers + 1);
  for (std::size_t l = 0; l <= config_.hidden_layers; ++l) {
    const std::size_t in = layer_input_dim(config_, l);
    const std::size_t out = layer_output_dim(config_, l);
    params_.push_back({xavier_init(in, out, rng),
                       Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))});
  }
}

MlpModel::MlpModel(const MlpConfig& config, ParamSet params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != config_.hidden_layers + 1)
    throw ShapeError("expected " + std::to_string(config_.hidden_layers + 1) +
                     " layers, got " + std::to_string(params_.size()));
  for (std::size_t l = 0; l < params_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_input_dim(config_, l));
    const auto out = static_cast<Eigen::Index>(layer_output_dim(config_, l));
    const auto& layer = params_[l];
    if (layer.weights.rows() != in || layer.weights.cols() != out || layer.bias.size() != out)
      throw ShapeError("layer " + std::to_string(l) + " has shape " +
                       std::to_string(layer.weights.rows()) + "x" +
                       std::to_string(layer.weights.cols()) + ", expected " +
                       std::to_string(in) + "x" + std::to_string(out));
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw NumericError("layer " + std::to_string(l) + " has non-finite parameters", l);
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : params_)
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  return n;
}

AdamState AdamState::for_params(const ParamSet& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

DropoutMasks sample_dropout_masks(const MlpModel& model, Eigen::Index rows, Rng& rng) {
  const auto& cfg = model.config();
  const double p = cfg.dropout_rate;
  const double keep_scale = 1.0 / (1.0 - p);
  const auto width = static_cast<Eigen::Index>(cfg.hidden_units);
  DropoutMasks masks;
  masks.reserve(cfg.hidden_layers);
  for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
    Eigen::MatrixXd mask(rows, width);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < width; ++c)
        mask(r, c) = p > 0.0 && rng.bernoulli(p) ? 0.0 : keep_scale;
    masks.push_back(std::move(mask));
  }
  return masks;
}

ForwardCache forward_cached(const MlpModel& model, const Eigen::MatrixXd& batch,
                            const DropoutMasks& masks) {
  const auto& cfg = model.config();
  const auto& params = model.params();
  if (batch.cols() != static_cast<Eigen::Index>(cfg.input_dim))
    throw ShapeError("batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " + std::to_string(cfg.input_dim));
  if (!masks.empty() && masks.size() != cfg.hidden_layers)
    throw ShapeError("dropout mask count does not match hidden layer count");

  ForwardCache cache;
  cache.input = batch;
  cache.masks = masks;
  cache.pre_activations.reserve(cfg.hidden_layers);
  cache.activations.reserve(cfg.hidden_layers);

  const Eigen::MatrixXd* current = &cache.input;
  for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
    Eigen::MatrixXd z = (*current) * params[l].weights;
    z.rowwise() += params[l].bias.transpose();
    Eigen::MatrixXd a = z.cwiseMax(0.0);
    if (!masks.empty()) {
      if (masks[l].rows() != a.rows() || masks[l].cols() != a.cols())
        throw ShapeError("dropout mask " + std::to_string(l) + " has the wrong shape");
      a = a.cwiseProduct(masks[l]);
    }
    cache.pre_activations.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
    current = &cache.activations.back();
  }

  const auto& out_layer = params.back();
  Eigen::VectorXd z = (*current) * out_layer.weights.col(0);
  z.array() += out_layer.bias[0];
  if (cfg.output_activation == OutputActivation::sigmoid)
    z = z.unaryExpr([](double v) { return sigmoid(v); });
  cache.output = std::move(z);
  return cache;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& batch) {
  return forward_cached(model, batch).output;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::MatrixXd& batch, Rng& rng) {
  return forward_cached(model, batch, sample_dropout_masks(model, batch.rows(), rng)).output;
}

ParamSet backward(const MlpModel& model, const ForwardCache& cache,
                  const Eigen::VectorXd& targets, Loss loss) {
  const auto& cfg = model.config();
  const auto& params = model.params();
  const Eigen::VectorXd& h = cache.output;
  if (targets.size() != h.size()) throw ShapeError("target count does not match batch rows");
  if (h.size() == 0) throw DomainError("empty batch");
  const double inv_m = 1.0 / static_cast<double>(h.size());

  // d(loss)/d(output pre-activation), already divided by the batch size.
  Eigen::VectorXd dz;
  const bool sig = cfg.output_activation == OutputActivation::sigmoid;
  switch (loss) {
    case Loss::binary_cross_entropy:
      if (!sig) throw DomainError("cross-entropy requires a sigmoid output");
      dz = (h - targets) * inv_m;
      break;
    case Loss::mean_squared_error:
      dz = 2.0 * inv_m * (h - targets);
      if (sig) dz = dz.cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
      break;
  }

  ParamSet grads = zeros_like(params);
  const std::size_t hidden = cfg.hidden_layers;
  const Eigen::MatrixXd& last = hidden == 0 ? cache.input : cache.activations[hidden - 1];
  grads[hidden].weights.col(0) = last.transpose() * dz;
  grads[hidden].bias[0] = dz.sum();

  Eigen::MatrixXd upstream = dz * params[hidden].weights.col(0).transpose();
  for (std::size_t l = hidden; l-- > 0;) {
    Eigen::MatrixXd dpre = upstream;
    if (!cache.masks.empty()) dpre = dpre.cwiseProduct(cache.masks[l]);
    dpre = dpre.cwiseProduct(
        (cache.pre_activations[l].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& below = l == 0 ? cache.input : cache.activations[l - 1];
    grads[l].weights = below.transpose() * dpre;
    grads[l].bias = dpre.colwise().sum().transpose();
    if (l > 0) upstream = dpre * params[l].weights.transpose();
  }
  return grads;
}

double bce_cost(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
  check_same_length(predictions, labels);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const double h = std::clamp(predictions[i], kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    sum += y * std::log(h) + (1.0 - y) * std::log(1.0 - h);
  }
  return -sum / static_cast<double>(predictions.size());
}

double binary_accuracy(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
  check_same_length(predictions, labels);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const double cls = predictions[i] >= 0.5 ? 1.0 : 0.0;
    if (cls == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double mean_squared_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  check_same_length(predictions, targets);
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

double loss_value(Loss loss, const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  switch (loss) {
    case Loss::binary_cross_entropy: return bce_cost(predictions, targets);
    case Loss::mean_squared_error: return mean_squared_error(predictions, targets);
  }
  return 0.0;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("parameter, gradient and Adam state layer counts differ");
  for (std::size_t l = 0; l < params.size(); ++l) {
    const auto& p = params[l];
    const auto& g = grads[l];
    if (g.weights.rows() != p.weights.rows() || g.weights.cols() != p.weights.cols() ||
        g.bias.size() != p.bias.size() ||
        state.first_moment[l].weights.size() != p.weights.size() ||
        state.second_moment[l].bias.size() != p.bias.size())
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    if (!g.weights.allFinite() || !g.bias.allFinite())
      throw NumericError("non-finite gradient at layer " + std::to_string(l), l);
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= cfg.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + cfg.epsilon);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weights, grads[l].weights, state.first_moment[l].weights,
           state.second_moment[l].weights);
    update(params[l].bias, grads[l].bias, state.first_moment[l].bias,
           state.second_moment[l].bias);
  }
}

double train_network(MlpModel& model, const TrainConfig& tcfg,
                     const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     Loss loss) {
  tcfg.validate();
  const Eigen::Index m = inputs.rows();
  if (m == 0) throw DomainError("cannot train on an empty dataset");
  if (targets.size() != m) throw ShapeError("target count does not match input rows");
  if (inputs.cols() != static_cast<Eigen::Index>(model.config().input_dim))
    throw ShapeError("input columns do not match model input_dim");

  Rng shuffle_rng(tcfg.shuffle_seed);
  Rng dropout_rng(tcfg.dropout_seed);
  AdamState state = AdamState::for_params(model.params());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const auto batch = static_cast<Eigen::Index>(tcfg.batch_size);
  const bool use_dropout = model.config().dropout_rate > 0.0;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.index(i + 1)]);

    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < m; start += batch) {
      const Eigen::Index rows = std::min(batch, m - start);
      Eigen::MatrixXd xb(rows, inputs.cols());
      Eigen::VectorXd yb(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = inputs.row(src);
        yb[r] = targets[src];
      }
      DropoutMasks masks;
      if (use_dropout) masks = sample_dropout_masks(model, rows, dropout_rng);
      const ForwardCache cache = forward_cached(model, xb, masks);
      const double batch_loss = loss_value(loss, cache.output, yb);
      if (!std::isfinite(batch_loss))
        throw DivergedError("training loss became non-finite in epoch " +
                                std::to_string(epoch),
                            epoch);
      loss_sum += batch_loss * static_cast<double>(rows);
      const ParamSet grads = backward(model, cache, yb, loss);
      try {
        adam_step(model.mutable_params(), grads, state, tcfg.adam);
      } catch (const NumericError& e) {
        throw DivergedError(std::string(e.what()) + " in epoch " + std::to_string(epoch),
                            epoch);
      }
    }
    epoch_loss = loss_sum / static_cast<double>(m);
  }
  return epoch_loss;
}

TrainResult train(const MlpConfig& mcfg, const TrainConfig& tcfg,
                  const data::Dataset& train_set, const data::Dataset& val_set) {
  train_set.validate();
  val_set.validate();
  MlpConfig cfg = mcfg;
  cfg.input_dim = static_cast<std::size_t>(train_set.cols());
  cfg.output_activation = OutputActivation::sigmoid;
  MlpModel model(cfg);
  train_network(model, tcfg, train_set.features, train_set.labels,
                Loss::binary_cross_entropy);

  const Eigen::VectorXd predictions = forward(model, val_set.features);
  Metrics metrics{bce_cost(predictions, val_set.labels),
                  binary_accuracy(predictions, val_set.labels)};
  if (!std::isfinite(metrics.cost))
    throw DivergedError("validation cost is non-finite", tcfg.epochs);
  return {std::move(model), metrics};
}

nlohmann::ordered_json to_json(const MlpModel& model) {
  const auto& cfg = model.config();
  nlohmann::ordered_json arch = {
      {"input_dim", cfg.input_dim},
      {"hidden_layers", cfg.hidden_layers},
      {"hidden_units", cfg.hidden_units},
      {"dropout_rate", cfg.dropout_rate},
      {"hidden_activation", to_string(cfg.hidden_activation)},
      {"output_activation", to_string(cfg.output_activation)},
      {"init_seed", std::to_string(cfg.init_seed)},
  };
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& layer : model.params()) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat.push_back(layer.weights(r, c));
    layers.push_back({{"rows", layer.weights.rows()},
                      {"cols", layer.weights.cols()},
                      {"weights", flat},
                      {"bias", std::vector<double>(layer.bias.begin(), layer.bias.end())}});
  }
  return {{"architecture", arch}, {"layers", layers}};
}

MlpModel model_from_json(const nlohmann::ordered_json& j) {
  try {
    const auto& arch = j.at("architecture");
    MlpConfig cfg;
    cfg.input_dim = arch.at("input_dim").get<std::size_t>();
    cfg.hidden_layers = arch.at("hidden_layers").get<std::size_t>();
    cfg.hidden_units = arch.at("hidden_units").get<std::size_t>();
    cfg.dropout_rate = arch.at("dropout_rate").get<double>();
    cfg.hidden_activation =
        hidden_activation_from_string(arch.at("hidden_activation").get<std::string>());
    cfg.output_activation =
        output_activation_from_string(arch.at("output_activation").get<std::string>());
    cfg.init_seed = std::stoull(arch.at("init_seed").get<std::string>());

    ParamSet params;
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      const auto flat = layer.at("weights").get<std::vector<double>>();
      const auto bias = layer.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw SchemaError("weight array length does not match rows*cols");
      DenseLayer dense{Eigen::MatrixXd(rows, cols),
                       Eigen::Map<const Eigen::VectorXd>(bias.data(),
                                                         static_cast<Eigen::Index>(bias.size()))};
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          dense.weights(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
      params.push_back(std::move(dense));
    }
    return MlpModel(cfg, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model JSON: ") + e.what());
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("inconsistent model JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw SchemaError(std::string("invalid model JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace droptune::nn
