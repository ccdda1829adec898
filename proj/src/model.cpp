// SPDX-License-Identifier: Apache-2.0

#include "msmpc/model.hpp"

#include <algorithm>
#include <cctype>

namespace msmpc::model {

const EntityDef* ModelDescription::find_entity(const std::string& name) const {
  for (const EntityDef& e : entities)
    if (e.name == name) return &e;
  return nullptr;
}

const NNDef* ModelDescription::find_nn(const std::string& name) const {
  for (const NNDef& n : neural_networks)
    if (n.name == name) return &n;
  return nullptr;
}

namespace {

template <typename T>
bool all_equal(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!structurally_equal(a[i], b[i])) return false;
  return true;
}

}  // namespace

bool structurally_equal(const InitOp& a, const InitOp& b) {
  return a.kind == b.kind && a.input == b.input;
}

bool structurally_equal(const EntityDef& a, const EntityDef& b) {
  return a.name == b.name && a.state_dimension == b.state_dimension &&
         all_equal(a.initial_state, b.initial_state);
}

bool structurally_equal(const MessageSpec& a, const MessageSpec& b) {
  return a.kind == b.kind && a.nn_name == b.nn_name;
}

bool structurally_equal(const SourceSpec& a, const SourceSpec& b) {
  return a.name == b.name && structurally_equal(a.message, b.message);
}

bool structurally_equal(const StageMessagePassing& a, const StageMessagePassing& b) {
  return a.destination_entity == b.destination_entity && all_equal(a.sources, b.sources) &&
         a.aggregation.kind == b.aggregation.kind && a.update.nn_name == b.update.nn_name;
}

bool structurally_equal(const StageDef& a, const StageDef& b) {
  return all_equal(a.message_passings, b.message_passings);
}

bool structurally_equal(const MessagePassingDef& a, const MessagePassingDef& b) {
  return a.num_iterations == b.num_iterations && all_equal(a.stages, b.stages);
}

bool structurally_equal(const ReadoutOp& a, const ReadoutOp& b) {
  return a.kind == b.kind && a.operands == b.operands && a.nn_name == b.nn_name &&
         a.output_name == b.output_name;
}

bool structurally_equal(const ReadoutDef& a, const ReadoutDef& b) {
  return all_equal(a.pipeline, b.pipeline) && a.output_label == b.output_label &&
         a.output_level == b.output_level;
}

bool structurally_equal(const LayerDef& a, const LayerDef& b) {
  if (a.kind != b.kind || a.units != b.units) return false;
  return a.kind == LayerKind::gru_cell || a.activation == b.activation;
}

bool structurally_equal(const NNDef& a, const NNDef& b) {
  return a.name == b.name && a.architecture == b.architecture && all_equal(a.layers, b.layers);
}

bool structurally_equal(const ModelDescription& a, const ModelDescription& b) {
  return all_equal(a.entities, b.entities) &&
         structurally_equal(a.message_passing, b.message_passing) &&
         structurally_equal(a.readout, b.readout) &&
         all_equal(a.neural_networks, b.neural_networks) && a.loss == b.loss;
}

std::string to_string(MessageKind k) {
  return k == MessageKind::direct_assignment ? "direct_assignment" : "neural_network";
}

std::string to_string(AggregationKind k) {
  switch (k) {
    case AggregationKind::sum: return "sum";
    case AggregationKind::mean: return "mean";
    case AggregationKind::min: return "min";
    case AggregationKind::max: return "max";
    case AggregationKind::ordered: return "ordered";
    case AggregationKind::concat: return "concat";
  }
  return "?";
}

std::string to_string(ReadoutOpKind k) {
  switch (k) {
    case ReadoutOpKind::pooling_sum: return "pooling_sum";
    case ReadoutOpKind::pooling_mean: return "pooling_mean";
    case ReadoutOpKind::pooling_max: return "pooling_max";
    case ReadoutOpKind::neural_network: return "neural_network";
    case ReadoutOpKind::elementwise_product: return "elementwise_product";
    case ReadoutOpKind::concat_states: return "concat_states";
  }
  return "?";
}

std::string to_string(OutputLevel k) { return k == OutputLevel::per_node ? "per_node" : "global"; }

std::string to_string(Architecture k) {
  return k == Architecture::feed_forward ? "feed_forward" : "recurrent";
}

std::string to_string(LayerKind k) { return k == LayerKind::dense ? "dense" : "gru_cell"; }

std::string to_string(Activation k) {
  switch (k) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::selu: return "selu";
    case Activation::linear: return "linear";
  }
  return "?";
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::mae: return "mae";
    case LossKind::binary_cross_entropy: return "binary_cross_entropy";
  }
  return "?";
}

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  return std::all_of(s.begin() + 1, s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_';
  });
}

}  // namespace msmpc::model
