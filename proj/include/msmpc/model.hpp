// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace msmpc::model {

// Every definition keeps the 1-based line it was parsed from (-1 for models
// built in memory). Lines are metadata and excluded from equality.

enum class InitKind { build_state };

struct InitOp {
  InitKind kind = InitKind::build_state;
  std::vector<std::string> input;  // feature names, non-empty
  int line = -1;
};

struct EntityDef {
  std::string name;
  int state_dimension = 0;
  std::vector<InitOp> initial_state;
  int line = -1;
};

enum class MessageKind { direct_assignment, neural_network };

struct MessageSpec {
  MessageKind kind = MessageKind::direct_assignment;
  std::string nn_name;  // set iff kind == neural_network
  int line = -1;
};

struct SourceSpec {
  std::string name;  // source entity
  MessageSpec message;
  int line = -1;
};

enum class AggregationKind { sum, mean, min, max, ordered, concat };

struct AggregationSpec {
  AggregationKind kind = AggregationKind::sum;
  int line = -1;
};

struct UpdateSpec {
  std::string nn_name;  // kind is always neural_network
  int line = -1;
};

struct StageMessagePassing {
  std::string destination_entity;
  std::vector<SourceSpec> sources;
  AggregationSpec aggregation;
  UpdateSpec update;
  int line = -1;
};

struct StageDef {
  std::vector<StageMessagePassing> message_passings;
  int line = -1;
};

struct MessagePassingDef {
  int num_iterations = 1;  // symbol T
  std::vector<StageDef> stages;
  int line = -1;
};

enum class ReadoutOpKind {
  pooling_sum,
  pooling_mean,
  pooling_max,
  neural_network,
  elementwise_product,
  concat_states,
};

struct ReadoutOp {
  ReadoutOpKind kind = ReadoutOpKind::neural_network;
  std::vector<std::string> operands;  // entity names or prior output_names; empty = previous op
  std::string nn_name;                // neural_network only
  std::string output_name;            // optional handle for later operands
  int line = -1;
};

enum class OutputLevel { per_node, global };

struct ReadoutDef {
  std::vector<ReadoutOp> pipeline;
  std::string output_label;
  OutputLevel output_level = OutputLevel::per_node;
  int line = -1;
};

enum class Architecture { feed_forward, recurrent };
enum class LayerKind { dense, gru_cell };
enum class Activation { relu, sigmoid, tanh, selu, linear };

struct LayerDef {
  LayerKind kind = LayerKind::dense;
  int units = 0;
  Activation activation = Activation::relu;  // dense only
  int line = -1;
};

struct NNDef {
  std::string name;
  Architecture architecture = Architecture::feed_forward;
  std::vector<LayerDef> layers;
  int line = -1;
};

enum class LossKind { mse, mae, binary_cross_entropy };

struct ModelDescription {
  std::vector<EntityDef> entities;
  MessagePassingDef message_passing;
  ReadoutDef readout;
  std::vector<NNDef> neural_networks;
  LossKind loss = LossKind::mse;

  const EntityDef* find_entity(const std::string& name) const;
  const NNDef* find_nn(const std::string& name) const;
};

// Structural equality, ignoring source-line metadata.
bool structurally_equal(const InitOp& a, const InitOp& b);
bool structurally_equal(const EntityDef& a, const EntityDef& b);
bool structurally_equal(const MessageSpec& a, const MessageSpec& b);
bool structurally_equal(const SourceSpec& a, const SourceSpec& b);
bool structurally_equal(const StageMessagePassing& a, const StageMessagePassing& b);
bool structurally_equal(const StageDef& a, const StageDef& b);
bool structurally_equal(const MessagePassingDef& a, const MessagePassingDef& b);
bool structurally_equal(const ReadoutOp& a, const ReadoutOp& b);
bool structurally_equal(const ReadoutDef& a, const ReadoutDef& b);
bool structurally_equal(const LayerDef& a, const LayerDef& b);
bool structurally_equal(const NNDef& a, const NNDef& b);
bool structurally_equal(const ModelDescription& a, const ModelDescription& b);

// Enum <-> YAML spelling.
std::string to_string(MessageKind k);
std::string to_string(AggregationKind k);
std::string to_string(ReadoutOpKind k);
std::string to_string(OutputLevel k);
std::string to_string(Architecture k);
std::string to_string(LayerKind k);
std::string to_string(Activation k);
std::string to_string(LossKind k);

bool is_identifier(const std::string& s);  // [A-Za-z_][A-Za-z0-9_]*

}  // namespace msmpc::model
