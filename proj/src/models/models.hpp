#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chem/chem.hpp"
#include "colsim/trajectory.hpp"
#include "num/params.hpp"
#include "num/tape.hpp"

namespace fedsilo::models {

enum class ModelKind { GnnMixture, KoopmanWiener };

// Architecture + seed; identical specs initialize to bitwise-identical
// parameters on any platform (counter-based generator keyed per segment).
struct ModelSpec {
    ModelKind kind = ModelKind::GnnMixture;
    std::uint64_t seed = 0;

    // mixture-property graph network
    std::size_t node_feature_dim = chem::kNodeFeatureDim;
    std::size_t message_width = 64;
    std::size_t head_width = 64;

    // state-space autoencoder
    std::size_t state_dim = 10;
    std::size_t input_dim = 2;
    std::size_t latent_dim = 2;
    std::size_t autoencoder_width = 32;
};

// Zero-valued parameters with the model's segment structure (names, order,
// shapes); useful for compatibility checks.
num::ParameterVector model_skeleton(const ModelSpec& spec);

// Glorot-uniform weights (s = sqrt(6/(fan_in+fan_out))), zero biases. The
// latent transition matrix instead starts at the identity so early multistep
// rollouts stay bounded.
num::ParameterVector init_model(const ModelSpec& spec);

// Segment partition used by partial aggregation: the message-passing trunk is
// shared across clients while each keeps a private head; for the state-space
// model the encoder and dynamics are shared and the decoder stays private.
std::vector<std::string> shared_segment_names(const ModelSpec& spec);
std::vector<std::string> private_segment_names(const ModelSpec& spec);

// ---- mixture-property network ----------------------------------------------

// One labeled mixture. Molecule pointers double as identity: batches evaluate
// every distinct pointer once, so callers should featurize each molecule once
// and reuse the object.
struct MixtureItem {
    const chem::FeaturizedMolecule* solute = nullptr;
    const chem::FeaturizedMolecule* solvent = nullptr;
    double temperature_scaled = 0.0;
    double label = 0.0;
};

// Batch laid out for single-pass evaluation: all distinct molecules stacked
// into one block-diagonal graph, with per-sample gather indices into the
// fingerprint matrix. Owns every buffer the tape references.
struct MixtureBatch {
    num::Tensor node_features;              // total_atoms x node_feature_dim
    std::vector<num::Tape::Edge> edges;     // offsets applied per molecule
    std::vector<std::uint32_t> mol_offsets; // molecule row boundaries, M+1
    std::vector<std::uint32_t> solute_slot; // per sample -> molecule index
    std::vector<std::uint32_t> solvent_slot;
    num::Tensor temperature;                // B x 1
    num::Tensor labels;                     // B x 1

    std::size_t size() const { return solute_slot.size(); }
};

MixtureBatch make_mixture_batch(std::span<const MixtureItem> items);

// Lays the batch predictions (B x 1) onto the tape given bound segments.
num::Tape::Var build_mixture_predictions(num::Tape& tape,
                                         const std::vector<num::Tape::Var>& segs,
                                         const MixtureBatch& batch);

// Mean-squared-error loss builder over the batch (for training loops).
num::LossBuilder mixture_loss(const MixtureBatch& batch);

double gnn_predict(const num::ParameterVector& params, const chem::FeaturizedMolecule& solute,
                   const chem::FeaturizedMolecule& solvent, double temperature_scaled);

std::vector<double> predict_mixture_batch(const num::ParameterVector& params,
                                          const MixtureBatch& batch);

double loss_activity(const num::ParameterVector& params, std::span<const MixtureItem> items);

// ---- state-space autoencoder -------------------------------------------------

// Equal-length trajectories stacked time-major: row t*count + k holds
// trajectory k at step t.
struct TrajectoryBatch {
    std::size_t steps = 0;
    std::size_t count = 0;
    num::Tensor x0;             // count x state_dim
    num::Tensor inputs_stacked; // (steps*count) x input_dim
    num::Tensor states_stacked; // (steps*count) x state_dim

    std::size_t size() const { return count; }
};

TrajectoryBatch make_trajectory_batch(std::span<const colsim::Trajectory* const> trajectories);

// Multistep prediction loss plus lambda_rec * per-state reconstruction loss.
// The prediction consumes only x0 and the input sequence (no teacher forcing).
num::LossBuilder trajectory_loss(const TrajectoryBatch& batch, double lambda_rec = 1.0);

double loss_trajectory(const num::ParameterVector& params, const colsim::Trajectory& trajectory,
                       double lambda_rec = 1.0);

// Rollout from x0 under the input sequence: z_{t+1} = z_t A + u_t B, row t of
// the result is decoder(z_t). Raises NumericError naming the first divergent
// step if the recurrence leaves the finite range.
num::Tensor koopman_rollout(const num::ParameterVector& params, const num::Tensor& x0,
                            const num::Tensor& u_seq);

} // namespace fedsilo::models
