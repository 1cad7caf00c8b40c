#pragma once

// Cross-silo federated training: wire codec, local training loop, weighted
// aggregation, and round orchestration over in-process or socket transport.
//
// The coordinator is a sequential state machine with one barrier per round:
// broadcast the current model, wait for every client's upload, aggregate in
// ascending client-id order, evaluate, repeat. Clients run their local
// training concurrently and exchange nothing but encoded RoundMessages, so a
// run's outputs depend only on (config, seed) and the client datasets — never
// on transport or scheduling.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "models/models.hpp"
#include "num/params.hpp"

namespace fedsilo::fed {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class AggregationMode : std::uint8_t {
    FedAvgFull,    // every segment is averaged and broadcast
    FedPerPartial, // shared segments averaged; each client keeps a private head
};

enum class TransportKind : std::uint8_t {
    InProcess, // byte-for-byte message queues inside one process
    Socket,    // length-prefixed frames over loopback TCP
};

struct FederationConfig {
    std::size_t rounds = 1;       // communication rounds (R >= 1)
    std::size_t local_epochs = 1; // per-round epoch budget E; 0 makes training a no-op
    std::size_t batch_size = 32;
    double lr0 = 1e-3;      // epoch-0 learning rate, restarts every round
    double lr_decay = 0.98; // per-epoch factor: epoch e trains at lr0 * decay^e
    std::size_t early_stop_patience = 10; // epochs without val improvement; 0 disables
    AggregationMode mode = AggregationMode::FedAvgFull;
    std::vector<std::string> shared_segments; // FedPer only: segments to aggregate
    std::uint64_t seed = 0;
    TransportKind transport = TransportKind::InProcess;
    std::uint16_t port = 0; // socket transport; 0 binds an ephemeral port
};

// Rejects impossible schedules (zero rounds, zero batch size, FedPer without
// a shared-segment list) before any training starts.
void validate_config(const FederationConfig& config);

// Canonical text form of the training-relevant fields (transport excluded);
// its FNV-1a hash rides in the socket hello frame so a coordinator refuses
// clients configured differently.
std::string config_canonical_string(const FederationConfig& config);
std::uint64_t config_hash(const FederationConfig& config);

// Round-to-round parameter change (max-norm) below which a run stops early.
inline constexpr double kConvergenceTol = 1e-7;

// Minimum validation-loss improvement that resets the early-stop counter.
inline constexpr double kValImprovementTol = 1e-6;

// ---------------------------------------------------------------------------
// Wire codec
// ---------------------------------------------------------------------------

enum class MessageDirection : std::uint8_t { Broadcast = 0, Upload = 1 };

// One protocol message: a model broadcast (coordinator -> clients) or a
// trained-parameter upload (client -> coordinator). Uploads carry the
// client's training-set size n_k, the aggregation weight.
struct RoundMessage {
    MessageDirection direction = MessageDirection::Broadcast;
    std::uint32_t round = 0;
    std::uint32_t client_id = 0; // uploads only; 0 in broadcasts
    std::uint64_t n_k = 0;       // uploads only; 0 in broadcasts
    num::ParameterVector payload;
};

// Layout, all integers little-endian, floats IEEE-754 binary64 little-endian:
//   "FSL1" | u8 direction | u32 round | u32 client_id | u64 n_k
//         | u32 segment_count
//         | per segment: u16 name_len | name bytes | u8 rank | u32 dims... | f64 data...
// decode(encode(m)) reproduces m bitwise. Malformed input (bad magic,
// truncation, duplicate segment name) raises CodecError carrying the byte
// offset of the problem.
std::vector<std::uint8_t> encode_message(const RoundMessage& message);
RoundMessage decode_message(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Client-side task abstraction
// ---------------------------------------------------------------------------

// A client's local objective: enough surface for mini-batch gradient descent
// with validation-based early stopping, plus the test metric reported in
// round records. Implementations live in fed/tasks.hpp.
class ClientTask {
  public:
    virtual ~ClientTask() = default;

    virtual std::size_t train_size() const = 0;

    // Mean loss and gradient over the given training rows.
    virtual num::EvalResult train_batch(const num::ParameterVector& params,
                                        std::span<const std::size_t> rows) = 0;

    virtual double validation_loss(const num::ParameterVector& params) = 0;

    // The scenario's reporting metric on this client's test split (regression
    // MSE for mixture models, multistep rollout MSE for column models).
    virtual double test_mse(const num::ParameterVector& params) = 0;
};

// ---------------------------------------------------------------------------
// Local training and aggregation
// ---------------------------------------------------------------------------

struct LocalMetrics {
    std::size_t epochs_run = 0;
    double initial_val_loss = 0.0; // validation loss of the incoming parameters
    double best_val_loss = 0.0;    // validation loss of the returned parameters
};

struct TrainOutcome {
    num::ParameterVector params;
    LocalMetrics metrics;
};

// Mini-batch gradient descent over a full-batch shuffle for up to E epochs.
// Epoch e runs at lr0 * decay^e (the schedule restarts each round); training
// stops early once validation loss has failed to improve by at least
// kValImprovementTol for early_stop_patience consecutive epochs, and the
// parameters with the best validation loss are returned (w_in when E == 0 or
// nothing improved). The shuffle stream is keyed by (seed, round, epoch)
// only, so every client of a round walks its data in the same index order.
// A non-finite training or validation loss raises TrainingError naming the
// epoch and batch.
TrainOutcome local_train(const num::ParameterVector& w_in, ClientTask& task,
                         const FederationConfig& config, std::uint32_t round);

struct ClientUpdate {
    std::uint32_t client_id = 0;
    std::uint64_t n_k = 0; // aggregation weight: the client's training-set size
    num::ParameterVector params;
};

// Training-set-weighted mean of the updates, w = sum_k (n_k / n) w_k,
// accumulated in ascending client_id order so the result is independent of
// arrival order. A single update is returned unchanged. In FedPer mode every
// update must carry exactly `shared_segments`; the mean covers those segments
// only and private parameters never leave their client. Incompatible
// structures, duplicate client ids, and zero total weight raise
// StructuralError.
num::ParameterVector aggregate(std::vector<ClientUpdate> updates, AggregationMode mode,
                               const std::vector<std::string>& shared_segments = {});

// Overlays `partial`'s segments onto a copy of `base` (matching names and
// shapes required): how a FedPer client recombines the broadcast shared part
// with its own private head.
num::ParameterVector merge_segments(const num::ParameterVector& base,
                                    const num::ParameterVector& partial);

// Keeps only the named segments, in `base`'s segment order.
num::ParameterVector filter_segments(const num::ParameterVector& base,
                                     const std::vector<std::string>& names);

// ---------------------------------------------------------------------------
// Round orchestration
// ---------------------------------------------------------------------------

struct RoundRecord {
    std::uint32_t round = 0;            // 1-based
    std::vector<double> local_test_mse; // pre-aggregation, ascending client id
    std::vector<double> global_test_mse; // post-aggregation; in FedPer each
                                         // client is scored as aggregated
                                         // shared part + its own private head
    double wall_seconds = 0.0; // measurement only; excluded from determinism
};

// Ascending client order; position i becomes client_id i+1.
struct FederationScenario {
    models::ModelSpec model;
    std::vector<ClientTask*> clients; // non-owning
};

struct FederationResult {
    std::vector<RoundRecord> records;
    num::ParameterVector global_model; // aggregated scope (FedPer: shared only)
    std::vector<num::ParameterVector> client_models; // full models after the
                                                     // final broadcast merge
    bool converged = false; // stopped on kConvergenceTol before round R
};

// Runs the federation: initialize from the model seed, then per round
// broadcast / train / upload / aggregate / evaluate until R rounds complete
// or the aggregated parameters stop moving. Any client failure aborts the
// run with a diagnostic naming the client — there is no partial aggregation.
FederationResult run_federation(const FederationScenario& scenario,
                                const FederationConfig& config);

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

struct SequentialResult {
    num::ParameterVector params;
    std::size_t rounds_run = 0;
    bool converged = false;
};

// R consecutive local_train calls with the same per-round schedule the
// federation uses (and the same stopping rule on parameter change): the
// private single-client baseline, and by construction bitwise equal to a
// single-client federation.
SequentialResult train_rounds(const num::ParameterVector& w0, ClientTask& task,
                              const FederationConfig& config);

struct CentralizedResult {
    num::ParameterVector params;
    double pooled_test_mse = 0.0;
    std::vector<double> client_test_mse; // ascending client order
    std::size_t rounds_run = 0;
    bool converged = false;
};

// Upper-bound baseline: one model trained on the pooled task with the same
// schedule, scored on the pooled test set and on each client's own test set.
CentralizedResult run_centralized(const models::ModelSpec& spec, ClientTask& pooled,
                                  std::span<ClientTask* const> clients,
                                  const FederationConfig& config);

// ---------------------------------------------------------------------------
// Socket framing (exposed for tests)
// ---------------------------------------------------------------------------

// Hello payload sent by a connecting client: "FSH1" | u32 client_id |
// u64 config_hash. The coordinator rejects a mismatched hash before any
// parameter exchange.
std::vector<std::uint8_t> encode_hello(std::uint32_t client_id, std::uint64_t hash);

struct Hello {
    std::uint32_t client_id = 0;
    std::uint64_t config_hash = 0;
};

// Raises CodecError on a malformed frame and ConfigError when the hash does
// not match `expected_hash`.
Hello decode_hello(std::span<const std::uint8_t> bytes, std::uint64_t expected_hash);

} // namespace fedsilo::fed
