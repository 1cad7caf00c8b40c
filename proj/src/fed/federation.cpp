#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "common/errors.hpp"
#include "fed/federation.hpp"

namespace fedsilo::fed {

namespace {

// ---------------------------------------------------------------------------
// Client state machine
// ---------------------------------------------------------------------------

// One client's protocol endpoint: consumes broadcast frames, trains, emits
// upload frames. The model slot is mutex-guarded because the coordinator
// reads it between rounds (evaluation and final-model collection) while the
// client may live on another thread.
class ClientWorker {
  public:
    ClientWorker(std::uint32_t id, ClientTask* task, const FederationConfig& config)
        : id_(id), task_(task), config_(&config) {}

    std::uint32_t id() const { return id_; }
    ClientTask& task() { return *task_; }

    std::vector<std::uint8_t> handle_broadcast(std::span<const std::uint8_t> bytes) {
        RoundMessage msg = decode_message(bytes);
        if (msg.direction != MessageDirection::Broadcast)
            throw StructuralError("client received a non-broadcast message");

        num::ParameterVector start;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            // Round 1 ships the full initial model in both modes; later
            // partial broadcasts overlay the shared segments onto the model
            // this client kept (its private head never travels).
            if (msg.round == 1 || config_->mode == AggregationMode::FedAvgFull)
                model_ = msg.payload;
            else
                model_ = merge_segments(model_, msg.payload);
            start = model_;
        }

        TrainOutcome outcome = local_train(start, *task_, *config_, msg.round);
        double test = task_->test_mse(outcome.params);

        RoundMessage up;
        up.direction = MessageDirection::Upload;
        up.round = msg.round;
        up.client_id = id_;
        up.n_k = task_->train_size();
        up.payload = config_->mode == AggregationMode::FedPerPartial
                         ? filter_segments(outcome.params, config_->shared_segments)
                         : outcome.params;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            model_ = std::move(outcome.params);
            local_test_mse_ = test;
        }
        return encode_message(up);
    }

    double local_test_mse() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return local_test_mse_;
    }

    // Overlays the aggregated segments onto the local model (the state this
    // client resumes from) and returns the merged full model for evaluation.
    num::ParameterVector adopt_global(const num::ParameterVector& aggregated) {
        std::lock_guard<std::mutex> lock(mutex_);
        model_ = merge_segments(model_, aggregated);
        return model_;
    }

    num::ParameterVector model() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return model_;
    }

  private:
    std::uint32_t id_;
    ClientTask* task_;
    const FederationConfig* config_;
    mutable std::mutex mutex_;
    num::ParameterVector model_;
    double local_test_mse_ = 0.0;
};

// The embedded mutex pins workers in place.
using WorkerList = std::vector<std::unique_ptr<ClientWorker>>;

unsigned thread_cap() {
    if (const char* env = std::getenv("FEDSILO_THREADS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
        throw ConfigError("FEDSILO_THREADS must be a positive integer");
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

[[noreturn]] void rethrow_client_failure(std::uint32_t round, std::size_t client_index,
                                         const std::string& what) {
    throw TrainingError("round " + std::to_string(round) + " aborted: client " +
                        std::to_string(client_index + 1) + " failed: " + what);
}

// ---------------------------------------------------------------------------
// Transports: given one broadcast frame, return every client's upload frame.
// ---------------------------------------------------------------------------

class Transport {
  public:
    virtual ~Transport() = default;
    virtual std::vector<std::vector<std::uint8_t>> exchange(
        std::uint32_t round, const std::vector<std::uint8_t>& broadcast) = 0;
};

// Same bytes, same codec path, no wire: clients run directly (concurrently
// when the thread budget allows), with frames handed over as owned buffers.
class InProcessTransport final : public Transport {
  public:
    explicit InProcessTransport(WorkerList& workers) : workers_(workers) {}

    std::vector<std::vector<std::uint8_t>> exchange(
        std::uint32_t round, const std::vector<std::uint8_t>& broadcast) override {
        std::size_t k = workers_.size();
        std::vector<std::vector<std::uint8_t>> uploads(k);
        std::vector<std::string> failures(k);

        auto run_one = [&](std::size_t i) {
            try {
                uploads[i] = workers_[i]->handle_broadcast(broadcast);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        };

        if (thread_cap() <= 1) {
            for (std::size_t i = 0; i < k; ++i) run_one(i);
        } else {
            std::vector<std::thread> threads;
            threads.reserve(k);
            for (std::size_t i = 0; i < k; ++i) threads.emplace_back(run_one, i);
            for (std::thread& t : threads) t.join();
        }
        for (std::size_t i = 0; i < k; ++i)
            if (!failures[i].empty()) rethrow_client_failure(round, i, failures[i]);
        return uploads;
    }

  private:
    WorkerList& workers_;
};

// ---------------------------------------------------------------------------
// Socket plumbing
// ---------------------------------------------------------------------------

void send_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        // MSG_NOSIGNAL: a peer that died mid-run must surface as EPIPE, not
        // as a process-terminating SIGPIPE.
        ssize_t sent = ::send(fd, data, n, MSG_NOSIGNAL);
        if (sent < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("socket send failed: ") + std::strerror(errno));
        }
        data += sent;
        n -= static_cast<std::size_t>(sent);
    }
}

// Reads exactly n bytes; returns false on a clean end-of-stream before the
// first byte when eof_ok is set.
bool recv_all(int fd, std::uint8_t* data, std::size_t n, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("socket receive failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            if (got == 0 && eof_ok) return false;
            throw IoError("peer closed the connection mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

// Length-prefixed framing: u32 little-endian byte count, then the payload.
// An explicit zero-length frame (or a clean close between frames) signals
// shutdown and comes back as an empty buffer.
void send_frame(int fd, std::span<const std::uint8_t> payload) {
    std::uint8_t header[4];
    std::uint32_t n = static_cast<std::uint32_t>(payload.size());
    for (int i = 0; i < 4; ++i) header[i] = static_cast<std::uint8_t>(n >> (8 * i));
    send_all(fd, header, 4);
    if (!payload.empty()) send_all(fd, payload.data(), payload.size());
}

std::vector<std::uint8_t> recv_frame(int fd) {
    std::uint8_t header[4];
    if (!recv_all(fd, header, 4, /*eof_ok=*/true)) return {};
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= std::uint32_t(header[i]) << (8 * i);
    std::vector<std::uint8_t> payload(n);
    if (n > 0) recv_all(fd, payload.data(), n, /*eof_ok=*/false);
    return payload;
}

struct FdGuard {
    int fd = -1;
    FdGuard() = default;
    explicit FdGuard(int f) : fd(f) {}
    FdGuard(const FdGuard&) = delete;
    FdGuard& operator=(const FdGuard&) = delete;
    FdGuard(FdGuard&& o) noexcept : fd(o.fd) { o.fd = -1; }
    FdGuard& operator=(FdGuard&& o) noexcept {
        reset();
        fd = o.fd;
        o.fd = -1;
        return *this;
    }
    ~FdGuard() { reset(); }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

void socket_client_main(std::uint16_t port, ClientWorker& worker, std::uint64_t hash,
                        std::string& failure) {
    try {
        FdGuard fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (fd.fd < 0) throw IoError(std::string("socket() failed: ") + std::strerror(errno));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::connect(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
            throw IoError(std::string("connect() failed: ") + std::strerror(errno));

        send_frame(fd.fd, encode_hello(worker.id(), hash));
        for (;;) {
            std::vector<std::uint8_t> frame = recv_frame(fd.fd);
            if (frame.empty()) break; // shutdown
            send_frame(fd.fd, worker.handle_broadcast(frame));
        }
    } catch (const std::exception& e) {
        failure = e.what();
        // Falling out closes the socket, which unblocks the coordinator.
    }
}

// Loopback TCP: the coordinator listens, every client connects with a hello
// frame (id + config hash), and rounds reduce to frame exchanges over the
// established connections.
class SocketTransport final : public Transport {
  public:
    SocketTransport(WorkerList& workers, const FederationConfig& config)
        : workers_(workers), failures_(workers.size()) {
        std::uint64_t hash = config_hash(config);

        listen_fd_ = FdGuard(::socket(AF_INET, SOCK_STREAM, 0));
        if (listen_fd_.fd < 0)
            throw IoError(std::string("socket() failed: ") + std::strerror(errno));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(config.port);
        if (::bind(listen_fd_.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
            throw IoError(std::string("bind() failed: ") + std::strerror(errno));
        if (::listen(listen_fd_.fd, static_cast<int>(workers.size())) < 0)
            throw IoError(std::string("listen() failed: ") + std::strerror(errno));

        sockaddr_in bound{};
        socklen_t len = sizeof bound;
        if (::getsockname(listen_fd_.fd, reinterpret_cast<sockaddr*>(&bound), &len) < 0)
            throw IoError(std::string("getsockname() failed: ") + std::strerror(errno));
        std::uint16_t port = ntohs(bound.sin_port);

        threads_.reserve(workers.size());
        for (std::size_t i = 0; i < workers.size(); ++i)
            threads_.emplace_back(socket_client_main, port, std::ref(*workers[i]), hash,
                                  std::ref(failures_[i]));

        client_fds_.resize(workers.size());
        try {
            for (std::size_t i = 0; i < workers.size(); ++i) {
                FdGuard conn(::accept(listen_fd_.fd, nullptr, nullptr));
                if (conn.fd < 0)
                    throw IoError(std::string("accept() failed: ") + std::strerror(errno));
                std::vector<std::uint8_t> frame = recv_frame(conn.fd);
                Hello hello = decode_hello(frame, hash);
                if (hello.client_id < 1 || hello.client_id > workers.size())
                    throw ConfigError("hello from unknown client id " +
                                      std::to_string(hello.client_id));
                FdGuard& slot = client_fds_[hello.client_id - 1];
                if (slot.fd >= 0)
                    throw ConfigError("two connections claim client id " +
                                      std::to_string(hello.client_id));
                slot = std::move(conn);
            }
        } catch (...) {
            shutdown();
            throw;
        }
    }

    ~SocketTransport() override { shutdown(); }

    std::vector<std::vector<std::uint8_t>> exchange(
        std::uint32_t round, const std::vector<std::uint8_t>& broadcast) override {
        std::size_t k = workers_.size();
        for (std::size_t i = 0; i < k; ++i) send_frame(client_fds_[i].fd, broadcast);

        std::vector<std::vector<std::uint8_t>> uploads(k);
        for (std::size_t i = 0; i < k; ++i) {
            try {
                uploads[i] = recv_frame(client_fds_[i].fd);
                if (uploads[i].empty()) throw IoError("client closed its connection");
            } catch (const std::exception& e) {
                // Give the client thread a moment to record its own, more
                // specific failure before reporting the transport symptom.
                if (threads_[i].joinable()) threads_[i].join();
                rethrow_client_failure(round, i,
                                       failures_[i].empty() ? e.what() : failures_[i]);
            }
        }
        return uploads;
    }

  private:
    void shutdown() {
        // An empty frame asks each client to exit; closing the descriptors
        // unblocks any client still waiting in recv.
        for (FdGuard& fd : client_fds_)
            if (fd.fd >= 0) {
                try {
                    send_frame(fd.fd, {});
                } catch (const std::exception&) {
                    // Already-broken pipes just mean the client has gone.
                }
            }
        for (FdGuard& fd : client_fds_) fd.reset();
        listen_fd_.reset();
        for (std::thread& t : threads_)
            if (t.joinable()) t.join();
    }

    WorkerList& workers_;
    std::vector<std::string> failures_;
    FdGuard listen_fd_;
    std::vector<FdGuard> client_fds_;
    std::vector<std::thread> threads_;
};

} // namespace

// ---------------------------------------------------------------------------
// Round orchestration
// ---------------------------------------------------------------------------

FederationResult run_federation(const FederationScenario& scenario,
                                const FederationConfig& config) {
    validate_config(config);
    if (scenario.clients.empty()) throw ConfigError("federation needs at least one client");
    for (ClientTask* task : scenario.clients)
        if (task == nullptr) throw ConfigError("federation client task is null");

    std::size_t k = scenario.clients.size();
    WorkerList workers;
    workers.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        workers.push_back(std::make_unique<ClientWorker>(static_cast<std::uint32_t>(i + 1),
                                                         scenario.clients[i], config));

    std::unique_ptr<Transport> transport;
    if (config.transport == TransportKind::Socket)
        transport = std::make_unique<SocketTransport>(workers, config);
    else
        transport = std::make_unique<InProcessTransport>(workers);

    num::ParameterVector w0 = models::init_model(scenario.model);
    // Convergence is judged on the aggregated scope: the full model under
    // full averaging, the shared segments under partial averaging.
    num::ParameterVector reference = config.mode == AggregationMode::FedPerPartial
                                         ? filter_segments(w0, config.shared_segments)
                                         : w0;

    FederationResult result;
    num::ParameterVector broadcast_payload = w0; // round 1 ships the full init model

    for (std::uint32_t round = 1; round <= config.rounds; ++round) {
        auto started = std::chrono::steady_clock::now();

        RoundMessage broadcast;
        broadcast.direction = MessageDirection::Broadcast;
        broadcast.round = round;
        broadcast.payload = std::move(broadcast_payload);
        std::vector<std::uint8_t> frame = encode_message(broadcast);

        std::vector<std::vector<std::uint8_t>> upload_frames = transport->exchange(round, frame);

        std::vector<ClientUpdate> updates;
        updates.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            RoundMessage up = decode_message(upload_frames[i]);
            if (up.direction != MessageDirection::Upload || up.round != round ||
                up.client_id != i + 1)
                throw StructuralError("malformed upload from client " + std::to_string(i + 1) +
                                      " in round " + std::to_string(round));
            updates.push_back({up.client_id, up.n_k, std::move(up.payload)});
        }

        num::ParameterVector aggregated =
            aggregate(std::move(updates), config.mode, config.shared_segments);
        double delta = num::param_max_abs_diff(aggregated, reference);
        reference = aggregated;

        RoundRecord record;
        record.round = round;
        record.local_test_mse.reserve(k);
        record.global_test_mse.reserve(k);
        for (std::size_t i = 0; i < k; ++i) record.local_test_mse.push_back(workers[i]->local_test_mse());
        for (std::size_t i = 0; i < k; ++i) {
            num::ParameterVector merged = workers[i]->adopt_global(aggregated);
            record.global_test_mse.push_back(scenario.clients[i]->test_mse(merged));
        }
        record.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.records.push_back(std::move(record));

        broadcast_payload = aggregated;
        if (delta < kConvergenceTol) {
            result.converged = true;
            break;
        }
    }

    result.global_model = std::move(broadcast_payload);
    result.client_models.reserve(k);
    for (std::size_t i = 0; i < k; ++i) result.client_models.push_back(workers[i]->model());
    return result;
}

} // namespace fedsilo::fed
