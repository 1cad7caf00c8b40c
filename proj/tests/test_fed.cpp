#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "doctest.h"

#include "colsim/column.hpp"
#include "common/errors.hpp"
#include "data/data.hpp"
#include "fed/federation.hpp"
#include "fed/tasks.hpp"
#include "models/models.hpp"
#include "num/rng.hpp"

using namespace fedsilo;
using fed::AggregationMode;
using fed::ClientUpdate;
using fed::FederationConfig;
using fed::MessageDirection;
using fed::RoundMessage;

namespace {

num::ParameterVector single_segment(std::vector<double> values) {
    std::size_t n = values.size();
    num::ParameterVector p;
    p.push("w", num::Tensor({n}, std::move(values)));
    return p;
}

// Hand-steerable objective over one flat segment "w". The train loss per row
// is 0.5*||w - target_row||^2 (so the mean-gradient is the mean residual);
// validation and test compare against their own fixed targets. Records every
// training row it is shown, in order, so shuffle behaviour is observable.
class QuadTask final : public fed::ClientTask {
  public:
    QuadTask(std::vector<std::vector<double>> targets, std::vector<double> val_target,
             std::vector<double> test_target)
        : targets_(std::move(targets)),
          val_target_(std::move(val_target)),
          test_target_(std::move(test_target)) {}

    std::size_t train_size() const override { return targets_.size(); }

    num::EvalResult train_batch(const num::ParameterVector& params,
                                std::span<const std::size_t> rows) override {
        const std::vector<double>& w = params.segments.at(0).tensor.data;
        num::EvalResult out;
        out.gradient = params.zeros_like();
        std::vector<double>& g = out.gradient.segments.at(0).tensor.data;
        out.loss = 0.0;
        for (std::size_t r : rows) {
            seen.push_back(r);
            const std::vector<double>& t = targets_.at(r);
            for (std::size_t j = 0; j < w.size(); ++j) {
                double diff = w[j] - t.at(j);
                out.loss += 0.5 * diff * diff;
                g[j] += diff;
            }
        }
        out.loss /= static_cast<double>(rows.size());
        for (double& v : g) v /= static_cast<double>(rows.size());
        return out;
    }

    double validation_loss(const num::ParameterVector& params) override {
        const std::vector<double>& w = params.segments.at(0).tensor.data;
        double loss = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            double diff = w[j] - val_target_.at(j);
            loss += 0.5 * diff * diff;
        }
        return loss;
    }

    double test_mse(const num::ParameterVector& params) override {
        const std::vector<double>& w = params.segments.at(0).tensor.data;
        double loss = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            double diff = w[j] - test_target_.at(j);
            loss += diff * diff;
        }
        return loss / static_cast<double>(w.size());
    }

    std::vector<std::size_t> seen;

  private:
    std::vector<std::vector<double>> targets_;
    std::vector<double> val_target_, test_target_;
};

// Constant-gradient objective: every batch reports loss 1 and gradient
// `slope` per coordinate, so parameters move by exactly -lr*slope per batch.
// Validation is val_slope * sum(w); picking val_slope with the same sign as
// slope makes every step an improvement, the opposite sign a deterioration.
class RampTask final : public fed::ClientTask {
  public:
    RampTask(std::size_t n_rows, double slope, double val_slope)
        : n_rows_(n_rows), slope_(slope), val_slope_(val_slope) {}

    std::size_t train_size() const override { return n_rows_; }

    num::EvalResult train_batch(const num::ParameterVector& params,
                                std::span<const std::size_t>) override {
        num::EvalResult out;
        out.loss = 1.0;
        out.gradient = params.zeros_like();
        for (double& v : out.gradient.segments.at(0).tensor.data) v = slope_;
        return out;
    }

    double validation_loss(const num::ParameterVector& params) override {
        double s = 0.0;
        for (double v : params.segments.at(0).tensor.data) s += v;
        return val_slope_ * s;
    }

    double test_mse(const num::ParameterVector&) override { return 0.0; }

  private:
    std::size_t n_rows_;
    double slope_, val_slope_;
};

// Fails with a non-finite loss on the nth call to train_batch.
class FaultyTask final : public fed::ClientTask {
  public:
    explicit FaultyTask(std::size_t fail_at_call) : fail_at_(fail_at_call) {}

    std::size_t train_size() const override { return 4; }

    num::EvalResult train_batch(const num::ParameterVector& params,
                                std::span<const std::size_t>) override {
        num::EvalResult out;
        out.gradient = params.zeros_like();
        out.loss = ++calls_ >= fail_at_ ? std::numeric_limits<double>::quiet_NaN() : 1.0;
        return out;
    }

    double validation_loss(const num::ParameterVector&) override { return 1.0; }
    double test_mse(const num::ParameterVector&) override { return 1.0; }

  private:
    std::size_t fail_at_;
    std::size_t calls_ = 0;
};

FederationConfig quiet_config() {
    FederationConfig config;
    config.rounds = 3;
    config.local_epochs = 2;
    config.batch_size = 2;
    config.lr0 = 0.05;
    config.lr_decay = 0.9;
    config.early_stop_patience = 0; // run every epoch
    config.seed = 77;
    return config;
}

RoundMessage random_message(const num::CounterRng& rng, std::uint64_t& counter,
                            bool force_empty, bool force_max_rank) {
    RoundMessage m;
    m.direction = rng.below(counter++, 2) ? MessageDirection::Upload : MessageDirection::Broadcast;
    m.round = static_cast<std::uint32_t>(rng.below(counter++, 1000));
    m.client_id = static_cast<std::uint32_t>(rng.below(counter++, 64));
    m.n_k = rng.bits(counter++);
    std::size_t n_segments = force_empty ? 0 : 1 + rng.below(counter++, 4);
    for (std::size_t s = 0; s < n_segments; ++s) {
        std::string name = "seg" + std::to_string(s);
        std::size_t extra = rng.below(counter++, 8);
        for (std::size_t i = 0; i < extra; ++i)
            name.push_back(static_cast<char>('a' + rng.below(counter++, 26)));

        std::vector<std::size_t> shape;
        if (force_max_rank && s == 0) {
            // Highest encodable rank: 255 axes, nearly all of extent one.
            shape.assign(255, 1);
            shape[3] = 1 + rng.below(counter++, 3);
        } else {
            std::size_t rank = rng.below(counter++, 4); // includes rank 0 scalars
            for (std::size_t d = 0; d < rank; ++d) shape.push_back(1 + rng.below(counter++, 5));
        }
        std::size_t count = num::Tensor::numel(shape);
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i) {
            switch (rng.below(counter++, 8)) {
            case 0: data[i] = 0.0; break;
            case 1: data[i] = -0.0; break;
            case 2: data[i] = std::numeric_limits<double>::infinity(); break;
            case 3: data[i] = std::numeric_limits<double>::quiet_NaN(); break;
            case 4: data[i] = std::numeric_limits<double>::denorm_min(); break;
            default: data[i] = rng.gaussian(counter) * 1e3; break;
            }
            ++counter;
        }
        m.payload.push(std::move(name), num::Tensor(std::move(shape), std::move(data)));
    }
    return m;
}

bool messages_bitwise_equal(const RoundMessage& a, const RoundMessage& b) {
    if (a.direction != b.direction || a.round != b.round || a.client_id != b.client_id ||
        a.n_k != b.n_k)
        return false;
    if (a.payload.segments.size() != b.payload.segments.size()) return false;
    for (std::size_t s = 0; s < a.payload.segments.size(); ++s) {
        const auto& sa = a.payload.segments[s];
        const auto& sb = b.payload.segments[s];
        if (sa.name != sb.name || sa.tensor.shape != sb.tensor.shape) return false;
        if (!sa.tensor.data.empty() &&
            std::memcmp(sa.tensor.data.data(), sb.tensor.data.data(),
                        sa.tensor.data.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

} // namespace

// ---------------------------------------------------------------------------
// Wire codec
// ---------------------------------------------------------------------------

TEST_CASE("message layout matches the declared byte format") {
    RoundMessage m;
    m.direction = MessageDirection::Upload;
    m.round = 7;
    m.client_id = 3;
    m.n_k = 258;
    m.payload.push("ab", num::Tensor({2}, {1.0, 2.0}));

    std::vector<std::uint8_t> bytes = fed::encode_message(m);
    // header: 4 magic + 1 direction + 4 round + 4 client + 8 n_k + 4 count
    // segment: 2 name_len + 2 name + 1 rank + 4 dim + 16 data
    REQUIRE(bytes.size() == 25 + 25);
    CHECK(std::memcmp(bytes.data(), "FSL1", 4) == 0);
    CHECK(bytes[4] == 1);                         // direction upload
    CHECK(bytes[5] == 7);                         // round, little-endian
    CHECK(bytes[6] == 0);
    CHECK(bytes[9] == 3);                         // client id
    CHECK(bytes[13] == 2);                        // n_k = 258 = 0x102
    CHECK(bytes[14] == 1);
    CHECK(bytes[21] == 1);                        // segment count
    CHECK(bytes[25] == 2);                        // name length
    CHECK(bytes[27] == 'a');
    CHECK(bytes[28] == 'b');
    CHECK(bytes[29] == 1);                        // rank
    CHECK(bytes[30] == 2);                        // dim 0
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 34, 8);    // payload doubles, LE
    CHECK(first == 1.0);
}

TEST_CASE("codec round-trips the documented examples") {
    SUBCASE("empty-segment message is header-only") {
        RoundMessage m;
        m.direction = MessageDirection::Broadcast;
        m.round = 1;
        std::vector<std::uint8_t> bytes = fed::encode_message(m);
        CHECK(bytes.size() == 25);
        CHECK(messages_bitwise_equal(fed::decode_message(bytes), m));
    }
    SUBCASE("one segment [1.0, 2.0]") {
        RoundMessage m;
        m.direction = MessageDirection::Upload;
        m.round = 4;
        m.client_id = 2;
        m.n_k = 10;
        m.payload.push("head.b", num::Tensor({2}, {1.0, 2.0}));
        CHECK(messages_bitwise_equal(fed::decode_message(fed::encode_message(m)), m));
    }
    SUBCASE("corrupted magic fails at offset 0") {
        RoundMessage m;
        std::vector<std::uint8_t> bytes = fed::encode_message(m);
        bytes[0] = 'X';
        try {
            fed::decode_message(bytes);
            FAIL("expected CodecError");
        } catch (const CodecError& e) {
            CHECK(e.offset == 0);
        }
    }
}

TEST_CASE("codec rejects malformed messages with a byte offset") {
    RoundMessage m;
    m.direction = MessageDirection::Upload;
    m.round = 2;
    m.client_id = 1;
    m.n_k = 5;
    m.payload.push("a", num::Tensor({3}, {1.0, 2.0, 3.0}));
    std::vector<std::uint8_t> bytes = fed::encode_message(m);

    SUBCASE("truncated buffers") {
        // Every proper prefix must fail loudly, never return garbage.
        for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
            std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + cut);
            CHECK_THROWS_AS(fed::decode_message(prefix), CodecError);
        }
    }
    SUBCASE("trailing bytes") {
        bytes.push_back(0);
        CHECK_THROWS_AS(fed::decode_message(bytes), CodecError);
    }
    SUBCASE("unknown direction byte") {
        bytes[4] = 9;
        try {
            fed::decode_message(bytes);
            FAIL("expected CodecError");
        } catch (const CodecError& e) {
            CHECK(e.offset == 4);
        }
    }
    SUBCASE("duplicate segment names") {
        RoundMessage dup;
        dup.payload.push("w", num::Tensor({1}, {1.0}));
        std::vector<std::uint8_t> raw = fed::encode_message(dup);
        // Make it two copies of the same segment record by hand.
        std::vector<std::uint8_t> segment(raw.begin() + 25, raw.end());
        raw.insert(raw.end(), segment.begin(), segment.end());
        raw[21] = 2; // segment count
        CHECK_THROWS_AS(fed::decode_message(raw), CodecError);
    }
    SUBCASE("absurd dimension against a short payload") {
        // Claim a 4-billion-element segment with only 3 doubles present.
        std::vector<std::uint8_t> raw = fed::encode_message(m);
        raw[30] = 0xFF;
        raw[31] = 0xFF;
        raw[32] = 0xFF;
        raw[33] = 0xFF;
        CHECK_THROWS_AS(fed::decode_message(raw), CodecError);
    }
}

TEST_CASE("codec round-trip is bitwise over randomized messages") {
    num::CounterRng rng = num::CounterRng::keyed(2024, "codec-roundtrip");
    std::uint64_t counter = 0;
    for (int trial = 0; trial < 1200; ++trial) {
        bool force_empty = trial % 97 == 0;
        bool force_max_rank = trial % 89 == 3;
        RoundMessage m = random_message(rng, counter, force_empty, force_max_rank);
        std::vector<std::uint8_t> bytes = fed::encode_message(m);
        RoundMessage back = fed::decode_message(bytes);
        REQUIRE(messages_bitwise_equal(back, m));
        // Re-encoding the decoded message reproduces the bytes too.
        REQUIRE(fed::encode_message(back) == bytes);
    }
}

TEST_CASE("hello frames carry id and config hash") {
    std::vector<std::uint8_t> bytes = fed::encode_hello(5, 0xDEADBEEFCAFEF00Dull);
    REQUIRE(bytes.size() == 16);
    CHECK(std::memcmp(bytes.data(), "FSH1", 4) == 0);
    fed::Hello h = fed::decode_hello(bytes, 0xDEADBEEFCAFEF00Dull);
    CHECK(h.client_id == 5);
    CHECK(h.config_hash == 0xDEADBEEFCAFEF00Dull);

    CHECK_THROWS_AS(fed::decode_hello(bytes, 1), ConfigError); // wrong hash -> rejected
    bytes[0] = 'Z';
    CHECK_THROWS_AS(fed::decode_hello(bytes, 0xDEADBEEFCAFEF00Dull), CodecError);
    CHECK_THROWS_AS(fed::decode_hello({}, 1), CodecError);
}

TEST_CASE("config hash reflects every training-relevant field") {
    FederationConfig base = quiet_config();
    std::uint64_t h0 = fed::config_hash(base);
    CHECK(h0 == fed::config_hash(base)); // deterministic

    FederationConfig c = base;
    c.rounds = 9;
    CHECK(fed::config_hash(c) != h0);
    c = base;
    c.lr0 = 0.051;
    CHECK(fed::config_hash(c) != h0);
    c = base;
    c.seed = 78;
    CHECK(fed::config_hash(c) != h0);
    c = base;
    c.mode = AggregationMode::FedPerPartial;
    c.shared_segments = {"w"};
    CHECK(fed::config_hash(c) != h0);
    // Transport is deliberately excluded: both transports must run the same
    // training problem.
    c = base;
    c.transport = fed::TransportKind::Socket;
    CHECK(fed::config_hash(c) == h0);
}

TEST_CASE("config validation rejects impossible schedules") {
    FederationConfig config = quiet_config();
    config.rounds = 0;
    CHECK_THROWS_AS(fed::validate_config(config), ConfigError);
    config = quiet_config();
    config.batch_size = 0;
    CHECK_THROWS_AS(fed::validate_config(config), ConfigError);
    config = quiet_config();
    config.lr0 = 0.0;
    CHECK_THROWS_AS(fed::validate_config(config), ConfigError);
    config = quiet_config();
    config.mode = AggregationMode::FedPerPartial; // no shared segments named
    CHECK_THROWS_AS(fed::validate_config(config), ConfigError);
    config = quiet_config();
    config.shared_segments = {"w"}; // full averaging takes no list
    CHECK_THROWS_AS(fed::validate_config(config), ConfigError);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

TEST_CASE("aggregate reproduces the worked examples") {
    SUBCASE("equal weights average elementwise") {
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 1, single_segment({1.0, 3.0})});
        updates.push_back({2, 1, single_segment({3.0, 5.0})});
        num::ParameterVector avg = fed::aggregate(updates, AggregationMode::FedAvgFull);
        CHECK(avg.segments[0].tensor.data[0] == 2.0);
        CHECK(avg.segments[0].tensor.data[1] == 4.0);
    }
    SUBCASE("weights follow training-set sizes") {
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 3, single_segment({0.0})});
        updates.push_back({2, 1, single_segment({4.0})});
        num::ParameterVector avg = fed::aggregate(updates, AggregationMode::FedAvgFull);
        CHECK(avg.segments[0].tensor.data[0] == 1.0); // (3*0 + 1*4) / 4
    }
    SUBCASE("a single update returns unchanged, bitwise") {
        num::ParameterVector w = single_segment({-0.0, 1.5, 3.25});
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 17, w});
        num::ParameterVector out = fed::aggregate(updates, AggregationMode::FedAvgFull);
        CHECK(num::param_bitwise_equal(out, w));
        CHECK(std::signbit(out.segments[0].tensor.data[0])); // -0.0 preserved
    }
    SUBCASE("identical uploads are a fixed point") {
        num::ParameterVector w = single_segment({0.125, -7.5, 1e-9, 42.0});
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 3, w});
        updates.push_back({2, 5, w});
        updates.push_back({3, 11, w});
        num::ParameterVector out = fed::aggregate(updates, AggregationMode::FedAvgFull);
        for (std::size_t i = 0; i < 4; ++i) {
            double expect = w.segments[0].tensor.data[i];
            CHECK(std::fabs(out.segments[0].tensor.data[i] - expect) <=
                  1e-15 * std::fabs(expect));
        }
    }
}

TEST_CASE("aggregate matches a direct weighted-sum oracle") {
    num::CounterRng rng = num::CounterRng::keyed(31337, "aggregate-oracle");
    std::uint64_t counter = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t k = 1 + rng.below(counter++, 5);
        std::size_t d = 1 + rng.below(counter++, 50);
        std::vector<ClientUpdate> updates;
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> w(d);
            for (double& v : w) v = rng.gaussian(counter++) * 10.0;
            std::uint64_t n_k = 1 + rng.below(counter++, 10000);
            total += static_cast<double>(n_k);
            updates.push_back({static_cast<std::uint32_t>(c + 1), n_k, single_segment(std::move(w))});
        }

        // Independent oracle: per-element direct sum in long double.
        std::vector<double> expect(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            long double acc = 0.0L;
            for (const ClientUpdate& u : updates)
                acc += static_cast<long double>(u.n_k) / total * u.params.segments[0].tensor.data[j];
            expect[j] = static_cast<double>(acc);
        }

        num::ParameterVector out = fed::aggregate(updates, AggregationMode::FedAvgFull);
        for (std::size_t j = 0; j < d; ++j) {
            double scale = std::max(1.0, std::fabs(expect[j]));
            REQUIRE(std::fabs(out.segments[0].tensor.data[j] - expect[j]) <= 1e-12 * scale);
        }

        // Permutation invariance: reversing arrival order changes nothing.
        std::vector<ClientUpdate> reversed(updates.rbegin(), updates.rend());
        num::ParameterVector out2 = fed::aggregate(reversed, AggregationMode::FedAvgFull);
        REQUIRE(num::param_bitwise_equal(out, out2));
    }
}

TEST_CASE("aggregate rejects malformed update sets") {
    SUBCASE("no updates") {
        CHECK_THROWS_AS(fed::aggregate({}, AggregationMode::FedAvgFull), StructuralError);
    }
    SUBCASE("zero total weight") {
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 0, single_segment({1.0})});
        CHECK_THROWS_AS(fed::aggregate(updates, AggregationMode::FedAvgFull), StructuralError);
    }
    SUBCASE("incompatible shapes") {
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 1, single_segment({1.0})});
        updates.push_back({2, 1, single_segment({1.0, 2.0})});
        CHECK_THROWS_AS(fed::aggregate(updates, AggregationMode::FedAvgFull), StructuralError);
    }
    SUBCASE("duplicate client ids") {
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 1, single_segment({1.0})});
        updates.push_back({1, 1, single_segment({2.0})});
        CHECK_THROWS_AS(fed::aggregate(updates, AggregationMode::FedAvgFull), StructuralError);
    }
    SUBCASE("partial mode polices the uploaded segment set") {
        num::ParameterVector leak = single_segment({1.0});
        leak.push("private.h", num::Tensor({1}, {9.0}));
        std::vector<ClientUpdate> updates;
        updates.push_back({1, 1, leak});
        updates.push_back({2, 1, leak});
        CHECK_THROWS_AS(fed::aggregate(updates, AggregationMode::FedPerPartial, {"w"}),
                        StructuralError);
    }
}

TEST_CASE("segment filtering and merging support partial aggregation") {
    num::ParameterVector model = single_segment({1.0, 2.0});
    model.push("head.w", num::Tensor({2, 1}, {5.0, 6.0}));

    num::ParameterVector shared = fed::filter_segments(model, {"w"});
    REQUIRE(shared.segments.size() == 1);
    CHECK(shared.segments[0].name == "w");

    shared.at("w").data = {10.0, 20.0};
    num::ParameterVector merged = fed::merge_segments(model, shared);
    CHECK(merged.at("w").data[0] == 10.0);
    CHECK(merged.at("head.w").data[1] == 6.0); // untouched

    CHECK_THROWS_AS(fed::filter_segments(model, {"nope"}), StructuralError);
    num::ParameterVector alien = single_segment({1.0});
    alien.segments[0].name = "nope";
    CHECK_THROWS_AS(fed::merge_segments(model, alien), StructuralError);
}

// ---------------------------------------------------------------------------
// Local training
// ---------------------------------------------------------------------------

TEST_CASE("zero epochs return the input parameters unchanged") {
    QuadTask task({{1.0}, {2.0}}, {0.0}, {0.0});
    FederationConfig config = quiet_config();
    config.local_epochs = 0;
    num::ParameterVector w = single_segment({0.625});
    fed::TrainOutcome out = fed::local_train(w, task, config, 1);
    CHECK(num::param_bitwise_equal(out.params, w));
    CHECK(out.metrics.epochs_run == 0);
}

TEST_CASE("learning-rate schedule decays per epoch and restarts per round") {
    // One batch per epoch with unit gradient: each epoch moves w by exactly
    // -lr0 * decay^epoch, so the trajectory spells out the schedule.
    RampTask task(3, 1.0, 1.0);
    FederationConfig config = quiet_config();
    config.local_epochs = 3;
    config.batch_size = 8; // one batch covers all rows
    config.lr0 = 1e-3;
    config.lr_decay = 0.98;
    config.early_stop_patience = 0;

    num::ParameterVector w0 = single_segment({1.0});
    fed::TrainOutcome out = fed::local_train(w0, task, config, 1);

    double expect = 1.0;
    expect -= 1e-3 * std::pow(0.98, 0.0); // epoch 0 trains at lr0
    expect -= 1e-3 * std::pow(0.98, 1.0); // epoch 1 at lr0 * 0.98
    expect -= 1e-3 * std::pow(0.98, 2.0);
    CHECK(out.params.segments[0].tensor.data[0] == expect);
    CHECK(out.metrics.epochs_run == 3);

    // A later round restarts the schedule: same shape of trajectory.
    RampTask task2(3, 1.0, 1.0);
    fed::TrainOutcome out2 = fed::local_train(w0, task2, config, 7);
    CHECK(out2.params.segments[0].tensor.data[0] == expect);
}

TEST_CASE("early stopping quits after patience epochs without improvement") {
    // Opposite validation slope: every step increases validation loss, so the
    // best parameters stay the incoming ones and training stops after exactly
    // `patience` wasted epochs.
    RampTask task(2, 1.0, -1.0);
    FederationConfig config = quiet_config();
    config.local_epochs = 100;
    config.batch_size = 4;
    config.early_stop_patience = 5;

    num::ParameterVector w0 = single_segment({0.0});
    fed::TrainOutcome out = fed::local_train(w0, task, config, 1);
    CHECK(out.metrics.epochs_run == 5);
    CHECK(num::param_bitwise_equal(out.params, w0));
    CHECK(out.metrics.best_val_loss == out.metrics.initial_val_loss);
}

TEST_CASE("training returns the best-validation parameters, not the last") {
    // One training row pulls w toward 4 while validation wants w near 1:
    // validation improves, bottoms out, then worsens until patience runs out.
    QuadTask task({{4.0}}, {1.0}, {1.0});
    FederationConfig config = quiet_config();
    config.local_epochs = 60;
    config.batch_size = 1;
    config.lr0 = 0.2;
    config.lr_decay = 0.98;
    config.early_stop_patience = 3;

    fed::TrainOutcome out = fed::local_train(single_segment({0.0}), task, config, 1);
    // Epoch 0 lands on w = 0.2 * 4 = 0.8, the closest pass to 1; epochs 1-3
    // overshoot and never improve, so patience (3) ends training at epoch 4.
    CHECK(out.metrics.epochs_run == 4);
    CHECK(out.params.segments[0].tensor.data[0] == 0.2 * 4.0);
    CHECK(out.metrics.best_val_loss == task.validation_loss(out.params));
    CHECK(out.metrics.best_val_loss < out.metrics.initial_val_loss);
}

TEST_CASE("every epoch shuffles a full pass over the training rows") {
    QuadTask task(std::vector<std::vector<double>>(7, {0.0}), {0.0}, {0.0});
    FederationConfig config = quiet_config();
    config.local_epochs = 4;
    config.batch_size = 3;
    config.lr0 = 1e-6;
    config.early_stop_patience = 0;

    fed::local_train(single_segment({1.0}), task, config, 2);
    REQUIRE(task.seen.size() == 7 * 4);

    bool any_epoch_differs = false;
    std::vector<std::size_t> first_epoch(task.seen.begin(), task.seen.begin() + 7);
    for (std::size_t e = 0; e < 4; ++e) {
        std::vector<std::size_t> epoch(task.seen.begin() + 7 * e, task.seen.begin() + 7 * (e + 1));
        if (epoch != first_epoch) any_epoch_differs = true;
        std::sort(epoch.begin(), epoch.end());
        for (std::size_t i = 0; i < 7; ++i) REQUIRE(epoch[i] == i); // exact cover
    }
    CHECK(any_epoch_differs);

    // The shuffle stream is keyed by (seed, round, epoch) alone, so a second
    // client in the same round walks the identical order.
    QuadTask peer(std::vector<std::vector<double>>(7, {0.0}), {0.0}, {0.0});
    fed::local_train(single_segment({1.0}), peer, config, 2);
    CHECK(peer.seen == task.seen);

    QuadTask other_round(std::vector<std::vector<double>>(7, {0.0}), {0.0}, {0.0});
    fed::local_train(single_segment({1.0}), other_round, config, 3);
    CHECK(other_round.seen != task.seen);
}

TEST_CASE("non-finite losses abort with the epoch and batch named") {
    FaultyTask task(3);
    FederationConfig config = quiet_config();
    config.local_epochs = 5;
    config.batch_size = 2; // two batches per epoch -> call 3 is epoch 1, batch 0
    config.early_stop_patience = 0;
    try {
        fed::local_train(single_segment({0.0}), task, config, 1);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        std::string what = e.what();
        CHECK(what.find("epoch 1") != std::string::npos);
        CHECK(what.find("batch 0") != std::string::npos);
    }
}

TEST_CASE("training a real activity client reduces its loss") {
    std::vector<data::ActivitySample> samples = data::generate_synthetic_activity(404, 80);
    data::ActivityClient client;
    client.client_id = 1;
    client.samples = samples;
    client.splits = data::split_train_val_test(samples, 11);

    fed::MoleculeCache cache;
    fed::ActivityTask task(client, cache);
    CHECK(task.train_size() == client.splits.train.size());

    models::ModelSpec spec;
    spec.kind = models::ModelKind::GnnMixture;
    spec.seed = 5;
    spec.message_width = 8;
    spec.head_width = 8;

    FederationConfig config = quiet_config();
    config.rounds = 1;
    config.local_epochs = 8;
    config.batch_size = 16;
    config.lr0 = 5e-3;
    config.early_stop_patience = 10;

    num::ParameterVector w0 = models::init_model(spec);
    double before = task.test_mse(w0);
    fed::TrainOutcome out = fed::local_train(w0, task, config, 1);
    CHECK(out.metrics.best_val_loss < out.metrics.initial_val_loss);
    CHECK(task.test_mse(out.params) < before);

    metrics::MetricReport report = task.test_report(out.params);
    CHECK(report.n == client.splits.test.size());
    CHECK(report.mse == doctest::Approx(task.test_mse(out.params)).epsilon(1e-12));
}

TEST_CASE("training a column client reduces its multistep error") {
    colsim::ColumnParams params;
    std::vector<colsim::Trajectory> pool = colsim::generate_client_dataset(params, 8, 21);
    data::MinMaxScaler scaler = data::MinMaxScaler::fit(data::stack_trajectory_rows(pool));

    std::vector<colsim::Trajectory> train(pool.begin(), pool.begin() + 5);
    std::vector<colsim::Trajectory> val(pool.begin() + 5, pool.begin() + 7);
    std::vector<colsim::Trajectory> test(pool.begin() + 7, pool.end());
    fed::ColumnTask task(train, val, test, scaler);
    CHECK(task.train_size() == 5);

    models::ModelSpec spec;
    spec.kind = models::ModelKind::KoopmanWiener;
    spec.seed = 9;
    spec.autoencoder_width = 16;

    FederationConfig config = quiet_config();
    config.local_epochs = 30;
    config.batch_size = 5;
    config.lr0 = 0.02;
    config.lr_decay = 0.995;
    config.early_stop_patience = 30;

    num::ParameterVector w0 = models::init_model(spec);
    double before = task.test_mse(w0);
    fed::TrainOutcome out = fed::local_train(w0, task, config, 1);
    CHECK(task.test_mse(out.params) < before);
}

// ---------------------------------------------------------------------------
// Federation runs
// ---------------------------------------------------------------------------

namespace {

// Builds K small activity clients over a synthetic pool.
struct ActivityFixture {
    std::vector<data::ActivityClient> clients;
    fed::MoleculeCache cache;
    std::vector<std::unique_ptr<fed::ActivityTask>> tasks;
    fed::FederationScenario scenario;

    ActivityFixture(std::size_t n_samples, std::size_t k, std::uint64_t seed, bool scaffold) {
        std::vector<data::ActivitySample> samples = data::generate_synthetic_activity(seed, n_samples);
        clients = scaffold ? data::partition_uneven_scaffold(samples, seed + 1)
                           : data::partition_even_random(samples, k, seed + 1);
        for (const data::ActivityClient& c : clients)
            tasks.push_back(std::make_unique<fed::ActivityTask>(c, cache));
        scenario.model.kind = models::ModelKind::GnnMixture;
        scenario.model.seed = seed + 2;
        scenario.model.message_width = 4;
        scenario.model.head_width = 4;
        for (auto& t : tasks) scenario.clients.push_back(t.get());
    }
};

} // namespace

TEST_CASE("single-client federation equals sequential local training") {
    ActivityFixture fixture(60, 1, 500, false);
    FederationConfig real = quiet_config();
    real.rounds = 3;
    real.local_epochs = 2;
    real.batch_size = 8;
    real.lr0 = 2e-3;

    fed::FederationResult result = fed::run_federation(fixture.scenario, real);
    REQUIRE(result.records.size() <= 3);

    fed::MoleculeCache cache2;
    fed::ActivityTask replay(fixture.clients[0], cache2);
    fed::SequentialResult baseline =
        fed::train_rounds(models::init_model(fixture.scenario.model), replay, real);

    CHECK(baseline.rounds_run == result.records.size());
    CHECK(num::param_bitwise_equal(result.global_model, baseline.params));
    CHECK(num::param_bitwise_equal(result.client_models[0], baseline.params));

    // With one client the aggregate is the upload, so pre- and post-
    // aggregation test errors coincide, bitwise.
    for (const fed::RoundRecord& r : result.records)
        CHECK(r.local_test_mse[0] == r.global_test_mse[0]);
}

TEST_CASE("round one with a single client is plain local training") {
    ActivityFixture fixture(50, 1, 321, false);
    FederationConfig config = quiet_config();
    config.rounds = 1;
    config.local_epochs = 2;
    config.batch_size = 8;

    fed::FederationResult result = fed::run_federation(fixture.scenario, config);
    REQUIRE(result.records.size() == 1);

    fed::MoleculeCache cache2;
    fed::ActivityTask replay(fixture.clients[0], cache2);
    fed::TrainOutcome direct =
        fed::local_train(models::init_model(fixture.scenario.model), replay, config, 1);
    CHECK(num::param_bitwise_equal(result.global_model, direct.params));
}

TEST_CASE("federation stops once parameters stop moving") {
    // Zero-gradient clients never move the model: round 1 already converges.
    RampTask a(4, 0.0, 1.0), b(6, 0.0, 1.0);
    // RampTask ignores the model structure, so drive the run through the
    // protocol with a tiny real model whose gradient the task fakes as zero.
    fed::FederationScenario scenario;
    scenario.model.kind = models::ModelKind::GnnMixture;
    scenario.model.seed = 1;
    scenario.model.message_width = 4;
    scenario.model.head_width = 4;
    scenario.clients = {&a, &b};

    FederationConfig config = quiet_config();
    config.rounds = 10;
    config.local_epochs = 1;
    config.early_stop_patience = 0;

    fed::FederationResult result = fed::run_federation(scenario, config);
    CHECK(result.converged);
    CHECK(result.records.size() == 1);
}

TEST_CASE("a failing client aborts the round with a diagnostic") {
    RampTask healthy(4, 0.5, 1.0);
    FaultyTask faulty(2);
    fed::FederationScenario scenario;
    scenario.model.kind = models::ModelKind::GnnMixture;
    scenario.model.seed = 2;
    scenario.model.message_width = 4;
    scenario.model.head_width = 4;
    scenario.clients = {&healthy, &faulty};

    FederationConfig config = quiet_config();
    config.rounds = 3;
    config.local_epochs = 1;
    config.batch_size = 8;

    try {
        fed::run_federation(scenario, config);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        // One batch per epoch per round, failing on the second call: the
        // abort lands in round 2 and names the culprit.
        std::string what = e.what();
        CHECK(what.find("client 2") != std::string::npos);
        CHECK(what.find("round 2") != std::string::npos);
    }
}

TEST_CASE("partial aggregation shares the trunk and keeps heads private") {
    ActivityFixture fixture(240, 4, 808, true);
    REQUIRE(fixture.clients.size() == 4);

    FederationConfig config = quiet_config();
    config.rounds = 2;
    config.local_epochs = 2;
    config.batch_size = 16;
    config.lr0 = 2e-3;
    config.mode = AggregationMode::FedPerPartial;
    config.shared_segments = models::shared_segment_names(fixture.scenario.model);

    fed::FederationResult result = fed::run_federation(fixture.scenario, config);
    REQUIRE(result.client_models.size() == 4);

    // The aggregated model carries exactly the shared segments.
    REQUIRE(result.global_model.segments.size() == config.shared_segments.size());
    for (const auto& segment : result.global_model.segments)
        CHECK(std::find(config.shared_segments.begin(), config.shared_segments.end(),
                        segment.name) != config.shared_segments.end());

    std::vector<std::string> private_names =
        models::private_segment_names(fixture.scenario.model);
    for (std::size_t i = 0; i < 4; ++i) {
        // Broadcast shared part is identical everywhere, bitwise.
        num::ParameterVector shared_i =
            fed::filter_segments(result.client_models[i], config.shared_segments);
        CHECK(num::param_bitwise_equal(shared_i, result.global_model));
    }
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            num::ParameterVector head_i =
                fed::filter_segments(result.client_models[i], private_names);
            num::ParameterVector head_j =
                fed::filter_segments(result.client_models[j], private_names);
            CHECK_FALSE(num::param_bitwise_equal(head_i, head_j));
        }
}

TEST_CASE("socket and in-process transports produce identical records") {
    ActivityFixture in_proc(90, 3, 640, false);
    ActivityFixture socketed(90, 3, 640, false);

    FederationConfig config = quiet_config();
    config.rounds = 2;
    config.local_epochs = 2;
    config.batch_size = 8;
    config.lr0 = 2e-3;

    config.transport = fed::TransportKind::InProcess;
    fed::FederationResult a = fed::run_federation(in_proc.scenario, config);
    config.transport = fed::TransportKind::Socket;
    fed::FederationResult b = fed::run_federation(socketed.scenario, config);

    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        CHECK(a.records[r].round == b.records[r].round);
        REQUIRE(a.records[r].local_test_mse == b.records[r].local_test_mse);   // bitwise
        REQUIRE(a.records[r].global_test_mse == b.records[r].global_test_mse); // bitwise
    }
    CHECK(num::param_bitwise_equal(a.global_model, b.global_model));
    for (std::size_t i = 0; i < a.client_models.size(); ++i)
        CHECK(num::param_bitwise_equal(a.client_models[i], b.client_models[i]));
}

TEST_CASE("federated rounds help every client on the even split") {
    ActivityFixture fixture(160, 4, 2023, false);
    FederationConfig config = quiet_config();
    config.rounds = 3;
    config.local_epochs = 4;
    config.batch_size = 8;
    config.lr0 = 5e-3;
    config.early_stop_patience = 10;

    fed::FederationResult result = fed::run_federation(fixture.scenario, config);
    REQUIRE(!result.records.empty());
    const fed::RoundRecord& last = result.records.back();

    // Not a statistical claim, just sanity: losses are finite and the global
    // model at the end beats the untouched initial model for most clients.
    num::ParameterVector w0 = models::init_model(fixture.scenario.model);
    std::size_t improved = 0;
    for (std::size_t i = 0; i < fixture.tasks.size(); ++i) {
        CHECK(std::isfinite(last.global_test_mse[i]));
        if (last.global_test_mse[i] < fixture.tasks[i]->test_mse(w0)) ++improved;
    }
    CHECK(improved >= 3);
}

TEST_CASE("centralized training with one client is the private baseline") {
    ActivityFixture fixture(70, 1, 905, false);
    FederationConfig config = quiet_config();
    config.rounds = 2;
    config.local_epochs = 3;
    config.batch_size = 8;

    fed::MoleculeCache cache2;
    fed::ActivityTask replay(fixture.clients[0], cache2);

    fed::CentralizedResult central = fed::run_centralized(
        fixture.scenario.model, *fixture.tasks[0], fixture.scenario.clients, config);
    fed::SequentialResult baseline =
        fed::train_rounds(models::init_model(fixture.scenario.model), replay, config);

    CHECK(num::param_bitwise_equal(central.params, baseline.params));
    CHECK(central.pooled_test_mse == replay.test_mse(baseline.params));
    REQUIRE(central.client_test_mse.size() == 1);
    CHECK(central.client_test_mse[0] == central.pooled_test_mse);
}
