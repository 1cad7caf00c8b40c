#include "models/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "common/errors.hpp"
#include "num/rng.hpp"

namespace fedsilo::models {

using num::ParameterVector;
using num::Tape;
using num::Tensor;

namespace {

struct SegmentDef {
    const char* name;
    std::size_t rows, cols;
    bool weight; // weights get Glorot draws, biases stay zero
};

std::vector<SegmentDef> layout(const ModelSpec& spec) {
    if (spec.kind == ModelKind::GnnMixture) {
        const std::size_t f = spec.node_feature_dim, w = spec.message_width, h = spec.head_width;
        const std::size_t mix = 2 * w + 1; // two fingerprints plus temperature
        return {
            {"msg1.w_self", f, w, true}, {"msg1.w_nbr", f, w, true}, {"msg1.b", 1, w, false},
            {"msg2.w_self", w, w, true}, {"msg2.w_nbr", w, w, true}, {"msg2.b", 1, w, false},
            {"head.w1", mix, h, true},   {"head.b1", 1, h, false},
            {"head.w2", h, h, true},     {"head.b2", 1, h, false},
            {"head.w3", h, 1, true},     {"head.b3", 1, 1, false},
        };
    }
    const std::size_t s = spec.state_dim, i = spec.input_dim, l = spec.latent_dim,
                      a = spec.autoencoder_width;
    return {
        {"enc.w1", s, a, true}, {"enc.b1", 1, a, false},
        {"enc.w2", a, a, true}, {"enc.b2", 1, a, false},
        {"enc.w3", a, l, true}, {"enc.b3", 1, l, false},
        {"dyn.A", l, l, true},  {"dyn.B", i, l, true},
        {"dec.w1", l, a, true}, {"dec.b1", 1, a, false},
        {"dec.w2", a, a, true}, {"dec.b2", 1, a, false},
        {"dec.w3", a, s, true}, {"dec.b3", 1, s, false},
    };
}

// Segment indices into the layouts above.
namespace gnn {
enum : std::size_t { W1s, W1n, B1, W2s, W2n, B2, Hw1, Hb1, Hw2, Hb2, Hw3, Hb3, kCount };
}
namespace koop {
enum : std::size_t { Ew1, Eb1, Ew2, Eb2, Ew3, Eb3, A, B, Dw1, Db1, Dw2, Db2, Dw3, Db3, kCount };
}

Tape::Var dense(Tape& t, Tape::Var x, Tape::Var w, Tape::Var b) {
    return t.add_rowvec(t.matmul(x, w), b);
}

Tape::Var encode(Tape& t, const std::vector<Tape::Var>& s, Tape::Var x) {
    Tape::Var h = t.tanh_op(dense(t, x, s[koop::Ew1], s[koop::Eb1]));
    h = t.tanh_op(dense(t, h, s[koop::Ew2], s[koop::Eb2]));
    return dense(t, h, s[koop::Ew3], s[koop::Eb3]);
}

Tape::Var decode(Tape& t, const std::vector<Tape::Var>& s, Tape::Var z) {
    Tape::Var h = t.tanh_op(dense(t, z, s[koop::Dw1], s[koop::Db1]));
    h = t.tanh_op(dense(t, h, s[koop::Dw2], s[koop::Db2]));
    return t.sigmoid_op(dense(t, h, s[koop::Dw3], s[koop::Db3]));
}

// out = row x matrix + bias, plain row-vector helpers for tape-free rollouts
void affine_row(const double* x, const Tensor& w, const Tensor& b, double* out) {
    const std::size_t k = w.rows(), n = w.cols();
    for (std::size_t j = 0; j < n; ++j) out[j] = b.data[j];
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double xv = x[kk];
        const double* wrow = w.data.data() + kk * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += xv * wrow[j];
    }
}

} // namespace

ParameterVector model_skeleton(const ModelSpec& spec) {
    ParameterVector pv;
    for (const SegmentDef& def : layout(spec))
        pv.push(def.name, Tensor::zeros({def.rows, def.cols}));
    return pv;
}

ParameterVector init_model(const ModelSpec& spec) {
    ParameterVector pv;
    for (const SegmentDef& def : layout(spec)) {
        Tensor t = Tensor::zeros({def.rows, def.cols});
        if (std::string_view(def.name) == "dyn.A") {
            // The latent transition starts at the identity: a random matrix
            // often has spectral radius above one, and multistep rollouts
            // through dozens of composed steps then explode before gradient
            // descent can recover. Identity means "latent state holds", a
            // stable starting point the slow column dynamics sit close to.
            for (std::size_t i = 0; i < def.rows; ++i) t.data[i * def.cols + i] = 1.0;
        } else if (def.weight) {
            num::CounterRng rng = num::CounterRng::keyed(spec.seed, def.name);
            const double s = std::sqrt(6.0 / double(def.rows + def.cols));
            for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(i, -s, s);
        }
        pv.push(def.name, std::move(t));
    }
    return pv;
}

std::vector<std::string> shared_segment_names(const ModelSpec& spec) {
    std::vector<std::string> out;
    for (const SegmentDef& def : layout(spec)) {
        std::string_view name(def.name);
        if (spec.kind == ModelKind::GnnMixture ? name.starts_with("msg")
                                               : !name.starts_with("dec."))
            out.push_back(def.name);
    }
    return out;
}

std::vector<std::string> private_segment_names(const ModelSpec& spec) {
    std::vector<std::string> out;
    for (const SegmentDef& def : layout(spec)) {
        std::string_view name(def.name);
        if (spec.kind == ModelKind::GnnMixture ? name.starts_with("head.")
                                               : name.starts_with("dec."))
            out.push_back(def.name);
    }
    return out;
}

MixtureBatch make_mixture_batch(std::span<const MixtureItem> items) {
    if (items.empty()) throw StructuralError("mixture batch must be nonempty");
    MixtureBatch batch;

    // Distinct molecules in order of first appearance.
    std::map<const chem::FeaturizedMolecule*, std::uint32_t> slot;
    std::vector<const chem::FeaturizedMolecule*> pool;
    auto intern = [&](const chem::FeaturizedMolecule* mol) {
        if (mol == nullptr) throw StructuralError("mixture item is missing a molecule");
        auto [it, fresh] = slot.emplace(mol, std::uint32_t(pool.size()));
        if (fresh) pool.push_back(mol);
        return it->second;
    };
    for (const MixtureItem& item : items) {
        batch.solute_slot.push_back(intern(item.solute));
        batch.solvent_slot.push_back(intern(item.solvent));
    }

    const std::size_t fdim = pool.front()->node_features.cols();
    std::size_t total_rows = 0;
    batch.mol_offsets.push_back(0);
    for (const auto* mol : pool) {
        if (mol->node_features.cols() != fdim)
            throw StructuralError("mixture batch mixes feature schemas");
        total_rows += mol->node_features.rows();
        batch.mol_offsets.push_back(std::uint32_t(total_rows));
    }

    batch.node_features = Tensor::zeros({total_rows, fdim});
    for (std::size_t m = 0; m < pool.size(); ++m) {
        const Tensor& nf = pool[m]->node_features;
        std::memcpy(batch.node_features.data.data() + std::size_t(batch.mol_offsets[m]) * fdim,
                    nf.data.data(), nf.data.size() * sizeof(double));
        for (auto [a, b] : pool[m]->edge_list)
            batch.edges.push_back({a + batch.mol_offsets[m], b + batch.mol_offsets[m]});
    }

    batch.temperature = Tensor::zeros({items.size(), 1});
    batch.labels = Tensor::zeros({items.size(), 1});
    for (std::size_t i = 0; i < items.size(); ++i) {
        batch.temperature.data[i] = items[i].temperature_scaled;
        batch.labels.data[i] = items[i].label;
    }
    return batch;
}

Tape::Var build_mixture_predictions(Tape& t, const std::vector<Tape::Var>& segs,
                                    const MixtureBatch& batch) {
    if (segs.size() != gnn::kCount)
        throw StructuralError("mixture model expects " + std::to_string(gnn::kCount) +
                              " parameter segments, got " + std::to_string(segs.size()));
    const std::size_t n_mols = batch.mol_offsets.size() - 1;

    Tape::Var x = t.input(batch.node_features);
    Tape::Var h1 = t.tanh_op(t.add_rowvec(
        t.add(t.matmul(x, segs[gnn::W1s]),
              t.matmul(t.neighbor_sum(x, batch.edges.data(), batch.edges.size()), segs[gnn::W1n])),
        segs[gnn::B1]));
    Tape::Var h2 = t.tanh_op(t.add_rowvec(
        t.add(t.matmul(h1, segs[gnn::W2s]),
              t.matmul(t.neighbor_sum(h1, batch.edges.data(), batch.edges.size()),
                       segs[gnn::W2n])),
        segs[gnn::B2]));
    Tape::Var fingerprints = t.segment_sum(h2, batch.mol_offsets.data(), n_mols);

    const Tape::Var mix_parts[] = {
        t.gather_rows(fingerprints, batch.solute_slot.data(), batch.solute_slot.size()),
        t.gather_rows(fingerprints, batch.solvent_slot.data(), batch.solvent_slot.size()),
        t.input(batch.temperature),
    };
    Tape::Var mix = t.concat_cols(mix_parts);

    Tape::Var h = t.tanh_op(dense(t, mix, segs[gnn::Hw1], segs[gnn::Hb1]));
    h = t.tanh_op(dense(t, h, segs[gnn::Hw2], segs[gnn::Hb2]));
    return dense(t, h, segs[gnn::Hw3], segs[gnn::Hb3]);
}

num::LossBuilder mixture_loss(const MixtureBatch& batch) {
    return [&batch](Tape& t, const std::vector<Tape::Var>& segs) {
        Tape::Var pred = build_mixture_predictions(t, segs, batch);
        return t.mse(pred, t.input(batch.labels));
    };
}

std::vector<double> predict_mixture_batch(const ParameterVector& params,
                                          const MixtureBatch& batch) {
    Tape t;
    auto segs = num::bind_params(t, params);
    Tape::Var pred = build_mixture_predictions(t, segs, batch);
    const double* p = t.value(pred);
    return std::vector<double>(p, p + batch.size());
}

double gnn_predict(const ParameterVector& params, const chem::FeaturizedMolecule& solute,
                   const chem::FeaturizedMolecule& solvent, double temperature_scaled) {
    const MixtureItem item{&solute, &solvent, temperature_scaled, 0.0};
    MixtureBatch batch = make_mixture_batch({&item, 1});
    return predict_mixture_batch(params, batch)[0];
}

double loss_activity(const ParameterVector& params, std::span<const MixtureItem> items) {
    MixtureBatch batch = make_mixture_batch(items);
    return num::forward_loss(params, mixture_loss(batch));
}

TrajectoryBatch make_trajectory_batch(std::span<const colsim::Trajectory* const> trajectories) {
    if (trajectories.empty()) throw StructuralError("trajectory batch must be nonempty");
    const std::size_t p = trajectories.front()->length();
    const std::size_t sdim = trajectories.front()->states.cols();
    const std::size_t idim = trajectories.front()->inputs.cols();
    if (p == 0) throw StructuralError("trajectory batch needs at least one sample per trajectory");

    TrajectoryBatch batch;
    batch.steps = p;
    batch.count = trajectories.size();
    batch.x0 = Tensor::zeros({batch.count, sdim});
    batch.inputs_stacked = Tensor::zeros({p * batch.count, idim});
    batch.states_stacked = Tensor::zeros({p * batch.count, sdim});

    for (std::size_t k = 0; k < batch.count; ++k) {
        const colsim::Trajectory& tr = *trajectories[k];
        if (tr.length() != p || tr.states.cols() != sdim || tr.inputs.cols() != idim)
            throw StructuralError("trajectory batch requires equal lengths and dimensions");
        std::memcpy(batch.x0.data.data() + k * sdim, tr.states.data.data(),
                    sdim * sizeof(double));
        for (std::size_t t = 0; t < p; ++t) {
            std::memcpy(batch.states_stacked.data.data() + (t * batch.count + k) * sdim,
                        tr.states.data.data() + t * sdim, sdim * sizeof(double));
            std::memcpy(batch.inputs_stacked.data.data() + (t * batch.count + k) * idim,
                        tr.inputs.data.data() + t * idim, idim * sizeof(double));
        }
    }
    return batch;
}

num::LossBuilder trajectory_loss(const TrajectoryBatch& batch, double lambda_rec) {
    return [&batch, lambda_rec](Tape& t, const std::vector<Tape::Var>& segs) {
        if (segs.size() != koop::kCount)
            throw StructuralError("state-space model expects " + std::to_string(koop::kCount) +
                                  " parameter segments, got " + std::to_string(segs.size()));
        const std::size_t p = batch.steps, count = batch.count;
        const std::size_t idim = batch.inputs_stacked.cols();

        std::vector<Tape::Var> latents;
        latents.reserve(p);
        Tape::Var z = encode(t, segs, t.input(batch.x0));
        latents.push_back(z);
        for (std::size_t step = 0; step + 1 < p; ++step) {
            Tape::Var u = t.input_rows(
                batch.inputs_stacked.data.data() + step * count * idim, count, idim);
            z = t.add(t.matmul(z, segs[koop::A]), t.matmul(u, segs[koop::B]));
            latents.push_back(z);
        }
        Tape::Var rollout = decode(t, segs, t.concat_rows(latents));

        Tape::Var states = t.input(batch.states_stacked);
        Tape::Var pred_loss = t.mse(rollout, states);
        Tape::Var rec = decode(t, segs, encode(t, segs, states));
        return t.add_scaled(pred_loss, t.mse(rec, states), lambda_rec);
    };
}

double loss_trajectory(const ParameterVector& params, const colsim::Trajectory& trajectory,
                       double lambda_rec) {
    const colsim::Trajectory* one[] = {&trajectory};
    TrajectoryBatch batch = make_trajectory_batch(one);
    return num::forward_loss(params, trajectory_loss(batch, lambda_rec));
}

num::Tensor koopman_rollout(const ParameterVector& params, const Tensor& x0,
                            const Tensor& u_seq) {
    const Tensor& ew1 = params.at("enc.w1");
    const Tensor& eb1 = params.at("enc.b1");
    const Tensor& ew2 = params.at("enc.w2");
    const Tensor& eb2 = params.at("enc.b2");
    const Tensor& ew3 = params.at("enc.w3");
    const Tensor& eb3 = params.at("enc.b3");
    const Tensor& A = params.at("dyn.A");
    const Tensor& B = params.at("dyn.B");
    const Tensor& dw1 = params.at("dec.w1");
    const Tensor& db1 = params.at("dec.b1");
    const Tensor& dw2 = params.at("dec.w2");
    const Tensor& db2 = params.at("dec.b2");
    const Tensor& dw3 = params.at("dec.w3");
    const Tensor& db3 = params.at("dec.b3");

    const std::size_t sdim = ew1.rows(), latent = A.rows(), width = ew1.cols();
    if (x0.size() != sdim) throw StructuralError("rollout: initial state has the wrong size");
    if (u_seq.cols() != B.rows()) throw StructuralError("rollout: input width mismatch");
    const std::size_t p = u_seq.rows();
    if (p == 0) throw StructuralError("rollout: empty input sequence");

    std::vector<double> h1(width), h2(width), z(latent), znext(latent), out_row(sdim);
    auto tanh_all = [](std::vector<double>& v) {
        for (double& x : v) x = std::tanh(x);
    };

    affine_row(x0.data.data(), ew1, eb1, h1.data());
    tanh_all(h1);
    affine_row(h1.data(), ew2, eb2, h2.data());
    tanh_all(h2);
    affine_row(h2.data(), ew3, eb3, z.data());

    Tensor result = Tensor::zeros({p, sdim});
    for (std::size_t t = 0; t < p; ++t) {
        affine_row(z.data(), dw1, db1, h1.data());
        tanh_all(h1);
        affine_row(h1.data(), dw2, db2, h2.data());
        tanh_all(h2);
        affine_row(h2.data(), dw3, db3, out_row.data());
        for (std::size_t j = 0; j < sdim; ++j)
            result.data[t * sdim + j] = 1.0 / (1.0 + std::exp(-out_row[j]));

        if (t + 1 < p) {
            std::fill(znext.begin(), znext.end(), 0.0);
            for (std::size_t kk = 0; kk < latent; ++kk)
                for (std::size_t j = 0; j < latent; ++j) znext[j] += z[kk] * A.data[kk * latent + j];
            const double* u = u_seq.data.data() + t * u_seq.cols();
            for (std::size_t kk = 0; kk < B.rows(); ++kk)
                for (std::size_t j = 0; j < latent; ++j) znext[j] += u[kk] * B.data[kk * latent + j];
            z = znext;
            for (double v : z)
                if (!std::isfinite(v)) throw NumericError("rollout diverged", t + 1);
        }
    }
    return result;
}

} // namespace fedsilo::models
