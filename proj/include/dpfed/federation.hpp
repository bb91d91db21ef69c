#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpfed/budget.hpp"
#include "dpfed/config.hpp"
#include "dpfed/data.hpp"
#include "dpfed/dp.hpp"
#include "dpfed/model.hpp"
#include "dpfed/params.hpp"
#include "dpfed/rng.hpp"

namespace dpfed {

// A client's local training state. Shards are the pre-sliced mini-batches;
// iteration order over them is re-drawn per (client, round, epoch) from the
// seed lineage, so adding a client never perturbs another client's draws.
struct ClientState {
    int client_id = 0;
    std::vector<TrainingBatch> shards;
    int local_epochs = 1;
    std::uint64_t lineage = 0;  // master seed for stream derivation

    std::size_t sample_count() const {
        std::size_t n = 0;
        for (const auto& s : shards) n += s.n();
        return n;
    }
};

struct ClientUpdate {
    int client_id = 0;
    ParamVector delta;
    std::size_t sample_count = 0;
    double local_loss = 0.0;  // loss of the final local model on local data
    NoiseReceipt receipt;
};

// One row of the emitted trace.
struct RoundRecord {
    int round = 0;
    double epsilon_round = 0.0;
    double progress = 0.0;
    double global_loss = 0.0;
    std::vector<double> sensitivity_per_client;
    std::vector<double> noise_l2_per_client;
    EvalMetrics metrics;
    double lr = 0.0;
    std::int64_t wall_time_ms = 0;
};

// Deterministic shard visit order for one local epoch.
inline std::vector<std::size_t> epoch_shard_order(std::uint64_t lineage,
                                                  int client_id, int round,
                                                  int epoch,
                                                  std::size_t shard_count) {
    Rng rng(derive_seed(lineage,
                        {stream::kBatchOrder,
                         static_cast<std::uint64_t>(client_id),
                         static_cast<std::uint64_t>(round),
                         static_cast<std::uint64_t>(epoch)}));
    return detail::shuffled_indices(shard_count, rng);
}

// Slice a client's samples into consecutive mini-batches.
inline std::vector<TrainingBatch> slice_batches(const Dataset& ds,
                                                const std::vector<std::size_t>& indices,
                                                int batch_size) {
    std::vector<TrainingBatch> out;
    for (std::size_t pos = 0; pos < indices.size();
         pos += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(indices.size(), pos + static_cast<std::size_t>(batch_size));
        out.push_back(make_batch(
            ds, {indices.begin() + static_cast<std::ptrdiff_t>(pos),
                 indices.begin() + static_cast<std::ptrdiff_t>(end)}));
    }
    return out;
}

// Weighted mean loss of `params` over a client's shards.
inline double client_loss(const ParamVector& params, const ClientState& client) {
    double weighted = 0.0;
    std::size_t n = 0;
    for (const auto& shard : client.shards) {
        weighted += static_cast<double>(shard.n()) * loss(params, shard);
        n += shard.n();
    }
    return weighted / static_cast<double>(n);
}

// Local mini-batch SGD from the broadcast parameters; returns the parameter
// delta, the client's sample count, and the final local training loss.
inline ClientUpdate local_update(const ClientState& client,
                                 const ParamVector& global_params, double lr,
                                 int round) {
    if (client.shards.empty())
        throw std::invalid_argument("local_update: client has no data");
    if (lr < 0.0) throw std::invalid_argument("local_update: negative lr");

    ClientUpdate out;
    out.client_id = client.client_id;
    out.sample_count = client.sample_count();

    if (lr == 0.0) {
        out.delta.shapes = global_params.shapes;
        out.delta.values.assign(global_params.values.size(), 0.0);
        out.local_loss = client_loss(global_params, client);
        return out;
    }

    ParamVector params = global_params;
    for (int epoch = 0; epoch < client.local_epochs; ++epoch) {
        const auto order = epoch_shard_order(client.lineage, client.client_id,
                                             round, epoch,
                                             client.shards.size());
        for (std::size_t k : order)
            params = sgd_step(params, grad(params, client.shards[k]), lr);
    }

    out.delta.shapes = global_params.shapes;
    out.delta.values.resize(global_params.values.size());
    for (std::size_t i = 0; i < params.values.size(); ++i)
        out.delta.values[i] = params.values[i] - global_params.values[i];
    out.local_loss = client_loss(params, client);
    return out;
}

// Combine client deltas. Reduction always runs in ascending client-id
// order, so registration order cannot change the result.
inline ParamVector aggregate(const std::vector<ClientUpdate>& updates,
                             AggregationRule rule) {
    if (updates.empty())
        throw std::invalid_argument("aggregate: no updates");
    std::vector<const ClientUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) {
                  return a->client_id < b->client_id;
              });
    for (const auto* u : ordered)
        require_same_shape(u->delta, ordered.front()->delta, "aggregate");

    ParamVector out;
    out.shapes = ordered.front()->delta.shapes;
    out.values.assign(ordered.front()->delta.values.size(), 0.0);
    if (rule == AggregationRule::UniformMean) {
        for (const auto* u : ordered)
            for (std::size_t i = 0; i < out.values.size(); ++i)
                out.values[i] += u->delta.values[i];
        const double inv = 1.0 / static_cast<double>(ordered.size());
        for (double& v : out.values) v *= inv;
    } else {
        std::size_t total = 0;
        for (const auto* u : ordered) total += u->sample_count;
        if (total == 0)
            throw std::invalid_argument("aggregate: zero total samples");
        for (const auto* u : ordered) {
            const double w = static_cast<double>(u->sample_count) /
                             static_cast<double>(total);
            for (std::size_t i = 0; i < out.values.size(); ++i)
                out.values[i] += w * u->delta.values[i];
        }
    }
    return out;
}

struct ServerState {
    ParamVector params;
    double progress_loss_prev = 0.0;  // L(w_{t-1}) on the progress source
};

struct RoundContext {
    double lr = 0.1;
    AggregationRule aggregation = AggregationRule::UniformMean;
    ProgressSource progress_source = ProgressSource::ValidationSplit;
    const TrainingBatch* validation = nullptr;  // null when no split exists
    const TrainingBatch* eval_batch = nullptr;  // metrics target, never null
    bool collect_timing = false;
};

inline double progress_loss(const ParamVector& params,
                            const std::vector<ClientState>& clients,
                            const RoundContext& ctx) {
    if (ctx.progress_source == ProgressSource::ValidationSplit) {
        if (!ctx.validation)
            throw std::invalid_argument("progress_loss: no validation split");
        return loss(params, *ctx.validation);
    }
    double weighted = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        for (const auto& shard : c.shards) {
            weighted += static_cast<double>(shard.n()) * loss(params, shard);
            n += shard.n();
        }
    }
    return weighted / static_cast<double>(n);
}

// One communication round: broadcast, local updates, privatization,
// aggregation, global step, loss/metrics, progress, budget bookkeeping.
inline RoundRecord run_round(ServerState& server,
                             const std::vector<ClientState>& clients,
                             BudgetSchedule& schedule,
                             const PrivacySpec& privacy, int round_index,
                             const RoundContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    const double eps_round = next_round_epsilon(schedule, round_index);
    schedule.note_allocation(eps_round);

    RoundRecord rec;
    rec.round = round_index;
    rec.epsilon_round = eps_round;
    rec.lr = ctx.lr;

    std::vector<ClientUpdate> updates;
    updates.reserve(clients.size());
    for (const auto& client : clients) {
        ClientUpdate u = local_update(client, server.params, ctx.lr,
                                      round_index);
        Rng noise_rng(derive_seed(
            client.lineage,
            {stream::kNoise, static_cast<std::uint64_t>(client.client_id),
             static_cast<std::uint64_t>(round_index)}));
        PrivatizedUpdate p =
            privatize_update(u.delta, eps_round, privacy, noise_rng);
        u.delta = std::move(p.update);
        u.receipt = p.receipt;
        updates.push_back(std::move(u));
    }

    std::vector<const ClientUpdate*> by_id;
    for (const auto& u : updates) by_id.push_back(&u);
    std::sort(by_id.begin(), by_id.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) {
                  return a->client_id < b->client_id;
              });
    for (const auto* u : by_id) {
        rec.sensitivity_per_client.push_back(u->receipt.sensitivity);
        rec.noise_l2_per_client.push_back(u->receipt.noise_l2);
    }

    const ParamVector delta = aggregate(updates, ctx.aggregation);
    for (std::size_t i = 0; i < server.params.values.size(); ++i)
        server.params.values[i] += delta.values[i];

    rec.global_loss = progress_loss(server.params, clients, ctx);
    rec.progress = learning_progress(server.progress_loss_prev, rec.global_loss);
    schedule.note_progress(rec.progress);
    server.progress_loss_prev = rec.global_loss;
    rec.metrics = evaluate(server.params, *ctx.eval_batch);

    if (ctx.collect_timing) {
        rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    }
    return rec;
}

struct RunResult {
    ParamVector params;
    std::vector<RoundRecord> trace;
    EvalMetrics final_metrics;
    double epsilon_spent = 0.0;
    std::optional<double> bound;  // absent when privacy is disabled
    std::int64_t wall_time_ms = 0;
    std::optional<std::string> failure;
    int rounds_executed = 0;
};

namespace detail {

struct RunSetup {
    std::vector<ClientState> clients;
    TrainingBatch validation;  // empty when validation_fraction = 0
    TrainingBatch eval_batch;
    ParamVector params;
};

inline Dataset build_dataset(const FederationConfig& cfg) {
    Dataset ds;
    switch (cfg.source) {
        case DataSource::SyntheticBlobs:
            ds = generate_blobs(cfg.blob_classes, cfg.blob_samples_per_class,
                                cfg.blob_feature_dim, cfg.blob_spread,
                                cfg.master_seed);
            break;
        case DataSource::Csv:
            ds = load_csv(cfg.csv_path, cfg.csv_label_column);
            break;
        case DataSource::RawGray8: {
            const Gray8Stack stack = load_rawgray8(cfg.gray8_path);
            ds = gray8_to_dataset(stack,
                                  load_label_file(cfg.gray8_labels_path),
                                  cfg.equalize);
            break;
        }
    }
    if (cfg.normalize_features) ds = normalize(ds);
    ds.validate();
    return ds;
}

inline RunSetup build_run(const FederationConfig& cfg) {
    const Dataset ds = build_dataset(cfg);
    if (cfg.model_dims.front() != ds.feature_dim())
        throw ConfigError("model.dims input (" +
                          std::to_string(cfg.model_dims.front()) +
                          ") does not match dataset feature dim (" +
                          std::to_string(ds.feature_dim()) + ")");
    if (cfg.model_dims.back() != static_cast<std::size_t>(ds.class_count))
        throw ConfigError("model.dims output (" +
                          std::to_string(cfg.model_dims.back()) +
                          ") does not match dataset class count (" +
                          std::to_string(ds.class_count) + ")");

    PartitionPlan plan;
    plan.mode = cfg.partition_mode;
    plan.concentration = cfg.dirichlet_alpha;
    plan.client_count = static_cast<std::size_t>(cfg.client_count);
    plan.seed = cfg.master_seed;
    std::vector<std::vector<std::size_t>> shards;
    try {
        shards = partition(ds, plan);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("partition: ") + e.what());
    }

    RunSetup setup;
    std::vector<std::size_t> val_indices;
    std::vector<std::size_t> train_pool;
    for (std::size_t c = 0; c < shards.size(); ++c) {
        auto& shard = shards[c];
        auto keep = static_cast<std::size_t>(shard.size());
        if (cfg.validation_fraction > 0.0) {
            auto take = static_cast<std::size_t>(
                cfg.validation_fraction * static_cast<double>(shard.size()));
            take = std::min(take, shard.size() - 1);
            keep = shard.size() - take;
            val_indices.insert(val_indices.end(),
                               shard.begin() + static_cast<std::ptrdiff_t>(keep),
                               shard.end());
        }
        shard.resize(keep);
        train_pool.insert(train_pool.end(), shard.begin(), shard.end());

        ClientState client;
        client.client_id = static_cast<int>(c);
        client.local_epochs = cfg.local_epochs;
        client.lineage = cfg.master_seed;
        client.shards = slice_batches(ds, shard, cfg.batch_size);
        setup.clients.push_back(std::move(client));
    }
    if (!val_indices.empty()) setup.validation = make_batch(ds, val_indices);
    setup.eval_batch = val_indices.empty() ? make_batch(ds, train_pool)
                                           : setup.validation;

    MlpSpec spec{cfg.model_dims};
    setup.params =
        init_params(spec, derive_seed(cfg.master_seed, {stream::kInit}));

    // Optional warm start: plain centralized SGD on the designated client's
    // training shard before round 1.
    if (cfg.warm_start_epochs > 0) {
        const ClientState& host =
            setup.clients[static_cast<std::size_t>(cfg.warm_start_client)];
        for (int epoch = 0; epoch < cfg.warm_start_epochs; ++epoch) {
            Rng rng(derive_seed(cfg.master_seed,
                                {stream::kWarmStart,
                                 static_cast<std::uint64_t>(epoch)}));
            const auto order = detail::shuffled_indices(host.shards.size(), rng);
            for (std::size_t k : order)
                setup.params = sgd_step(
                    setup.params, grad(setup.params, host.shards[k]),
                    cfg.base_lr);
        }
    }
    return setup;
}

}  // namespace detail

// Execute the full training loop described by the config. Component errors
// during the round loop abort the run but preserve the partial trace in the
// result, with the error text as the failure record. Setup problems
// (infeasible partition, dimension mismatches) throw ConfigError instead.
inline RunResult run_training(const FederationConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    detail::RunSetup setup = detail::build_run(cfg);

    RunResult out;
    BudgetSchedule schedule;
    schedule.epsilon_total = cfg.privacy.epsilon_total;
    schedule.rounds_total = cfg.rounds;
    schedule.progress_floor = cfg.progress_floor;

    RoundContext ctx;
    ctx.aggregation = cfg.aggregation;
    ctx.progress_source = cfg.progress_source;
    ctx.validation = setup.validation.n() > 0 ? &setup.validation : nullptr;
    ctx.eval_batch = &setup.eval_batch;
    ctx.collect_timing = cfg.record_timings;

    ServerState server;
    server.params = std::move(setup.params);

    try {
        server.progress_loss_prev =
            progress_loss(server.params, setup.clients, ctx);
        int calm_rounds = 0;
        for (int round = 1; round <= cfg.rounds; ++round) {
            ctx.lr = lr_decay(cfg.base_lr, cfg.lr_decay_alpha, round - 1);
            out.trace.push_back(run_round(server, setup.clients, schedule,
                                          cfg.privacy, round, ctx));
            ++out.rounds_executed;
            if (cfg.early_stop_threshold > 0.0 && cfg.early_stop_patience > 0) {
                calm_rounds = std::abs(out.trace.back().progress) <
                                      cfg.early_stop_threshold
                                  ? calm_rounds + 1
                                  : 0;
                if (calm_rounds >= cfg.early_stop_patience) break;
            }
        }
    } catch (const std::exception& e) {
        out.failure = e.what();
    }

    out.params = std::move(server.params);
    out.epsilon_spent = schedule.spent;
    if (!out.trace.empty()) out.final_metrics = out.trace.back().metrics;
    if (cfg.privacy.enabled && !out.failure) {
        double sens = cfg.privacy.clip_norm;
        if (cfg.privacy.policy == SensitivityPolicy::PaperFaithful) {
            sens = 0.0;
            for (const auto& rec : out.trace)
                for (double s : rec.sensitivity_per_client)
                    sens = std::max(sens, s);
        }
        out.bound = risk_bound(sens, cfg.privacy.epsilon_total,
                               cfg.privacy.delta, cfg.rounds);
    }
    out.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    return out;
}

}  // namespace dpfed
