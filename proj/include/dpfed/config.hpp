#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/data.hpp"
#include "dpfed/dp.hpp"
#include "dpfed/params.hpp"
#include "dpfed/toml.hpp"

namespace dpfed {

enum class DataSource { SyntheticBlobs, Csv, RawGray8 };
enum class AggregationRule { UniformMean, SampleWeighted };
enum class ProgressSource { ValidationSplit, ClientWeightedTrainLoss };

// Complete experiment description. Parsed strictly: unknown keys and
// out-of-range values are rejected before any computation starts.
struct FederationConfig {
    // [data]
    DataSource source = DataSource::SyntheticBlobs;
    int blob_classes = 2;
    int blob_samples_per_class = 150;
    int blob_feature_dim = 4;
    double blob_spread = 1.0;
    std::string csv_path;
    std::string csv_label_column = "label";
    std::string gray8_path;
    std::string gray8_labels_path;
    bool equalize = false;
    bool normalize_features = true;

    // [model]
    std::vector<std::size_t> model_dims = {4, 16, 16, 2};

    // [training]
    int rounds = 36;
    double base_lr = 0.1;
    double lr_decay_alpha = 0.1;
    int local_epochs = 1;
    int batch_size = 32;
    std::uint64_t master_seed = 0;
    int warm_start_epochs = 0;
    int warm_start_client = 0;
    ProgressSource progress_source = ProgressSource::ValidationSplit;
    double validation_fraction = 0.1;
    double progress_floor = 1e-6;
    double early_stop_threshold = 0.0;  // 0 disables early stopping
    int early_stop_patience = 0;

    // [federation]
    int client_count = 3;
    PartitionMode partition_mode = PartitionMode::Iid;
    double dirichlet_alpha = 0.5;
    AggregationRule aggregation = AggregationRule::UniformMean;

    // [privacy]
    PrivacySpec privacy;

    // [output]
    std::string trace_path = "trace.jsonl";
    std::string summary_path = "summary.json";
    std::string trace_csv_path;   // empty = no CSV mirror
    bool record_timings = false;  // keeps trace files byte-reproducible

    void validate() const;
};

namespace cfg_detail {

inline double want_float(toml::Reader& r, const std::string& sec,
                         const std::string& key, double fallback) {
    const toml::Value* v = r.find(sec, key);
    if (!v) return fallback;
    if (!v->is_float())
        throw ConfigError("config line " + std::to_string(v->line) + ": '" +
                          sec + "." + key + "' must be a number");
    return v->as_float();
}

inline std::int64_t want_int(toml::Reader& r, const std::string& sec,
                             const std::string& key, std::int64_t fallback) {
    const toml::Value* v = r.find(sec, key);
    if (!v) return fallback;
    if (!v->is_int())
        throw ConfigError("config line " + std::to_string(v->line) + ": '" +
                          sec + "." + key + "' must be an integer");
    return std::get<std::int64_t>(v->v);
}

inline bool want_bool(toml::Reader& r, const std::string& sec,
                      const std::string& key, bool fallback) {
    const toml::Value* v = r.find(sec, key);
    if (!v) return fallback;
    if (!v->is_bool())
        throw ConfigError("config line " + std::to_string(v->line) + ": '" +
                          sec + "." + key + "' must be true or false");
    return std::get<bool>(v->v);
}

inline std::string want_string(toml::Reader& r, const std::string& sec,
                               const std::string& key,
                               const std::string& fallback) {
    const toml::Value* v = r.find(sec, key);
    if (!v) return fallback;
    if (!v->is_string())
        throw ConfigError("config line " + std::to_string(v->line) + ": '" +
                          sec + "." + key + "' must be a string");
    return std::get<std::string>(v->v);
}

[[noreturn]] inline void bad_field(const std::string& field,
                                   const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
}

}  // namespace cfg_detail

inline void FederationConfig::validate() const {
    using cfg_detail::bad_field;
    if (source == DataSource::SyntheticBlobs) {
        if (blob_classes < 2) bad_field("data.classes", "must be >= 2");
        if (blob_samples_per_class < 1)
            bad_field("data.samples_per_class", "must be >= 1");
        if (blob_feature_dim < 1) bad_field("data.feature_dim", "must be >= 1");
        if (!(blob_spread >= 0.0)) bad_field("data.spread", "must be >= 0");
    }
    if (source == DataSource::Csv && csv_path.empty())
        bad_field("data.csv_path", "required for csv source");
    if (source == DataSource::RawGray8 &&
        (gray8_path.empty() || gray8_labels_path.empty()))
        bad_field("data.images_path/labels_path", "required for rawgray8");
    if (model_dims.size() < 3)
        bad_field("model.dims", "need input, at least one hidden, output");
    for (std::size_t d : model_dims)
        if (d == 0) bad_field("model.dims", "dims must be positive");
    if (model_dims.back() < 2) bad_field("model.dims", "output dim must be >= 2");
    if (rounds < 1) bad_field("training.rounds", "must be >= 1");
    if (!(base_lr > 0.0)) bad_field("training.base_lr", "must be > 0");
    if (lr_decay_alpha < 0.0) bad_field("training.lr_decay_alpha", "must be >= 0");
    if (local_epochs < 1) bad_field("training.local_epochs", "must be >= 1");
    if (batch_size < 1) bad_field("training.batch_size", "must be >= 1");
    if (warm_start_epochs < 0) bad_field("training.warm_start_epochs", "must be >= 0");
    if (warm_start_client < 0 || warm_start_client >= client_count)
        bad_field("training.warm_start_client", "must name a client");
    if (validation_fraction < 0.0 || validation_fraction > 0.5)
        bad_field("training.validation_fraction", "must be in [0, 0.5]");
    if (progress_source == ProgressSource::ValidationSplit &&
        validation_fraction == 0.0)
        bad_field("training.validation_fraction",
                  "must be > 0 for progress_source = \"validation\"");
    if (!(progress_floor > 0.0)) bad_field("training.progress_floor", "must be > 0");
    if (early_stop_threshold < 0.0)
        bad_field("training.early_stop_threshold", "must be >= 0");
    if (early_stop_patience < 0)
        bad_field("training.early_stop_patience", "must be >= 0");
    if (client_count < 1) bad_field("federation.clients", "must be >= 1");
    if (partition_mode == PartitionMode::LabelSkew && !(dirichlet_alpha > 0.0))
        bad_field("federation.dirichlet_alpha", "must be > 0");
    try {
        privacy.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config section [privacy]: ") + e.what());
    }
    if (trace_path.empty()) bad_field("output.trace_path", "must not be empty");
    if (summary_path.empty())
        bad_field("output.summary_path", "must not be empty");
}

inline FederationConfig config_from_toml(const toml::Document& doc) {
    using namespace cfg_detail;
    toml::Reader r(doc);
    for (const char* s : {"data", "model", "training", "federation",
                          "privacy", "output"})
        r.allow_section(s);
    FederationConfig c;

    const std::string src = want_string(r, "data", "source", "blobs");
    if (src == "blobs") c.source = DataSource::SyntheticBlobs;
    else if (src == "csv") c.source = DataSource::Csv;
    else if (src == "rawgray8") c.source = DataSource::RawGray8;
    else bad_field("data.source", "must be blobs, csv, or rawgray8");
    c.blob_classes = static_cast<int>(want_int(r, "data", "classes", c.blob_classes));
    c.blob_samples_per_class = static_cast<int>(
        want_int(r, "data", "samples_per_class", c.blob_samples_per_class));
    c.blob_feature_dim = static_cast<int>(
        want_int(r, "data", "feature_dim", c.blob_feature_dim));
    c.blob_spread = want_float(r, "data", "spread", c.blob_spread);
    c.csv_path = want_string(r, "data", "csv_path", "");
    c.csv_label_column =
        want_string(r, "data", "label_column", c.csv_label_column);
    c.gray8_path = want_string(r, "data", "images_path", "");
    c.gray8_labels_path = want_string(r, "data", "labels_path", "");
    c.equalize = want_bool(r, "data", "equalize", c.equalize);
    c.normalize_features = want_bool(r, "data", "normalize", c.normalize_features);

    if (const toml::Value* v = r.find("model", "dims")) {
        if (!v->is_array())
            throw ConfigError("config line " + std::to_string(v->line) +
                              ": 'model.dims' must be an array of integers");
        c.model_dims.clear();
        for (const auto& item : std::get<std::vector<toml::Value>>(v->v)) {
            if (!item.is_int() || std::get<std::int64_t>(item.v) <= 0)
                throw ConfigError("config line " + std::to_string(v->line) +
                                  ": 'model.dims' entries must be positive "
                                  "integers");
            c.model_dims.push_back(
                static_cast<std::size_t>(std::get<std::int64_t>(item.v)));
        }
    }

    c.rounds = static_cast<int>(want_int(r, "training", "rounds", c.rounds));
    c.base_lr = want_float(r, "training", "base_lr", c.base_lr);
    c.lr_decay_alpha =
        want_float(r, "training", "lr_decay_alpha", c.lr_decay_alpha);
    c.local_epochs =
        static_cast<int>(want_int(r, "training", "local_epochs", c.local_epochs));
    c.batch_size =
        static_cast<int>(want_int(r, "training", "batch_size", c.batch_size));
    if (const toml::Value* v = r.find("training", "master_seed")) {
        if (!v->is_int())
            throw ConfigError("config line " + std::to_string(v->line) +
                              ": 'training.master_seed' must be an integer");
        c.master_seed =
            static_cast<std::uint64_t>(std::get<std::int64_t>(v->v));
    } else {
        throw ConfigError(
            "config key 'training.master_seed' is required (runs must be "
            "reproducible; there is no wall-clock default)");
    }
    c.warm_start_epochs = static_cast<int>(
        want_int(r, "training", "warm_start_epochs", c.warm_start_epochs));
    c.warm_start_client = static_cast<int>(
        want_int(r, "training", "warm_start_client", c.warm_start_client));
    const std::string prog =
        want_string(r, "training", "progress_source", "validation");
    if (prog == "validation") c.progress_source = ProgressSource::ValidationSplit;
    else if (prog == "client_weighted_train")
        c.progress_source = ProgressSource::ClientWeightedTrainLoss;
    else bad_field("training.progress_source",
                   "must be validation or client_weighted_train");
    c.validation_fraction =
        want_float(r, "training", "validation_fraction", c.validation_fraction);
    c.progress_floor =
        want_float(r, "training", "progress_floor", c.progress_floor);
    c.early_stop_threshold = want_float(r, "training", "early_stop_threshold",
                                        c.early_stop_threshold);
    c.early_stop_patience = static_cast<int>(
        want_int(r, "training", "early_stop_patience", c.early_stop_patience));

    c.client_count =
        static_cast<int>(want_int(r, "federation", "clients", c.client_count));
    const std::string part =
        want_string(r, "federation", "partition", "iid");
    if (part == "iid") c.partition_mode = PartitionMode::Iid;
    else if (part == "label_skew") c.partition_mode = PartitionMode::LabelSkew;
    else bad_field("federation.partition", "must be iid or label_skew");
    c.dirichlet_alpha =
        want_float(r, "federation", "dirichlet_alpha", c.dirichlet_alpha);
    const std::string agg =
        want_string(r, "federation", "aggregation", "uniform_mean");
    if (agg == "uniform_mean") c.aggregation = AggregationRule::UniformMean;
    else if (agg == "sample_weighted")
        c.aggregation = AggregationRule::SampleWeighted;
    else bad_field("federation.aggregation",
                   "must be uniform_mean or sample_weighted");

    c.privacy.enabled = want_bool(r, "privacy", "enabled", true);
    c.privacy.epsilon_total = want_float(r, "privacy", "epsilon", 1.0);
    c.privacy.delta = want_float(r, "privacy", "delta", 1e-5);
    const std::string pol = want_string(r, "privacy", "policy", "clipped");
    if (pol == "clipped") c.privacy.policy = SensitivityPolicy::Clipped;
    else if (pol == "paper_faithful")
        c.privacy.policy = SensitivityPolicy::PaperFaithful;
    else bad_field("privacy.policy", "must be clipped or paper_faithful");
    c.privacy.clip_norm = want_float(r, "privacy", "clip_norm", 1.0);

    c.trace_path = want_string(r, "output", "trace_path", c.trace_path);
    c.summary_path = want_string(r, "output", "summary_path", c.summary_path);
    c.trace_csv_path = want_string(r, "output", "csv_path", "");
    c.record_timings =
        want_bool(r, "output", "record_timings", c.record_timings);

    r.reject_unknown();
    c.validate();
    return c;
}

inline FederationConfig load_config(const std::string& path) {
    return config_from_toml(toml::parse_file(path));
}

}  // namespace dpfed
