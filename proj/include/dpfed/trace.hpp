#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpfed/federation.hpp"

namespace dpfed {

inline constexpr int kTraceSchemaVersion = 1;

inline nlohmann::json to_json(const EvalMetrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1}};
}

inline nlohmann::json to_json(const RoundRecord& r) {
    return {{"schema_version", kTraceSchemaVersion},
            {"round", r.round},
            {"epsilon_round", r.epsilon_round},
            {"progress", r.progress},
            {"global_loss", r.global_loss},
            {"sensitivity_per_client", r.sensitivity_per_client},
            {"noise_l2_per_client", r.noise_l2_per_client},
            {"metrics", to_json(r.metrics)},
            {"lr", r.lr},
            {"wall_time_ms", r.wall_time_ms}};
}

// One RoundRecord per line, in round order.
inline void write_trace_jsonl(const std::vector<RoundRecord>& trace,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("trace: cannot write " + path);
    for (const auto& rec : trace) out << to_json(rec).dump() << "\n";
    if (!out) throw std::runtime_error("trace: write failed for " + path);
}

// Flat mirror of the trace for plotting tools.
inline void write_trace_csv(const std::vector<RoundRecord>& trace,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("trace csv: cannot write " + path);
    const std::size_t clients =
        trace.empty() ? 0 : trace.front().sensitivity_per_client.size();
    out << "round,epsilon_round,progress,global_loss,lr,accuracy,precision,"
           "recall,f1,wall_time_ms";
    for (std::size_t c = 0; c < clients; ++c) out << ",sensitivity_c" << c;
    for (std::size_t c = 0; c < clients; ++c) out << ",noise_l2_c" << c;
    out << "\n";
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    for (const auto& r : trace) {
        out << r.round << ",";
        num(r.epsilon_round); out << ",";
        num(r.progress); out << ",";
        num(r.global_loss); out << ",";
        num(r.lr); out << ",";
        num(r.metrics.accuracy); out << ",";
        num(r.metrics.precision); out << ",";
        num(r.metrics.recall); out << ",";
        num(r.metrics.f1); out << ",";
        out << r.wall_time_ms;
        for (double s : r.sensitivity_per_client) { out << ","; num(s); }
        for (double s : r.noise_l2_per_client) { out << ","; num(s); }
        out << "\n";
    }
}

inline void write_summary(const RunResult& result, const std::string& path) {
    nlohmann::json j{{"schema_version", kTraceSchemaVersion},
                     {"status", result.failure ? "failed" : "ok"},
                     {"rounds_executed", result.rounds_executed},
                     {"final_metrics", to_json(result.final_metrics)},
                     {"epsilon_spent", result.epsilon_spent},
                     {"wall_time_ms", result.wall_time_ms}};
    if (result.bound)
        j["risk_bound"] = *result.bound;
    else
        j["risk_bound"] = nullptr;
    if (result.failure) j["error"] = *result.failure;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("summary: cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("summary: write failed for " + path);
}

}  // namespace dpfed
