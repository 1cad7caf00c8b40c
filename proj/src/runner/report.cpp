// The report command: distills a run directory into the plot-ready tables —
// per-client MSE curves, global vs average-client vs centralized curves, and
// the per-arm box-plot rows for the column case's scarce plant.

#include "runner/runner.hpp"

#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "common/errors.hpp"

namespace fedsilo::runner {

namespace {

using njson = nlohmann::ordered_json;

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

CsvTable parse_csv(const std::string& text, const std::string& name) {
    CsvTable table;
    std::size_t start = 0;
    bool first = true;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw IoError(name + " is not rectangular");
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw IoError(name + " has no header row");
    return table;
}

double to_double(const std::string& field, const std::string& name) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0')
        throw IoError(name + " holds a malformed number: '" + field + "'");
    return v;
}

std::size_t to_index(const std::string& field, const std::string& name) {
    const double v = to_double(field, name);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
        throw IoError(name + " holds a malformed index: '" + field + "'");
    return static_cast<std::size_t>(v);
}

struct MeanAccumulator {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    double mean() const { return sum / static_cast<double>(n); }
};

} // namespace

void cmd_report(const ExperimentConfig& config) {
    const std::string& dir = config.output_dir;
    const CsvTable rounds = parse_csv(read_text_file(dir + "/rounds.csv"), "rounds.csv");
    const CsvTable arms = parse_csv(read_text_file(dir + "/arms.csv"), "arms.csv");
    const std::string summary_text = read_text_file(dir + "/summary.json");
    njson summary;
    try {
        summary = njson::parse(summary_text);
    } catch (const std::exception& e) {
        throw IoError(std::string("summary.json is not valid JSON: ") + e.what());
    }

    // rounds.csv: seed, round, client_id, local_test_mse, global_test_mse.
    // Average over seeds per (round, client); rounds stay ascending via map.
    std::size_t n_clients = 0;
    for (const auto& row : rounds.rows)
        n_clients = std::max(n_clients, to_index(row[2], "rounds.csv"));
    if (n_clients == 0) throw IoError("rounds.csv holds no client rows");

    std::map<std::size_t, std::vector<MeanAccumulator>> local_cells, global_cells;
    std::map<std::size_t, MeanAccumulator> local_all, global_all;
    for (const auto& row : rounds.rows) {
        const std::size_t round = to_index(row[1], "rounds.csv");
        const std::size_t client = to_index(row[2], "rounds.csv");
        const double local = to_double(row[3], "rounds.csv");
        const double global = to_double(row[4], "rounds.csv");
        auto& locals = local_cells[round];
        auto& globals = global_cells[round];
        locals.resize(n_clients);
        globals.resize(n_clients);
        locals[client - 1].add(local);
        globals[client - 1].add(global);
        local_all[round].add(local);
        global_all[round].add(global);
    }

    // Centralized reference: constant across rounds, averaged over seeds.
    MeanAccumulator centralized;
    for (const auto& row : arms.rows)
        if (row[1] == "centralized_pooled") centralized.add(to_double(row[3], "arms.csv"));
    if (centralized.n == 0) throw IoError("arms.csv holds no centralized_pooled rows");

    std::string local_curves = "round";
    for (std::size_t k = 1; k <= n_clients; ++k)
        local_curves += ",client_" + std::to_string(k);
    local_curves += '\n';
    for (const auto& [round, cells] : local_cells) {
        local_curves += std::to_string(round);
        for (const MeanAccumulator& cell : cells) {
            local_curves += ',';
            local_curves += cell.n == 0 ? "nan" : format_g17(cell.mean());
        }
        local_curves += '\n';
    }

    std::string global_curves = "round,federated_global,average_client,centralized_pooled\n";
    for (const auto& [round, all] : global_all) {
        global_curves += std::to_string(round) + ',' + format_g17(all.mean()) + ',' +
                         format_g17(local_all.at(round).mean()) + ',' +
                         format_g17(centralized.mean()) + '\n';
    }

    write_text_file(dir + "/report_local_curves.csv", local_curves);
    write_text_file(dir + "/report_global_curves.csv", global_curves);

    if (!summary.contains("column")) return;
    const std::size_t target = summary.at("column").at("target_client").get<std::size_t>();
    std::string boxplot = "arm,seed,test_mse\n";
    for (const char* arm : {"private", "federated", "fulldata", "centralized"}) {
        for (const auto& row : arms.rows) {
            if (row[1] != arm) continue;
            if (to_index(row[2], "arms.csv") != target) continue;
            boxplot += row[1] + ',' + row[0] + ',' + row[3] + '\n';
        }
    }
    write_text_file(dir + "/report_target_boxplot.csv", boxplot);
}

} // namespace fedsilo::runner
