// The summary.json contract: the schema ships in share/, is embedded here so
// every run can self-check, and is enforced by a small validator covering the
// keywords the schema uses (type, enum, properties, required,
// additionalProperties, items, and #/$defs references).

#include "runner/runner.hpp"

#include "json.hpp"

#include "common/errors.hpp"

namespace fedsilo::runner {

namespace {

using njson = nlohmann::ordered_json;

constexpr const char* kSummarySchema = R"schema({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "fedsilo run summary",
  "$defs": {
    "stats": {
      "type": "object",
      "additionalProperties": false,
      "required": ["values", "mean", "standard_error", "median"],
      "properties": {
        "values": { "type": "array", "items": { "type": "number" } },
        "mean": { "type": "number" },
        "standard_error": { "type": "number" },
        "median": { "type": "number" }
      }
    }
  },
  "type": "object",
  "additionalProperties": false,
  "required": [
    "scenario",
    "profile",
    "num_seeds",
    "seeds",
    "rounds",
    "clients",
    "arms",
    "riptop_global",
    "riptop_per_client"
  ],
  "properties": {
    "scenario": {
      "type": "string",
      "enum": ["activity_even_random", "activity_uneven_scaffold", "column_sysid"]
    },
    "profile": { "type": "string", "enum": ["desk", "paper"] },
    "num_seeds": { "type": "integer" },
    "seeds": { "type": "array", "items": { "type": "integer" } },
    "rounds": { "type": "integer" },
    "clients": { "type": "integer" },
    "arms": {
      "type": "object",
      "additionalProperties": false,
      "required": [
        "round1_client_avg",
        "private_client_avg",
        "centralized_pooled",
        "centralized_client_avg",
        "federated_global_avg"
      ],
      "properties": {
        "round1_client_avg": { "$ref": "#/$defs/stats" },
        "private_client_avg": { "$ref": "#/$defs/stats" },
        "centralized_pooled": { "$ref": "#/$defs/stats" },
        "centralized_client_avg": { "$ref": "#/$defs/stats" },
        "federated_global_avg": { "$ref": "#/$defs/stats" }
      }
    },
    "riptop_global": { "$ref": "#/$defs/stats" },
    "riptop_per_client": { "type": "array", "items": { "$ref": "#/$defs/stats" } },
    "column": {
      "type": "object",
      "additionalProperties": false,
      "required": [
        "target_client",
        "private_target_mse",
        "federated_target_mse",
        "fulldata_target_mse",
        "private_over_federated_ratio"
      ],
      "properties": {
        "target_client": { "type": "integer" },
        "private_target_mse": { "$ref": "#/$defs/stats" },
        "federated_target_mse": { "$ref": "#/$defs/stats" },
        "fulldata_target_mse": { "$ref": "#/$defs/stats" },
        "private_over_federated_ratio": { "$ref": "#/$defs/stats" }
      }
    }
  }
}
)schema";

[[noreturn]] void mismatch(const std::string& path, const std::string& why) {
    throw ConfigError("summary does not match schema at " + path + ": " + why);
}

const njson& resolve_ref(const njson& root, const std::string& ref) {
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0)
        throw ConfigError("schema reference '" + ref + "' is not a #/$defs pointer");
    const std::string name = ref.substr(prefix.size());
    if (!root.contains("$defs") || !root.at("$defs").contains(name))
        throw ConfigError("schema reference '" + ref + "' does not resolve");
    return root.at("$defs").at(name);
}

bool matches_type(const njson& inst, const std::string& type) {
    if (type == "object") return inst.is_object();
    if (type == "array") return inst.is_array();
    if (type == "string") return inst.is_string();
    if (type == "integer") return inst.is_number_integer();
    if (type == "number") return inst.is_number();
    if (type == "boolean") return inst.is_boolean();
    throw ConfigError("schema uses unsupported type '" + type + "'");
}

void check_node(const njson& inst, const njson& schema, const njson& root,
                const std::string& path) {
    if (schema.contains("$ref")) {
        check_node(inst, resolve_ref(root, schema.at("$ref").get<std::string>()), root, path);
        return;
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& allowed : schema.at("enum")) found = found || allowed == inst;
        if (!found) mismatch(path, "value is not one of the allowed constants");
    }
    if (schema.contains("type") &&
        !matches_type(inst, schema.at("type").get<std::string>()))
        mismatch(path, "expected " + schema.at("type").get<std::string>());

    if (inst.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema.at("required"))
                if (!inst.contains(key.get<std::string>()))
                    mismatch(path, "missing required field '" + key.get<std::string>() + "'");
        const njson* props =
            schema.contains("properties") ? &schema.at("properties") : nullptr;
        for (const auto& item : inst.items()) {
            const std::string sub = path + "/" + item.key();
            if (props != nullptr && props->contains(item.key())) {
                check_node(item.value(), props->at(item.key()), root, sub);
            } else if (schema.contains("additionalProperties")) {
                const njson& extra = schema.at("additionalProperties");
                if (extra.is_boolean()) {
                    if (!extra.get<bool>()) mismatch(sub, "field is not part of the schema");
                } else {
                    check_node(item.value(), extra, root, sub);
                }
            }
        }
    }
    if (inst.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < inst.size(); ++i)
            check_node(inst[i], schema.at("items"), root, path + "/" + std::to_string(i));
    }
}

} // namespace

const std::string& summary_schema_text() {
    static const std::string text = kSummarySchema;
    return text;
}

void validate_summary_text(const std::string& summary_json) {
    njson doc;
    try {
        doc = njson::parse(summary_json);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("summary is not valid JSON: ") + e.what());
    }
    static const njson schema = njson::parse(summary_schema_text());
    check_node(doc, schema, schema, "$");
}

} // namespace fedsilo::runner
