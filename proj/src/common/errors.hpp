#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsilo {

// Shape or segment-structure mismatch between operands.
class StructuralError : public std::runtime_error {
public:
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value produced by a numeric operation; carries the graph node
// (or rollout step) where it first appeared.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t node)
        : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_index(node) {}
    std::size_t node_index;
};

// Text-input parse failure with the character offset of the problem.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset(offset) {}
    std::size_t offset;
};

// Wire-codec failure with the byte offset of the problem.
class CodecError : public std::runtime_error {
public:
    CodecError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), offset(offset) {}
    std::size_t offset;
};

// Bad configuration or misuse of the experiment surface (maps to exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Inadmissible column operating point.
class AdmissibilityError : public std::runtime_error {
public:
    explicit AdmissibilityError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

class PartitionError : public std::runtime_error {
public:
    explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace fedsilo
