#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace miniflow {

/// Source position, 1-based. Line 0 means "no location".
struct SourceLoc {
    std::uint32_t line = 0;
    std::uint32_t column = 0;

    std::string str() const;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Front-end failures carry a location and are reported as compile errors.
class CompileError : public Error {
public:
    CompileError(const std::string& what, SourceLoc loc);
    SourceLoc loc() const noexcept { return loc_; }

private:
    SourceLoc loc_;
};

class LexError : public CompileError {
public:
    using CompileError::CompileError;
};

class SyntaxError : public CompileError {
public:
    using CompileError::CompileError;
};

/// Malformed leaf declaration, including unresolved template slots.
class DeclError : public CompileError {
public:
    using CompileError::CompileError;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class ResolveError : public CompileError {
public:
    enum class Kind { Unbound, Arity, DoubleAssignment, Type, Unassigned, Cycle, Redeclared };

    ResolveError(Kind kind, const std::string& what, SourceLoc loc)
        : CompileError(what, loc), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class BlobError : public Error {
public:
    using Error::Error;
};

/// A value crossed a boundary with the wrong type.
class TypeError : public Error {
public:
    using Error::Error;
};

/// Engine-side dataflow violations (double store, unknown task, ...).
class RuntimeError : public Error {
public:
    using Error::Error;
};

/// A leaf task failed on a worker; carries the guest/native diagnostic.
class LeafError : public Error {
public:
    LeafError(const std::string& what, std::int64_t task_id = -1)
        : Error(what), task_id_(task_id) {}
    std::int64_t task_id() const noexcept { return task_id_; }

private:
    std::int64_t task_id_;
};

/// Raised inside a guest interpreter backend.
class GuestError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

/// A broken internal invariant; never expected in a correct build.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace miniflow
