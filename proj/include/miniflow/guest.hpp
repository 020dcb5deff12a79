#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "miniflow/value.hpp"

namespace miniflow {

/// An embedded scripting interpreter hosted in-process by a worker.
///
/// One instance is one guest environment. Implementations are not
/// thread-safe; a worker enters its instance from one thread at a time.
class GuestBackend {
public:
    virtual ~GuestBackend() = default;

    virtual std::string_view name() const noexcept = 0;

    virtual void init() = 0;
    virtual void bind_var(const std::string& name, const Value& v) = 0;
    /// Throws GuestError carrying the guest diagnostic.
    virtual void eval(std::string_view code) = 0;
    /// nullopt when the variable is unset. Throws TypeError when the guest
    /// value is not of the expected type.
    virtual std::optional<Value> read_var(const std::string& name, ScalarType expected) = 0;
    virtual void clear_var(const std::string& name) = 0;
    /// Runs a preloaded package source file in the global environment.
    virtual void load_source(std::string_view code, const std::string& origin) = 0;
    /// Guest source text evaluating to `v`. Blobs have no literal form.
    virtual std::string render_literal(const Value& v) const = 0;
    virtual void finalize() = 0;
};

/// "toy" is always available; "python" only when built with an embedded Python.
std::unique_ptr<GuestBackend> make_backend(std::string_view name);
bool backend_available(std::string_view name) noexcept;
std::vector<std::string> available_backends();

std::unique_ptr<GuestBackend> make_toy_backend();
#ifdef MINIFLOW_HAVE_PYTHON
std::unique_ptr<GuestBackend> make_python_backend();
/// Call in a child process after fork() if the parent may have used Python.
void python_after_fork_child();
#endif

}  // namespace miniflow
