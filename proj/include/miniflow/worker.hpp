#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "miniflow/binding.hpp"
#include "miniflow/event_log.hpp"
#include "miniflow/guest.hpp"
#include "miniflow/task.hpp"
#include "miniflow/value.hpp"

namespace miniflow {

enum class Policy { Retain, Reinitialize };

std::string_view policy_name(Policy p) noexcept;
std::optional<Policy> parse_policy(std::string_view s) noexcept;

// ---------------------------------------------------------------- natives

struct NativeFn {
    std::vector<ScalarType> inputs;
    std::vector<ScalarType> outputs;
    std::function<std::vector<Value>(std::span<const Value>)> fn;
};

/// Host-implemented leaf functions, looked up by symbol.
class NativeRegistry {
public:
    /// Replaces an existing entry of the same name.
    void add(std::string name, NativeFn fn);
    const NativeFn* find(std::string_view name) const;
    std::vector<std::string> names() const;

    /// identity_blob, sleep_ms, add_ints, mul_ints, sin1, f64_range, sum_f64,
    /// blob_len, concat_str.
    static NativeRegistry standard();

private:
    std::map<std::string, NativeFn, std::less<>> fns_;
};

// ---------------------------------------------------------------- packages

struct GuestPackage {
    std::string name;
    std::string version;
    std::filesystem::path dir;
    std::vector<std::filesystem::path> sources;  // absolute, load order
};

/// Reads a `package.mfpkg` manifest:
///
///     # comment
///     package <name> <version>
///     source <relative path>
///
/// Throws Error on a malformed manifest.
GuestPackage parse_manifest(const std::filesystem::path& file);

std::vector<std::filesystem::path> split_path_list(std::string_view list);

/// Manifests found in each search directory and its immediate subdirectories.
class PackageIndex {
public:
    PackageIndex() = default;
    explicit PackageIndex(std::vector<std::filesystem::path> dirs);

    /// Search path from MINIFLOW_GUEST_PATH.
    static PackageIndex from_env();

    /// Highest version when `version` is empty. nullptr when absent.
    const GuestPackage* find(std::string_view name,
                             std::optional<std::string_view> version = std::nullopt) const;
    const std::vector<std::filesystem::path>& dirs() const noexcept { return dirs_; }
    std::size_t size() const noexcept { return packages_.size(); }

private:
    std::vector<std::filesystem::path> dirs_;
    std::vector<GuestPackage> packages_;
};

// ---------------------------------------------------------------- templates

/// Fresh variable the guest code assigns an output to.
struct OutputToken {
    std::string name;
};
/// Variable already bound to a value with no literal form (blobs).
struct HandleToken {
    std::string name;
};
using SlotValue = std::variant<Value, OutputToken, HandleToken>;

/// Replaces every `<<name>>` with its guest rendering. Throws TemplateError
/// when a slot has no entry in `env`.
std::string substitute_template(std::string_view tmpl, const std::map<std::string, SlotValue>& env,
                                const std::function<std::string(const Value&)>& render);

inline std::string output_token(std::size_t k) { return "_o" + std::to_string(k); }
inline std::string handle_token(std::size_t k) { return "_b" + std::to_string(k); }

// ---------------------------------------------------------------- sessions

/// The per-worker guest interpreter and its lifecycle policy. The instance is
/// created lazily on first use.
class GuestSession {
public:
    GuestSession(std::string backend, Policy policy, const PackageIndex* packages = nullptr,
                 EventLog* log = nullptr, std::int32_t worker = -1);
    ~GuestSession();

    GuestBackend& interp();
    bool active() const noexcept { return interp_ != nullptr; }
    std::uint64_t generation() const noexcept { return generation_; }
    Policy policy() const noexcept { return policy_; }
    std::string_view backend() const noexcept { return backend_; }

    /// Loads a package's sources once per interpreter instance.
    void require_package(const std::string& name, const std::optional<std::string>& version);

    /// Binds inputs, evaluates `code`, reads `outputs` back. Throws GuestError
    /// on evaluation failure or an unset output, TypeError on a mistyped one.
    std::vector<Value> guest_eval(std::string_view code,
                                  const std::vector<std::pair<std::string, Value>>& inputs,
                                  const std::vector<Param>& outputs);

    /// Called after every task. Reinitialize tears the instance down; the next
    /// use creates a fresh one with generation + 1.
    void end_task_lifecycle();

private:
    void teardown();

    std::string backend_;
    Policy policy_;
    const PackageIndex* packages_;
    EventLog* log_;
    std::int32_t worker_;
    std::unique_ptr<GuestBackend> interp_;
    std::set<std::string> loaded_;
    std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------- runtime

struct WorkerConfig {
    std::int32_t worker_id = 0;
    Policy policy = Policy::Retain;
    std::string backend = "toy";
    const PackageIndex* packages = nullptr;
    const NativeRegistry* natives = nullptr;
    EventLog* log = nullptr;
};

/// Executes leaf tasks for one worker.
class WorkerRuntime {
public:
    explicit WorkerRuntime(WorkerConfig cfg);

    /// Throws Error on a duplicate name or an unresolvable or
    /// mismatched native symbol.
    void register_binding(const LeafBinding& b);
    const LeafBinding* lookup(std::string_view name) const;

    /// Outputs in declared order, already checked against the declared types.
    /// Throws LeafError carrying the task id and the guest or native message.
    std::vector<Value> exec_leaf(const TaskDescriptor& task);

    /// Applies the interpreter policy after a task.
    void end_task_lifecycle() { session_.end_task_lifecycle(); }

    GuestSession& session() noexcept { return session_; }
    std::int32_t id() const noexcept { return cfg_.worker_id; }

private:
    std::vector<Value> run(const LeafBinding& b, const TaskDescriptor& task);

    WorkerConfig cfg_;
    std::map<std::string, LeafBinding, std::less<>> bindings_;
    GuestSession session_;
};

/// Executes one binding in a throwaway session; the LeafExecutor used by the
/// sequential oracle.
std::function<std::vector<Value>(const LeafBinding&, std::span<const Value>)> make_local_executor(
    const NativeRegistry* natives, std::string backend = "toy", const PackageIndex* packages = nullptr);

}  // namespace miniflow
