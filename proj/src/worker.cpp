#include "miniflow/worker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "miniflow/errors.hpp"
#include "miniflow/frontend.hpp"

namespace fs = std::filesystem;

namespace miniflow {

std::string_view policy_name(Policy p) noexcept {
    return p == Policy::Retain ? "retain" : "reinit";
}

std::optional<Policy> parse_policy(std::string_view s) noexcept {
    if (s == "retain") return Policy::Retain;
    if (s == "reinit" || s == "reinitialize") return Policy::Reinitialize;
    return std::nullopt;
}

// ---------------------------------------------------------------- natives

void NativeRegistry::add(std::string name, NativeFn fn) { fns_[std::move(name)] = std::move(fn); }

const NativeFn* NativeRegistry::find(std::string_view name) const {
    auto it = fns_.find(name);
    return it == fns_.end() ? nullptr : &it->second;
}

std::vector<std::string> NativeRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : fns_) out.push_back(k);
    return out;
}

NativeRegistry NativeRegistry::standard() {
    using S = ScalarType;
    NativeRegistry r;
    r.add("identity_blob", {{S::Blob}, {S::Blob}, [](std::span<const Value> a) {
              return std::vector<Value>{a[0]};
          }});
    r.add("sleep_ms", {{S::Int}, {S::Int}, [](std::span<const Value> a) {
              const auto ms = std::get<std::int64_t>(a[0]);
              if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
              return std::vector<Value>{a[0]};
          }});
    r.add("add_ints", {{S::Int, S::Int}, {S::Int}, [](std::span<const Value> a) {
              auto x = static_cast<std::uint64_t>(std::get<std::int64_t>(a[0]));
              auto y = static_cast<std::uint64_t>(std::get<std::int64_t>(a[1]));
              return std::vector<Value>{static_cast<std::int64_t>(x + y)};
          }});
    r.add("mul_ints", {{S::Int, S::Int}, {S::Int}, [](std::span<const Value> a) {
              auto x = static_cast<std::uint64_t>(std::get<std::int64_t>(a[0]));
              auto y = static_cast<std::uint64_t>(std::get<std::int64_t>(a[1]));
              return std::vector<Value>{static_cast<std::int64_t>(x * y)};
          }});
    r.add("sin1", {{S::Float}, {S::Float}, [](std::span<const Value> a) {
              return std::vector<Value>{std::sin(std::get<double>(a[0]))};
          }});
    r.add("f64_range", {{S::Int}, {S::Blob}, [](std::span<const Value> a) {
              const auto n = std::get<std::int64_t>(a[0]);
              if (n < 0 || n > (1 << 26)) throw Error("f64_range: bad length " + std::to_string(n));
              std::vector<double> xs(static_cast<std::size_t>(n));
              for (std::int64_t i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = static_cast<double>(i);
              return std::vector<Value>{blob_of_f64s(xs)};
          }});
    r.add("sum_f64", {{S::Blob}, {S::Float}, [](std::span<const Value> a) {
              const auto& b = std::get<Blob>(a[0]);
              if (b.elem_type() != ElemType::F64) {
                  throw BlobError("sum_f64 needs an f64 blob, got " +
                                  std::string(elem_type_name(b.elem_type())));
              }
              double s = 0;
              for (double x : f64s_of_blob(b)) s += x;
              return std::vector<Value>{s};
          }});
    r.add("blob_len", {{S::Blob}, {S::Int}, [](std::span<const Value> a) {
              return std::vector<Value>{static_cast<std::int64_t>(std::get<Blob>(a[0]).size())};
          }});
    r.add("concat_str", {{S::String, S::String}, {S::String}, [](std::span<const Value> a) {
              return std::vector<Value>{std::get<std::string>(a[0]) + std::get<std::string>(a[1])};
          }});
    return r;
}

// ---------------------------------------------------------------- packages

GuestPackage parse_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot read manifest " + file.string());
    GuestPackage pkg;
    pkg.dir = fs::absolute(file).parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream words(line);
        std::string key;
        if (!(words >> key)) continue;
        auto bad = [&](const std::string& what) {
            return Error(file.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        if (key == "package") {
            if (!pkg.name.empty()) throw bad("duplicate package line");
            if (!(words >> pkg.name >> pkg.version)) throw bad("expected 'package <name> <version>'");
        } else if (key == "source") {
            std::string rel;
            if (!(words >> rel)) throw bad("expected 'source <path>'");
            pkg.sources.push_back(pkg.dir / rel);
        } else {
            throw bad("unknown directive '" + key + "'");
        }
        std::string extra;
        if (words >> extra) throw bad("unexpected '" + extra + "'");
    }
    if (pkg.name.empty()) throw Error(file.string() + ": missing 'package' line");
    return pkg;
}

std::vector<fs::path> split_path_list(std::string_view list) {
    std::vector<fs::path> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        std::size_t end = list.find(':', start);
        if (end == std::string_view::npos) end = list.size();
        if (end > start) out.emplace_back(std::string(list.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

PackageIndex::PackageIndex(std::vector<fs::path> dirs) : dirs_(std::move(dirs)) {
    auto consider = [this](const fs::path& dir) {
        const fs::path m = dir / "package.mfpkg";
        std::error_code ec;
        if (fs::is_regular_file(m, ec)) packages_.push_back(parse_manifest(m));
    };
    for (const auto& d : dirs_) {
        std::error_code ec;
        if (!fs::is_directory(d, ec)) continue;
        consider(d);
        std::vector<fs::path> subs;
        for (const auto& e : fs::directory_iterator(d, ec)) {
            if (e.is_directory(ec)) subs.push_back(e.path());
        }
        std::sort(subs.begin(), subs.end());
        for (const auto& s : subs) consider(s);
    }
}

PackageIndex PackageIndex::from_env() {
    const char* env = std::getenv("MINIFLOW_GUEST_PATH");
    return PackageIndex(env ? split_path_list(env) : std::vector<fs::path>{});
}

namespace {

// Dotted numeric comparison with a lexicographic fallback per component.
bool version_less(std::string_view a, std::string_view b) {
    auto parts = [](std::string_view s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            auto dot = s.find('.', start);
            out.emplace_back(s.substr(start, dot == std::string_view::npos ? s.npos : dot - start));
            if (dot == std::string_view::npos) break;
            start = dot + 1;
        }
        return out;
    };
    auto pa = parts(a), pb = parts(b);
    for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) {
        const bool na = !pa[i].empty() && std::all_of(pa[i].begin(), pa[i].end(), ::isdigit);
        const bool nb = !pb[i].empty() && std::all_of(pb[i].begin(), pb[i].end(), ::isdigit);
        if (na && nb && pa[i].size() != pb[i].size()) return pa[i].size() < pb[i].size();
        if (pa[i] != pb[i]) return pa[i] < pb[i];
    }
    return pa.size() < pb.size();
}

}  // namespace

const GuestPackage* PackageIndex::find(std::string_view name,
                                       std::optional<std::string_view> version) const {
    const GuestPackage* best = nullptr;
    for (const auto& p : packages_) {
        if (p.name != name) continue;
        if (version && p.version != *version) continue;
        if (!best || version_less(best->version, p.version)) best = &p;
    }
    return best;
}

// ---------------------------------------------------------------- templates

std::string substitute_template(std::string_view tmpl, const std::map<std::string, SlotValue>& env,
                                const std::function<std::string(const Value&)>& render) {
    const auto slots = extract_template_slots(tmpl);
    std::string out;
    std::size_t pos = 0;
    for (const auto& s : slots) {
        out.append(tmpl.substr(pos, s.position - pos));
        auto it = env.find(s.name);
        if (it == env.end()) throw TemplateError("template slot <<" + s.name + ">> has no value");
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, Value>) {
                    out += render(v);
                } else {
                    out += v.name;
                }
            },
            it->second);
        pos = s.position + s.name.size() + 4;
    }
    out.append(tmpl.substr(pos));
    return out;
}

// ---------------------------------------------------------------- sessions

GuestSession::GuestSession(std::string backend, Policy policy, const PackageIndex* packages,
                           EventLog* log, std::int32_t worker)
    : backend_(std::move(backend)), policy_(policy), packages_(packages), log_(log), worker_(worker) {}

GuestSession::~GuestSession() {
    try {
        teardown();
    } catch (...) {
    }
}

GuestBackend& GuestSession::interp() {
    if (!interp_) {
        auto b = make_backend(backend_);
        b->init();
        interp_ = std::move(b);
        if (log_) {
            log_->record("interp_init", {{"worker", std::to_string(worker_)},
                                         {"backend", backend_},
                                         {"gen", std::to_string(generation_)}});
        }
    }
    return *interp_;
}

void GuestSession::teardown() {
    if (!interp_) return;
    interp_->finalize();
    interp_.reset();
    loaded_.clear();
    if (log_) {
        log_->record("interp_finalize", {{"worker", std::to_string(worker_)},
                                         {"gen", std::to_string(generation_)}});
    }
}

void GuestSession::require_package(const std::string& name, const std::optional<std::string>& version) {
    const std::string key = name + "@" + version.value_or("");
    GuestBackend& g = interp();
    if (loaded_.count(key)) return;
    const GuestPackage* pkg =
        packages_ ? packages_->find(name, version ? std::optional<std::string_view>(*version)
                                                  : std::nullopt)
                  : nullptr;
    if (!pkg) {
        throw GuestError("package '" + name + (version ? " " + *version : std::string()) +
                         "' not found on the guest path");
    }
    for (const auto& src : pkg->sources) {
        std::ifstream in(src, std::ios::binary);
        if (!in) throw GuestError("cannot read package source " + src.string());
        std::stringstream text;
        text << in.rdbuf();
        g.load_source(text.str(), src.string());
    }
    loaded_.insert(key);
}

std::vector<Value> GuestSession::guest_eval(std::string_view code,
                                            const std::vector<std::pair<std::string, Value>>& inputs,
                                            const std::vector<Param>& outputs) {
    GuestBackend& g = interp();
    for (const auto& o : outputs) g.clear_var(o.name);
    for (const auto& [name, v] : inputs) g.bind_var(name, v);
    g.eval(code);
    std::vector<Value> out;
    out.reserve(outputs.size());
    for (const auto& o : outputs) {
        auto v = g.read_var(o.name, o.type);
        if (!v) throw GuestError("output '" + o.name + "' was not assigned");
        out.push_back(std::move(*v));
    }
    return out;
}

void GuestSession::end_task_lifecycle() {
    if (policy_ == Policy::Retain || !interp_) return;
    teardown();
    ++generation_;
}

// ---------------------------------------------------------------- runtime

WorkerRuntime::WorkerRuntime(WorkerConfig cfg)
    : cfg_(std::move(cfg)),
      session_(cfg_.backend, cfg_.policy, cfg_.packages, cfg_.log, cfg_.worker_id) {}

void WorkerRuntime::register_binding(const LeafBinding& b) {
    if (bindings_.count(b.name)) throw Error("leaf '" + b.name + "' is already registered");
    if (b.kind == ExecKind::Native) {
        const std::string symbol = b.code.value_or(b.name);
        const NativeFn* fn = cfg_.natives ? cfg_.natives->find(symbol) : nullptr;
        if (!fn) throw Error("leaf '" + b.name + "': no native function '" + symbol + "' registered");
        std::vector<ScalarType> ins, outs;
        for (const auto& p : b.inputs) ins.push_back(p.type);
        for (const auto& p : b.outputs) outs.push_back(p.type);
        if (ins != fn->inputs || outs != fn->outputs) {
            throw Error("leaf '" + b.name + "': signature does not match native '" + symbol + "'");
        }
    } else if (!b.code) {
        throw Error("leaf '" + b.name + "' has no code");
    }
    bindings_.emplace(b.name, b);
}

const LeafBinding* WorkerRuntime::lookup(std::string_view name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
}

std::vector<Value> WorkerRuntime::exec_leaf(const TaskDescriptor& task) {
    const LeafBinding* b = lookup(task.binding);
    if (!b) throw LeafError("task " + std::to_string(task.id) + ": unknown leaf '" + task.binding + "'", task.id);
    if (task.inputs.size() != b->inputs.size()) {
        throw LeafError("task " + std::to_string(task.id) + ": leaf '" + b->name + "' expects " +
                            std::to_string(b->inputs.size()) + " inputs, got " +
                            std::to_string(task.inputs.size()),
                        task.id);
    }
    for (std::size_t i = 0; i < task.inputs.size(); ++i) {
        if (type_of(task.inputs[i]) != b->inputs[i].type) {
            throw LeafError("task " + std::to_string(task.id) + ": input '" + b->inputs[i].name +
                                "' is " + std::string(type_name(type_of(task.inputs[i]))) +
                                ", expected " + std::string(type_name(b->inputs[i].type)),
                            task.id);
        }
    }
    std::vector<Value> out;
    try {
        out = run(*b, task);
    } catch (const LeafError&) {
        throw;
    } catch (const std::exception& e) {
        throw LeafError("task " + std::to_string(task.id) + " (" + b->name + "): " + e.what(), task.id);
    }
    if (out.size() != b->outputs.size()) {
        throw LeafError("task " + std::to_string(task.id) + " (" + b->name + "): produced " +
                            std::to_string(out.size()) + " outputs, expected " +
                            std::to_string(b->outputs.size()),
                        task.id);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (type_of(out[i]) != b->outputs[i].type) {
            throw LeafError("task " + std::to_string(task.id) + " (" + b->name + "): output '" +
                                b->outputs[i].name + "' is " +
                                std::string(type_name(type_of(out[i]))) + ", expected " +
                                std::string(type_name(b->outputs[i].type)),
                            task.id);
        }
    }
    return out;
}

std::vector<Value> WorkerRuntime::run(const LeafBinding& b, const TaskDescriptor& task) {
    if (b.kind == ExecKind::Native) {
        const NativeFn* fn = cfg_.natives->find(b.code.value_or(b.name));
        return fn->fn(task.inputs);
    }
    if (b.package) session_.require_package(*b.package, b.version);
    GuestBackend& g = session_.interp();
    auto render = [&g](const Value& v) { return g.render_literal(v); };

    std::map<std::string, SlotValue> env;
    std::vector<std::pair<std::string, Value>> bound;
    std::vector<Param> outs;
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
        const Value& v = task.inputs[i];
        if (b.kind == ExecKind::Guest) {
            bound.emplace_back(b.inputs[i].name, v);
            if (type_of(v) == ScalarType::Blob) {
                env.emplace(b.inputs[i].name, HandleToken{b.inputs[i].name});
            } else {
                env.emplace(b.inputs[i].name, v);
            }
        } else if (type_of(v) == ScalarType::Blob) {
            bound.emplace_back(handle_token(i), v);
            env.emplace(b.inputs[i].name, HandleToken{handle_token(i)});
        } else {
            env.emplace(b.inputs[i].name, v);
        }
    }
    for (std::size_t k = 0; k < b.outputs.size(); ++k) {
        const std::string token = b.kind == ExecKind::Guest ? b.outputs[k].name : output_token(k);
        env.emplace(b.outputs[k].name, OutputToken{token});
        outs.push_back({b.outputs[k].type, token});
    }
    const std::string code = substitute_template(*b.code, env, render);
    return session_.guest_eval(code, bound, outs);
}

std::function<std::vector<Value>(const LeafBinding&, std::span<const Value>)> make_local_executor(
    const NativeRegistry* natives, std::string backend, const PackageIndex* packages) {
    return [natives, backend, packages](const LeafBinding& b, std::span<const Value> inputs) {
        WorkerRuntime rt({0, Policy::Reinitialize, backend, packages, natives, nullptr});
        rt.register_binding(b);
        TaskDescriptor t;
        t.binding = b.name;
        t.inputs.assign(inputs.begin(), inputs.end());
        return rt.exec_leaf(t);
    };
}

}  // namespace miniflow
