#include "miniflow/guest.hpp"

#include "miniflow/errors.hpp"
#include "miniflow/toy.hpp"

namespace miniflow {

namespace {

class ToyBackend final : public GuestBackend {
public:
    std::string_view name() const noexcept override { return "toy"; }

    void init() override { interp_.emplace(); }

    void bind_var(const std::string& name, const Value& v) override {
        live().set(name, toy::marshal(v));
    }

    void eval(std::string_view code) override { live().eval(code); }

    std::optional<Value> read_var(const std::string& name, ScalarType expected) override {
        auto g = live().get(name);
        if (!g) return std::nullopt;
        try {
            return toy::unmarshal(*g, expected);
        } catch (const TypeError& e) {
            throw TypeError("variable '" + name + "': " + e.what());
        }
    }

    void clear_var(const std::string& name) override { live().erase(name); }

    void load_source(std::string_view code, const std::string& origin) override {
        try {
            live().eval(code);
        } catch (const GuestError& e) {
            throw GuestError(origin + ": " + e.what());
        }
    }

    std::string render_literal(const Value& v) const override { return toy::render_literal(v); }

    void finalize() override { interp_.reset(); }

private:
    toy::Interpreter& live() {
        if (!interp_) throw InternalError("toy interpreter used before init");
        return *interp_;
    }

    std::optional<toy::Interpreter> interp_;
};

}  // namespace

std::unique_ptr<GuestBackend> make_toy_backend() { return std::make_unique<ToyBackend>(); }

std::unique_ptr<GuestBackend> make_backend(std::string_view name) {
    if (name == "toy") return make_toy_backend();
#ifdef MINIFLOW_HAVE_PYTHON
    if (name == "python") return make_python_backend();
#endif
    throw Error("guest backend '" + std::string(name) + "' is not available in this build");
}

bool backend_available(std::string_view name) noexcept {
    for (const auto& b : available_backends()) {
        if (b == name) return true;
    }
    return false;
}

std::vector<std::string> available_backends() {
#ifdef MINIFLOW_HAVE_PYTHON
    return {"toy", "python"};
#else
    return {"toy"};
#endif
}

}  // namespace miniflow
