#ifdef MINIFLOW_HAVE_PYTHON

#define PY_SSIZE_T_CLEAN
#include <Python.h>

#include <cmath>
#include <mutex>

#include "miniflow/errors.hpp"
#include "miniflow/guest.hpp"

namespace miniflow {

namespace {

// Helpers installed once per process as module `_miniflow`.
constexpr const char* kBootstrap = R"PY(
class Blob:
    """Immutable byte buffer with an element tag and a row-major shape."""
    __slots__ = ("data", "elem", "shape")
    _SIZES = {"none": 1, "u8": 1, "i32": 4, "i64": 8, "f64": 8}

    def __init__(self, data, elem="none", shape=()):
        self.data = bytes(data)
        self.elem = elem
        self.shape = tuple(shape)

    def __len__(self):
        return len(self.data)

    def byte(self, i):
        return self.data[i]

    def f64count(self):
        if self.elem != "f64":
            raise TypeError("blob is tagged %s, not f64" % self.elem)
        return len(self.data) // 8

    def f64(self, i):
        import struct
        if self.elem != "f64":
            raise TypeError("blob is tagged %s, not f64" % self.elem)
        return struct.unpack_from("<d", self.data, 8 * i)[0]

    def f64s(self):
        import struct
        n = self.f64count()
        return list(struct.unpack("<%dd" % n, self.data))

    def __repr__(self):
        return "Blob(%d bytes, %s, %r)" % (len(self.data), self.elem, self.shape)


def blob_f64(values):
    import struct
    values = list(values)
    return Blob(struct.pack("<%dd" % len(values), *values), "f64", ())


def blob_from_string(s):
    return Blob(s.encode("utf-8"))


def string_of_blob(b):
    return b.data.decode("utf-8")
)PY";

constexpr const char* kElemNames[] = {"none", "u8", "i32", "i64", "f64"};

PyObject* g_module = nullptr;  // _miniflow
PyObject* g_blob_type = nullptr;
std::once_flag g_init_once;

class Gil {
public:
    Gil() : state_(PyGILState_Ensure()) {}
    ~Gil() { PyGILState_Release(state_); }
    Gil(const Gil&) = delete;
    Gil& operator=(const Gil&) = delete;

private:
    PyGILState_STATE state_;
};

struct Ref {
    PyObject* p = nullptr;
    Ref() = default;
    explicit Ref(PyObject* o) : p(o) {}
    ~Ref() { Py_XDECREF(p); }
    Ref(const Ref&) = delete;
    Ref& operator=(const Ref&) = delete;
    explicit operator bool() const { return p != nullptr; }
};

std::string str_of(PyObject* o) {
    if (!o) return "";
    Ref s(PyObject_Str(o));
    if (!s) {
        PyErr_Clear();
        return "<unprintable>";
    }
    const char* c = PyUnicode_AsUTF8(s.p);
    if (!c) {
        PyErr_Clear();
        return "<unprintable>";
    }
    return c;
}

// Formats and clears the pending Python exception.
std::string take_error() {
    PyObject *type = nullptr, *value = nullptr, *tb = nullptr;
    PyErr_Fetch(&type, &value, &tb);
    PyErr_NormalizeException(&type, &value, &tb);
    std::string msg;
    if (type) {
        Ref name(PyObject_GetAttrString(type, "__name__"));
        msg = name ? str_of(name.p) : "Exception";
        PyErr_Clear();
    }
    std::string text = str_of(value);
    if (!text.empty()) msg += ": " + text;
    long line = -1;
    if (value && PyErr_GivenExceptionMatches(type, PyExc_SyntaxError)) {
        Ref l(PyObject_GetAttrString(value, "lineno"));
        if (l && PyLong_Check(l.p)) line = PyLong_AsLong(l.p);
        PyErr_Clear();
    } else if (tb) {
        PyObject* last = tb;
        while (true) {
            Ref next(PyObject_GetAttrString(last, "tb_next"));
            if (!next || next.p == Py_None) break;
            last = next.p;  // kept alive by the chain rooted at tb
        }
        Ref l(PyObject_GetAttrString(last, "tb_lineno"));
        if (l && PyLong_Check(l.p)) line = PyLong_AsLong(l.p);
        PyErr_Clear();
    }
    Py_XDECREF(type);
    Py_XDECREF(value);
    Py_XDECREF(tb);
    if (line > 0) msg = "line " + std::to_string(line) + ": " + msg;
    return msg;
}

void ensure_python() {
    std::call_once(g_init_once, [] {
        if (!Py_IsInitialized()) {
            Py_InitializeEx(0);
            PyEval_SaveThread();
        }
        Gil gil;
        PyObject* m = PyImport_AddModule("_miniflow");  // borrowed
        if (!m) throw GuestError("python: cannot create helper module: " + take_error());
        PyObject* dict = PyModule_GetDict(m);
        if (PyDict_GetItemString(dict, "__builtins__") == nullptr) {
            PyDict_SetItemString(dict, "__builtins__", PyEval_GetBuiltins());
        }
        Ref r(PyRun_String(kBootstrap, Py_file_input, dict, dict));
        if (!r) throw GuestError("python: bootstrap failed: " + take_error());
        g_blob_type = PyDict_GetItemString(dict, "Blob");
        Py_XINCREF(g_blob_type);
        Py_INCREF(m);
        g_module = m;
    });
}

PyObject* to_python(const Value& v) {
    switch (type_of(v)) {
        case ScalarType::Int: return PyLong_FromLongLong(std::get<std::int64_t>(v));
        case ScalarType::Float: return PyFloat_FromDouble(std::get<double>(v));
        case ScalarType::String: {
            const auto& s = std::get<std::string>(v);
            return PyUnicode_DecodeUTF8(s.data(), static_cast<Py_ssize_t>(s.size()), "surrogateescape");
        }
        case ScalarType::Blob: {
            const auto& b = std::get<Blob>(v);
            auto bytes = b.bytes();
            Ref data(PyBytes_FromStringAndSize(reinterpret_cast<const char*>(bytes.data()),
                                               static_cast<Py_ssize_t>(bytes.size())));
            Ref shape(PyTuple_New(static_cast<Py_ssize_t>(b.shape().size())));
            if (!data || !shape) return nullptr;
            for (std::size_t i = 0; i < b.shape().size(); ++i) {
                PyTuple_SET_ITEM(shape.p, static_cast<Py_ssize_t>(i),
                                 PyLong_FromUnsignedLongLong(b.shape()[i]));
            }
            const char* elem = kElemNames[static_cast<int>(b.elem_type())];
            return PyObject_CallFunction(g_blob_type, "OsO", data.p, elem, shape.p);
        }
    }
    return nullptr;
}

[[noreturn]] void mismatch(ScalarType expected, PyObject* o) {
    throw TypeError("expected " + std::string(type_name(expected)) + ", guest value is " +
                    std::string(Py_TYPE(o)->tp_name));
}

Value from_python(PyObject* o, ScalarType expected) {
    switch (expected) {
        case ScalarType::Int: {
            if (!PyLong_Check(o)) mismatch(expected, o);
            int overflow = 0;
            long long v = PyLong_AsLongLongAndOverflow(o, &overflow);
            if (overflow) throw TypeError("guest int does not fit in 64 bits");
            return static_cast<std::int64_t>(v);
        }
        case ScalarType::Float:
            if (!PyFloat_Check(o)) mismatch(expected, o);
            return PyFloat_AS_DOUBLE(o);
        case ScalarType::String: {
            if (!PyUnicode_Check(o)) mismatch(expected, o);
            Ref bytes(PyUnicode_AsEncodedString(o, "utf-8", "surrogateescape"));
            if (!bytes) throw TypeError("guest string is not encodable: " + take_error());
            return std::string(PyBytes_AS_STRING(bytes.p), static_cast<std::size_t>(PyBytes_GET_SIZE(bytes.p)));
        }
        case ScalarType::Blob: {
            if (PyBytes_Check(o) || PyByteArray_Check(o)) {
                Ref b(PyBytes_FromObject(o));
                const auto* p = reinterpret_cast<const std::uint8_t*>(PyBytes_AS_STRING(b.p));
                return Blob(std::vector<std::uint8_t>(p, p + PyBytes_GET_SIZE(b.p)));
            }
            if (PyObject_IsInstance(o, g_blob_type) != 1) {
                PyErr_Clear();
                mismatch(expected, o);
            }
            Ref data(PyObject_GetAttrString(o, "data"));
            Ref elem(PyObject_GetAttrString(o, "elem"));
            Ref shape(PyObject_GetAttrString(o, "shape"));
            if (!data || !elem || !shape || !PyBytes_Check(data.p)) {
                throw TypeError("malformed guest blob: " + take_error());
            }
            const std::string e = str_of(elem.p);
            int tag = -1;
            for (int i = 0; i < 5; ++i) {
                if (e == kElemNames[i]) tag = i;
            }
            if (tag < 0) throw TypeError("guest blob has unknown element type '" + e + "'");
            std::vector<std::uint64_t> dims;
            Ref seq(PySequence_Fast(shape.p, "blob shape must be a sequence"));
            if (!seq) throw TypeError(take_error());
            for (Py_ssize_t i = 0; i < PySequence_Fast_GET_SIZE(seq.p); ++i) {
                PyObject* d = PySequence_Fast_GET_ITEM(seq.p, i);
                unsigned long long u = PyLong_AsUnsignedLongLong(d);
                if (PyErr_Occurred()) throw TypeError("bad blob dimension: " + take_error());
                dims.push_back(u);
            }
            const auto* p = reinterpret_cast<const std::uint8_t*>(PyBytes_AS_STRING(data.p));
            try {
                return Blob(std::vector<std::uint8_t>(p, p + PyBytes_GET_SIZE(data.p)),
                            static_cast<ElemType>(tag), std::move(dims));
            } catch (const BlobError& err) {
                throw TypeError(std::string("guest blob: ") + err.what());
            }
        }
    }
    mismatch(expected, o);
}

class PythonBackend final : public GuestBackend {
public:
    PythonBackend() { ensure_python(); }
    ~PythonBackend() override { finalize(); }

    std::string_view name() const noexcept override { return "python"; }

    void init() override {
        Gil gil;
        Py_XDECREF(globals_);
        globals_ = PyDict_New();
        PyDict_SetItemString(globals_, "__builtins__", PyEval_GetBuiltins());
        PyDict_SetItemString(globals_, "__name__", Ref(PyUnicode_FromString("__guest__")).p);
        PyObject* helpers = PyModule_GetDict(g_module);
        for (const char* n : {"Blob", "blob_f64", "blob_from_string", "string_of_blob"}) {
            PyDict_SetItemString(globals_, n, PyDict_GetItemString(helpers, n));
        }
    }

    void bind_var(const std::string& name, const Value& v) override {
        Gil gil;
        Ref o(to_python(v));
        if (!o) throw GuestError("python: cannot bind '" + name + "': " + take_error());
        PyDict_SetItemString(live(), name.c_str(), o.p);
    }

    void eval(std::string_view code) override { run(code, "<leaf>"); }

    std::optional<Value> read_var(const std::string& name, ScalarType expected) override {
        Gil gil;
        PyObject* o = PyDict_GetItemString(live(), name.c_str());  // borrowed
        if (!o) return std::nullopt;
        try {
            return from_python(o, expected);
        } catch (const TypeError& e) {
            PyErr_Clear();
            throw TypeError("variable '" + name + "': " + e.what());
        }
    }

    void clear_var(const std::string& name) override {
        Gil gil;
        if (PyDict_DelItemString(live(), name.c_str()) != 0) PyErr_Clear();
    }

    void load_source(std::string_view code, const std::string& origin) override { run(code, origin); }

    std::string render_literal(const Value& v) const override {
        switch (type_of(v)) {
            case ScalarType::Int: return std::to_string(std::get<std::int64_t>(v));
            case ScalarType::Float: {
                const double d = std::get<double>(v);
                if (std::isnan(d)) return "float(\"nan\")";
                if (std::isinf(d)) return d < 0 ? "(-float(\"inf\"))" : "float(\"inf\")";
                std::string s = format_float(d);
                return s[0] == '-' ? "(" + s + ")" : s;
            }
            case ScalarType::String: return quote_string(std::get<std::string>(v));
            case ScalarType::Blob: break;
        }
        throw TypeError("blob values have no literal form; bind them as variables");
    }

    void finalize() override {
        if (!globals_) return;
        Gil gil;
        PyDict_Clear(globals_);
        Py_CLEAR(globals_);
    }

private:
    PyObject* live() {
        if (!globals_) throw InternalError("python interpreter used before init");
        return globals_;
    }

    void run(std::string_view code, const std::string& origin) {
        Gil gil;
        std::string text(code);
        Ref compiled(Py_CompileString(text.c_str(), origin.c_str(), Py_file_input));
        if (!compiled) throw GuestError(take_error());
        Ref r(PyEval_EvalCode(compiled.p, live(), live()));
        if (!r) throw GuestError(take_error());
    }

    PyObject* globals_ = nullptr;
};

}  // namespace

std::unique_ptr<GuestBackend> make_python_backend() { return std::make_unique<PythonBackend>(); }

void python_after_fork_child() {
    if (!Py_IsInitialized()) return;
    PyGILState_Ensure();
    PyOS_AfterFork_Child();
    PyEval_SaveThread();
}

}  // namespace miniflow

#endif
