// Python bindings for the main operations. JSON-shaped results come back as
// plain dicts; arrays as float64 numpy arrays.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "polu/activations.hpp"
#include "polu/data.hpp"
#include "polu/error.hpp"
#include "polu/fetch.hpp"
#include "polu/harness.hpp"
#include "polu/network.hpp"
#include "polu/regions.hpp"

namespace py = pybind11;
using namespace polu;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(dump_json(j, 17, -1));
}

json from_py(const py::object& o) {
  try {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

act::ActivationSpec spec_of(const py::object& o) {
  if (py::isinstance<act::ActivationSpec>(o)) return o.cast<act::ActivationSpec>();
  return act::ActivationSpec::parse(o.cast<std::string>());
}

Array elementwise(const act::ActivationSpec& spec, const Array& x, bool derivative) {
  Array y(std::vector<py::ssize_t>(x.shape(), x.shape() + x.ndim()));
  std::span<const double> in(x.data(), static_cast<std::size_t>(x.size()));
  std::span<double> out(y.mutable_data(), static_cast<std::size_t>(y.size()));
  if (derivative) {
    std::vector<double> ones(in.size(), 1.0);
    act::apply_backward<double>(spec, in, ones, out);
  } else {
    act::apply_forward<double>(spec, in, out);
  }
  return y;
}

// Explicit strides: some pybind11 releases derive zero strides for the 1-D
// count constructor.
template <class T>
py::array_t<T> vector_1d(const T* data, std::size_t n) {
  return py::array_t<T>({static_cast<py::ssize_t>(n)}, {static_cast<py::ssize_t>(sizeof(T))}, data);
}

py::int_ big(const regions::BigInt& v) { return py::int_(py::str(v.str())); }

}  // namespace

PYBIND11_MODULE(polu, m) {
  m.doc() = "Polynomial linear unit activations, region counting and training harness";

  static py::exception<Error> base(m, "PoluError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::ShapeMismatch: PyErr_SetString(PyExc_ValueError, e.what()); return;
        case ErrorKind::NotFound: PyErr_SetString(PyExc_FileNotFoundError, e.what()); return;
        case ErrorKind::IoError: PyErr_SetString(PyExc_OSError, e.what()); return;
        default: PyErr_SetString(base.ptr(), e.what()); return;
      }
    }
  });

  // ---- activations
  py::enum_<act::Kind>(m, "Kind")
      .value("PoLU", act::Kind::PoLU)
      .value("ReLU", act::Kind::ReLU)
      .value("LReLU", act::Kind::LReLU)
      .value("ELU", act::Kind::ELU);

  py::class_<act::ActivationSpec>(m, "ActivationSpec")
      .def_static("polu", &act::ActivationSpec::polu, py::arg("n") = 2.0)
      .def_static("relu", &act::ActivationSpec::relu)
      .def_static("lrelu", &act::ActivationSpec::lrelu, py::arg("leak") = 0.01)
      .def_static("elu", &act::ActivationSpec::elu, py::arg("alpha") = 1.0)
      .def_static("parse", [](const std::string& s) { return act::ActivationSpec::parse(s); })
      .def_readonly("kind", &act::ActivationSpec::kind)
      .def_readonly("n", &act::ActivationSpec::n)
      .def_readonly("alpha", &act::ActivationSpec::alpha)
      .def_readonly("leak", &act::ActivationSpec::leak)
      .def("__str__", &act::ActivationSpec::to_string)
      .def("__repr__", [](const act::ActivationSpec& s) { return "ActivationSpec('" + s.to_string() + "')"; })
      .def(py::self == py::self);

  m.def("polu_forward", py::vectorize(&act::polu_forward), py::arg("x"), py::arg("n") = 2.0);
  m.def("polu_derivative", py::vectorize(&act::polu_derivative), py::arg("x"), py::arg("n") = 2.0);
  m.def(
      "forward", [](const py::object& spec, const Array& x) { return elementwise(spec_of(spec), x, false); },
      py::arg("spec"), py::arg("x"));
  m.def(
      "derivative", [](const py::object& spec, const Array& x) { return elementwise(spec_of(spec), x, true); },
      py::arg("spec"), py::arg("x"));
  m.def("negative_fixed_point", &act::negative_fixed_point, py::arg("n"));
  m.def(
      "saturation_value", [](const py::object& spec) { return act::saturation_value(spec_of(spec)); },
      py::arg("spec"));
  m.def(
      "curve",
      [](const py::object& spec, double lo, double hi, std::size_t samples) {
        const auto c = act::sample_curve(spec_of(spec), lo, hi, samples);
        std::vector<double> x, f, df;
        for (const auto& s : c) {
          x.push_back(s.x);
          f.push_back(s.f);
          df.push_back(s.df);
        }
        return py::make_tuple(vector_1d(x.data(), x.size()), vector_1d(f.data(), f.size()),
                              vector_1d(df.data(), df.size()));
      },
      py::arg("spec"), py::arg("lo") = -5.0, py::arg("hi") = 5.0, py::arg("samples") = 1001);

  // ---- regions
  m.def("theorem1_bound", [](std::uint64_t n0, std::uint64_t n1) { return big(regions::theorem1_bound(n0, n1)); },
        py::arg("n0"), py::arg("n1"));
  m.def(
      "theorem2_bound",
      [](std::uint64_t n0, std::vector<std::uint64_t> widths) {
        return big(regions::theorem2_bound({n0, std::move(widths)}));
      },
      py::arg("n0"), py::arg("widths"));
  m.def("phi_hat", py::vectorize(&regions::phi_hat), py::arg("n"), py::arg("x"));
  m.def(
      "solve_trough_params", [](double n, double d) { return to_py(regions::to_json(regions::solve_trough_params(n, d))); },
      py::arg("n"), py::arg("d"));
  m.def(
      "build_sum_construction",
      [](double n, std::size_t k, double tolerance, std::size_t max_iterations) {
        regions::SumOptions o;
        o.tolerance = tolerance;
        o.max_iterations = max_iterations;
        const auto sc = regions::build_sum_construction(n, k, o);
        py::dict d = to_py(regions::to_json(sc));
        d["analytic_regions"] = to_py(regions::to_json(regions::analytic_regions(sc)));
        return d;
      },
      py::arg("n"), py::arg("k"), py::arg("tolerance") = 1e-6, py::arg("max_iterations") = 500);
  m.def(
      "count_monotonic_regions",
      [](const std::function<double(double)>& f, double lo, double hi, std::size_t resolution) {
        // Python callables hold the GIL; the scan is serial anyway.
        return to_py(regions::to_json(regions::count_monotonic_regions(f, lo, hi, resolution)));
      },
      py::arg("f"), py::arg("lo"), py::arg("hi"), py::arg("resolution") = 100000);
  m.def(
      "line_regions",
      [](std::size_t hidden, const py::object& spec, std::uint64_t seed, double lo, double hi,
         std::size_t resolution) {
        const auto net = regions::line_network(hidden, spec_of(spec));
        const auto params = regions::random_line_parameters(net, seed);
        const double anchor = 0.0, direction = 1.0;
        return to_py(regions::to_json(
            regions::network_line_regions(net, params, {&anchor, 1}, {&direction, 1}, lo, hi, resolution)));
      },
      py::arg("hidden") = 16, py::arg("spec") = "relu", py::arg("seed") = 0, py::arg("lo") = -10.0,
      py::arg("hi") = 10.0, py::arg("resolution") = 200000);

  // ---- network
  m.def(
      "grad_check",
      [](const py::object& spec, std::uint64_t seed, double tolerance) {
        const auto r = net::grad_check(net::tiny_network(spec_of(spec)), seed, tolerance);
        py::dict d;
        d["passed"] = r.passed;
        d["max_relative_error"] = r.max_relative_error;
        d["tolerance"] = r.tolerance;
        return d;
      },
      py::arg("spec"), py::arg("seed") = 1, py::arg("tolerance") = 1e-4);

  // ---- data
  m.def("data_root", [] { return fetch::data_root(); });
  m.def(
      "load_mnist",
      [](const std::filesystem::path& dir) {
        const auto d = data::load_mnist(dir);
        auto pack = [](const data::Dataset& s) {
          const auto& shape = s.images.shape();
          py::array_t<float> x(std::vector<py::ssize_t>(shape.begin(), shape.end()));
          std::copy(s.images.storage().begin(), s.images.storage().end(), x.mutable_data());
          return py::make_tuple(x, vector_1d(s.labels.data(), s.labels.size()));
        };
        return py::make_tuple(pack(d.train), pack(d.test));
      },
      py::arg("dir"));

  // ---- harness
  m.def(
      "preset",
      [](const std::string& name) {
        try {
          return to_py(harness::to_json(harness::preset(name)));
        } catch (const Error& e) {
          // an unknown name is a bad argument, not a missing file
          if (e.kind() == ErrorKind::NotFound) throw Error(ErrorKind::InvalidArgument, e.what());
          throw;
        }
      },
      py::arg("name"));
  m.def(
      "train",
      [](const py::dict& config, const std::optional<std::filesystem::path>& data_dir) {
        const auto cfg = harness::config_from_json(from_py(config));
        const auto data = harness::prepare_data(cfg, data_dir ? *data_dir : fetch::data_root());
        std::vector<harness::RunMetrics> runs;
        {
          py::gil_scoped_release nogil;
          runs = harness::run(cfg, data);
        }
        return to_py(harness::run_summary_json(cfg, runs));
      },
      py::arg("config"), py::arg("data_dir") = py::none());
}
