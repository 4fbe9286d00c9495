// Python bindings: images and sinograms are float64 numpy arrays; angles are
// lists of degrees.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lact/error.hpp"
#include "lact/io.hpp"
#include "lact/metrics.hpp"
#include "lact/phantom.hpp"
#include "lact/reconstruct.hpp"
#include "lact/regularization.hpp"
#include "lact/sinogram_filter.hpp"

namespace py = pybind11;
using namespace lact;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.values.begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

Sinogram make_sinogram(const Array& sino, std::vector<double> angles, std::size_t side) {
  Matrix values = to_matrix(sino);
  Geometry g = Geometry::parallel(side ? side : values.cols, std::move(angles), values.cols);
  return {std::move(values), std::move(g)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Limited-angle CT reconstruction core";
  m.attr("__version__") = LACT_VERSION;

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_IOError);

  m.def(
      "generate_phantom",
      [](std::size_t side, std::uint64_t seed, std::size_t min_holes, std::size_t max_holes) {
        PhantomSpec s;
        s.side = side;
        s.seed = seed;
        s.min_holes = min_holes;
        s.max_holes = max_holes;
        return to_array(generate_phantom(s));
      },
      py::arg("side") = 128, py::arg("seed") = 0, py::arg("min_holes") = 2, py::arg("max_holes") = 6);
  m.def(
      "disk_mask", [](std::size_t side, double frac) { return to_array(disk_mask(side, frac)); }, py::arg("side"),
      py::arg("radius_frac") = 0.45);

  m.def(
      "angle_list", &angle_list, py::arg("start_deg"), py::arg("step_deg"), py::arg("count"));
  m.def(
      "simulate_scan",
      [](const Array& image, double arc, double step, double noise, std::uint64_t seed, double start) {
        ScanSpec s;
        s.arc_deg = arc;
        s.angle_step_deg = step;
        s.noise_sigma = noise;
        s.seed = seed;
        s.start_angle_deg = start;
        Sinogram out = simulate_scan(to_matrix(image), s);
        return py::make_tuple(to_array(out.values), out.geometry.angles_deg);
      },
      py::arg("image"), py::arg("arc_deg") = 30.0, py::arg("step_deg") = 0.5, py::arg("noise") = 0.0,
      py::arg("seed") = 0, py::arg("start_deg") = 0.0, "Returns (sinogram, angles_deg).");
  m.def(
      "radon_forward",
      [](const Array& image, std::vector<double> angles, std::size_t bins) {
        Matrix img = to_matrix(image);
        return to_array(radon_forward(img, Geometry::parallel(img.rows, std::move(angles), bins)).values);
      },
      py::arg("image"), py::arg("angles_deg"), py::arg("detector_bins") = 0);
  m.def(
      "radon_adjoint",
      [](const Array& sino, std::vector<double> angles, std::size_t side) {
        Sinogram s = make_sinogram(sino, std::move(angles), side);
        return to_array(radon_adjoint(s, s.geometry));
      },
      py::arg("sinogram"), py::arg("angles_deg"), py::arg("image_side") = 0);

  m.def(
      "filter_response", [](double alpha, std::size_t bins) { return filter_response({alpha, bins}); },
      py::arg("alpha"), py::arg("detector_bins"));
  m.def(
      "apply_filter",
      [](const Array& sino, double alpha) {
        Matrix v = to_matrix(sino);
        std::vector<double> angles(v.rows);
        for (std::size_t i = 0; i < v.rows; ++i) angles[i] = static_cast<double>(i) * 179.0 / std::max<double>(1, v.rows);
        Sinogram s{std::move(v), Geometry::parallel(sino.shape(1), angles)};
        return to_array(apply_filter(s, {alpha, s.geometry.detector_bins}).values);
      },
      py::arg("sinogram"), py::arg("alpha"));

  m.def(
      "fbp",
      [](const Array& sino, std::vector<double> angles, double alpha, std::optional<Array> mask, bool binary,
         std::size_t side) {
        Sinogram s = make_sinogram(sino, std::move(angles), side);
        if (!binary) return to_array(fbp_reconstruct(s, s.geometry, alpha));
        std::optional<Matrix> mk;
        if (mask) mk = to_matrix(*mask);
        return to_array(fbp_binary(s, alpha, mk ? &*mk : nullptr));
      },
      py::arg("sinogram"), py::arg("angles_deg"), py::arg("alpha") = 0.0, py::arg("mask") = py::none(),
      py::arg("binary") = false, py::arg("image_side") = 0);

  m.def(
      "reconstruct",
      [](const Array& sino, std::vector<double> angles, bool use_dip, double alpha, double lambda_tv,
         double lambda_psr, std::size_t patch_size, double lr, std::size_t n_iter, std::uint64_t seed,
         std::optional<Array> mask, std::string ae_model, std::size_t side) {
        Sinogram s = make_sinogram(sino, std::move(angles), side);
        ReconConfig c;
        c.use_dip = use_dip;
        c.alpha = alpha;
        c.lambda_tv = lambda_tv;
        c.lambda_psr = lambda_psr;
        c.patch_size = patch_size;
        c.lr = lr;
        c.n_iter = n_iter;
        c.seed = seed;
        if (mask) c.mask = to_matrix(*mask);
        c.ae_model_path = std::move(ae_model);
        ReconResult r;
        {
          py::gil_scoped_release release;
          r = reconstruct(s, c);
        }
        return py::make_tuple(to_array(r.image), r.loss_trace, py::make_tuple(r.offset.dx, r.offset.dy));
      },
      py::arg("sinogram"), py::arg("angles_deg"), py::arg("use_dip") = false, py::arg("alpha") = 0.0,
      py::arg("lambda_tv") = 0.0, py::arg("lambda_psr") = 0.0, py::arg("patch_size") = 40, py::arg("lr") = 1e-3,
      py::arg("n_iter") = 400, py::arg("seed") = 0, py::arg("mask") = py::none(), py::arg("ae_model") = "",
      py::arg("image_side") = 0, "Returns (image, loss_trace, (dx, dy)).");

  m.def(
      "train_autoencoder",
      [](const std::vector<Array>& images, std::size_t p, std::uint64_t seed, std::size_t epochs,
         const std::string& path) {
        std::vector<Image> imgs;
        for (const auto& a : images) imgs.push_back(to_matrix(a));
        AutoencoderTraining opt;
        opt.epochs = epochs;
        TrainedAutoencoder t = [&] {
          py::gil_scoped_release release;
          return train_autoencoder(imgs, p, seed, opt);
        }();
        t.model.save(path);
        return py::make_tuple(t.epoch_losses, reconstruction_mae(t.model, t.heldout));
      },
      py::arg("images"), py::arg("patch_size"), py::arg("seed") = 0, py::arg("epochs") = 100, py::arg("path"),
      "Trains, saves to `path`, returns (epoch_losses, heldout_mae).");

  m.def(
      "mcc", [](const Array& pred, const Array& truth) { return mcc(to_matrix(pred), to_matrix(truth)); },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "otsu_threshold", [](const Array& img) { return otsu_threshold(to_matrix(img)); }, py::arg("image"));
  m.def(
      "binarize", [](const Array& img) { return to_array(binarize(to_matrix(img))); }, py::arg("image"));
  m.def(
      "total_variation", [](const Array& img) { return total_variation(to_matrix(img)); }, py::arg("image"));

  m.def(
      "read_image", [](const std::string& p) { return to_array(io::read_image(p)); }, py::arg("path"));
  m.def(
      "write_image", [](const std::string& p, const Array& a) { io::write_image(p, to_matrix(a)); },
      py::arg("path"), py::arg("image"));
}
