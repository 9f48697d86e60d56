// Python view of the library. Images are float32 arrays (H, W) or (H, W, C)
// in [0, 1]; flows are (H, W, 2) and inverse depth (H, W), with NaN marking
// masked pixels.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "burstdepth/applications.hpp"
#include "burstdepth/error.hpp"
#include "burstdepth/geometry.hpp"
#include "burstdepth/network.hpp"
#include "burstdepth/pipeline.hpp"
#include "burstdepth/synthetic.hpp"

namespace py = pybind11;
using namespace burstdepth;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(w, h, c);
  std::memcpy(img.pixels().data(), a.data(), sizeof(float) * img.pixels().size());
  return img;
}

FloatArray from_image(const Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  FloatArray out(shape);
  std::memcpy(out.mutable_data(), img.pixels().data(), sizeof(float) * img.pixels().size());
  return out;
}

InverseDepthMap to_inverse_depth(const DoubleArray& a) {
  if (a.ndim() != 2) throw py::value_error("inverse depth must be (H, W)");
  InverseDepthMap w(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::isnan(a.data()[i])) {
      w.invalidate(i);
    } else {
      w.data[i] = a.data()[i];
    }
  }
  return w;
}

DoubleArray from_inverse_depth(const InverseDepthMap& w) {
  DoubleArray out({w.height, w.width});
  for (std::size_t i = 0; i < w.size(); ++i) out.mutable_data()[i] = w.valid[i] ? w.data[i] : kNaN;
  return out;
}

FlowField to_flow(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 2) throw py::value_error("flow must be (H, W, 2)");
  FlowField f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double u = a.data()[2 * i];
    const double v = a.data()[2 * i + 1];
    if (std::isnan(u) || std::isnan(v)) {
      f.invalidate(i);
    } else {
      f.set(i, u, v);
    }
  }
  return f;
}

DoubleArray from_flow(const FlowField& f) {
  DoubleArray out({f.height, f.width, 2});
  for (std::size_t i = 0; i < f.size(); ++i) {
    out.mutable_data()[2 * i] = f.valid[i] ? f.du(i) : kNaN;
    out.mutable_data()[2 * i + 1] = f.valid[i] ? f.dv(i) : kNaN;
  }
  return out;
}

std::vector<double> flat(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

std::vector<Image> to_images(const std::vector<FloatArray>& arrays) {
  std::vector<Image> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(to_image(a));
  return out;
}

TransformVector to_transform(std::pair<double, double> t) { return {t.first, t.second}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Depth from small-motion burst shots";
  py::register_exception<Error>(m, "BurstDepthError", PyExc_RuntimeError);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy) { return CameraIntrinsics{fx, fy, cx, cy}; }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def("matrix", &CameraIntrinsics::matrix)
      .def("__repr__", [](const CameraIntrinsics& k) {
        return "CameraIntrinsics(fx=" + std::to_string(k.fx) + ", fy=" + std::to_string(k.fy) +
               ", cx=" + std::to_string(k.cx) + ", cy=" + std::to_string(k.cy) + ")";
      });

  py::class_<SmallPose>(m, "SmallPose")
      .def(py::init<>())
      .def(py::init([](const Eigen::Vector3d& r, const Eigen::Vector3d& t) { return SmallPose{r, t}; }),
           py::arg("r"), py::arg("t"))
      .def_readwrite("r", &SmallPose::r)
      .def_readwrite("t", &SmallPose::t);

  m.def("project", &project, py::arg("point"));
  m.def("small_rotation_matrix", &small_rotation_matrix, py::arg("r"));
  m.def(
      "translation_transform_vector",
      [](const CameraIntrinsics& K, const Eigen::Vector3d& t) {
        const TransformVector T = translation_transform_vector(K, t);
        return std::make_pair(T.tx, T.ty);
      },
      py::arg("K"), py::arg("t"));
  m.def(
      "flow_from_inverse_depth",
      [](const DoubleArray& w, std::pair<double, double> T) {
        return from_flow(flow_from_inverse_depth(to_inverse_depth(w), to_transform(T)));
      },
      py::arg("inverse_depth"), py::arg("T"));
  m.def(
      "inverse_depth_from_flow",
      [](const DoubleArray& flow, std::pair<double, double> T) {
        return from_inverse_depth(inverse_depth_from_flow(to_flow(flow), to_transform(T)));
      },
      py::arg("flow"), py::arg("T"));
  m.def(
      "convert_flow_between_frames",
      [](const DoubleArray& flow, std::pair<double, double> T_prev, std::pair<double, double> T_next) {
        return from_flow(convert_flow_between_frames(to_flow(flow), to_transform(T_prev), to_transform(T_next)));
      },
      py::arg("flow"), py::arg("T_prev"), py::arg("T_next"));
  m.def(
      "rotation_align_warp",
      [](const FloatArray& image, const CameraIntrinsics& K, const Eigen::Vector3d& r) {
        const MaskedImage out = rotation_align_warp(to_image(image), K, r);
        py::array_t<bool> valid({out.image.height(), out.image.width()});
        std::copy(out.valid.begin(), out.valid.end(), valid.mutable_data());
        return py::make_tuple(from_image(out.image), valid);
      },
      py::arg("image"), py::arg("K"), py::arg("r"));

  m.def("parabola_vertex", &parabola_vertex, py::arg("s_minus"), py::arg("s_0"), py::arg("s_plus"));
  m.def("network_parameter_count", [] { return NetworkSpec::residual_flow().parameter_count(); });

  m.def(
      "synthetic_burst",
      [](int frames, int width, int height, int exposure_levels, double noise_sigma, std::uint64_t seed) {
        SceneOptions opt;
        opt.frames = frames;
        opt.width = width;
        opt.height = height;
        opt.exposure_levels = exposure_levels;
        opt.noise_sigma = noise_sigma;
        opt.seed = seed;
        // Keep the near rectangle inside smaller frames.
        opt.near_u0 = width * 100.0 / 640.0, opt.near_u1 = width * 380.0 / 640.0;
        opt.near_v0 = height * 80.0 / 480.0, opt.near_v1 = height * 400.0 / 480.0;
        opt.K = {520.0 * width / 640.0, 520.0 * width / 640.0, (width - 1) / 2.0, (height - 1) / 2.0};
        const SyntheticScene scene = make_default_scene(opt);
        RenderedBurst burst;
        {
          py::gil_scoped_release release;
          burst = render(scene);
        }
        py::dict out;
        py::list images;
        for (const Image& f : burst.frames) images.append(from_image(f));
        out["frames"] = images;
        DoubleArray depth({scene.height, scene.width});
        std::copy(burst.depth.pixels().begin(), burst.depth.pixels().end(), depth.mutable_data());
        out["depth"] = depth;
        out["poses"] = scene.poses;
        out["gains"] = scene.gains;
        out["K"] = scene.K;
        return out;
      },
      py::arg("frames") = 28, py::arg("width") = 640, py::arg("height") = 480, py::arg("exposure_levels") = 1,
      py::arg("noise_sigma") = 0.0, py::arg("seed") = 7);

  m.def(
      "estimate_depth",
      [](const std::vector<FloatArray>& frames, const CameraIntrinsics& K, bool average_final_depth) {
        const std::vector<Image> images = to_images(frames);
        PipelineConfig cfg;
        cfg.average_final_depth = average_final_depth;
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run(images, K, cfg);
        }
        py::dict out;
        DoubleArray depth({r.height, r.width});
        std::copy(r.depth.begin(), r.depth.end(), depth.mutable_data());
        out["depth"] = depth;
        out["inverse_depth"] = from_inverse_depth(r.inverse_depth);
        out["poses"] = r.geometry.poses;
        out["processed_frames"] = r.processed_frames;
        py::list skipped;
        for (const auto& s : r.skipped) skipped.append(py::make_tuple(s.frame, s.reason));
        out["skipped"] = skipped;
        py::dict timings;
        for (const auto& t : r.timings) timings[py::str(t.stage)] = t.seconds;
        out["timings"] = timings;
        out["rms_reprojection"] = r.geometry.bundle.final_rms_reprojection;
        return out;
      },
      py::arg("frames"), py::arg("K"), py::arg("average_final_depth") = false);

  m.def(
      "evaluate_depth",
      [](const DoubleArray& estimate, const DoubleArray& ground_truth) {
        if (estimate.size() != ground_truth.size()) throw py::value_error("depth maps differ in size");
        const DepthErrors e = evaluate_depth(flat(estimate), flat(ground_truth));
        py::dict out;
        out["rmse"] = e.rmse;
        out["bad_pixel_rate_percent"] = e.bad_pixel_rate_percent;
        out["scale"] = e.scale;
        out["valid_pixels"] = e.valid_pixels;
        return out;
      },
      py::arg("estimate"), py::arg("ground_truth"));

  auto mask_of = [](const DoubleArray& a, const DoubleArray& b) {
    Mask valid(a.size(), 1);
    for (py::ssize_t i = 0; i < a.size(); ++i) valid[i] = std::isfinite(a.data()[i]) && std::isfinite(b.data()[i]);
    return valid;
  };
  m.def(
      "rmse",
      [mask_of](const DoubleArray& est, const DoubleArray& gt) {
        if (est.size() != gt.size()) throw py::value_error("maps differ in size");
        return rmse(flat(est), flat(gt), mask_of(est, gt));
      },
      py::arg("estimate"), py::arg("ground_truth"));
  m.def(
      "bad_pixel_rate",
      [mask_of](const DoubleArray& est, const DoubleArray& gt) {
        if (est.size() != gt.size()) throw py::value_error("maps differ in size");
        return bad_pixel_rate(flat(est), flat(gt), mask_of(est, gt));
      },
      py::arg("estimate"), py::arg("ground_truth"));

  m.def(
      "align_to_reference",
      [](const std::vector<FloatArray>& frames, const CameraIntrinsics& K, const std::vector<SmallPose>& poses,
         const DoubleArray& inverse_depth) {
        const AlignedBurst b = align_to_reference(to_images(frames), K, poses, to_inverse_depth(inverse_depth));
        py::list images;
        for (const Image& f : b.frames) images.append(from_image(f));
        return images;
      },
      py::arg("frames"), py::arg("K"), py::arg("poses"), py::arg("inverse_depth"));
  m.def(
      "denoise",
      [](const std::vector<FloatArray>& aligned, double sigma) {
        AlignedBurst b{to_images(aligned), {}};
        for (const Image& f : b.frames) b.valid.emplace_back(f.pixel_count(), 1);
        return from_image(denoise_weighted_average(b, sigma));
      },
      py::arg("aligned_frames"), py::arg("sigma") = kDenoiseSigma);
  m.def(
      "exposure_fuse",
      [](const std::vector<FloatArray>& aligned) {
        AlignedBurst b{to_images(aligned), {}};
        for (const Image& f : b.frames) b.valid.emplace_back(f.pixel_count(), 1);
        return from_image(exposure_fuse(b));
      },
      py::arg("aligned_frames"));
  m.def(
      "refocus",
      [](const FloatArray& image, const DoubleArray& inverse_depth, double focal_depth, double aperture) {
        return from_image(synthetic_refocus(to_image(image), to_inverse_depth(inverse_depth), focal_depth, aperture));
      },
      py::arg("image"), py::arg("inverse_depth"), py::arg("focal_depth"), py::arg("aperture"));
  m.def(
      "add_signal_dependent_noise",
      [](const FloatArray& image, double sigma, std::uint64_t seed) {
        return from_image(add_signal_dependent_noise(to_image(image), sigma, seed));
      },
      py::arg("image"), py::arg("sigma"), py::arg("seed"));

  m.attr("__version__") = "0.1.0";
}
