#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sparseview/diffusion.hpp"
#include "sparseview/error.hpp"
#include "sparseview/features.hpp"
#include "sparseview/metrics.hpp"
#include "sparseview/pipeline.hpp"
#include "sparseview/postprocess.hpp"
#include "sparseview/rasterizer.hpp"
#include "sparseview/scene_io.hpp"
#include "sparseview/viewselect.hpp"

namespace py = pybind11;
using namespace sparseview;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// H×W or H×W×C array -> Image.
Image to_image_checked(const Array &a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "expected an H×W or H×W×C array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

Array from_image(const Image &img) {
    Array out({img.height, img.width, img.channels});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

Array from_feature_map(const FeatureMap &f) {
    Array out({f.channels, f.height, f.width});
    std::copy(f.data.begin(), f.data.end(), out.mutable_data());
    return out;
}

py::dict render_dict(const RenderOutput &r) {
    py::dict d;
    d["rgb"] = from_image(r.rgb);
    d["feat"] = from_image(r.feat);
    d["depth"] = from_image(r.depth);
    d["alpha"] = from_image(r.alpha);
    d["visible"] = r.diagnostics.visible;
    d["culled"] = r.diagnostics.culled;
    return d;
}

DepthSpacing spacing_from(const std::string &name) {
    if (name == "uniform") return DepthSpacing::Uniform;
    if (name == "inverse") return DepthSpacing::InverseDepth;
    throw Error(ErrorCode::InvalidArgument, "spacing must be 'uniform' or 'inverse'");
}

}  // namespace

PYBIND11_MODULE(_sparseview, m) {
    m.doc() = "Sparse-view reconstruction toolkit: cost volumes, Gaussian splatting and latent refinement.";

    static py::exception<Error> error_type(m, "SparseviewError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error &e) {
            py::object exc = error_type;
            PyErr_SetObject(exc.ptr(), py::make_tuple(to_string(e.code()), e.what()).ptr());
        }
    });

    py::class_<Camera>(m, "Camera")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height,
                         const Eigen::Matrix4d &world_to_camera) {
                 Camera c{Intrinsics{fx, fy, cx, cy, width, height}, Pose::from_matrix(world_to_camera)};
                 c.intrinsics.validate();
                 c.pose.validate(1e-4);
                 return c;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"),
             py::arg("world_to_camera") = Eigen::Matrix4d::Identity())
        .def_static(
            "look_at",
            [](double focal, int width, int height, const Eigen::Vector3d &eye, const Eigen::Vector3d &target) {
                return Camera{Intrinsics{focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height},
                              Pose::look_at(eye, target)};
            },
            py::arg("focal"), py::arg("width"), py::arg("height"), py::arg("eye"), py::arg("target"))
        .def_property_readonly("width", [](const Camera &c) { return c.intrinsics.width; })
        .def_property_readonly("height", [](const Camera &c) { return c.intrinsics.height; })
        .def_property_readonly("K", [](const Camera &c) { return c.intrinsics.matrix(); })
        .def_property_readonly("world_to_camera", [](const Camera &c) { return c.pose.matrix(); })
        .def_property_readonly("center", [](const Camera &c) { return c.pose.center(); });

    py::class_<GaussianCloud>(m, "GaussianCloud")
        .def("__len__", &GaussianCloud::size)
        .def_readonly("sh_degree", &GaussianCloud::sh_degree)
        .def_readonly("feature_channels", &GaussianCloud::feature_channels)
        .def_property_readonly("means",
                               [](const GaussianCloud &c) {
                                   Array out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
                                   for (std::size_t i = 0; i < c.size(); ++i)
                                       for (int k = 0; k < 3; ++k) out.mutable_at(i, k) = c.gaussians[i].mean[k];
                                   return out;
                               })
        .def_property_readonly("opacities",
                               [](const GaussianCloud &c) {
                                   Array out(static_cast<py::ssize_t>(c.size()));
                                   for (std::size_t i = 0; i < c.size(); ++i) out.mutable_at(i) = c.gaussians[i].opacity;
                                   return out;
                               })
        .def("validate", &GaussianCloud::validate);
    m.def("load_cloud", &load_cloud, py::arg("path"));
    m.def("save_cloud", &save_cloud, py::arg("path"), py::arg("cloud"));
    m.def("perturb_cloud", &perturb_cloud, py::arg("cloud"), py::arg("seed"), py::arg("amount") = 1.0);

    py::class_<Scene>(m, "Scene")
        .def_property_readonly("frame_count", &Scene::frame_count)
        .def_property_readonly("near", [](const Scene &s) { return s.manifest.near; })
        .def_property_readonly("far", [](const Scene &s) { return s.manifest.far; })
        .def("camera", &Scene::camera, py::arg("frame"))
        .def("image", [](const Scene &s, int i) { return from_image(s.images.at(static_cast<std::size_t>(i))); },
             py::arg("frame"))
        .def("camera_centers", &Scene::camera_centers);
    m.def("load_scene", &load_scene, py::arg("dir"));
    m.def(
        "generate_scene",
        [](std::uint64_t seed, int gaussians, int cameras, const std::string &trajectory, int width, int height,
           const std::string &out_dir) {
            SyntheticSceneSpec spec;
            spec.seed = seed;
            spec.gaussians = gaussians;
            spec.cameras = cameras;
            spec.trajectory = trajectory_from_name(trajectory);
            spec.width = width;
            spec.height = height;
            SyntheticScene s = generate_synthetic_scene(spec, out_dir);
            return py::make_tuple(std::move(s.scene), std::move(s.truth));
        },
        py::arg("seed") = 0, py::arg("gaussians") = 200, py::arg("cameras") = 8, py::arg("trajectory") = "orbit",
        py::arg("width") = 64, py::arg("height") = 64, py::arg("out_dir") = "");

    m.def(
        "depth_planes",
        [](double near, double far, int count, const std::string &spacing) {
            return depth_planes(near, far, count, spacing_from(spacing)).values;
        },
        py::arg("near"), py::arg("far"), py::arg("count"), py::arg("spacing") = "uniform");

    m.def(
        "extract_features", [](const Array &image, int scale) {
            return from_feature_map(extract_features(to_image_checked(image), scale));
        },
        py::arg("image"), py::arg("scale") = 4, "Block statistics as a C×H×W array.");

    m.def(
        "render",
        [](const GaussianCloud &cloud, const Camera &camera, int threads) {
            RasterOptions o;
            o.threads = threads;
            return render_dict(rasterize(cloud, camera, o));
        },
        py::arg("cloud"), py::arg("camera"), py::arg("threads") = 1);

    m.def("fps", &fps, py::arg("positions"), py::arg("count"));
    m.def(
        "evaluation_split",
        [](const std::vector<Eigen::Vector3d> &positions, int span, int inputs, int targets) {
            const SelectionPlan p = evaluation_split(positions, span, inputs, targets);
            return py::make_tuple(p.input_indices, p.target_indices);
        },
        py::arg("positions"), py::arg("span"), py::arg("inputs") = 5, py::arg("targets") = 56);
    m.def("curriculum", [](long long step) { return curriculum(step); }, py::arg("step"));
    m.def("window_partition", &window_partition, py::arg("frame_count"), py::arg("window") = 14);

    m.def(
        "alpha_bar", [](const std::string &name, int steps) { return NoiseSchedule::from_name(name, steps).alpha_bar; },
        py::arg("schedule") = "cosine", py::arg("steps") = 1000);

    m.def(
        "psnr", [](const Array &a, const Array &b) { return psnr(to_image_checked(a), to_image_checked(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "ssim", [](const Array &a, const Array &b) { return ssim(to_image_checked(a), to_image_checked(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "histogram_match",
        [](const Array &src, const Array &ref) {
            return from_image(histogram_match(to_image_checked(src), to_image_checked(ref)));
        },
        py::arg("src"), py::arg("ref"));

    m.def(
        "run_pipeline",
        [](const Scene &scene, const std::string &config_json) {
            const PipelineConfig cfg = PipelineConfig::from_json(config_json);
            const RenderTargets rt = choose_targets(scene, cfg);
            PipelineResult r;
            {
                py::gil_scoped_release release;
                r = forward_pipeline(scene, rt.input_frames, rt.cameras, cfg);
            }
            py::list outputs, renders;
            for (const Image &img : r.outputs) outputs.append(from_image(img));
            for (const RenderOutput &ro : r.renders) renders.append(render_dict(ro));
            py::dict d;
            d["inputs"] = rt.input_frames;
            d["target_frames"] = rt.frames;
            d["outputs"] = outputs;
            d["renders"] = renders;
            d["cloud"] = std::move(r.cloud);
            return d;
        },
        py::arg("scene"), py::arg("config_json") = "{}");

    m.def(
        "fit_demo",
        [](const Array &target, const GaussianCloud &initial, const Camera &camera, int steps, double lr) {
            FitOptions o;
            o.steps = steps;
            o.lr = lr;
            FitResult r = fit_demo(to_image_checked(target), initial, camera, o);
            return py::make_tuple(std::move(r.cloud), r.loss_curve);
        },
        py::arg("target"), py::arg("initial"), py::arg("camera"), py::arg("steps") = 100, py::arg("lr") = 10.0);
}
