#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "hdnet/checkpoint.hpp"
#include "hdnet/io.hpp"
#include "hdnet/trainer.hpp"

namespace py = pybind11;
using namespace hdnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() < 1 || a.ndim() > 3)
        throw ValidationError("expected a 1-3 dimensional array");
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<int>(a.shape(i)));
    Tensor t(shape);
    std::copy(a.data(), a.data() + t.size(), t.data());
    return t;
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

gt::PointAnnotationSet to_annotations(const std::vector<std::pair<double, double>>& points,
                                      int width, int height) {
    gt::PointAnnotationSet ann;
    ann.width = width;
    ann.height = height;
    ann.points = points;
    return ann;
}

gt::GTConfig make_gt_config(double sigma, double epsilon,
                            const std::vector<double>& thresholds) {
    gt::GTConfig cfg;
    cfg.sigma = sigma;
    cfg.kernel_truncation_radius = static_cast<int>(std::ceil(4.0 * sigma));
    cfg.background_epsilon = epsilon;
    cfg.level_thresholds = thresholds;
    return cfg;
}

// Inference-oriented wrapper around a checkpointed model.
class Model {
public:
    explicit Model(const std::filesystem::path& checkpoint)
        : model_(load_model(checkpoint)) {}

    py::dict infer(const Array& image) {
        Tensor img = to_tensor(image);
        if (img.ndim() != 2) throw ValidationError("image must be 2-D");
        auto fwd = model_->forward(img, /*training=*/false);
        py::dict out;
        out["count"] = fwd.predicted_count();
        out["density"] = to_array(fwd.final_density->value);
        out["masks"] = to_array(fwd.masks->value);
        py::list heads;
        for (const auto& h : fwd.head_maps) heads.append(to_array(h->value));
        out["head_maps"] = heads;
        return out;
    }

    int num_levels() const { return model_->config().num_levels; }
    int spatial_divisor() const { return model_->config().spatial_divisor(); }

private:
    std::unique_ptr<HDNet> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hierarchically decoupled crowd-counting core operations";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FileError>(m, "FileError", PyExc_IOError);

    m.def(
        "rasterize_density",
        [](const std::vector<std::pair<double, double>>& points, int width, int height,
           double sigma) {
            auto ann = to_annotations(points, width, height);
            return to_array(
                gt::rasterize_density(ann, make_gt_config(sigma, 1e-3, {})).values);
        },
        py::arg("points"), py::arg("width"), py::arg("height"), py::arg("sigma") = 15.0,
        "Full-resolution density map whose sum equals the number of points");

    m.def(
        "pool_to_model_resolution",
        [](const Array& density, int divisor) {
            gt::DensityMap map;
            map.values = to_tensor(density);
            return to_array(gt::pool_to_model_resolution(map, divisor).values);
        },
        py::arg("density"), py::arg("divisor") = 4,
        "Sum-pool a density map by the given factor (count preserving)");

    m.def(
        "build_level_masks",
        [](const Array& pooled, const std::vector<double>& thresholds, int num_levels,
           double epsilon) {
            gt::DensityMap map;
            map.values = to_tensor(pooled);
            map.resolution_divisor = 4;
            auto cfg = make_gt_config(15.0, epsilon, thresholds);
            return to_array(gt::build_level_masks(map, cfg, num_levels).labels);
        },
        py::arg("pooled"), py::arg("thresholds"), py::arg("num_levels"),
        py::arg("epsilon") = 1e-3,
        "Per-cell density-level labels (0 = background, 1..n = level)");

    m.def(
        "quantile_thresholds",
        [](const std::vector<Array>& pooled_maps, int num_levels, double epsilon) {
            std::vector<gt::DensityMap> maps;
            for (const auto& a : pooled_maps) {
                gt::DensityMap map;
                map.values = to_tensor(a);
                maps.push_back(std::move(map));
            }
            return gt::quantile_thresholds(maps, epsilon, num_levels);
        },
        py::arg("pooled_maps"), py::arg("num_levels"), py::arg("epsilon") = 1e-3);

    m.def(
        "soft_masks",
        [](const Array& logits) {
            return to_array(soft_masks(ag::constant(to_tensor(logits)))->value);
        },
        py::arg("logits"), "Channel softmax over (n+1, H, W) logits");

    m.def(
        "fuse_density",
        [](const std::vector<Array>& heads, const Array& masks, bool use_soft_masks) {
            std::vector<ag::Var> hs;
            for (const auto& h : heads) hs.push_back(ag::constant(to_tensor(h)));
            return to_array(
                fuse_density(hs, ag::constant(to_tensor(masks)), use_soft_masks)->value);
        },
        py::arg("heads"), py::arg("masks"), py::arg("use_soft_masks") = true,
        "Final density: sum of per-level maps weighted by mask channels 1..n");

    m.def(
        "evaluate_counts",
        [](const std::vector<double>& gt_counts, const std::vector<double>& predicted) {
            if (gt_counts.size() != predicted.size())
                throw ValidationError("evaluate_counts: length mismatch");
            std::vector<CountRecord> records;
            for (size_t i = 0; i < gt_counts.size(); ++i)
                records.push_back({std::to_string(i), gt_counts[i], predicted[i]});
            auto r = evaluate(records);
            py::dict out;
            out["mae"] = r.mae;
            out["mse"] = r.mse;
            out["n"] = r.n;
            return out;
        },
        py::arg("gt_counts"), py::arg("predicted"),
        "MAE and (root-mean-square) MSE over paired counts");

    m.def(
        "synthetic_scene",
        [](uint64_t seed, int width, int height) {
            auto scene = gt::standard_scene(seed, width, height);
            py::list pts;
            for (const auto& [x, y] : scene.annotations.points)
                pts.append(py::make_tuple(x, y));
            return py::make_tuple(to_array(scene.image), pts);
        },
        py::arg("seed"), py::arg("width") = 64, py::arg("height") = 64,
        "Deterministic synthetic crowd scene: (image, [(x, y), ...])");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
        .def("infer", &Model::infer, py::arg("image"))
        .def_property_readonly("num_levels", &Model::num_levels)
        .def_property_readonly("spatial_divisor", &Model::spatial_divisor);
}
