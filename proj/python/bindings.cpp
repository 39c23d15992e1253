#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <string>
#include <vector>

#include "flock/aggregate.hpp"
#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/ingest.hpp"
#include "flock/seqnet/checkpoint.hpp"
#include "flock/seqnet/model.hpp"
#include "flock/types.hpp"

namespace py = pybind11;
using namespace flock;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Point2> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw py::value_error("expected an (n, 2) array of positions");
  std::vector<Point2> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
  return out;
}

// rows of (t_ms, id, x, y, v, motion, face)
std::vector<TrajectoryPoint> to_block(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 7) throw py::value_error("expected an (L, 7) array of trajectory records");
  std::vector<TrajectoryPoint> out;
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    out.push_back(TrajectoryPoint::make(static_cast<TimestampMs>(std::llround(r(i, 0))),
                                        static_cast<AgentId>(std::llround(r(i, 1))), r(i, 2), r(i, 3), r(i, 4),
                                        r(i, 5), r(i, 6)));
  return out;
}

DtwMode mode_from(const std::string& s) { return dtw_mode_from(s); }

}  // namespace

PYBIND11_MODULE(_flockdet, m) {
  m.doc() = "Pairwise trajectory classification and flock aggregation";

  // subclasses first so the most specific translator wins
  static py::exception<Error> base(m, "FlockError", PyExc_RuntimeError);
  py::register_exception<ConfigMismatch>(m, "ConfigMismatch", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigMismatch&) {
      throw;
    } catch (const CheckpointError&) {
      throw;
    } catch (const Error& e) {
      base(e.what());
    }
  });

  m.attr("FEATURE_NAMES") = [] {
    std::vector<std::string> v;
    for (int c = 0; c < kFeatureCount; ++c) v.emplace_back(feature_name(c));
    return v;
  }();

  m.def("normalize_angle", &normalize_angle, py::arg("theta"));

  m.def(
      "dtw_distance", [](const Array& a, const Array& b) { return dtw_distance(to_points(a), to_points(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "fast_dtw_distance",
      [](const Array& a, const Array& b, int radius) { return fast_dtw_distance(to_points(a), to_points(b), radius); },
      py::arg("a"), py::arg("b"), py::arg("radius") = 1);

  m.def(
      "featurize_pair",
      [](const Array& a, const Array& b, const std::string& mode) {
        return featurize_pair(to_block(a), to_block(b), mode_from(mode));
      },
      py::arg("block_a"), py::arg("block_b"), py::arg("dtw_mode") = "full_broadcast");

  m.def(
      "aggregate_flocks",
      [](const std::vector<std::tuple<AgentId, AgentId, double, int>>& preds, const std::vector<AgentId>& members) {
        std::vector<PairPrediction> p;
        for (const auto& [a, b, prob, flag] : preds) p.push_back({a, b, prob, flag});
        const auto fs = aggregate_flocks(p, members);
        return py::make_tuple(fs.flocks, fs.singletons);
      },
      py::arg("predictions"), py::arg("members"),
      "predictions are (agent_a, agent_b, probability, is_flock) with agent_a < agent_b");

  m.def(
      "generate_synthetic",
      [](const std::map<std::string, std::string>& overrides) {
        const Dataset d = generate_synthetic(synthetic_config_from(KeyValues(overrides.begin(), overrides.end())));
        py::dict tracks;
        for (const auto& [id, tr] : d.trajectories) {
          py::array_t<double> rows({static_cast<py::ssize_t>(tr.points.size()), py::ssize_t{7}});
          auto w = rows.mutable_unchecked<2>();
          for (py::ssize_t i = 0; i < rows.shape(0); ++i) {
            const auto& p = tr.points[static_cast<std::size_t>(i)];
            w(i, 0) = static_cast<double>(p.timestamp_ms);
            w(i, 1) = static_cast<double>(p.agent_id);
            w(i, 2) = p.x_mm;
            w(i, 3) = p.y_mm;
            w(i, 4) = p.velocity_mm_s;
            w(i, 5) = p.motion_angle_rad;
            w(i, 6) = p.face_angle_rad;
          }
          tracks[py::int_(id)] = rows;
        }
        py::list groups;
        for (const auto& g : d.groups) groups.append(py::make_tuple(g.pedestrian_id, g.group_size, g.partner_ids));
        return py::make_tuple(tracks, groups);
      },
      py::arg("overrides") = std::map<std::string, std::string>{},
      "Returns ({id: (n, 7) records}, [(id, size, partners)]).");

  py::class_<seqnet::SequenceModel>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return seqnet::load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const seqnet::SequenceModel& s, const std::filesystem::path& p) { seqnet::save_checkpoint(s, p); },
           py::arg("path"))
      .def_property_readonly("arch", [](const seqnet::SequenceModel& s) { return seqnet::to_string(s.config.arch); })
      .def_property_readonly("sequence_length",
                             [](const seqnet::SequenceModel& s) { return s.config.sequence_length; })
      .def("forward",
           [](const seqnet::SequenceModel& s, const Eigen::MatrixXd& features) { return seqnet::forward(s, features); },
           py::arg("features"), "Probability for an unscaled (L, 6) feature matrix.")
      .def(
          "predict_pair",
          [](const seqnet::SequenceModel& s, const Array& a, const Array& b, double threshold) {
            const auto r = seqnet::predict_pair(s, to_block(a), to_block(b), threshold);
            return py::make_tuple(r.probability, r.label);
          },
          py::arg("block_a"), py::arg("block_b"), py::arg("threshold") = 0.9);
}
