#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "fadet/cli.hpp"
#include "fadet/language.hpp"
#include "fadet/metrics.hpp"
#include "fadet/model.hpp"
#include "fadet/protocols.hpp"
#include "fadet/spectral.hpp"
#include "fadet/synthetic.hpp"
#include "fadet/training.hpp"
#include "fadet/vision.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace fadet;

namespace {

using DoubleArray =
    py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& a) {
  Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor as_image(const DoubleArray& img) {
  Tensor t = tensor_from_array(img);
  if (t.rank() == 2) t = reshape(t, {t.dim(0), t.dim(1), 1});
  return t;
}

ScoredSet scored_set(const std::vector<double>& scores,
                     const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("scores and labels must have equal length");
  }
  ScoredSet set;
  for (size_t i = 0; i < scores.size(); ++i) {
    set.samples.push_back({scores[i], labels[i] != 0});
  }
  return set;
}

std::vector<Label> to_labels(const std::vector<int>& live_flags) {
  std::vector<Label> out;
  for (int v : live_flags) out.push_back(v ? Label::live : Label::fake);
  return out;
}

py::dict json_to_dict(const nlohmann::json& j) {
  py::object loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "unified face attack detection toolkit (C++ core)";
  m.attr("__version__") = "0.1.0";

  m.def(
      "fft2",
      [](const DoubleArray& img) {
        Spectrum s = fft2(as_image(img));
        return py::make_tuple(array_from_tensor(s.coeffs.real),
                              array_from_tensor(s.coeffs.imag));
      },
      py::arg("image"),
      "Centered 2-D transform of a real [H,W] or [H,W,C] image; returns "
      "(real, imag) with DC at (H//2, W//2).");

  m.def(
      "ifft2",
      [](const DoubleArray& re, const DoubleArray& im) {
        Tensor tr = tensor_from_array(re);
        Tensor ti = tensor_from_array(im);
        if (tr.rank() == 2) {
          tr = reshape(tr, {tr.dim(0), tr.dim(1), 1});
          ti = reshape(ti, {ti.dim(0), ti.dim(1), 1});
        }
        Spectrum s{{tr, ti}, tr.dim(0), tr.dim(1), tr.dim(2)};
        ComplexTensor out = ifft2(s);
        return py::make_tuple(array_from_tensor(out.real),
                              array_from_tensor(out.imag));
      },
      py::arg("real"), py::arg("imag"));

  m.def(
      "highpass_mask",
      [](int64_t height, int64_t width, double alpha) {
        HighPassMask mask = HighPassMask::make(height, width, alpha);
        py::array_t<double> out({height, width});
        std::copy(mask.values.begin(), mask.values.end(), out.mutable_data());
        return out;
      },
      py::arg("height"), py::arg("width"), py::arg("alpha"));

  m.def(
      "ffg_identity",
      [](const DoubleArray& img, double alpha) {
        return array_from_tensor(
            ffg_forward(as_image(img), alpha, FfgParams::identity()));
      },
      py::arg("image"), py::arg("alpha"),
      "Frequency-feature generation with identity transforms (high-pass "
      "filtered reconstruction).");

  m.def(
      "radial_histogram",
      [](const DoubleArray& map, int bins) {
        if (map.ndim() != 2) throw ContractError("expected a 2-D map");
        std::vector<double> values(map.data(), map.data() + map.size());
        RadialHistogram hist =
            radial_histogram(values, map.shape(0), map.shape(1), bins);
        return py::make_tuple(hist.bin_centers, hist.density);
      },
      py::arg("centered_map"), py::arg("bins") = 64);

  m.def(
      "synthesize",
      [](uint64_t seed, const std::string& subject, uint64_t index,
         const std::string& attack_type, int64_t height, int64_t width) {
        SyntheticDataSpec spec;
        spec.seed = seed;
        spec.height = height;
        spec.width = width;
        return array_from_tensor(synthesize_image(
            spec, subject, index, attack_type_from_string(attack_type)));
      },
      py::arg("seed"), py::arg("subject"), py::arg("index"),
      py::arg("attack_type"), py::arg("height") = 16, py::arg("width") = 16);

  m.def(
      "highband_fraction",
      [](const DoubleArray& img, double alpha) {
        return highband_energy_fraction(as_image(img), alpha);
      },
      py::arg("image"), py::arg("alpha") = 0.25);

  m.def(
      "acer_acc",
      [](const std::vector<double>& scores, const std::vector<int>& labels,
         double threshold) {
        ThresholdMetrics tm = acer_acc(scored_set(scores, labels), threshold);
        py::dict out;
        out["acer"] = tm.acer;
        out["acc"] = tm.acc;
        out["apcer"] = tm.apcer;
        out["bpcer"] = tm.bpcer;
        return out;
      },
      py::arg("scores"), py::arg("live_labels"), py::arg("threshold"));

  m.def(
      "roc_metrics",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        RocMetrics roc = roc_metrics(scored_set(scores, labels));
        py::dict out;
        out["auc"] = roc.auc;
        out["eer"] = roc.eer;
        out["eer_threshold"] = roc.eer_threshold;
        out["tpr_at_fpr_10"] = roc.tpr_at_fpr(0.10);
        out["tpr_at_fpr_01"] = roc.tpr_at_fpr(0.01);
        return out;
      },
      py::arg("scores"), py::arg("live_labels"));

  m.def(
      "nt_xent",
      [](const DoubleArray& feats, const std::vector<int>& labels,
         const DoubleArray& live, const DoubleArray& fake, double tau) {
        if (feats.ndim() != 2) throw ContractError("features must be [N,d]");
        std::vector<Tensor> rows;
        for (py::ssize_t i = 0; i < feats.shape(0); ++i) {
          std::vector<double> row(feats.data() + i * feats.shape(1),
                                  feats.data() + (i + 1) * feats.shape(1));
          rows.push_back(Tensor::from_data({feats.shape(1)}, std::move(row)));
        }
        return nt_xent(rows, to_labels(labels), tensor_from_array(live),
                       tensor_from_array(fake), tau)
            .item();
      },
      py::arg("features"), py::arg("live_labels"), py::arg("proto_live"),
      py::arg("proto_fake"), py::arg("tau"));

  m.def(
      "classify",
      [](const DoubleArray& x, const DoubleArray& live, const DoubleArray& fake,
         double tau) {
        Tensor probs = classify(tensor_from_array(x), tensor_from_array(live),
                                tensor_from_array(fake), tau);
        return py::make_tuple(probs.data()[0], probs.data()[1]);
      },
      py::arg("features"), py::arg("t_live"), py::arg("t_fake"),
      py::arg("tau") = 0.07);

  m.def(
      "cluster_assign",
      [](const DoubleArray& tokens, int64_t clusters) {
        Tensor t = tensor_from_array(tokens);
        Linear score;
        score.w = Tensor::zeros({t.dim(1), 1});
        score.b = Tensor::zeros({1});
        return cluster_tokens(t, clusters, score).assignment;
      },
      py::arg("tokens"), py::arg("clusters"),
      "Deterministic cosine clustering used by the compression block "
      "(uniform scores).");

  m.def(
      "write_mirror_manifest",
      [](const std::string& path) {
        save_manifest(path, make_mirror_manifest());
      },
      py::arg("path"),
      "Full-cardinality synthetic manifest matching the published protocol "
      "quotas.");

  m.def(
      "write_synthetic_manifest",
      [](const std::string& path, int64_t subjects) {
        save_manifest(path, make_synthetic_manifest(subjects, 5, 3, 5, 5));
      },
      py::arg("path"), py::arg("subjects") = 36);

  m.def(
      "build_split",
      [](const std::string& manifest_path, const std::string& protocol,
         uint64_t seed, const std::string& out_dir, int64_t scale) {
        auto manifest = load_manifest(manifest_path);
        ProtocolSpec spec = ProtocolSpec::by_name(protocol);
        if (scale > 1) spec = spec.scaled(scale);
        ProtocolSplit split = build_split(manifest, spec, seed);
        if (!out_dir.empty()) write_split(out_dir, split);
        AuditReport report = audit_split(split, manifest);
        py::dict out = json_to_dict(nlohmann::json::parse(report.to_json()));
        out["counts"] = py::make_tuple(split.train.size(), split.eval.size(),
                                       split.test.size());
        return out;
      },
      py::arg("manifest"), py::arg("protocol"), py::arg("seed") = 7,
      py::arg("out_dir") = "", py::arg("scale") = 1);

  m.def(
      "audit_split",
      [](const std::string& split_dir, const std::string& manifest_path) {
        auto manifest = load_manifest(manifest_path);
        AuditReport report = audit_split(read_split(split_dir), manifest);
        return json_to_dict(nlohmann::json::parse(report.to_json()));
      },
      py::arg("split_dir"), py::arg("manifest"));

  m.def(
      "train_run",
      [](const py::dict& overrides, const std::string& out_dir) {
        RunConfig config;
        for (auto item : overrides) {
          config.set(py::str(item.first), py::str(item.second));
        }
        std::ostringstream log;
        int code = cli::run_train(config, out_dir, log);
        if (code != 0) {
          throw std::runtime_error("training failed:\n" + log.str());
        }
        std::ifstream metrics(out_dir + "/metrics.json");
        nlohmann::json j = nlohmann::json::parse(metrics);
        py::dict out = json_to_dict(j);
        out["log"] = log.str();
        return out;
      },
      py::arg("overrides"), py::arg("out_dir"),
      "Full training run driven by config overrides; returns the parsed "
      "metrics report.");
}
