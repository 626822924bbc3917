#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "grace/error.hpp"
#include "grace/oracle.hpp"
#include "grace/pipeline.hpp"
#include "grace/proxy_engine.hpp"
#include "grace/trace_data.hpp"
#include "grace/valuation.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

grace::ScoringConfig make_config(double alpha, const std::string& history, const std::string& target,
                                 const std::string& zero_vector) {
  grace::ScoringConfig c;
  c.alpha = alpha;
  c.history = grace::HistoryScheme::parse(history);
  c.target = grace::parse_target_mode(target);
  c.zero_vector = grace::parse_zero_vector_policy(zero_vector);
  c.validate();
  return c;
}

py::dict record_to_dict(const grace::SignalRecord& r) {
  const auto k = static_cast<py::ssize_t>(r.num_steps());
  const auto d = static_cast<py::ssize_t>(r.hidden_dim);
  F32Array steps({k, d});
  std::copy(r.step_data.begin(), r.step_data.end(), steps.mutable_data());
  F32Array answer(d);
  std::copy(r.answer_proxy.begin(), r.answer_proxy.end(), answer.mutable_data());
  py::dict out;
  out["sample_id"] = r.sample_id;
  out["checkpoint_id"] = r.checkpoint_id;
  out["steps"] = steps;
  out["answer"] = answer;
  if (r.token_level) {
    std::vector<std::uint32_t> idx;
    F32Array values({static_cast<py::ssize_t>(r.token_level->size()), d});
    auto* p = values.mutable_data();
    for (const auto& t : *r.token_level) {
      idx.push_back(t.token_index);
      p = std::copy(t.values.begin(), t.values.end(), p);
    }
    out["token_indices"] = idx;
    out["token_values"] = values;
  } else {
    out["token_indices"] = py::none();
    out["token_values"] = py::none();
  }
  return out;
}

grace::SignalRecord record_from_dict(const py::dict& d) {
  grace::SignalRecord r;
  r.sample_id = d["sample_id"].cast<std::string>();
  const auto steps = d["steps"].cast<F32Array>();
  const auto answer = d["answer"].cast<F32Array>();
  if (steps.ndim() != 2) throw grace::InputError("steps must be a (K, d) array");
  if (answer.ndim() != 1 || answer.shape(0) != steps.shape(1)) throw grace::InputError("answer must have length d");
  r.hidden_dim = static_cast<std::uint32_t>(steps.shape(1));
  r.step_data.assign(steps.data(), steps.data() + steps.size());
  r.answer_proxy.assign(answer.data(), answer.data() + answer.size());
  if (d.contains("token_indices") && !d["token_indices"].is_none()) {
    const auto idx = d["token_indices"].cast<std::vector<std::uint32_t>>();
    const auto values = d["token_values"].cast<F32Array>();
    if (values.ndim() != 2 || values.shape(0) != static_cast<py::ssize_t>(idx.size()) ||
        values.shape(1) != steps.shape(1)) {
      throw grace::InputError("token_values must be a (T, d) array matching token_indices");
    }
    std::vector<grace::TokenSignal> tokens;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* row = values.data() + i * r.hidden_dim;
      tokens.push_back({idx[i], std::vector<float>(row, row + r.hidden_dim)});
    }
    r.token_level = std::move(tokens);
  }
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Step-level scoring and selection of reasoning traces (native core)";

  py::register_exception<grace::InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<grace::ZeroVectorError>(m, "ZeroVectorError", PyExc_ArithmeticError);

  m.def(
      "score",
      [](const fs::path& samples, const std::vector<std::pair<std::string, fs::path>>& signals, double alpha,
         const std::string& history, const std::string& target, const std::string& zero_vector, bool strict,
         std::size_t jobs) {
        std::vector<grace::SignalSource> sources;
        for (const auto& [id, path] : signals) sources.push_back({id, path});
        const auto config = make_config(alpha, history, target, zero_vector);
        std::ostringstream out;
        {
          py::gil_scoped_release release;
          grace::write_scores(grace::run_scoring(samples, sources, config, strict, jobs), out);
        }
        return out.str();
      },
      py::arg("samples"), py::arg("signals"), py::arg("alpha") = 0.7, py::arg("history") = "uniform",
      py::arg("target") = "answer", py::arg("zero_vector") = "score_zero", py::arg("strict") = true,
      py::arg("jobs") = 1, "Score a samples file against tagged GSIG dumps; returns the scores JSONL text.");

  m.def(
      "select_top",
      [](const std::map<std::string, double>& values, double rho) {
        const auto s = grace::select_top(values, rho);
        std::vector<std::pair<std::string, double>> ranked;
        for (const auto& e : s.ranked) ranked.emplace_back(e.sample_id, e.value);
        py::dict out;
        out["budget"] = s.budget;
        out["selected"] = s.selected_ids;
        out["ranked"] = ranked;
        return out;
      },
      py::arg("values"), py::arg("rho"));

  m.def("selection_budget", &grace::selection_budget, py::arg("n"), py::arg("rho"));

  m.def(
      "history_weights",
      [](std::size_t k, const std::string& scheme) {
        return grace::materialize_weights(k, grace::HistoryScheme::parse(scheme)).weights;
      },
      py::arg("k"), py::arg("scheme") = "uniform");

  m.def(
      "cosine",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& zero_vector) {
        return grace::cosine(a, b, grace::parse_zero_vector_policy(zero_vector));
      },
      py::arg("a"), py::arg("b"), py::arg("zero_vector") = "score_zero");

  m.def(
      "upstream_signal",
      [](const std::vector<double>& probs, std::size_t target, const Eigen::MatrixXd& w_out) {
        return grace::upstream_signal(probs, target, grace::OutputProjection(w_out));
      },
      py::arg("probs"), py::arg("target"), py::arg("w_out"), "u = W_out (p - onehot(target)); W_out is (d, V).");

  m.def(
      "aggregate_token_level",
      [](const std::string& sample_line, const std::vector<std::uint32_t>& token_indices, const F32Array& values,
         const std::string& checkpoint_id) {
        const auto sample = grace::parse_sample_line(sample_line);
        if (values.ndim() != 2 || values.shape(0) != static_cast<py::ssize_t>(token_indices.size())) {
          throw grace::InputError("values must be a (T, d) array matching token_indices");
        }
        const auto d = static_cast<std::uint32_t>(values.shape(1));
        std::vector<grace::TokenSignal> tokens;
        for (std::size_t i = 0; i < token_indices.size(); ++i) {
          const float* row = values.data() + i * d;
          tokens.push_back({token_indices[i], std::vector<float>(row, row + d)});
        }
        return record_to_dict(grace::aggregate_token_level(sample, std::move(tokens), d, checkpoint_id));
      },
      py::arg("sample_line"), py::arg("token_indices"), py::arg("values"), py::arg("checkpoint_id"),
      "Segment means of per-token signals for one sample (a samples JSONL line).");

  m.def(
      "read_signals",
      [](const fs::path& path, const std::string& checkpoint_id) {
        py::list out;
        for (const auto& r : grace::read_signals(path, checkpoint_id)) out.append(record_to_dict(r));
        return out;
      },
      py::arg("path"), py::arg("checkpoint_id") = "ckpt0");

  m.def(
      "write_signals",
      [](const py::list& records, const fs::path& path) {
        std::vector<grace::SignalRecord> rs;
        for (const auto& r : records) rs.push_back(record_from_dict(r.cast<py::dict>()));
        grace::write_signals(rs, path);
      },
      py::arg("records"), py::arg("path"));

  m.def(
      "validate",
      [](std::uint64_t seed) {
        py::gil_scoped_release release;
        return grace::oracle::run_validation_suite(seed).to_json().dump(2);
      },
      py::arg("seed") = 20240601, "Run the exact-gradient oracle suite; returns the report JSON.");
}
