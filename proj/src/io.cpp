#include "flowprune/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flowprune/zoo.hpp"

namespace flowprune {

namespace {

json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::invalid_argument("expected a number, got '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_num(const json& j, const char* key, double& out) {
  if (j.contains(key)) out = get_num(j.at(key));
}

std::string loss_name(LossKind k) { return k == LossKind::Mse ? "mse" : "cross_entropy"; }

LossKind loss_from_name(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

json to_json(const LayerCount& c) { return json::array({c.layer, c.total, c.remaining}); }

LayerCount layer_count_from_json(const json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

Format format_from_string(const std::string& name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  throw std::invalid_argument("unknown format '" + name + "'");
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

json to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) {
    json e;
    e["kind"] = to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Dense:
        e["units"] = l.units;
        e["bias"] = l.bias;
        break;
      case LayerKind::Conv2d:
        e["units"] = l.units;
        e["kernel"] = l.kernel;
        e["stride"] = l.stride;
        e["padding"] = l.padding;
        e["bias"] = l.bias;
        break;
      case LayerKind::MaxPool:
        e["kernel"] = l.kernel;
        e["stride"] = l.stride;
        break;
      case LayerKind::BatchNorm: e["eps"] = l.bn_eps; break;
      case LayerKind::ResidualAdd: e["from"] = l.skip_from; break;
      case LayerKind::Relu:
      case LayerKind::Flatten: break;
    }
    layers.push_back(std::move(e));
  }
  return {{"input_shape", spec.input_shape}, {"layers", layers}};
}

NetworkSpec network_from_json(const json& j) {
  if (j.is_string()) return zoo::by_name(j.get<std::string>());
  reject_unknown(j, {"input_shape", "layers"}, "network");
  std::vector<LayerSpec> layers;
  for (const json& e : j.at("layers")) {
    reject_unknown(e, {"kind", "units", "kernel", "stride", "padding", "bias", "eps", "from"}, "layer");
    LayerSpec l;
    l.kind = layer_kind_from_string(e.at("kind").get<std::string>());
    read_opt(e, "units", l.units);
    read_opt(e, "kernel", l.kernel);
    read_opt(e, "stride", l.stride);
    read_opt(e, "padding", l.padding);
    read_opt(e, "bias", l.bias);
    read_opt(e, "eps", l.bn_eps);
    read_opt(e, "from", l.skip_from);
    if (l.kind == LayerKind::MaxPool && !e.contains("stride")) l.stride = l.kernel;
    layers.push_back(l);
  }
  return make_network(j.at("input_shape").get<Shape>(), std::move(layers));
}

json to_json(const Mask& mask) {
  json j = json::array();
  for (const auto& layer : mask.keep) {
    std::string bits(layer.size(), '0');
    for (std::size_t i = 0; i < layer.size(); ++i)
      if (layer[i]) bits[i] = '1';
    j.push_back(bits);
  }
  return j;
}

Mask mask_from_json(const json& j) {
  Mask mask;
  for (const json& e : j) {
    const std::string bits = e.get<std::string>();
    std::vector<std::uint8_t> layer(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != '0' && bits[i] != '1') throw std::invalid_argument("mask bits must be 0 or 1");
      layer[i] = bits[i] == '1';
    }
    mask.keep.push_back(std::move(layer));
  }
  return mask;
}

json to_json(const PruneReport& r) {
  json iterations = json::array();
  for (const IterationRecord& it : r.iterations) {
    json layers = json::array();
    for (const LayerCount& c : it.layers) layers.push_back(to_json(c));
    iterations.push_back({{"iteration", it.iteration},
                          {"keep_fraction", num(it.keep_fraction)},
                          {"target", it.target},
                          {"noop", it.noop},
                          {"threshold", num(it.threshold)},
                          {"prune_size", num(it.prune_size)},
                          {"min_cut_size", num(it.min_cut_size)},
                          {"prune_cut_ratio", num(it.prune_cut_ratio)},
                          {"layers", layers}});
  }
  return {{"scorer", r.scorer},
          {"schedule",
           {{"ratio", num(r.schedule.ratio)},
            {"iterations", r.schedule.iterations},
            {"kind", to_string(r.schedule.kind)}}},
          {"total", r.total},
          {"passes", r.passes},
          {"collapsed", r.collapsed},
          {"collapsed_layers", r.collapsed_layers},
          {"iterations", iterations},
          {"final_mask", to_json(r.final_mask)}};
}

PruneReport prune_report_from_json(const json& j) {
  PruneReport r;
  r.scorer = j.at("scorer").get<std::string>();
  const json& s = j.at("schedule");
  r.schedule.ratio = get_num(s.at("ratio"));
  r.schedule.iterations = s.at("iterations").get<std::size_t>();
  r.schedule.kind = schedule_kind_from_string(s.at("kind").get<std::string>());
  r.total = j.at("total").get<std::size_t>();
  r.passes = j.at("passes").get<std::size_t>();
  r.collapsed = j.at("collapsed").get<bool>();
  r.collapsed_layers = j.at("collapsed_layers").get<std::vector<std::size_t>>();
  for (const json& e : j.at("iterations")) {
    IterationRecord it;
    it.iteration = e.at("iteration").get<std::size_t>();
    it.keep_fraction = get_num(e.at("keep_fraction"));
    it.target = e.at("target").get<std::size_t>();
    it.noop = e.at("noop").get<bool>();
    it.threshold = get_num(e.at("threshold"));
    it.prune_size = get_num(e.at("prune_size"));
    it.min_cut_size = get_num(e.at("min_cut_size"));
    it.prune_cut_ratio = get_num(e.at("prune_cut_ratio"));
    for (const json& c : e.at("layers")) it.layers.push_back(layer_count_from_json(c));
    r.iterations.push_back(std::move(it));
  }
  r.final_mask = mask_from_json(j.at("final_mask"));
  return r;
}

std::string prune_report_csv(const PruneReport& r) {
  std::ostringstream out;
  out << "iteration,layer,remaining,total,prune_size,min_cut_size\n";
  for (const IterationRecord& it : r.iterations)
    for (const LayerCount& c : it.layers)
      out << it.iteration << ',' << c.layer << ',' << c.remaining << ',' << c.total << ','
          << format_double(it.prune_size) << ',' << format_double(it.min_cut_size) << '\n';
  return out.str();
}

json to_json(const SweepReport& r) {
  json cells = json::array();
  for (const SweepCell& c : r.cells) {
    json layers = json::array();
    for (const LayerCount& lc : c.layers) layers.push_back(to_json(lc));
    cells.push_back({{"scorer", c.scorer},
                     {"iterations", c.iterations},
                     {"ratio", num(c.ratio)},
                     {"seed", c.seed},
                     {"collapsed", c.collapsed},
                     {"collapsed_layers", c.collapsed_layers},
                     {"failed", c.failed},
                     {"error", c.error},
                     {"test_accuracy", num(c.test_accuracy)},
                     {"passes", c.passes},
                     {"remaining", c.remaining},
                     {"layers", layers}});
  }
  json summaries = json::array();
  for (const SweepSummary& s : r.summaries)
    summaries.push_back({{"scorer", s.scorer},
                         {"ratio", num(s.ratio)},
                         {"min_accuracy", num(s.min_accuracy)},
                         {"mean_accuracy", num(s.mean_accuracy)},
                         {"max_accuracy", num(s.max_accuracy)},
                         {"collapsed_runs", s.collapsed_runs},
                         {"runs", s.runs}});
  return {{"max_ratio", num(r.max_ratio)}, {"chance", num(r.chance)}, {"cells", cells}, {"summaries", summaries}};
}

SweepReport sweep_report_from_json(const json& j) {
  SweepReport r;
  r.max_ratio = get_num(j.at("max_ratio"));
  r.chance = get_num(j.at("chance"));
  for (const json& e : j.at("cells")) {
    SweepCell c;
    c.scorer = e.at("scorer").get<std::string>();
    c.iterations = e.at("iterations").get<std::size_t>();
    c.ratio = get_num(e.at("ratio"));
    c.seed = e.at("seed").get<std::uint64_t>();
    c.collapsed = e.at("collapsed").get<bool>();
    c.collapsed_layers = e.at("collapsed_layers").get<std::vector<std::size_t>>();
    c.failed = e.at("failed").get<bool>();
    c.error = e.at("error").get<std::string>();
    c.test_accuracy = get_num(e.at("test_accuracy"));
    c.passes = e.at("passes").get<std::size_t>();
    c.remaining = e.at("remaining").get<std::size_t>();
    for (const json& lc : e.at("layers")) c.layers.push_back(layer_count_from_json(lc));
    r.cells.push_back(std::move(c));
  }
  for (const json& e : j.at("summaries")) {
    SweepSummary s;
    s.scorer = e.at("scorer").get<std::string>();
    s.ratio = get_num(e.at("ratio"));
    s.min_accuracy = get_num(e.at("min_accuracy"));
    s.mean_accuracy = get_num(e.at("mean_accuracy"));
    s.max_accuracy = get_num(e.at("max_accuracy"));
    s.collapsed_runs = e.at("collapsed_runs").get<std::size_t>();
    s.runs = e.at("runs").get<std::size_t>();
    r.summaries.push_back(s);
  }
  return r;
}

std::string sweep_cells_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "scorer,iterations,ratio,seed,collapsed,collapsed_layers,failed,test_accuracy,passes,remaining,error\n";
  for (const SweepCell& c : r.cells)
    out << csv_escape(c.scorer) << ',' << c.iterations << ',' << format_double(c.ratio) << ',' << c.seed << ','
        << int(c.collapsed) << ',' << join_indices(c.collapsed_layers) << ',' << int(c.failed) << ','
        << format_double(c.test_accuracy) << ',' << c.passes << ',' << c.remaining << ','
        << csv_escape(c.error) << '\n';
  return out.str();
}

std::string sweep_layers_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "scorer,ratio,seed,layer,remaining,total,fraction\n";
  for (const SweepCell& c : r.cells)
    for (const LayerCount& lc : c.layers)
      out << csv_escape(c.scorer) << ',' << format_double(c.ratio) << ',' << c.seed << ',' << lc.layer << ','
          << lc.remaining << ',' << lc.total << ',' << format_double(lc.fraction()) << '\n';
  return out.str();
}

std::string sweep_summary_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "scorer,ratio,min_accuracy,mean_accuracy,max_accuracy,collapsed_runs,runs\n";
  for (const SweepSummary& s : r.summaries)
    out << csv_escape(s.scorer) << ',' << format_double(s.ratio) << ',' << format_double(s.min_accuracy) << ','
        << format_double(s.mean_accuracy) << ',' << format_double(s.max_accuracy) << ',' << s.collapsed_runs
        << ',' << s.runs << '\n';
  return out.str();
}

json to_json(const ConservationReport& r) {
  json units = json::array();
  for (const UnitConservation& u : r.units)
    units.push_back({{"layer", u.layer},
                     {"channel", u.channel},
                     {"s_in", num(u.s_in)},
                     {"s_out", num(u.s_out)},
                     {"residual", num(u.residual)},
                     {"relative", num(u.relative)}});
  json cuts = json::array();
  for (const CutConservation& c : r.cuts)
    cuts.push_back({{"layer", c.layer},
                    {"weight_total", num(c.weight_total)},
                    {"downstream_bias", num(c.downstream_bias)},
                    {"skip_total", num(c.skip_total)},
                    {"cut_total", num(c.cut_total)},
                    {"relative_to_output", num(c.relative_to_output)},
                    {"relative_to_input", num(c.relative_to_input)}});
  return {{"objective", num(r.objective)},
          {"output_flux", num(r.output_flux)},
          {"input_flux", num(r.input_flux)},
          {"bias_total", num(r.bias_total)},
          {"max_relative_residual", num(r.max_relative_residual)},
          {"tolerance", num(r.tolerance)},
          {"pass", r.pass()},
          {"units", units},
          {"cuts", cuts}};
}

std::string units_csv(const ConservationReport& r) {
  std::ostringstream out;
  out << "layer,channel,s_in,s_out,residual,relative\n";
  for (const UnitConservation& u : r.units)
    out << u.layer << ',' << u.channel << ',' << format_double(u.s_in) << ',' << format_double(u.s_out) << ','
        << format_double(u.residual) << ',' << format_double(u.relative) << '\n';
  return out.str();
}

std::string cuts_csv(const ConservationReport& r) {
  std::ostringstream out;
  out << "layer,weight_total,downstream_bias,skip_total,cut_total,output_flux,input_cut\n";
  for (const CutConservation& c : r.cuts)
    out << c.layer << ',' << format_double(c.weight_total) << ',' << format_double(c.downstream_bias) << ','
        << format_double(c.skip_total) << ',' << format_double(c.cut_total) << ','
        << format_double(r.output_flux) << ',' << format_double(r.input_cut()) << '\n';
  return out.str();
}

json to_json(const ScoreSizeLaw& law) {
  json layers = json::array();
  for (const LayerScoreSize& l : law.layers)
    layers.push_back({{"layer", l.layer},
                      {"size", l.size},
                      {"average", num(l.average)},
                      {"inverse_size", num(l.inverse_size)},
                      {"product", num(l.product)}});
  return {{"method", law.method}, {"max_relative_spread", num(law.max_relative_spread)}, {"layers", layers}};
}

std::string score_size_csv(const std::vector<ScoreSizeLaw>& laws) {
  std::ostringstream out;
  out << "method,layer,size,inverse_size,average_score,average_times_size\n";
  for (const ScoreSizeLaw& law : laws)
    for (const LayerScoreSize& l : law.layers)
      out << csv_escape(law.method) << ',' << l.layer << ',' << l.size << ',' << format_double(l.inverse_size)
          << ',' << format_double(l.average) << ',' << format_double(l.product) << '\n';
  return out.str();
}

json to_json(const FlowConservationTrace& t) {
  json series = json::array();
  for (std::size_t i = 0; i < t.layers.size(); ++i)
    series.push_back({{"layer", t.layers[i]}, {"sq_norm", t.sq_norms[i]}, {"difference", t.differences[i]}});
  return {{"step_size", num(t.step_size)},
          {"steps", t.steps},
          {"record_every", t.record_every},
          {"recorded_steps", t.recorded_steps},
          {"loss", t.loss},
          {"drift", num(t.drift())},
          {"layers", series}};
}

std::string flow_csv(const FlowConservationTrace& t) {
  std::ostringstream out;
  out << "step,layer,sq_norm,difference,loss\n";
  for (std::size_t s = 0; s < t.recorded_steps.size(); ++s)
    for (std::size_t i = 0; i < t.layers.size(); ++i)
      out << t.recorded_steps[s] << ',' << t.layers[i] << ',' << format_double(t.sq_norms[i][s]) << ','
          << format_double(t.differences[i][s]) << ',' << format_double(t.loss[s]) << '\n';
  return out.str();
}

json to_json(const FlowScalingCheck& c) {
  return {{"lr", num(c.lr)},
          {"steps", c.steps},
          {"drift_full", num(c.drift_full)},
          {"drift_half", num(c.drift_half)},
          {"ratio", num(c.ratio)},
          {"fixed_step_ratio", num(c.fixed_step_ratio)},
          {"factor", num(c.factor)},
          {"pass", c.pass()}};
}

json to_json(const BatchNormReport& r) {
  json neurons = json::array();
  for (const BatchNormNeuron& n : r.neurons)
    neurons.push_back({{"bn_layer", n.bn_layer},
                       {"channel", n.channel},
                       {"saliency_sum", num(n.saliency_sum)},
                       {"scale", num(n.scale)},
                       {"eps_term", num(n.eps_term)},
                       {"residual", num(n.residual)}});
  return {{"mode", r.mode == Mode::Train ? "train" : "eval"},
          {"max_residual", num(r.max_residual)},
          {"tolerance", num(r.tolerance)},
          {"pass", r.pass()},
          {"neurons", neurons}};
}

std::string batchnorm_csv(const BatchNormReport& r) {
  std::ostringstream out;
  out << "bn_layer,channel,saliency_sum,scale,eps_term,residual\n";
  for (const BatchNormNeuron& n : r.neurons)
    out << n.bn_layer << ',' << n.channel << ',' << format_double(n.saliency_sum) << ','
        << format_double(n.scale) << ',' << format_double(n.eps_term) << ',' << format_double(n.residual)
        << '\n';
  return out.str();
}

json to_json(const PassCount& c) {
  return {{"passes", c.passes},
          {"examples_per_iteration", c.examples_per_iteration},
          {"multiplier", c.multiplier},
          {"note", c.note}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", num(c.lr)},
          {"momentum", num(c.momentum)},
          {"weight_decay", num(c.weight_decay)},
          {"lr_drops", c.lr_drops},
          {"drop_factor", num(c.drop_factor)},
          {"loss", loss_name(c.loss)},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_drops", "drop_factor", "loss", "seed"},
                 "training");
  TrainConfig c;
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_num(j, "lr", c.lr);
  read_num(j, "momentum", c.momentum);
  read_num(j, "weight_decay", c.weight_decay);
  read_opt(j, "lr_drops", c.lr_drops);
  read_num(j, "drop_factor", c.drop_factor);
  if (j.contains("loss")) c.loss = loss_from_name(j.at("loss").get<std::string>());
  read_opt(j, "seed", c.seed);
  return c;
}

json to_json(const ExperimentConfig& c) {
  json scorers = json::array();
  for (const ScorerConfig& s : c.scorers)
    scorers.push_back({{"label", s.label},
                       {"kind", to_string(s.kind)},
                       {"iterations", s.iterations},
                       {"schedule", to_string(s.schedule)}});
  json ratios = json::array();
  for (double r : c.ratios) ratios.push_back(num(r));
  return {{"network", to_json(c.network)},
          {"scorers", scorers},
          {"ratios", ratios},
          {"grid_step", num(c.grid_step)},
          {"dataset",
           {{"classes", c.dataset.classes},
            {"samples", c.dataset.samples},
            {"test_fraction", num(c.dataset.test_fraction)},
            {"separation", num(c.dataset.separation)},
            {"seed", c.dataset.seed}}},
          {"score_examples_per_class", c.score_examples_per_class},
          {"score_sub_batch", c.score_sub_batch},
          {"loss", loss_name(c.loss)},
          {"training", to_json(c.training)},
          {"seeds", c.seeds},
          {"seed", c.seed},
          {"threads", c.threads},
          {"output_dir", c.output_dir},
          {"imp_cycles", c.imp_cycles}};
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j,
                 {"network", "scorers", "ratios", "grid_step", "dataset", "score_examples_per_class",
                  "score_sub_batch", "loss", "training", "seeds", "seed", "threads", "output_dir", "imp_cycles"},
                 "experiment");
  ExperimentConfig c;
  c.network = network_from_json(j.at("network"));
  c.dataset.classes = c.network.output_dim();
  if (j.contains("scorers")) {
    for (const json& e : j.at("scorers")) {
      ScorerConfig s;
      if (e.is_string()) {
        s.kind = scorer_kind_from_string(e.get<std::string>());
        s.label = e.get<std::string>();
      } else {
        reject_unknown(e, {"label", "kind", "iterations", "schedule"}, "scorer");
        s.kind = scorer_kind_from_string(e.at("kind").get<std::string>());
        read_opt(e, "iterations", s.iterations);
        if (e.contains("schedule")) s.schedule = schedule_kind_from_string(e.at("schedule").get<std::string>());
        s.label = e.value("label", to_string(s.kind) + (s.iterations > 1 ? "-" + std::to_string(s.iterations) : ""));
      }
      c.scorers.push_back(s);
    }
  }
  if (j.contains("ratios"))
    for (const json& r : j.at("ratios")) c.ratios.push_back(get_num(r));
  for (std::size_t i = 1; i < c.ratios.size(); ++i)
    if (!(c.ratios[i] > c.ratios[i - 1])) throw std::invalid_argument("ratio grid must be strictly increasing");
  read_num(j, "grid_step", c.grid_step);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"classes", "samples", "test_fraction", "separation", "seed"}, "dataset");
    read_opt(d, "classes", c.dataset.classes);
    read_opt(d, "samples", c.dataset.samples);
    read_num(d, "test_fraction", c.dataset.test_fraction);
    read_num(d, "separation", c.dataset.separation);
    read_opt(d, "seed", c.dataset.seed);
  }
  c.dataset.sample_shape = c.network.input_shape;
  read_opt(j, "score_examples_per_class", c.score_examples_per_class);
  read_opt(j, "score_sub_batch", c.score_sub_batch);
  if (j.contains("loss")) c.loss = loss_from_name(j.at("loss").get<std::string>());
  if (j.contains("training")) c.training = train_config_from_json(j.at("training"));
  read_opt(j, "seeds", c.seeds);
  read_opt(j, "seed", c.seed);
  read_opt(j, "threads", c.threads);
  read_opt(j, "output_dir", c.output_dir);
  read_opt(j, "imp_cycles", c.imp_cycles);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace flowprune
