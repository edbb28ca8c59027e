// SPDX-License-Identifier: Apache-2.0
#include "mfss/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mfss/error.hpp"
#include "mfss/rng.hpp"

namespace mfss {

namespace {

using nlohmann::json;

// Typed access to one JSON object; finish() rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    MFSS_REQUIRE(j_.is_object(), ErrorKind::Config, "config: " + path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key) {
    MFSS_REQUIRE(j_.contains(key), ErrorKind::Config, "config: missing " + where(key));
    return convert<T>(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  Section sub(const std::string& key) {
    MFSS_REQUIRE(j_.contains(key), ErrorKind::Config, "config: missing " + where(key));
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  const json& node(const std::string& key) {
    MFSS_REQUIRE(j_.contains(key), ErrorKind::Config, "config: missing " + where(key));
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      MFSS_REQUIRE(seen_.count(it.key()), ErrorKind::Config, "config: unknown key " + where(it.key()));
  }

 private:
  template <typename T>
  T convert(const std::string& key) {
    seen_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      MFSS_REQUIRE(v.is_boolean(), ErrorKind::Config, "config: " + where(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if constexpr (std::is_signed_v<T>)
        MFSS_REQUIRE(v.is_number_integer(), ErrorKind::Config, "config: " + where(key) + " must be an integer");
      else
        MFSS_REQUIRE(v.is_number_unsigned() || (v.is_number_integer() && v.template get<std::int64_t>() >= 0),
                     ErrorKind::Config,
                     "config: " + where(key) + " must be a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      MFSS_REQUIRE(v.is_number(), ErrorKind::Config, "config: " + where(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      MFSS_REQUIRE(v.is_string(), ErrorKind::Config, "config: " + where(key) + " must be a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::Config, "config: " + where(key) + " has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> number_list(const json& j, const std::string& path) {
  MFSS_REQUIRE(j.is_array(), ErrorKind::Config, "config: " + path + " must be an array");
  std::vector<double> v;
  for (const auto& x : j) {
    MFSS_REQUIRE(x.is_number(), ErrorKind::Config, "config: " + path + " must contain numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

std::vector<double> per_story(const json& j, const std::string& path, std::size_t n) {
  if (j.is_number()) return std::vector<double>(n, j.get<double>());
  auto v = number_list(j, path);
  MFSS_REQUIRE(v.size() == n, ErrorKind::Config, "config: " + path + " needs one entry per story");
  return v;
}

BoucWenParams parse_bouc_wen(Section s) {
  BoucWenParams b;
  b.yield_disp = s.get<double>("yield_disp");
  b.post_yield_ratio = s.get("post_yield_ratio", b.post_yield_ratio);
  b.a = s.get("a", b.a);
  b.beta = s.get("beta", b.beta);
  b.gamma = s.get("gamma", b.gamma);
  b.n = s.get("n", b.n);
  s.finish();
  return b;
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t RunConfig::hash() const {
  json c = raw;
  c.erase("workers");
  c.erase("output_dir");
  return fnv1a64(c.dump());
}

std::string RunConfig::hash_hex() const { return hex64(hash()); }

void RunConfig::validate() const {
  MFSS_REQUIRE(version == 1, ErrorKind::Config, "config: unsupported version " + std::to_string(version));
  MFSS_REQUIRE(workers >= 1, ErrorKind::Config, "config: workers must be >= 1");
  excitation.validate();
  solver.validate();
  MFSS_REQUIRE(excitation.n_channels == structure.masses.size(), ErrorKind::Config,
               "config: excitation needs one load channel per story");
  MFSS_REQUIRE(std::abs(solver.record_dt - excitation.dt) <= 1e-12 * excitation.dt, ErrorKind::Config,
               "config: solver.record_dt must equal excitation.dt");
  StructuralModel check(structure);
  (void)check;

  MFSS_REQUIRE(n_mc >= 1000, ErrorKind::Config, "config: strata.n_mc must be >= 1000");
  MFSS_REQUIRE(strata.n_strata >= 1, ErrorKind::Config, "config: strata.n_strata must be >= 1");
  if (strata.n_strata >= 2) {
    const double tail = strata.tail_exceedance;
    MFSS_REQUIRE(tail > 0.0 && tail < 1.0, ErrorKind::Config, "config: strata.tail_exceedance must be in (0, 1)");
    if (static_cast<double>(n_mc) * tail < strata.min_tail_count) {
      std::ostringstream msg;
      msg << "config: strata.n_mc = " << n_mc << " is too small for tail exceedance " << tail
          << "; the 10^(m+2) rule asks for at least " << std::ceil(strata.min_tail_count / tail) << " samples";
      throw Error(ErrorKind::Config, msg.str());
    }
  }
  MFSS_REQUIRE(surrogate.eta > 0.0 && surrogate.eta <= 1.0, ErrorKind::Config, "config: surrogate.eta must be in (0, 1]");
  MFSS_REQUIRE(surrogate.snapshots_per_sample >= 1 && surrogate.snapshots_per_sample <= excitation.n_steps(),
               ErrorKind::Config, "config: surrogate.snapshots_per_sample must be in [1, time steps]");
  WaveletConfig::make(excitation.n_steps(), surrogate.wavelet_level, surrogate.wavelet_order);
  train.validate();
  adaptive.validate();
  MFSS_REQUIRE(adaptive.n_init * strata.n_strata >= 3 * adaptive.k_folds, ErrorKind::Config,
               "config: adaptive.n_init x n_strata is too small for k-fold cross validation (folds of >= 3)");

  MFSS_REQUIRE(!limit_states.empty(), ErrorKind::Config, "config: at least one limit state is required");
  for (const auto& l : limit_states) {
    MFSS_REQUIRE(l.threshold > 0.0, ErrorKind::Config, "config: limit state " + l.name + " needs a threshold > 0");
    MFSS_REQUIRE(l.channel < structure.masses.size(), ErrorKind::Config,
                 "config: limit state " + l.name + " refers to a missing channel");
  }
  if (consequence.kind == MeasureKind::Kernel)
    MFSS_REQUIRE(consequence.bandwidth > 0.0, ErrorKind::Config, "config: kernel bandwidth must be > 0");
  MFSS_REQUIRE(c_hf > 0.0 && c_lf > 0.0, ErrorKind::Config, "config: costs must be > 0");
  if (allocation.mode == AllocationMode::Fixed) {
    MFSS_REQUIRE(allocation.budget > 0.0, ErrorKind::Config, "config: allocation.budget must be > 0");
  } else {
    MFSS_REQUIRE(allocation.beta_target > 0.0, ErrorKind::Config, "config: allocation.beta_target must be > 0");
    MFSS_REQUIRE(allocation.n_hf_initial >= 2 && allocation.step >= 1, ErrorKind::Config,
                 "config: allocation needs n_hf_initial >= 2 and step >= 1");
  }
  MFSS_REQUIRE(baseline_n_per_stratum >= 2, ErrorKind::Config, "config: baseline.n_per_stratum must be >= 2");
  MFSS_REQUIRE(oracle_n >= 1, ErrorKind::Config, "config: oracle.n must be >= 1");
  for (auto c : curves.channels)
    MFSS_REQUIRE(c < structure.masses.size(), ErrorKind::Config, "config: curves.channels refers to a missing channel");
  if (!curves.channels.empty())
    MFSS_REQUIRE(curves.n_points >= 2 && curves.z_min > 0.0 && curves.z_max > curves.z_min, ErrorKind::Config,
                 "config: curves need n_points >= 2 and 0 < z_min < z_max");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  c.raw = j;
  Section top(j, "");
  c.version = top.get<int>("version");
  c.seed = top.get<std::uint64_t>("seed");
  c.workers = top.get<std::size_t>("workers", 1);
  c.output_dir = top.get<std::string>("output_dir", "run");

  {
    Section s = top.sub("excitation");
    auto& e = c.excitation;
    e.n_channels = s.get<std::size_t>("n_channels");
    e.dt = s.get<double>("dt");
    e.duration = s.get<double>("duration");
    e.n_freq = s.get<std::size_t>("n_freq");
    e.coherence_decay = s.get("coherence_decay", 0.0);
    const json& psd = s.node("psd");
    auto one = [&](const json& p, const std::string& path) {
      Section ps(p, path);
      PsdParams q{ps.get<double>("intensity"), ps.get<double>("corner_hz")};
      ps.finish();
      return q;
    };
    if (psd.is_array()) {
      for (std::size_t i = 0; i < psd.size(); ++i) e.psd.push_back(one(psd[i], "excitation.psd[" + std::to_string(i) + "]"));
    } else {
      e.psd.assign(e.n_channels, one(psd, "excitation.psd"));
    }
    if (s.has("envelope")) {
      Section ev = s.sub("envelope");
      e.envelope.ramp_up_s = ev.get("ramp_up_s", 0.0);
      e.envelope.ramp_down_s = ev.get("ramp_down_s", 0.0);
      e.envelope.tail_zero_s = ev.get("tail_zero_s", 0.0);
      ev.finish();
    }
    s.finish();
  }
  {
    Section s = top.sub("structure");
    auto& st = c.structure;
    st.masses = number_list(s.node("masses"), "structure.masses");
    const std::size_t n = st.masses.size();
    st.stiffness = per_story(s.node("stiffness"), "structure.stiffness", n);
    st.heights = number_list(s.node("heights"), "structure.heights");
    const json& bw = s.node("bouc_wen");
    if (bw.is_array()) {
      for (std::size_t i = 0; i < bw.size(); ++i)
        st.bouc_wen.push_back(parse_bouc_wen(Section(bw[i], "structure.bouc_wen[" + std::to_string(i) + "]")));
    } else {
      st.bouc_wen.assign(n, parse_bouc_wen(Section(bw, "structure.bouc_wen")));
    }
    if (s.has("damping")) {
      Section d = s.sub("damping");
      st.damping.zeta = d.get("zeta", st.damping.zeta);
      st.damping.mode_i = d.get("mode_i", st.damping.mode_i);
      st.damping.mode_j = d.get("mode_j", st.damping.mode_j);
      if (d.has("alpha_m") || d.has("beta_k"))
        st.damping.explicit_coefficients = RayleighCoefficients{d.get<double>("alpha_m"), d.get<double>("beta_k")};
      d.finish();
    }
    st.sv_modes = s.get("sv_modes", st.sv_modes);
    s.finish();
  }
  if (top.has("solver")) {
    Section s = top.sub("solver");
    auto& v = c.solver;
    v.base_dt = s.get("base_dt", v.base_dt);
    v.record_dt = s.get("record_dt", c.excitation.dt);
    v.max_iterations = s.get("max_iterations", v.max_iterations);
    v.disp_tol = s.get("disp_tol", v.disp_tol);
    v.force_tol = s.get("force_tol", v.force_tol);
    v.line_search_steps = s.get("line_search_steps", v.line_search_steps);
    s.finish();
  } else {
    c.solver.record_dt = c.excitation.dt;
  }
  {
    Section s = top.sub("strata");
    c.n_mc = s.get<std::size_t>("n_mc");
    c.strata.n_strata = s.get<std::size_t>("n_strata");
    c.strata.tail_exceedance = s.get("tail_exceedance", c.strata.tail_exceedance);
    c.strata.min_tail_count = s.get("min_tail_count", c.strata.min_tail_count);
    const std::string rule = s.get<std::string>("rule", "equal-probability");
    if (rule == "equal-probability") {
      c.strata.rule = BoundaryRule::EqualProbability;
    } else if (rule == "explicit") {
      c.strata.rule = BoundaryRule::Explicit;
      c.strata.explicit_bounds = number_list(s.node("bounds"), "strata.bounds");
    } else {
      throw Error(ErrorKind::Config, "config: strata.rule must be equal-probability or explicit");
    }
    s.finish();
  }
  if (top.has("surrogate")) {
    Section s = top.sub("surrogate");
    auto& g = c.surrogate;
    g.eta = s.get("eta", g.eta);
    g.snapshots_per_sample = s.get("snapshots_per_sample", g.snapshots_per_sample);
    g.wavelet_level = s.get("wavelet_level", g.wavelet_level);
    g.wavelet_order = s.get("wavelet_order", g.wavelet_order);
    s.finish();
  }
  if (top.has("train")) {
    Section s = top.sub("train");
    auto& t = c.train;
    t.hidden = s.get("hidden", t.hidden);
    t.dropout = s.get("dropout", t.dropout);
    t.learning_rate = s.get("learning_rate", t.learning_rate);
    t.max_epochs = s.get("max_epochs", t.max_epochs);
    t.batch_size = s.get("batch_size", t.batch_size);
    t.validation_fraction = s.get("validation_fraction", t.validation_fraction);
    t.patience = s.get("patience", t.patience);
    t.grad_clip = s.get("grad_clip", t.grad_clip);
    s.finish();
  }
  c.train.seed = c.seed;
  if (top.has("adaptive")) {
    Section s = top.sub("adaptive");
    auto& a = c.adaptive;
    a.n_init = s.get("n_init", a.n_init);
    a.n_add = s.get("n_add", a.n_add);
    a.rho_target = s.get("rho_target", a.rho_target);
    a.delta_target = s.get("delta_target", a.delta_target);
    a.max_iterations = s.get("max_iterations", a.max_iterations);
    a.k_folds = s.get("k_folds", a.k_folds);
    s.finish();
  }
  {
    const json& ls = top.node("limit_states");
    MFSS_REQUIRE(ls.is_array(), ErrorKind::Config, "config: limit_states must be an array");
    for (std::size_t i = 0; i < ls.size(); ++i) {
      Section s(ls[i], "limit_states[" + std::to_string(i) + "]");
      LimitState l;
      l.channel = s.get<std::size_t>("channel");
      l.threshold = s.get<double>("threshold");
      l.name = s.get<std::string>("name", "ls" + std::to_string(i + 1));
      s.finish();
      c.limit_states.push_back(l);
    }
  }
  if (top.has("consequence")) {
    Section s = top.sub("consequence");
    const std::string kind = s.get<std::string>("kind", "indicator");
    MFSS_REQUIRE(kind == "indicator" || kind == "kernel", ErrorKind::Config,
                 "config: consequence.kind must be indicator or kernel");
    c.consequence.kind = kind == "kernel" ? MeasureKind::Kernel : MeasureKind::Indicator;
    c.consequence.bandwidth = s.get("bandwidth", c.consequence.bandwidth);
    s.finish();
  }
  {
    Section s = top.sub("costs");
    c.c_hf = s.get<double>("c_hf");
    c.c_lf = s.get<double>("c_lf");
    s.finish();
  }
  {
    Section s = top.sub("allocation");
    const std::string mode = s.get<std::string>("mode");
    auto& a = c.allocation;
    if (mode == "fixed") {
      a.mode = AllocationMode::Fixed;
      a.budget = s.get<double>("budget");
    } else if (mode == "convergence") {
      a.mode = AllocationMode::Convergence;
      a.beta_target = s.get<double>("beta_target");
      a.n_hf_initial = s.get("n_hf_initial", a.n_hf_initial);
      a.step = s.get("step", a.step);
      a.max_iterations = s.get("max_iterations", a.max_iterations);
    } else {
      throw Error(ErrorKind::Config, "config: allocation.mode must be fixed or convergence");
    }
    s.finish();
  }
  if (top.has("baseline")) {
    Section s = top.sub("baseline");
    c.baseline_n_per_stratum = s.get<std::size_t>("n_per_stratum");
    s.finish();
  }
  if (top.has("oracle")) {
    Section s = top.sub("oracle");
    c.oracle_n = s.get<std::size_t>("n");
    s.finish();
  }
  if (top.has("curves")) {
    Section s = top.sub("curves");
    for (double ch : number_list(s.node("channels"), "curves.channels")) c.curves.channels.push_back(static_cast<std::size_t>(ch));
    c.curves.z_min = s.get<double>("z_min");
    c.curves.z_max = s.get<double>("z_max");
    c.curves.n_points = s.get<std::size_t>("n_points");
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  MFSS_REQUIRE(in.good(), ErrorKind::Config, "config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "config: " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace mfss
