#pragma once

// Run orchestration and metrics persistence.
//
// Layout under <root>/<output_dir>/<config hash>/:
//   config.txt                      canonical config
//   summary.csv                     mean and population std per method
//   seed_<s>/<method>/trajectory.csv
//   seed_<s>/<method>/labels_step<t>.txt, labels_final.txt
//   seed_<s>/<method>/model.ckpt
//   seed_<s>/<method>/run_record.txt
//   seed_<s>/<method>/correction_report.txt   (noisy data only)
//   seed_<s>/crosscheck.csv                   (cross-check mode)
//   gridsearch/leaderboard.csv
//   folds/seed_<s>/...
//
// <root> is DYNLAB_OUTPUT_ROOT when set, else the working directory.
// Every text artifact starts with "# config=<hash> seed=<seed>".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dynlab/baselines.hpp"
#include "dynlab/checkpoint.hpp"
#include "dynlab/config.hpp"
#include "dynlab/dataset.hpp"
#include "dynlab/distill.hpp"
#include "dynlab/formats.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/metaloop.hpp"
#include "dynlab/noisytools.hpp"

namespace dynlab {

namespace fs = std::filesystem;

inline constexpr double kCrossCheckTolerance = 1e-5;

// Data and models ------------------------------------------------------------

inline DatasetBundle build_dataset(const ExperimentConfig& cfg) {
  const auto& v = cfg.values;
  Rng rng(static_cast<std::uint64_t>(v.integer("data.seed")));
  const auto source = v.text("data.source");
  DatasetBundle data;
  bool has_test = false;
  if (source == "blobs" || source == "spirals") {
    const auto n = v.count("data.n_per_class");
    const auto n_test = v.count("data.test_per_class");
    auto gen = [&](std::size_t per_class) {
      if (source == "blobs") {
        return gen_blobs(rng, per_class, v.count("data.classes"), v.count("data.dim"),
                         v.real("data.separation"));
      }
      return gen_spirals(rng, per_class, v.real("data.turns"));
    };
    data = gen(n);
    if (n_test > 0) {
      data = concat(data, retag(gen(n_test), Split::test));
      has_test = true;
    }
  } else if (source == "idx") {
    data = load_idx(v.text("data.images"), v.text("data.labels"));
  } else if (source == "cifar10") {
    data = load_cifar_binary(v.text("data.path"), CifarKind::cifar10);
  } else if (source == "cifar100") {
    data = load_cifar_binary(v.text("data.path"), CifarKind::cifar100_fine);
  } else if (source == "bundle") {
    data = load_bundle(v.text("data.path"));
    has_test = !data.indices(Split::test).empty();
  } else {
    throw ConfigError("field 'data.source': unknown source '" + source + "'");
  }
  if (const auto per = v.count("data.subset_per_class"); per > 0) data = subset_per_class(data, per, rng);
  if (!has_test) data = split(std::move(data), v.real("data.test_frac"), rng, Split::test);
  data = split(std::move(data), v.real("data.holdout_frac"), rng, Split::meta);
  if (v.has("data.noise")) data = inject_noise(std::move(data), v.real("data.noise"), rng);
  if (v.boolean("data.standardize")) data = standardize(std::move(data));
  return data;
}

inline ImageGeometry model_geometry(const ExperimentConfig& cfg, const DatasetBundle& data) {
  const auto shape = cfg.values.integers("data.image_shape");
  if (!shape.empty()) {
    if (shape.size() != 3) throw ConfigError("field 'data.image_shape': expected channels,height,width");
    ImageGeometry g{static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]),
                    static_cast<std::size_t>(shape[2])};
    if (g.channels * g.height * g.width != data.dim()) {
      throw ConfigError("field 'data.image_shape': product does not match the feature width");
    }
    return g;
  }
  if (data.geometry) return *data.geometry;
  throw ConfigError("field 'data.image_shape': required for a convnet on non-image data");
}

inline Network build_model(const ExperimentConfig& cfg, const DatasetBundle& data,
                           const std::string& arch, const std::vector<long long>& hidden, Rng& rng) {
  if (arch == "mlp") {
    std::vector<std::size_t> h;
    for (auto x : hidden) {
      if (x <= 0) throw ConfigError("field 'model.hidden': widths must be positive");
      h.push_back(static_cast<std::size_t>(x));
    }
    return make_mlp(data.dim(), h, data.classes, rng);
  }
  if (arch == "convnet") {
    const auto g = model_geometry(cfg, data);
    const auto f = cfg.values.integers("model.filters");
    if (f.size() != 2 || f[0] <= 0 || f[1] <= 0) {
      throw ConfigError("field 'model.filters': expected two positive filter counts");
    }
    return make_convnet(g.channels, g.height, g.width, data.classes, static_cast<std::size_t>(f[0]),
                        static_cast<std::size_t>(f[1]), cfg.values.count("model.kernel"),
                        cfg.values.count("model.conv_hidden"), rng);
  }
  throw ConfigError("field 'model.arch': unknown architecture '" + arch + "'");
}

// Stream 0 of the run seed initializes the primary model, stream 3 a student.
inline Network primary_model(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0);
  return build_model(cfg, data, cfg.values.text("model.arch"), cfg.values.integers("model.hidden"), rng);
}

inline Network student_model(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(3);
  return build_model(cfg, data, cfg.values.text("distill.student_arch"),
                     cfg.values.integers("distill.student_hidden"), rng);
}

inline LabelBank initial_bank(const ExperimentConfig& cfg, const DatasetBundle& data) {
  const double init = cfg.values.real("labels.init_target");
  const double lr = cfg.values.real("labels.label_lr");
  if (cfg.label_mode == LabelMode::class_wise) return init_class(data.classes, init, lr);
  if (cfg.label_mode == LabelMode::instance) return init_instance(data.size(), data.classes, data.targets, init, lr);
  throw ConfigError("field 'labels.mode': a label bank needs class or instance mode");
}

inline MetaConfig seeded(const ExperimentConfig& cfg, std::uint64_t seed) {
  MetaConfig m = cfg.meta;
  m.loop.seed = seed;
  return m;
}

// Run records ----------------------------------------------------------------

struct RunRecord {
  std::string method;
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double train_acc = kNaN;
  double meta_acc = kNaN;
  double test_acc = kNaN;
  double frac_corrected = kNaN;
  double top1_noise = kNaN;
  double top1_acc = kNaN;
  double top5_acc = kNaN;
  double wall_time_s = 0.0;
  std::vector<std::pair<std::string, std::string>> extra;
};

inline std::string render_run_record(const RunRecord& r) {
  std::ostringstream os;
  os << "# config=" << r.config_hash << " seed=" << r.seed << '\n';
  os << "method=" << r.method << '\n';
  os << "kind=" << r.kind << '\n';
  os << "config_hash=" << r.config_hash << '\n';
  os << "seed=" << r.seed << '\n';
  os << "steps=" << r.steps << '\n';
  os << "train_acc=" << format_double(r.train_acc) << '\n';
  os << "meta_acc=" << format_double(r.meta_acc) << '\n';
  os << "test_acc=" << format_double(r.test_acc) << '\n';
  os << "frac_corrected=" << format_double(r.frac_corrected) << '\n';
  os << "top1_noise=" << format_double(r.top1_noise) << '\n';
  os << "top1_acc=" << format_double(r.top1_acc) << '\n';
  os << "top5_acc=" << format_double(r.top5_acc) << '\n';
  for (const auto& [k, v] : r.extra) os << k << '=' << v << '\n';
  os << "wall_time_s=" << format_double(r.wall_time_s) << '\n';
  return os.str();
}

inline double parse_number(const std::string& s) {
  const auto v = detail::to_real(s);
  if (!v) throw FormatError("run record: bad number '" + s + "'", 0);
  return *v;
}

inline RunRecord parse_run_record(const std::string& text) {
  RunRecord r;
  std::istringstream in(text);
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("run record: expected key=value", 0);
    const auto key = line.substr(0, eq), val = line.substr(eq + 1);
    any = true;
    if (key == "method") r.method = val;
    else if (key == "kind") r.kind = val;
    else if (key == "config_hash") r.config_hash = val;
    else if (key == "seed") r.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (key == "steps") r.steps = static_cast<std::size_t>(std::stoull(val));
    else if (key == "train_acc") r.train_acc = parse_number(val);
    else if (key == "meta_acc") r.meta_acc = parse_number(val);
    else if (key == "test_acc") r.test_acc = parse_number(val);
    else if (key == "frac_corrected") r.frac_corrected = parse_number(val);
    else if (key == "top1_noise") r.top1_noise = parse_number(val);
    else if (key == "top1_acc") r.top1_acc = parse_number(val);
    else if (key == "top5_acc") r.top5_acc = parse_number(val);
    else if (key == "wall_time_s") r.wall_time_s = parse_number(val);
    else r.extra.emplace_back(key, val);
  }
  if (!any || r.method.empty()) throw FormatError("run record: missing method", 0);
  return r;
}

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Aggregation ----------------------------------------------------------------

struct MeanStd {
  double mean = kNaN;
  double std = kNaN;  // population std; 0 for a single value
  std::size_t n = 0;
};

// NaN entries are skipped.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    sum += x;
    ++out.n;
  }
  if (out.n == 0) return out;
  out.mean = sum / static_cast<double>(out.n);
  double ss = 0.0;
  for (double x : xs) {
    if (!std::isnan(x)) ss += (x - out.mean) * (x - out.mean);
  }
  out.std = std::sqrt(ss / static_cast<double>(out.n));
  return out;
}

inline std::string summary_csv_header() {
  return "method,n_seeds,train_acc_mean,train_acc_std,meta_acc_mean,meta_acc_std,test_acc_mean,"
         "test_acc_std,frac_corrected_mean,frac_corrected_std,top1_noise_mean,top1_noise_std";
}

// One row per method, methods in order of first appearance.
inline std::string summary_csv(const std::vector<RunRecord>& records, const std::string& header_line) {
  if (records.empty()) throw ArgumentError("summary: no run records");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> by_method;
  for (const auto& r : records) {
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }
  std::ostringstream os;
  os << header_line << '\n' << summary_csv_header() << '\n';
  for (const auto& m : order) {
    const auto& rs = by_method[m];
    auto col = [&](double RunRecord::*field) {
      std::vector<double> xs;
      for (const auto* r : rs) xs.push_back(r->*field);
      const auto s = mean_std(xs);
      return format_double(s.mean) + "," + format_double(s.std);
    };
    os << m << ',' << rs.size() << ',' << col(&RunRecord::train_acc) << ',' << col(&RunRecord::meta_acc)
       << ',' << col(&RunRecord::test_acc) << ',' << col(&RunRecord::frac_corrected) << ','
       << col(&RunRecord::top1_noise) << '\n';
  }
  return os.str();
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw FormatError("csv: missing column '" + name + "'", 0);
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Comment lines are skipped; the first remaining line is the column header.
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (header) {
      t.columns = std::move(cells);
      header = false;
    } else {
      if (cells.size() != t.columns.size()) throw FormatError("csv: ragged row", 0);
      t.rows.push_back(std::move(cells));
    }
  }
  if (header) throw FormatError("csv: no header", 0);
  return t;
}

struct ReportOutputs {
  std::string summary;
  std::string label_trajectory;
  std::string correction_curve;
};

// Aggregates every run_record.txt below `dir` (and the trajectory.csv next
// to each) into summary, per-class label-mass trajectories and correction
// curves, averaged over seeds by (method, step).
inline ReportOutputs build_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ArgumentError("report: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> found;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "run_record.txt") found.push_back(e.path());
  }
  if (found.empty()) throw ArgumentError("report: no run records under '" + dir.string() + "'");
  std::sort(found.begin(), found.end());

  std::vector<RunRecord> records;
  std::string hash;
  for (const auto& p : found) {
    records.push_back(parse_run_record(read_text(p)));
    if (hash.empty()) hash = records.back().config_hash;
    else if (hash != records.back().config_hash) hash = "mixed";
  }
  const std::string header = "# config=" + hash + " seed=all";

  // (method, step) -> per-class mass samples / correction samples
  using Key = std::pair<std::string, long long>;
  std::map<Key, std::vector<std::vector<double>>> mass;
  std::map<Key, std::vector<std::vector<double>>> corr;
  std::vector<std::string> order;
  std::size_t classes = 0;
  for (std::size_t r = 0; r < found.size(); ++r) {
    const auto traj = found[r].parent_path() / "trajectory.csv";
    if (!fs::exists(traj)) continue;
    const auto t = parse_csv(read_text(traj));
    std::vector<std::size_t> mass_cols;
    for (std::size_t k = 0;; ++k) {
      const auto it = std::find(t.columns.begin(), t.columns.end(), "mass_" + std::to_string(k));
      if (it == t.columns.end()) break;
      mass_cols.push_back(static_cast<std::size_t>(it - t.columns.begin()));
    }
    classes = std::max(classes, mass_cols.size());
    const auto step_col = t.column("step");
    const std::size_t corr_cols[] = {t.column("frac_corrected"), t.column("top1_noise"),
                                     t.column("top1_acc"), t.column("top5_acc")};
    const auto& method = records[r].method;
    if (std::find(order.begin(), order.end(), method) == order.end()) order.push_back(method);
    for (const auto& row : t.rows) {
      const Key key{method, std::stoll(row[step_col])};
      std::vector<double> m, c;
      for (auto col : mass_cols) m.push_back(parse_number(row[col]));
      for (auto col : corr_cols) c.push_back(parse_number(row[col]));
      mass[key].push_back(std::move(m));
      corr[key].push_back(std::move(c));
    }
  }

  auto by_method_then_step = [&](const auto& table, auto&& emit) {
    for (const auto& m : order) {
      for (const auto& [key, samples] : table) {
        if (key.first == m) emit(key, samples);
      }
    }
  };

  ReportOutputs out;
  out.summary = summary_csv(records, header);

  std::ostringstream lt;
  lt << header << "\nmethod,step,class,mass_mean,mass_std,n_seeds\n";
  by_method_then_step(mass, [&](const Key& key, const std::vector<std::vector<double>>& samples) {
    for (std::size_t k = 0; k < classes; ++k) {
      std::vector<double> xs;
      for (const auto& s : samples) xs.push_back(k < s.size() ? s[k] : kNaN);
      const auto ms = mean_std(xs);
      lt << key.first << ',' << key.second << ',' << k << ',' << format_double(ms.mean) << ','
         << format_double(ms.std) << ',' << ms.n << '\n';
    }
  });
  out.label_trajectory = lt.str();

  std::ostringstream cc;
  cc << header
     << "\nmethod,step,frac_corrected_mean,frac_corrected_std,top1_noise_mean,top1_acc_mean,"
        "top5_acc_mean,n_seeds\n";
  by_method_then_step(corr, [&](const Key& key, const std::vector<std::vector<double>>& samples) {
    std::vector<MeanStd> cols;
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<double> xs;
      for (const auto& s : samples) xs.push_back(s[j]);
      cols.push_back(mean_std(xs));
    }
    cc << key.first << ',' << key.second << ',' << format_double(cols[0].mean) << ','
       << format_double(cols[0].std) << ',' << format_double(cols[1].mean) << ','
       << format_double(cols[2].mean) << ',' << format_double(cols[3].mean) << ',' << samples.size()
       << '\n';
  });
  out.correction_curve = cc.str();
  return out;
}

inline void write_report(const fs::path& dir) {
  const auto rep = build_report(dir);
  write_text(dir / "report_summary.csv", rep.summary);
  write_text(dir / "label_trajectory.csv", rep.label_trajectory);
  write_text(dir / "correction_curve.csv", rep.correction_curve);
}

// Orchestration --------------------------------------------------------------

inline fs::path output_root(const std::optional<std::string>& override_root = std::nullopt) {
  if (override_root) return *override_root;
  if (const char* env = std::getenv("DYNLAB_OUTPUT_ROOT"); env && *env) return env;
  return fs::current_path();
}

inline fs::path run_directory(const ExperimentConfig& cfg, const fs::path& root) {
  return root / cfg.values.text("experiment.output_dir") / cfg.hash;
}

// Everything one trained method leaves behind.
struct MethodOutcome {
  std::string method;
  TrajectoryLog log;
  Network net;
  std::optional<LabelExport> labels;   // final label bank, if any
  std::optional<SoftLabelMatrix> rows; // per-instance rows for the correction report
  std::vector<std::pair<std::string, std::string>> extra;
};

class RunWriter {
 public:
  RunWriter(const ExperimentConfig& cfg, fs::path dir, std::uint64_t seed)
      : cfg_(cfg), dir_(std::move(dir)), seed_(seed) {}

  const fs::path& dir() const { return dir_; }
  std::string header() const { return cfg_.header_line(seed_); }

  RunRecord write(const MethodOutcome& o, const DatasetBundle& data, double wall_time_s) const {
    const auto mdir = dir_ / o.method;
    fs::create_directories(mdir);
    write_text(mdir / "trajectory.csv", trajectory_csv(o.log, header()));
    for (const auto& snap : o.log.snapshots) {
      write_text(mdir / ("labels_step" + std::to_string(snap.step) + ".txt"),
                 render_label_export(snap, header()));
    }
    if (o.labels) write_text(mdir / "labels_final.txt", render_label_export(*o.labels, header()));
    if (cfg_.values.boolean("log.checkpoint")) save_checkpoint(o.net, (mdir / "model.ckpt").string());

    RunRecord r;
    r.method = o.method;
    r.kind = cfg_.values.text("experiment.kind");
    r.config_hash = cfg_.hash;
    r.seed = seed_;
    r.steps = o.log.records.size();
    if (const auto* last = o.log.last_evaluated()) {
      r.train_acc = last->train_acc;
      r.meta_acc = last->meta_acc;
      r.test_acc = last->test_acc;
    }
    if (data.true_targets && o.rows) {
      const auto train = data.indices(Split::train);
      const auto labels = o.rows->gather(train);
      const auto targets = data.gather_targets(train);
      std::vector<int> truth;
      std::vector<bool> noisy;
      for (auto i : train) {
        truth.push_back((*data.true_targets)[i]);
        noisy.push_back(data.targets[i] != (*data.true_targets)[i]);
      }
      const auto rep = correction_report(labels, targets, std::span<const int>(truth), noisy, r.steps);
      r.frac_corrected = rep.frac_corrected;
      r.top1_noise = rep.top1_noise;
      r.top1_acc = rep.topk(1);
      r.top5_acc = rep.topk(5);
      std::ostringstream os;
      os << header() << '\n'
         << "step=" << rep.step << '\n'
         << "noisy_count=" << rep.noisy_count << '\n'
         << "frac_corrected=" << format_double(rep.frac_corrected) << '\n'
         << "top1_noise=" << format_double(rep.top1_noise) << '\n'
         << "topk_acc=" << join_doubles(rep.topk_acc) << '\n'
         << "mean_entropy_noisy=" << format_double(rep.mean_entropy_noisy) << '\n'
         << "mean_entropy_clean=" << format_double(rep.mean_entropy_clean) << '\n';
      write_text(mdir / "correction_report.txt", os.str());
    }
    r.extra = o.extra;
    r.wall_time_s = wall_time_s;
    write_text(mdir / "run_record.txt", render_run_record(r));
    return r;
  }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  std::uint64_t seed_;
};

inline MethodOutcome run_meta_method(const ExperimentConfig& cfg, const DatasetBundle& data,
                                     std::uint64_t seed, const std::string& name = "meta") {
  auto res = run_meta_training(seeded(cfg, seed), data, primary_model(cfg, data, seed), initial_bank(cfg, data));
  MethodOutcome o{name, std::move(res.log), std::move(res.net), export_bank(res.bank, cfg.meta.loop.steps),
                  realize_all(res.bank, data), {}};
  o.log.method = name;
  return o;
}

inline MethodOutcome run_baseline(const ExperimentConfig& cfg, const DatasetBundle& data,
                                  std::uint64_t seed, const std::string& method) {
  const auto loop = seeded(cfg, seed).loop;
  auto net = primary_model(cfg, data, seed);
  TrainResult res;
  if (method == "onehot") res = train_onehot(std::move(net), data, loop);
  else if (method == "label_smoothing") {
    res = train_label_smoothing(std::move(net), data, loop, cfg.values.real("labels.smoothing_eps"));
  } else if (method == "confidence_penalty") {
    res = train_confidence_penalty(std::move(net), data, loop, cfg.values.real("labels.confidence_beta"));
  } else {
    throw ConfigError("field 'experiment.method': unknown method '" + method + "'");
  }
  return {method, std::move(res.log), std::move(res.net), std::nullopt,
          SoftLabelMatrix::one_hot(data.targets, data.classes), {}};
}

inline MethodOutcome from_train(std::string name, TrainResult res, std::optional<SoftLabelMatrix> rows) {
  res.log.method = name;
  return {std::move(name), std::move(res.log), std::move(res.net), std::nullopt, std::move(rows), {}};
}

// All methods one seed of the configured experiment trains, in output order.
inline std::vector<MethodOutcome> run_experiment_seed(const ExperimentConfig& cfg, const DatasetBundle& data,
                                                      std::uint64_t seed, const fs::path& seed_dir) {
  std::vector<MethodOutcome> out;
  const auto loop = seeded(cfg, seed).loop;
  switch (cfg.kind) {
    case ExperimentKind::supervised:
    case ExperimentKind::noisy:
      if (cfg.method == "meta") out.push_back(run_meta_method(cfg, data, seed));
      else out.push_back(run_baseline(cfg, data, seed, cfg.method));
      break;
    case ExperimentKind::ablation_static: {
      auto dyn = run_meta_method(cfg, data, seed, "dynamic");
      const auto converged = *dyn.rows;
      out.push_back(std::move(dyn));
      out.push_back(from_train("static",
                               train_static_labels(primary_model(cfg, data, seed), data, converged, loop),
                               converged));
      out.push_back(run_baseline(cfg, data, seed, "onehot"));
      break;
    }
    case ExperimentKind::distill: {
      const bool labels_source = cfg.values.text("distill.source") == "converged_labels";
      MethodOutcome teacher = cfg.label_mode == LabelMode::none
                                  ? run_baseline(cfg, data, seed, "onehot")
                                  : run_meta_method(cfg, data, seed);
      teacher.method = "teacher";
      teacher.log.method = "teacher";
      DistillSource src = labels_source ? DistillSource::from_labels(*teacher.rows)
                                        : DistillSource::from_teacher(teacher.net, data);
      if (cfg.values.has("distill.temperature")) src.temperature = cfg.values.real("distill.temperature");
      std::vector<std::pair<std::string, std::string>> extra;
      if (const auto grid = cfg.values.reals("distill.temperature_grid"); !grid.empty()) {
        const auto search = search_temperature(src, data, grid, [&] { return student_model(cfg, data, seed); }, loop);
        src.temperature = search.best;
        std::ostringstream os;
        os << cfg.header_line(seed) << "\ntemperature,validation_acc,test_acc\n";
        for (const auto& p : search.curve) {
          os << format_double(p.temperature) << ',' << format_double(p.validation_acc) << ','
             << format_double(p.test_acc) << '\n';
        }
        write_text(seed_dir / "temperature_curve.csv", os.str());
      }
      if (src.temperature) extra.emplace_back("temperature", format_double(*src.temperature));
      out.push_back(std::move(teacher));
      auto student = from_train("student", train_student(student_model(cfg, data, seed), data, src, loop),
                                source_targets(src));
      student.extra = extra;
      out.push_back(std::move(student));
      auto base = train_onehot(student_model(cfg, data, seed), data, loop);
      out.push_back(from_train("student_onehot", std::move(base),
                               SoftLabelMatrix::one_hot(data.targets, data.classes)));
      break;
    }
    case ExperimentKind::transfer: {
      auto learner = run_meta_method(cfg, data, seed, "label_learner");
      const auto labels = *learner.rows;
      out.push_back(std::move(learner));
      out.push_back(from_train("transfer",
                               transfer_labels(labels, student_model(cfg, data, seed), data, loop), labels));
      out.push_back(from_train("student_onehot", train_onehot(student_model(cfg, data, seed), data, loop),
                               SoftLabelMatrix::one_hot(data.targets, data.classes)));
      break;
    }
  }
  return out;
}

struct CrossCheck {
  double init_error = 0.0;
  double final_error = 0.0;
  bool passed() const { return init_error <= kCrossCheckTolerance && final_error <= kCrossCheckTolerance; }
};

// Compares the closed-form meta-gradient against central finite differences
// on the run's first train and meta batches, at the initial and at the given
// trained parameters.
inline CrossCheck cross_check(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t seed,
                              const Network& trained, const fs::path& path) {
  const auto m = seeded(cfg, seed);
  const Rng root(seed);
  BatchSampler ts(data.indices(Split::train), m.loop.batch_train, root.fork(1));
  BatchSampler ms(data.indices(Split::meta), m.loop.batch_meta, root.fork(2));
  const auto ids = ts.next();
  const auto meta_ids = ms.next();
  const auto targets = data.gather_targets(ids);
  const auto bank = initial_bank(cfg, data);
  const auto labels = realize(bank, ids, targets);
  const Tensor x = data.gather(ids), mx = data.gather(meta_ids);
  const auto my = data.gather_targets(meta_ids);
  SgdState sgd(m.loop.sgd, trained.param_count());
  const double lr = sgd.lr_at(0);
  auto err = [&](const Network& net) {
    const auto a = meta_gradient(net, x, labels, mx, my, lr, GradPath::closed_form);
    const auto b = meta_gradient(net, x, labels, mx, my, lr, GradPath::finite_difference, m.fd_epsilon);
    return max_relative_error(a.per_class.values(), b.per_class.values());
  };
  CrossCheck cc{err(primary_model(cfg, data, seed)), err(trained)};
  std::ostringstream os;
  os << cfg.header_line(seed) << "\npoint,max_rel_error,tolerance,passed\n"
     << "init," << format_double(cc.init_error) << ',' << format_double(kCrossCheckTolerance) << ','
     << (cc.init_error <= kCrossCheckTolerance ? "true" : "false") << '\n'
     << "final," << format_double(cc.final_error) << ',' << format_double(kCrossCheckTolerance) << ','
     << (cc.final_error <= kCrossCheckTolerance ? "true" : "false") << '\n';
  write_text(path, os.str());
  return cc;
}

struct TrainSummary {
  fs::path run_dir;
  std::vector<RunRecord> records;
  bool cross_check_failed = false;
};

inline TrainSummary train_experiment(const ExperimentConfig& cfg, const fs::path& root,
                                     std::optional<std::uint64_t> only_seed = std::nullopt,
                                     bool force_cross_check = false) {
  const auto data = build_dataset(cfg);
  TrainSummary s;
  s.run_dir = run_directory(cfg, root);
  fs::create_directories(s.run_dir);
  write_text(s.run_dir / "config.txt", cfg.values.canonical());
  const std::vector<std::uint64_t> seeds = only_seed ? std::vector<std::uint64_t>{*only_seed} : cfg.seeds;
  const bool check = force_cross_check || cfg.meta.grad_path == GradPath::finite_difference;
  for (auto seed : seeds) {
    const auto seed_dir = s.run_dir / ("seed_" + std::to_string(seed));
    const auto t0 = std::chrono::steady_clock::now();
    auto outcomes = run_experiment_seed(cfg, data, seed, seed_dir);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    RunWriter writer(cfg, seed_dir, seed);
    for (const auto& o : outcomes) {
      s.records.push_back(writer.write(o, data, elapsed / static_cast<double>(outcomes.size())));
    }
    if (check && cfg.label_mode != LabelMode::none) {
      const auto cc = cross_check(cfg, data, seed, outcomes.front().net, seed_dir / "crosscheck.csv");
      s.cross_check_failed = s.cross_check_failed || !cc.passed();
    }
  }
  write_text(s.run_dir / "summary.csv", summary_csv(s.records, cfg.header_line(seeds.front())));
  return s;
}

// Grid search ----------------------------------------------------------------

struct GridRow {
  double init_target = 0.0;
  double label_lr = 0.0;
  double val_acc = kNaN;
  double test_acc = kNaN;
};

// Sorted by validation accuracy (descending); ties go to the smaller label lr,
// then the smaller init target.
inline void sort_leaderboard(std::vector<GridRow>& rows) {
  auto key = [](double v) { return std::isnan(v) ? -1.0 : v; };
  std::stable_sort(rows.begin(), rows.end(), [&](const GridRow& a, const GridRow& b) {
    if (key(a.val_acc) != key(b.val_acc)) return key(a.val_acc) > key(b.val_acc);
    if (a.label_lr != b.label_lr) return a.label_lr < b.label_lr;
    return a.init_target < b.init_target;
  });
}

inline ExperimentConfig with_grid_point(const ExperimentConfig& cfg, double init, double lr) {
  ConfigValues v = cfg.values;
  v.set("labels.init_target", format_double(init));
  v.set("labels.label_lr", format_double(lr));
  return ExperimentConfig::from(std::move(v));
}

// Meta-trains one seed per grid point; validation is the held-out split.
inline std::vector<GridRow> grid_search(const ExperimentConfig& cfg, const DatasetBundle& data,
                                        std::uint64_t seed) {
  const auto inits = cfg.values.reals("labels.init_grid");
  const auto lrs = cfg.values.reals("labels.label_lr_grid");
  if (inits.empty() || lrs.empty()) throw ArgumentError("gridsearch: empty grid");
  if (cfg.label_mode == LabelMode::none) throw ConfigError("field 'labels.mode': gridsearch needs a label bank");
  std::vector<GridRow> rows;
  for (double init : inits) {
    for (double lr : lrs) {
      const auto point = with_grid_point(cfg, init, lr);
      const auto o = run_meta_method(point, data, seed);
      const auto* last = o.log.last_evaluated();
      rows.push_back({init, lr, last ? last->meta_acc : kNaN, last ? last->test_acc : kNaN});
    }
  }
  sort_leaderboard(rows);
  return rows;
}

inline std::string leaderboard_csv(const std::vector<GridRow>& rows, const std::string& header_line) {
  std::ostringstream os;
  os << header_line << "\nrank,init_target,label_lr,val_acc,test_acc\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << i + 1 << ',' << format_double(rows[i].init_target) << ',' << format_double(rows[i].label_lr) << ','
       << format_double(rows[i].val_acc) << ',' << format_double(rows[i].test_acc) << '\n';
  }
  return os.str();
}

inline fs::path gridsearch_experiment(const ExperimentConfig& cfg, const fs::path& root,
                                      std::optional<std::uint64_t> only_seed = std::nullopt) {
  const auto data = build_dataset(cfg);
  const auto seed = only_seed.value_or(cfg.seeds.front());
  const auto rows = grid_search(cfg, data, seed);
  const auto path = run_directory(cfg, root) / "gridsearch" / "leaderboard.csv";
  write_text(path, leaderboard_csv(rows, cfg.header_line(seed)));
  return path;
}

// Folds ----------------------------------------------------------------------

struct FoldsOutcome {
  std::vector<RunRecord> fold_records;
  RunRecord final_record;
  LabelExport averaged;
};

// Per fold: the fold's members become the meta set and a label bank is
// learned on the rest. Instance rows are averaged over the folds that trained
// them (class alphas over all folds), then a fresh model is trained on the
// full train split with the averaged labels.
inline FoldsOutcome run_folds(const ExperimentConfig& cfg, const DatasetBundle& data, std::uint64_t seed,
                              const fs::path& dir) {
  if (cfg.label_mode == LabelMode::none) throw ConfigError("field 'labels.mode': folds need a label bank");
  const auto k = cfg.values.count("folds.k");
  Rng rng = Rng(seed).fork(5);
  const auto plan = make_folds(data, k, rng);
  RunWriter writer(cfg, dir, seed);
  FoldsOutcome out;
  std::vector<SoftLabelMatrix> fold_rows;
  std::vector<std::vector<bool>> masks;
  std::vector<double> alpha_sum(data.classes, 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fb = fold_bundle(data, plan, f);
    auto o = run_meta_method(cfg, fb, seed, "fold_" + std::to_string(f));
    if (cfg.label_mode == LabelMode::class_wise) {
      for (std::size_t c = 0; c < data.classes; ++c) alpha_sum[c] += o.labels->alphas[c];
    }
    fold_rows.push_back(*o.rows);
    std::vector<bool> mask(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) mask[i] = fb.splits[i] == Split::train;
    masks.push_back(std::move(mask));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.fold_records.push_back(writer.write(o, fb, dt));
  }

  const auto t0 = std::chrono::steady_clock::now();
  SoftLabelMatrix averaged;
  if (cfg.label_mode == LabelMode::class_wise) {
    ClassAlphas mean{alpha_sum, 0.0};
    for (auto& a : mean.alphas) a /= static_cast<double>(k);
    out.averaged = export_bank(mean, cfg.meta.loop.steps);
    averaged = realize_all(mean, data);
  } else {
    averaged = average_fold_labels(fold_rows, masks);
    out.averaged = LabelExport{"instance", cfg.meta.loop.steps, {}, averaged};
  }
  write_text(dir / "labels_averaged.txt", render_label_export(out.averaged, cfg.header_line(seed)));
  auto final_run = from_train("folds_final",
                              train_static_labels(primary_model(cfg, data, seed), data, averaged,
                                                  seeded(cfg, seed).loop),
                              averaged);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.final_record = writer.write(final_run, data, dt);
  return out;
}

inline fs::path folds_experiment(const ExperimentConfig& cfg, const fs::path& root,
                                 std::optional<std::uint64_t> only_seed = std::nullopt) {
  const auto data = build_dataset(cfg);
  const auto dir = run_directory(cfg, root) / "folds";
  const std::vector<std::uint64_t> seeds = only_seed ? std::vector<std::uint64_t>{*only_seed} : cfg.seeds;
  std::vector<RunRecord> records;
  for (auto seed : seeds) {
    const auto res = run_folds(cfg, data, seed, dir / ("seed_" + std::to_string(seed)));
    records.insert(records.end(), res.fold_records.begin(), res.fold_records.end());
    records.push_back(res.final_record);
  }
  write_text(dir / "summary.csv", summary_csv(records, cfg.header_line(seeds.front())));
  return dir;
}

}  // namespace dynlab
