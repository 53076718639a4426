#include "qsched/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace qsched {

namespace {

constexpr double kWidth = 960, kHeight = 540;
constexpr double kLeft = 80, kRight = 210, kTop = 40, kBottom = 60;
constexpr std::size_t kMaxPlotPoints = 2000;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) { return fmt::format("{}", v); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

double nice_step(double range, int target) {
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f <= 1 ? 1 : f <= 2 ? 2 : f <= 5 ? 5 : 10;
  return nice * mag;
}

std::vector<double> ticks(double hi, int target) {
  const double step = nice_step(hi, target);
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double v = k * step;
    if (v > hi * (1 + 1e-12)) break;
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

} // namespace

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  out << content;
  if (!out) throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

std::string file_stem(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' || c == '+';
    out += ok ? c : '_';
  }
  return out.empty() ? "policy" : out;
}

std::string series_csv(const PolicyResult& policy, long long stride) {
  std::string out = "t,mean_total_q";
  for (std::size_t r = 0; r < policy.series.size(); ++r) out += fmt::format(",rep_{}", r);
  out += "\n";
  const auto T = static_cast<long long>(policy.mean.size());
  for (long long t = stride; t <= T; t += stride) {
    const auto idx = static_cast<std::size_t>(t - 1);
    out += fmt::format("{},{}", t, num(policy.mean[idx]));
    for (const auto& s : policy.series) out += "," + num(s[idx]);
    out += "\n";
  }
  return out;
}

std::string running_average_csv(const PolicyResult& policy, long long stride) {
  std::string out = "t,running_avg_total_q\n";
  double sum = 0.0;
  for (std::size_t i = 0; i < policy.mean.size(); ++i) {
    sum += policy.mean[i];
    const auto t = static_cast<long long>(i + 1);
    if (t % stride == 0) out += fmt::format("{},{}\n", t, num(sum / static_cast<double>(t)));
  }
  return out;
}

std::string summary_text(const Scenario& scenario, const ScenarioResult& result) {
  std::string out;
  out += fmt::format("scenario: {}\n", scenario.name);
  out += fmt::format("K: {}  M: {}  horizon: {}  reps: {}  base_seed: {}  noise_seed: {}\n", scenario.env.K,
                     num(scenario.env.M), result.horizon, result.reps, scenario.base_seed, scenario.env.noise_seed);
  out += fmt::format("arrival: {}  service: {}  common_random_numbers: {}\n", to_string(scenario.env.arrival.kind),
                     to_string(scenario.env.service.kind), scenario.common_random_numbers ? "on" : "off");
  out += "\nfinal-window mean of ||Q_t||_1 (last 10% of slots) and time average\n";
  std::size_t width = 6;
  for (const auto& p : result.policies) width = std::max(width, p.policy.label.size());
  out += fmt::format("{:<{}}  {:>14}  {:>14}  per-rep final window\n", "policy", width, "final_window", "time_avg");
  for (const auto& p : result.policies) {
    out += fmt::format("{:<{}}  {:>14.6f}  {:>14.6f} ", p.policy.label, width, p.final_window_mean, p.time_average);
    for (double v : p.rep_final_window) out += fmt::format(" {:.6f}", v);
    out += "\n";
  }
  bool any = false;
  for (const auto& p : result.policies)
    if (!p.checks.empty()) any = true;
  if (any) {
    out += "\nsample-path checks\n";
    for (const auto& p : result.policies)
      for (const auto& c : p.checks) out += fmt::format("{:<{}}  {}\n", p.policy.label, width, format_report(c));
  }
  return out;
}

std::string emit_plot(const ScenarioResult& result, const std::string& title) {
  if (result.policies.empty()) throw std::invalid_argument("emit_plot: no policies");
  const double T = static_cast<double>(std::max<long long>(result.horizon, 1));
  double ymax = 0.0;
  for (const auto& p : result.policies)
    for (double v : p.mean) ymax = std::max(ymax, v);
  if (!(ymax > 0)) ymax = 1.0;
  const std::vector<double> yt = ticks(ymax, 5);
  const double ytop = std::max(ymax, yt.back() < ymax ? yt.back() + nice_step(ymax, 5) : yt.back());
  const std::vector<double> xt = ticks(T, 5);

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double t) { return kLeft + pw * t / T; };
  auto py = [&](double v) { return kTop + ph * (1.0 - v / ytop); };

  std::string out;
  out += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
                     kWidth, kHeight);
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    out += fmt::format("<text x=\"{:.2f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       kLeft + pw / 2, xml_escape(title));
  out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                     "stroke=\"black\"/>\n",
                     kLeft, kTop, pw, ph);
  out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (double v : xt) {
    const double x = px(v);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n", x,
                       kTop + ph, kTop + ph + 5);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.6g}</text>\n", x, kTop + ph + 20, v);
  }
  for (double v : yt) {
    const double y = py(v);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"black\"/>\n",
                       kLeft - 5, y, kLeft);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.6g}</text>\n", kLeft - 8, y + 4, v);
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">t</text>\n", kLeft + pw / 2,
                     kHeight - 15);
  out += fmt::format("<text x=\"20\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0:.2f})\">"
                     "total queue length</text>\n",
                     kTop + ph / 2);
  out += "</g>\n";

  for (std::size_t k = 0; k < result.policies.size(); ++k) {
    const auto& mean = result.policies[k].mean;
    const std::size_t n = mean.size();
    const std::size_t step = std::max<std::size_t>(1, (n + kMaxPlotPoints - 1) / kMaxPlotPoints);
    std::string points;
    for (std::size_t t = step; t <= n; t += step)
      points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", px(static_cast<double>(t)), py(mean[t - 1]));
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       kPalette[k % std::size(kPalette)], points);
  }

  out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t k = 0; k < result.policies.size(); ++k) {
    const double y = kTop + 10 + 20 * static_cast<double>(k);
    const double x = kLeft + pw + 15;
    out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                       "stroke-width=\"2\"/>\n",
                       x, y, x + 25, y, kPalette[k % std::size(kPalette)]);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", x + 32, y + 4,
                       xml_escape(result.policies[k].policy.label));
  }
  out += "</g>\n</svg>\n";
  return out;
}

std::string trace_csv(const RunRecord& record) {
  const int K = record.K;
  std::string out = "t,action,service";
  for (int i = 1; i <= K; ++i) out += fmt::format(",A_{}", i);
  for (int i = 1; i <= K; ++i) out += fmt::format(",Q_{}", i);
  out += "\n";
  for (Eigen::Index r = 0; r < record.queues.rows(); ++r) {
    const long long t = (r + 1) * record.stride;
    const auto idx = static_cast<std::size_t>(t - 1);
    out += fmt::format("{},{},{}", t, record.action[idx], num(record.service[idx]));
    for (int i = 0; i < K; ++i) out += "," + num(record.arrivals(r, i));
    for (int i = 0; i < K; ++i) out += "," + num(record.queues(r, i));
    out += "\n";
  }
  return out;
}

void write_trace_csv(const RunRecord& record, const std::filesystem::path& path) {
  write_text_file(path, trace_csv(record));
}

RunRecord read_trace_csv(const std::filesystem::path& path, double M) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open trace", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{}: empty trace", path.string()));
  const auto header = split_csv_line(line);
  if (header.size() < 5 || (header.size() - 3) % 2 != 0 || header[0] != "t" || header[1] != "action" ||
      header[2] != "service")
    throw std::runtime_error(fmt::format("{}: unexpected trace header", path.string()));
  const int K = static_cast<int>((header.size() - 3) / 2);

  std::vector<std::vector<double>> rows;
  std::vector<long long> ts;
  std::vector<Arm> actions;
  std::vector<double> services;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw std::runtime_error(fmt::format("{}:{}: expected {} fields", path.string(), line_no, header.size()));
    try {
      ts.push_back(std::stoll(f[0]));
      actions.push_back(std::stoi(f[1]));
      services.push_back(std::stod(f[2]));
      std::vector<double> v;
      for (std::size_t k = 3; k < f.size(); ++k) v.push_back(std::stod(f[k]));
      rows.push_back(std::move(v));
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("{}:{}: malformed number", path.string(), line_no));
    }
  }

  RunRecord rec;
  rec.K = K;
  rec.M = M;
  rec.stride = ts.empty() ? 1 : ts.front();
  rec.horizon = ts.empty() ? 0 : ts.back();
  for (std::size_t r = 0; r < ts.size(); ++r)
    if (ts[r] != static_cast<long long>(r + 1) * rec.stride)
      throw std::runtime_error(fmt::format("{}: slots are not evenly spaced", path.string()));
  const auto n = static_cast<Eigen::Index>(rows.size());
  rec.arrivals.resize(n, K);
  rec.queues.resize(n, K);
  rec.action.assign(static_cast<std::size_t>(rec.horizon), 0);
  rec.service.assign(static_cast<std::size_t>(rec.horizon), 0.0);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& v = rows[static_cast<std::size_t>(r)];
    for (int i = 0; i < K; ++i) {
      rec.arrivals(r, i) = v[static_cast<std::size_t>(i)];
      rec.queues(r, i) = v[static_cast<std::size_t>(K + i)];
    }
    const auto idx = static_cast<std::size_t>(ts[static_cast<std::size_t>(r)] - 1);
    rec.action[idx] = actions[static_cast<std::size_t>(r)];
    rec.service[idx] = services[static_cast<std::size_t>(r)];
  }
  rec.total_q.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) rec.total_q[static_cast<std::size_t>(r)] = rec.queues.row(r).sum();
  return rec;
}

ScenarioOutputs run_scenario(const Scenario& scenario, const RunScenarioOptions& options) {
  validate(scenario);
  ScenarioOutputs out;
  out.directory = options.output_dir ? *options.output_dir
                  : scenario.output_dir.empty() ? std::filesystem::path("out") / file_stem(scenario.name)
                                                : std::filesystem::path(scenario.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out.directory, ec);
  if (ec) throw std::runtime_error(fmt::format("{}: cannot create directory: {}", out.directory.string(), ec.message()));

  std::vector<PolicyDescriptor> policies = scenario.policies;
  for (auto& p : policies)
    if (p.label.empty()) p.label = default_label(p);

  const Environment env(scenario.env);
  if (!scenario.env.noise_file.empty() && env.noise()) {
    const auto path = out.directory / scenario.env.noise_file;
    write_noise_file(*env.noise(), path);
    out.files.push_back(path);
  }

  ReplicateOptions ro;
  ro.checks = options.checks;
  ro.common_random_numbers = scenario.common_random_numbers;
  ro.threads = options.threads;
  ro.stride = options.save_traces ? 1 : scenario.stride;
  if (options.save_traces) {
    const auto dir = out.directory / "traces";
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error(fmt::format("{}: cannot create directory: {}", dir.string(), ec.message()));
    ro.on_record = [&, dir](std::size_t p, int r, const RunRecord& rec) {
      const auto path = dir / fmt::format("{}.rep{}.csv", file_stem(policies[p].label), r);
      write_trace_csv(rec, path);
      out.files.push_back(path);
    };
  }
  out.result = replicate(env, policies, scenario.reps, scenario.base_seed, ro);

  for (const auto& p : out.result.policies) {
    const std::string stem = file_stem(p.policy.label);
    const auto csv = out.directory / (stem + ".csv");
    write_text_file(csv, series_csv(p, scenario.stride));
    const auto avg = out.directory / (stem + ".running_avg.csv");
    write_text_file(avg, running_average_csv(p, scenario.stride));
    out.files.push_back(csv);
    out.files.push_back(avg);
    for (const auto& c : p.checks) out.checks_passed = out.checks_passed && c.passed;
  }
  const auto summary = out.directory / "summary.txt";
  write_text_file(summary, summary_text(scenario, out.result));
  const auto svg = out.directory / "total_queue.svg";
  write_text_file(svg, emit_plot(out.result, scenario.name));
  out.files.push_back(summary);
  out.files.push_back(svg);
  std::sort(out.files.begin(), out.files.end());
  return out;
}

} // namespace qsched
