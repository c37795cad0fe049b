#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "emoalign/cli/run.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/checkpoint.hpp"

namespace emoalign::cli {

namespace {

std::vector<fs::path> files_with(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Eight-level bar per bucket of the series, scaled to its range.
std::string sparkline(const std::vector<double>& values, std::size_t width = 40) {
  static const char* const kBars[] = {"▁", "▂", "▃", "▄", "▅", "▆", "▇", "█"};
  if (values.empty()) return "";
  const std::size_t buckets = std::min(width, values.size());
  std::vector<double> means(buckets, 0.0);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * values.size() / buckets, hi = (b + 1) * values.size() / buckets;
    for (std::size_t i = lo; i < hi; ++i) means[b] += values[i];
    means[b] /= static_cast<double>(hi - lo);
  }
  const auto [mn, mx] = std::minmax_element(means.begin(), means.end());
  std::string out;
  for (double m : means) {
    const double t = *mx > *mn ? (m - *mn) / (*mx - *mn) : 0.0;
    out += kBars[std::min<std::size_t>(7, static_cast<std::size_t>(std::lround(t * 7.0)))];
  }
  return out;
}

struct Row {
  std::string mode;
  std::map<std::string, std::string> cells;
};

const std::vector<std::pair<std::string, std::string>> kColumns = {
    {"ser", "SER acc"},        {"head", "SER head acc"}, {"agree", "agreement"}, {"kl", "KL"},
    {"cont", "cont CE"},       {"quality", "quality"},   {"empathy", "empathy"},
};

std::string optional_number(const nlohmann::json& j) { return j.is_number() ? fixed(j.get<double>(), 2) : "n/a"; }

}  // namespace

ReportResult cmd_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ContractError("run directory " + run_dir.string() + " does not exist");
  RunLock lock(run_dir);
  const auto logs = files_with(run_dir / "logs", ".jsonl");
  const auto reports = files_with(run_dir / "reports", ".json");
  if (logs.empty() && reports.empty()) {
    throw ContractError("run directory " + run_dir.string() + " has no loss logs or reports");
  }

  std::ostringstream out;
  out << "# Run summary\n\n## Training\n\n";
  if (logs.empty()) {
    out << "No loss logs.\n";
  } else {
    out << "| run | steps | first total | last total | min total | last KL | last cont CE | last SER CE |\n"
        << "|---|---|---|---|---|---|---|---|\n";
    std::ostringstream curves;
    for (const auto& path : logs) {
      std::ifstream in(path);
      std::vector<nlohmann::json> steps;
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) steps.push_back(nlohmann::json::parse(line));
      }
      const auto run = path.stem().string();
      if (steps.empty()) {
        out << "| " << run << " | 0 | n/a | n/a | n/a | n/a | n/a | n/a |\n";
        continue;
      }
      std::vector<double> totals;
      std::map<std::size_t, std::pair<double, std::size_t>> epochs;
      for (const auto& s : steps) {
        totals.push_back(s.at("total").get<double>());
        auto& e = epochs[s.at("epoch").get<std::size_t>()];
        e.first += totals.back();
        ++e.second;
      }
      const auto& last = steps.back();
      out << "| " << run << " | " << steps.size() << " | " << fixed(totals.front()) << " | " << fixed(totals.back())
          << " | " << fixed(*std::min_element(totals.begin(), totals.end())) << " | "
          << optional_number(last["semantic_kl"]) << " | " << optional_number(last["continuation_ce"]) << " | "
          << optional_number(last["ser_ce"]) << " |\n";
      curves << "- " << run << ": " << sparkline(totals) << "\n  epoch means:";
      for (const auto& [epoch, acc] : epochs) curves << " " << epoch << "=" << fixed(acc.first / static_cast<double>(acc.second));
      curves << "\n";
    }
    out << "\nLoss curves (total loss per step):\n\n" << curves.str();
  }

  std::map<std::string, Row> rows;
  std::vector<std::string> winrates;
  for (const auto& path : reports) {
    std::ifstream in(path);
    const auto doc = nlohmann::json::parse(in);
    const auto suite = doc.value("suite", "");
    const auto& ckpts = doc.at("checkpoints");
    const auto& r = doc.at("result");
    if (suite == "winrate") {
      const auto total = r.value("total", std::size_t{0});
      const double rate = total ? static_cast<double>(r.value("wins", std::size_t{0})) / static_cast<double>(total) : 0.0;
      std::ostringstream line;
      line << "| " << ckpts[0].value("name", "") << " | " << ckpts[1].value("name", "") << " | " << r.value("wins", 0)
           << " | " << r.value("losses", 0) << " | " << r.value("ties", 0) << " | " << fixed(rate) << " |";
      winrates.push_back(line.str());
      continue;
    }
    auto& row = rows[ckpts[0].value("name", "")];
    row.mode = ckpts[0].value("mode", "");
    if (suite == "ser") {
      row.cells["ser"] = fixed(r.at("ser").at("accuracy").get<double>());
      row.cells["head"] = fixed(r.at("head_accuracy").get<double>());
    } else if (suite == "agreement") {
      row.cells["agree"] = fixed(r.at("agreement").at("match_rate").get<double>());
      row.cells["kl"] = fixed(r.at("agreement").at("mean_kl").get<double>(), 4);
      row.cells["cont"] = fixed(r.at("continuation_ce").get<double>());
    } else if (suite == "response") {
      row.cells["quality"] = optional_number(r["mean_quality"]);
      row.cells["empathy"] = optional_number(r["mean_empathy"]);
    }
  }

  out << "\n## Mode comparison\n\n";
  if (rows.empty()) {
    out << "No single-checkpoint reports.\n";
  } else {
    out << "| mode | checkpoint |";
    for (const auto& [key, title] : kColumns) out << " " << title << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < kColumns.size(); ++i) out << "---|";
    out << "\n";
    for (const auto& [name, row] : rows) {
      out << "| " << row.mode << " | " << name << " |";
      for (const auto& [key, title] : kColumns) {
        const auto it = row.cells.find(key);
        out << " " << (it == row.cells.end() ? "not evaluated" : it->second) << " |";
      }
      out << "\n";
    }
  }

  out << "\n## Win rates\n\n";
  if (winrates.empty()) {
    out << "not evaluated\n";
  } else {
    out << "| A | B | wins | losses | ties | win rate |\n|---|---|---|---|---|---|\n";
    for (const auto& line : winrates) out << line << "\n";
  }

  ReportResult result;
  result.text = out.str();
  result.summary = run_dir / "summary.md";
  model::write_file_atomic(result.summary, {result.text.begin(), result.text.end()});
  return result;
}

}  // namespace emoalign::cli
